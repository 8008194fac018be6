//! Little-endian model container helpers shared by the retriever and
//! reranker model files, plus the text manifest written next to them.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurizer::FeatureConfig;

pub(crate) const FORMAT_VERSION: u32 = 1;

fn fmt_err(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

pub(crate) fn write_header(w: &mut impl Write, magic: &[u8; 8], cfg: &FeatureConfig) -> Result<()> {
    w.write_all(magic).map_err(fmt_err)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION).map_err(fmt_err)?;
    for v in [cfg.style_dim, cfg.ngram_min, cfg.ngram_max, cfg.max_tokens, cfg.topic_dim] {
        write_u32(w, v)?;
    }
    w.write_u64::<LittleEndian>(cfg.hash_seed).map_err(fmt_err)
}

pub(crate) fn read_header(r: &mut impl Read, magic: &[u8; 8]) -> Result<FeatureConfig> {
    let mut found = [0u8; 8];
    r.read_exact(&mut found).map_err(fmt_err)?;
    if &found != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&found),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.read_u32::<LittleEndian>().map_err(fmt_err)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = read_u32(r)?;
    }
    let hash_seed = r.read_u64::<LittleEndian>().map_err(fmt_err)?;
    let cfg = FeatureConfig {
        style_dim: dims[0],
        ngram_min: dims[1],
        ngram_max: dims[2],
        max_tokens: dims[3],
        topic_dim: dims[4],
        hash_seed,
    };
    cfg.validate().map_err(|e| Error::Format(e.to_string()))?;
    Ok(cfg)
}

pub(crate) fn write_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    w.write_u32::<LittleEndian>(v).map_err(fmt_err)
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<usize> {
    Ok(r.read_u32::<LittleEndian>().map_err(fmt_err)? as usize)
}

pub(crate) fn write_f32s(w: &mut impl Write, xs: &[f32]) -> Result<()> {
    for &x in xs {
        w.write_f32::<LittleEndian>(x).map_err(fmt_err)?;
    }
    Ok(())
}

pub(crate) fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    let mut out = vec![0f32; n];
    r.read_f32_into::<LittleEndian>(&mut out).map_err(fmt_err)?;
    if let Some(i) = out.iter().position(|x| !x.is_finite()) {
        return Err(Error::Format(format!("non-finite parameter at index {i}")));
    }
    Ok(out)
}

pub(crate) fn expect_eof(r: &mut impl Read) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe).map_err(fmt_err)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes after model payload".into())),
    }
}

/// Human-readable sidecar describing a model file. Timestamps live here and
/// nowhere else, so the binary payload stays reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub dims: BTreeMap<String, usize>,
    pub seed: Option<u64>,
    pub created_unix: u64,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(format: &str, dims: &[(&str, usize)], seed: Option<u64>) -> Self {
        Manifest {
            format: format.to_string(),
            version: FORMAT_VERSION,
            dims: dims.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            seed,
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            metadata: BTreeMap::new(),
        }
    }

    pub fn path_for(model_path: &Path) -> PathBuf {
        let mut s = model_path.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    pub fn write_next_to(&self, model_path: &Path) -> Result<PathBuf> {
        let path = Self::path_for(model_path);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
