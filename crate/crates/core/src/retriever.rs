//! Bi-encoder retriever: `v(d) = W · v_agg(d) + b`, scored by dot product.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{check_dims, Error, Result};
use crate::featurizer::{style_aggregate, FeatureConfig, StyleAggregate};
use crate::format::{self, Manifest};
use crate::par;

pub(crate) const RETRIEVER_MAGIC: &[u8; 8] = b"ARNKRETR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub doc_id: String,
    pub vector: Vec<f64>,
}

/// Linear projection head over style aggregates. Weights are stored as
/// `f32`, row-major `D × E`; all arithmetic happens in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrieverModel {
    weights: Vec<f32>,
    bias: Vec<f32>,
    out_dim: usize,
    feature_config: FeatureConfig,
}

/// `f64` working copy of the retriever parameters used during training.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrieverParams {
    pub out_dim: usize,
    pub in_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl RetrieverParams {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        RetrieverParams {
            out_dim,
            in_dim,
            w: vec![0.0; out_dim * in_dim],
            b: vec![0.0; out_dim],
        }
    }

    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        affine(&self.w, &self.b, u, self.out_dim)
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

fn affine<T: Copy + Into<f64>>(w: &[T], b: &[T], u: &[f64], out_dim: usize) -> Vec<f64> {
    let in_dim = u.len();
    (0..out_dim)
        .map(|i| {
            let row = &w[i * in_dim..(i + 1) * in_dim];
            let acc: f64 = row.iter().zip(u).map(|(&wij, uj)| wij.into() * uj).sum();
            acc + b[i].into()
        })
        .collect()
}

impl RetrieverModel {
    /// Fresh model with `W ~ U(−1/√E, 1/√E)` and `b = 0`. `out_dim` defaults
    /// to `E / 2`.
    pub fn new(feature_config: FeatureConfig, out_dim: Option<usize>, seed: u64) -> Result<Self> {
        feature_config.validate()?;
        let e = feature_config.style_dim;
        let d = out_dim.unwrap_or(e / 2);
        if d == 0 {
            return Err(Error::Config("retriever output dimension must be positive".into()));
        }
        let bound = 1.0 / (e as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..d * e)
            .map(|_| rng.gen_range(-bound..bound) as f32)
            .collect();
        Ok(RetrieverModel {
            weights,
            bias: vec![0.0; d],
            out_dim: d,
            feature_config,
        })
    }

    pub fn from_parts(
        feature_config: FeatureConfig,
        out_dim: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        feature_config.validate()?;
        check_dims(out_dim * feature_config.style_dim, weights.len())?;
        check_dims(out_dim, bias.len())?;
        if weights.iter().chain(&bias).any(|x| !x.is_finite()) {
            return Err(Error::InvalidData("retriever parameters must be finite".into()));
        }
        Ok(RetrieverModel {
            weights,
            bias,
            out_dim,
            feature_config,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.feature_config.style_dim
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        &self.feature_config
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn params(&self) -> RetrieverParams {
        RetrieverParams {
            out_dim: self.out_dim,
            in_dim: self.in_dim(),
            w: self.weights.iter().map(|&x| x as f64).collect(),
            b: self.bias.iter().map(|&x| x as f64).collect(),
        }
    }

    /// Overwrite the stored parameters, rounding to `f32`.
    pub fn set_params(&mut self, p: &RetrieverParams) -> Result<()> {
        check_dims(self.weights.len(), p.w.len())?;
        check_dims(self.bias.len(), p.b.len())?;
        self.weights.iter_mut().zip(&p.w).for_each(|(d, s)| *d = *s as f32);
        self.bias.iter_mut().zip(&p.b).for_each(|(d, s)| *d = *s as f32);
        Ok(())
    }

    pub fn project(&self, aggregate: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.in_dim(), aggregate.len())?;
        Ok(affine(&self.weights, &self.bias, aggregate, self.out_dim))
    }

    pub fn embed_aggregate(&self, doc_id: &str, agg: &StyleAggregate) -> Result<Embedding> {
        Ok(Embedding {
            doc_id: doc_id.to_string(),
            vector: self.project(&agg.vector)?,
        })
    }

    pub fn embed(&self, doc: &Document) -> Result<Embedding> {
        let agg = style_aggregate(doc, &self.feature_config)?;
        self.embed_aggregate(&doc.doc_id, &agg)
    }

    /// Embed every document in corpus order. The first failing document (in
    /// corpus order) is the one reported.
    pub fn embed_corpus(&self, corpus: &Corpus) -> Result<Vec<Embedding>> {
        par::try_map(corpus.documents(), |d| self.embed(d))
    }

    pub fn score_pair(&self, q: &Embedding, c: &Embedding) -> Result<f64> {
        score_pair(q, c)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        format::write_header(w, RETRIEVER_MAGIC, &self.feature_config)?;
        format::write_u32(w, self.out_dim)?;
        format::write_u32(w, self.in_dim())?;
        format::write_f32s(w, &self.weights)?;
        format::write_f32s(w, &self.bias)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let cfg = format::read_header(r, RETRIEVER_MAGIC)?;
        let d = format::read_u32(r)?;
        let e = format::read_u32(r)?;
        if e != cfg.style_dim {
            return Err(Error::Format(format!(
                "input dimension {e} disagrees with feature config {}",
                cfg.style_dim
            )));
        }
        let weights = format::read_f32s(r, d * e)?;
        let bias = format::read_f32s(r, d)?;
        format::expect_eof(r)?;
        RetrieverModel::from_parts(cfg, d, weights, bias)
    }

    /// Write the model file and its `.manifest.json` sidecar.
    pub fn save(&self, path: impl AsRef<Path>, manifest_meta: &[(&str, String)], seed: Option<u64>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))?;
        let mut manifest = Manifest::new(
            "retriever",
            &[("D", self.out_dim), ("E", self.in_dim())],
            seed,
        );
        for (k, v) in manifest_meta {
            manifest.metadata.insert(k.to_string(), v.clone());
        }
        manifest.write_next_to(path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }
}

/// Dot-product score `v(q) · v(c)`.
pub fn score_pair(q: &Embedding, c: &Embedding) -> Result<f64> {
    check_dims(q.vector.len(), c.vector.len())?;
    Ok(crate::dot(&q.vector, &c.vector))
}
