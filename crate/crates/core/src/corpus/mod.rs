//! Documents, corpora and the cross-genre training-set curation.

mod pii;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurizer::TopicFeaturizer;
use crate::par;

pub use pii::{scrub_pii, EMAIL_ADDRESS, IP_ADDRESS, PERSON, PHONE_NUMBER};

/// One authored text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub doc_id: String,
    pub author_id: String,
    pub genre: String,
    pub text: String,
}

impl Document {
    pub fn new(
        doc_id: impl Into<String>,
        author_id: impl Into<String>,
        genre: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        Document {
            doc_id: doc_id.into(),
            author_id: author_id.into(),
            genre: genre.into(),
            text: text.into(),
        }
    }
}

/// An ordered document collection with an author index.
///
/// `author_index` maps each author to the positions of their documents and is
/// always the exact inverse of the documents' author assignments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    author_index: BTreeMap<String, Vec<usize>>,
    id_index: HashMap<String, usize>,
}

impl Corpus {
    /// Build a corpus, rejecting duplicate document ids.
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut id_index = HashMap::with_capacity(documents.len());
        let mut author_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (pos, doc) in documents.iter().enumerate() {
            if let Some(prev) = id_index.insert(doc.doc_id.clone(), pos) {
                return Err(Error::DuplicateDocId {
                    doc_id: doc.doc_id.clone(),
                    first_line: prev + 1,
                    second_line: pos + 1,
                });
            }
            author_index.entry(doc.author_id.clone()).or_default().push(pos);
        }
        Ok(Corpus {
            documents,
            author_index,
            id_index,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.id_index.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.id_index.get(doc_id).copied()
    }

    /// Author id → document positions, in ascending author order.
    pub fn author_index(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.author_index
    }

    pub fn authors(&self) -> impl Iterator<Item = &str> {
        self.author_index.keys().map(String::as_str)
    }

    pub fn docs_by(&self, author_id: &str) -> impl Iterator<Item = &Document> {
        self.author_index
            .get(author_id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.documents[i])
    }

    /// Concatenate two corpora; fails on colliding doc ids.
    pub fn merged(&self, other: &Corpus) -> Result<Corpus> {
        let mut docs = self.documents.clone();
        docs.extend(other.documents.iter().cloned());
        Corpus::new(docs)
    }

    /// Keep the documents for which `keep` returns true, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(&Document) -> bool) -> Corpus {
        let docs = self.documents.iter().filter(|d| keep(d)).cloned().collect();
        Corpus::new(docs).expect("subset of a valid corpus has unique ids")
    }
}

/// Read a JSONL corpus. Blank lines are skipped; file order is preserved.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_corpus(reader: impl BufRead) -> Result<Corpus> {
    let mut docs = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(&first) = seen.get(&doc.doc_id) {
            return Err(Error::DuplicateDocId {
                doc_id: doc.doc_id,
                first_line: first,
                second_line: line_no,
            });
        }
        seen.insert(doc.doc_id.clone(), line_no);
        docs.push(doc);
    }
    Corpus::new(docs)
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    write_jsonl(path.as_ref(), corpus.documents())
}

/// Write one JSON record per line.
pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read one JSON record per non-blank line, reporting 1-based line numbers.
pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Number of maximal non-whitespace runs.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Scrub PII from every document. Documents that scrub to whitespace only
/// are dropped.
pub fn sanitize(corpus: &Corpus) -> Corpus {
    let docs: Vec<Document> = par::map(corpus.documents(), |d| Document {
        text: scrub_pii(&d.text),
        ..d.clone()
    })
    .into_iter()
    .filter(|d| !d.text.trim().is_empty())
    .collect();
    Corpus::new(docs).expect("ids unchanged by scrubbing")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurationConfig {
    pub min_words: usize,
    pub min_docs_per_author: usize,
    pub max_docs_per_author: usize,
    pub similarity_threshold: f64,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            min_words: 350,
            min_docs_per_author: 2,
            max_docs_per_author: 50,
            similarity_threshold: 0.2,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_docs_per_author < 2 {
            return Err(Error::Config("min_docs_per_author must be at least 2".into()));
        }
        if self.max_docs_per_author < self.min_docs_per_author {
            return Err(Error::Config(
                "max_docs_per_author must be >= min_docs_per_author".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return Err(Error::Config("similarity_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Reduce every author to their most topically dissimilar document pair.
///
/// Documents shorter than `min_words` are discarded first. Authors left with
/// a document count outside `[min_docs_per_author, max_docs_per_author]` are
/// dropped, as are authors whose most dissimilar pair still has a topic
/// cosine at or above `similarity_threshold`. Equal minima resolve to the
/// lexicographically smallest `(doc_id, doc_id)` pair. Output keeps input
/// document order.
pub fn curate(corpus: &Corpus, cfg: &CurationConfig, topic: &TopicFeaturizer) -> Result<Corpus> {
    curate_with(corpus, cfg, |d| topic.topic_vector(d), |a, b| a.cosine(b))
}

/// Curation with a caller-supplied document representation and similarity.
pub fn curate_with<R, FR, FS>(corpus: &Corpus, cfg: &CurationConfig, repr: FR, sim: FS) -> Result<Corpus>
where
    FR: Fn(&Document) -> R + Sync + Send,
    FS: Fn(&R, &R) -> f64 + Sync + Send,
{
    cfg.validate()?;
    let authors: Vec<&Vec<usize>> = corpus.author_index().values().collect();
    let docs = corpus.documents();

    let selected: Vec<Option<(usize, usize)>> = par::map(&authors, |positions| {
        let eligible: Vec<usize> = positions
            .iter()
            .copied()
            .filter(|&p| word_count(&docs[p].text) >= cfg.min_words)
            .collect();
        if eligible.len() < cfg.min_docs_per_author || eligible.len() > cfg.max_docs_per_author {
            return None;
        }
        let reprs: Vec<R> = eligible.iter().map(|&p| repr(&docs[p])).collect();
        let mut best: Option<(f64, (&str, &str), (usize, usize))> = None;
        for i in 0..eligible.len() {
            for j in (i + 1)..eligible.len() {
                let (a, b) = (eligible[i], eligible[j]);
                let cos = sim(&reprs[i], &reprs[j]);
                let key = ordered_ids(&docs[a].doc_id, &docs[b].doc_id);
                let better = match &best {
                    None => true,
                    Some((bc, bkey, _)) => cos < *bc || (cos == *bc && key < *bkey),
                };
                if better {
                    best = Some((cos, key, (a, b)));
                }
            }
        }
        best.filter(|(cos, _, _)| *cos < cfg.similarity_threshold)
            .map(|(_, _, pair)| pair)
    });

    let mut keep = vec![false; docs.len()];
    for (a, b) in selected.into_iter().flatten() {
        keep[a] = true;
        keep[b] = true;
    }
    let out = docs
        .iter()
        .zip(keep)
        .filter(|&(_, k)| k)
        .map(|(d, _)| d.clone())
        .collect();
    Corpus::new(out)
}

fn ordered_ids<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
