//! Cross-encoder style reranker and its training-instance builder.
//!
//! A pair is scored as `a · χ(q, c) + bias` with `χ = pair_features`. The
//! head starts at zero, so an untrained reranker ties every candidate and
//! leaves the retriever order in place.
//!
//! Training negatives come from three disjoint pools per query: documents
//! topically close to the query, documents topically close to the positive,
//! and random documents close to neither.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, write_jsonl, Corpus, Document};
use crate::error::{check_dims, Error, Result};
use crate::featurizer::{pair_features, style_aggregate, FeatureConfig, TopicFeaturizer, TopicVector};
use crate::format::{self, Manifest};
use crate::pipeline::{RankedEntry, RankedList, Stage};
use crate::{dot, par};

pub(crate) const RERANKER_MAGIC: &[u8; 8] = b"ARNKRRNK";

/// Default number of nearest documents per anchor in the topical pools.
pub const DEFAULT_POOL_SIZE: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct RerankerModel {
    head: Vec<f32>,
    bias: f32,
    feature_config: FeatureConfig,
}

impl RerankerModel {
    pub fn zeros(feature_config: FeatureConfig) -> Result<Self> {
        feature_config.validate()?;
        Ok(RerankerModel {
            head: vec![0.0; 4 * feature_config.style_dim],
            bias: 0.0,
            feature_config,
        })
    }

    pub fn from_parts(feature_config: FeatureConfig, head: Vec<f32>, bias: f32) -> Result<Self> {
        feature_config.validate()?;
        check_dims(4 * feature_config.style_dim, head.len())?;
        if let Some(i) = head.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if !bias.is_finite() {
            return Err(Error::NonFinite(head.len()));
        }
        Ok(RerankerModel {
            head,
            bias,
            feature_config,
        })
    }

    pub fn head(&self) -> &[f32] {
        &self.head
    }

    pub fn bias(&self) -> f32 {
        self.bias
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        &self.feature_config
    }

    /// Overwrite the scoring head, rounding to `f32`.
    pub fn set_head(&mut self, a: &[f64]) -> Result<()> {
        check_dims(self.head.len(), a.len())?;
        if let Some(i) = a.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        self.head.iter_mut().zip(a).for_each(|(d, s)| *d = *s as f32);
        Ok(())
    }

    /// Score from precomputed style aggregates.
    pub fn score_aggregates(&self, query: &[f64], cand: &[f64]) -> Result<f64> {
        check_dims(self.feature_config.style_dim, query.len())?;
        let chi = pair_features(query, cand)?;
        let acc: f64 = self.head.iter().zip(&chi).map(|(&a, x)| a as f64 * x).sum();
        Ok(acc + self.bias as f64)
    }

    pub fn score(&self, query: &Document, cand: &Document) -> Result<f64> {
        let q = style_aggregate(query, &self.feature_config)?;
        let c = style_aggregate(cand, &self.feature_config)?;
        self.score_aggregates(&q.vector, &c.vector)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        format::write_header(w, RERANKER_MAGIC, &self.feature_config)?;
        format::write_u32(w, self.head.len())?;
        format::write_f32s(w, &self.head)?;
        format::write_f32s(w, &[self.bias])
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let cfg = format::read_header(r, RERANKER_MAGIC)?;
        let n = format::read_u32(r)?;
        if n != 4 * cfg.style_dim {
            return Err(Error::Format(format!(
                "head length {n} disagrees with feature config ({})",
                4 * cfg.style_dim
            )));
        }
        let head = format::read_f32s(r, n)?;
        let bias = format::read_f32s(r, 1)?[0];
        format::expect_eof(r)?;
        RerankerModel::from_parts(cfg, head, bias)
    }

    /// Write the model file and its `.manifest.json` sidecar.
    pub fn save(&self, path: impl AsRef<Path>, manifest_meta: &[(&str, String)], seed: Option<u64>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))?;
        let mut manifest = Manifest::new("reranker", &[("4E", self.head.len())], seed);
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

/// Re-sort candidates by descending reranker score. The sort is stable, so
/// ties keep the incoming (retriever) order.
pub fn rerank(model: &RerankerModel, query: &Document, candidates: &[&Document]) -> Result<RankedList> {
    if candidates.is_empty() {
        return Err(Error::InvalidData(format!("no candidates to rerank for {}", query.doc_id)));
    }
    let cfg = model.feature_config();
    let q = style_aggregate(query, cfg)?;
    let aggs = par::try_map(candidates, |c| style_aggregate(c, cfg))?;
    let scored: Vec<(&str, &[f64])> = candidates
        .iter()
        .zip(&aggs)
        .map(|(c, a)| (c.doc_id.as_str(), a.vector.as_slice()))
        .collect();
    Ok(RankedList {
        query_id: query.doc_id.clone(),
        ranking: rerank_aggregates(model, &q.vector, &scored)?,
    })
}

pub(crate) fn rerank_aggregates(
    model: &RerankerModel,
    query: &[f64],
    candidates: &[(&str, &[f64])],
) -> Result<Vec<RankedEntry>> {
    let scores = par::try_map(candidates, |(_, c)| model.score_aggregates(query, c))?;
    let mut entries: Vec<RankedEntry> = candidates
        .iter()
        .zip(scores)
        .map(|((id, _), score)| RankedEntry {
            doc_id: id.to_string(),
            score,
            stage: Stage::Reranked,
        })
        .collect();
    entries.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeCategory {
    NearQuery,
    NearPositive,
    Random,
}

impl NegativeCategory {
    /// Fixed order, also used to hand out quota remainders.
    pub const ALL: [NegativeCategory; 3] = [
        NegativeCategory::NearQuery,
        NegativeCategory::NearPositive,
        NegativeCategory::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NegativeCategory::NearQuery => "near_query",
            NegativeCategory::NearPositive => "near_positive",
            NegativeCategory::Random => "random",
        }
    }
}

impl fmt::Display for NegativeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NegativeCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "near_query" | "nq" => Ok(NegativeCategory::NearQuery),
            "near_positive" | "np" => Ok(NegativeCategory::NearPositive),
            "random" | "r" => Ok(NegativeCategory::Random),
            other => Err(Error::Config(format!("unknown negative category {other:?}"))),
        }
    }
}

/// Active negative categories and the number of negatives per instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingStrategy {
    pub categories: BTreeSet<NegativeCategory>,
    pub m: usize,
}

impl Default for SamplingStrategy {
    fn default() -> Self {
        SamplingStrategy::new(NegativeCategory::ALL, 12).expect("valid default")
    }
}

impl SamplingStrategy {
    pub fn new(categories: impl IntoIterator<Item = NegativeCategory>, m: usize) -> Result<Self> {
        let s = SamplingStrategy {
            categories: categories.into_iter().collect(),
            m,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::Config("sampling strategy needs at least one category".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("m must be positive".into()));
        }
        Ok(())
    }

    /// Parse a comma- or plus-separated category list, e.g. `near_query,random`.
    pub fn parse(spec: &str, m: usize) -> Result<Self> {
        let cats = spec
            .split([',', '+'])
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        SamplingStrategy::new(cats, m)
    }

    /// Per-category counts: `m / c` each, with the remainder handed out in
    /// the order near_query, near_positive, random.
    pub fn quotas(&self) -> Vec<(NegativeCategory, usize)> {
        let c = self.categories.len();
        let base = self.m / c;
        let mut extra = self.m % c;
        self.categories
            .iter()
            .map(|&cat| {
                let bonus = usize::from(extra > 0);
                extra -= bonus;
                (cat, base + bonus)
            })
            .collect()
    }

    pub fn label(&self) -> String {
        self.categories.iter().map(|c| c.name()).collect::<Vec<_>>().join("+")
    }
}

/// Disjoint candidate pools for one (query, positive) pair, each ordered by
/// closeness to its anchor (random pool in corpus order).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidatePools {
    pub near_query: Vec<String>,
    pub near_positive: Vec<String>,
    pub random: Vec<String>,
}

impl CandidatePools {
    pub fn pool(&self, cat: NegativeCategory) -> &[String] {
        match cat {
            NegativeCategory::NearQuery => &self.near_query,
            NegativeCategory::NearPositive => &self.near_positive,
            NegativeCategory::Random => &self.random,
        }
    }

    pub fn len(&self) -> usize {
        self.near_query.len() + self.near_positive.len() + self.random.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Topic vectors for every document of a corpus, computed once.
pub struct TopicIndex<'a> {
    corpus: &'a Corpus,
    vectors: Vec<TopicVector>,
}

impl<'a> TopicIndex<'a> {
    pub fn new(corpus: &'a Corpus, tf: &TopicFeaturizer) -> Self {
        TopicIndex {
            corpus,
            vectors: tf.corpus_vectors(corpus),
        }
    }

    pub fn corpus(&self) -> &Corpus {
        self.corpus
    }

    /// Pools over the documents not written by `exclude_author`.
    pub fn pools(
        &self,
        query: &TopicVector,
        positive: &TopicVector,
        exclude_author: &str,
        t: usize,
    ) -> CandidatePools {
        let usable: Vec<usize> = (0..self.corpus.len())
            .filter(|&i| self.corpus.documents()[i].author_id != exclude_author)
            .collect();
        let docs = self.corpus.documents();
        let order = |a: &(usize, f64), b: &(usize, f64)| {
            b.1.total_cmp(&a.1).then_with(|| docs[a.0].doc_id.cmp(&docs[b.0].doc_id))
        };
        // rank within the top `t`, usize::MAX elsewhere
        let rank_by = |anchor: &TopicVector| -> Vec<usize> {
            let dense = anchor.to_dense();
            let mut scored: Vec<(usize, f64)> = usable
                .iter()
                .map(|&i| (i, self.vectors[i].entries.iter().map(|&(j, x)| x * dense[j as usize]).sum()))
                .collect();
            let keep = t.min(scored.len());
            if keep > 0 && keep < scored.len() {
                scored.select_nth_unstable_by(keep - 1, order);
            }
            scored.truncate(keep);
            scored.sort_by(order);
            let mut rank = vec![usize::MAX; docs.len()];
            for (r, (i, _)) in scored.iter().enumerate() {
                rank[*i] = r;
            }
            rank
        };
        let rq = rank_by(query);
        let rp = rank_by(positive);
        let mut nq: Vec<usize> = Vec::new();
        let mut np: Vec<usize> = Vec::new();
        let mut random = Vec::new();
        for &i in &usable {
            let in_q = rq[i] < t;
            let in_p = rp[i] < t;
            match (in_q, in_p) {
                (true, true) if rq[i] <= rp[i] => nq.push(i),
                (true, true) => np.push(i),
                (true, false) => nq.push(i),
                (false, true) => np.push(i),
                (false, false) => random.push(i),
            }
        }
        nq.sort_by_key(|&i| rq[i]);
        np.sort_by_key(|&i| rp[i]);
        let ids = |v: Vec<usize>| -> Vec<String> {
            v.into_iter().map(|i| self.corpus.documents()[i].doc_id.clone()).collect()
        };
        CandidatePools {
            near_query: ids(nq),
            near_positive: ids(np),
            random: ids(random),
        }
    }
}

/// Split the documents outside the query's author into near-query,
/// near-positive and random pools. A document in both top-`t` lists goes to
/// the list where it ranks better, near-query on ties.
pub fn categorize_pools(
    query: &Document,
    positive: &Document,
    corpus: &Corpus,
    tf: &TopicFeaturizer,
    t: usize,
    m: usize,
) -> Result<CandidatePools> {
    let usable = corpus.documents().iter().filter(|d| d.author_id != query.author_id).count();
    if usable < m + 1 {
        return Err(Error::InsufficientPool {
            category: "any",
            needed: m + 1,
            available: usable,
        });
    }
    let index = TopicIndex::new(corpus, tf);
    Ok(index.pools(
        &tf.topic_vector(query),
        &tf.topic_vector(positive),
        &query.author_id,
        t,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledNegative {
    pub doc_id: String,
    pub category: NegativeCategory,
}

/// Sample each active category's quota uniformly without replacement.
pub fn sample_negatives(
    pools: &CandidatePools,
    strategy: &SamplingStrategy,
    rng: &mut impl Rng,
) -> Result<Vec<LabeledNegative>> {
    strategy.validate()?;
    let mut out = Vec::with_capacity(strategy.m);
    for (cat, quota) in strategy.quotas() {
        let pool = pools.pool(cat);
        if pool.len() < quota {
            return Err(Error::InsufficientPool {
                category: cat.name(),
                needed: quota,
                available: pool.len(),
            });
        }
        out.extend(pool.choose_multiple(rng, quota).map(|id| LabeledNegative {
            doc_id: id.clone(),
            category: cat,
        }));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingInstance {
    pub query: String,
    pub positive: String,
    pub negatives: Vec<LabeledNegative>,
}

impl TrainingInstance {
    pub fn label_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for n in &self.negatives {
            counts[n.category as usize] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstanceConfig {
    /// Fraction of training authors used as query authors.
    pub fraction: f64,
    /// Pool size per anchor.
    pub pool_size: usize,
    pub seed: u64,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            fraction: 0.10,
            pool_size: DEFAULT_POOL_SIZE,
            seed: 0,
        }
    }
}

impl InstanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config(format!("fraction must lie in (0, 1], got {}", self.fraction)));
        }
        if self.pool_size == 0 {
            return Err(Error::Config("pool_size must be positive".into()));
        }
        Ok(())
    }
}

const AUTHOR_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

/// Build one instance per sampled author: one of its two documents becomes
/// the query, the other the positive, and `m` negatives come from the
/// other authors' documents.
pub fn build_training_instances(
    corpus: &Corpus,
    tf: &TopicFeaturizer,
    strategy: &SamplingStrategy,
    cfg: &InstanceConfig,
) -> Result<Vec<TrainingInstance>> {
    strategy.validate()?;
    cfg.validate()?;
    let authors: Vec<(&String, &Vec<usize>)> = corpus.author_index().iter().collect();
    for (a, pos) in &authors {
        if pos.len() != 2 {
            return Err(Error::InvalidData(format!(
                "author {a:?} has {} documents, expected exactly 2",
                pos.len()
            )));
        }
    }
    let n = ((cfg.fraction * authors.len() as f64).round() as usize).clamp(1, authors.len().max(1));
    let mut order: Vec<usize> = (0..authors.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut chosen: Vec<usize> = order.into_iter().take(n).collect();
    chosen.sort_unstable();

    let index = TopicIndex::new(corpus, tf);
    let docs = corpus.documents();
    par::try_map(&chosen, |&ai| {
        let (author, pos) = authors[ai];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (ai as u64 + 1).wrapping_mul(AUTHOR_SEED_MIX));
        let (qi, pi) = if rng.gen::<bool>() { (pos[0], pos[1]) } else { (pos[1], pos[0]) };
        let usable = docs.len() - pos.len();
        if usable < strategy.m + 1 {
            return Err(Error::InsufficientPool {
                category: "any",
                needed: strategy.m + 1,
                available: usable,
            });
        }
        let pools = index.pools(&index.vectors[qi], &index.vectors[pi], author, cfg.pool_size);
        let negatives = sample_negatives(&pools, strategy, &mut rng)?;
        Ok(TrainingInstance {
            query: docs[qi].doc_id.clone(),
            positive: docs[pi].doc_id.clone(),
            negatives,
        })
    })
}

pub fn write_instances(path: impl AsRef<Path>, instances: &[TrainingInstance]) -> Result<()> {
    write_jsonl(path.as_ref(), instances)
}

pub fn read_instances(path: impl AsRef<Path>) -> Result<Vec<TrainingInstance>> {
    read_jsonl(path.as_ref())
}

/// Featurized instance: candidate pair features with the positive's index.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankerExample {
    pub features: Vec<Vec<f64>>,
    pub positive: usize,
}

/// Pair features for each instance; the positive comes first.
pub fn featurize_instances(
    corpus: &Corpus,
    cfg: &FeatureConfig,
    instances: &[TrainingInstance],
) -> Result<Vec<RerankerExample>> {
    let lookup = crate::trainer::aggregate_lookup(corpus, cfg)?;
    let get = |id: &str| lookup.get(id).ok_or_else(|| Error::UnknownDocument(id.to_string()));
    par::try_map(instances, |inst| {
        let q = get(&inst.query)?;
        let mut features = vec![pair_features(q, get(&inst.positive)?)?];
        for n in &inst.negatives {
            features.push(pair_features(q, get(&n.doc_id)?)?);
        }
        Ok(RerankerExample { features, positive: 0 })
    })
}

/// `a · χ + bias` over a featurized candidate; exposed for oracles.
pub fn score_features(model: &RerankerModel, chi: &[f64]) -> Result<f64> {
    check_dims(model.head().len(), chi.len())?;
    let a: Vec<f64> = model.head().iter().map(|&x| x as f64).collect();
    Ok(dot(&a, chi) + model.bias() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_cfg() -> FeatureConfig {
        FeatureConfig {
            style_dim: 16,
            ..FeatureConfig::default()
        }
    }

    fn doc(id: &str, author: &str, text: &str) -> Document {
        Document::new(id, author, "g", text)
    }

    fn random_model(seed: u64) -> RerankerModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = (0..64).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        RerankerModel::from_parts(small_cfg(), head, 0.25).unwrap()
    }

    #[test]
    fn zero_head_scores_bias() {
        let m = RerankerModel::from_parts(small_cfg(), vec![0.0; 64], 1.5).unwrap();
        let s = m.score(&doc("q", "a", "One two, three."), &doc("c", "b", "Four five!")).unwrap();
        assert_eq!(s, 1.5);
    }

    #[test]
    fn difference_block_vanishes_on_self_pairs() {
        let mut head = vec![0.0; 64];
        head[16..32].iter_mut().for_each(|x| *x = 3.0);
        let m = RerankerModel::from_parts(small_cfg(), head, -0.5).unwrap();
        let d = doc("q", "a", "Same text; same style.");
        assert_eq!(m.score(&d, &d).unwrap(), -0.5);
    }

    #[test]
    fn score_matches_dot_product_oracle() {
        let m = random_model(1);
        let q = doc("q", "a", "The quick brown fox, it seems, jumps.");
        let c = doc("c", "b", "A lazy dog sleeps; nothing else happens.");
        let u = style_aggregate(&q, &small_cfg()).unwrap().vector;
        let v = style_aggregate(&c, &small_cfg()).unwrap().vector;
        let mut oracle = 0.25;
        for i in 0..16 {
            let h = |k: usize| m.head()[k * 16 + i] as f64;
            oracle += h(0) * u[i] * v[i] + h(1) * (u[i] - v[i]).abs() + h(2) * u[i] + h(3) * v[i];
        }
        assert!((m.score(&q, &c).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn model_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.bin");
        let m = random_model(2);
        m.save(&path, &[("note", "x".into())], Some(2)).unwrap();
        assert_eq!(RerankerModel::load(&path).unwrap(), m);
        assert!(Manifest::path_for(&path).exists());
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        assert!(RerankerModel::read_from(&mut bytes.as_slice()).is_err());
        assert!(RerankerModel::from_parts(small_cfg(), vec![0.0; 63], 0.0).is_err());
    }

    #[test]
    fn rerank_rules() {
        let q = doc("q", "a", "Query text here.");
        let cands: Vec<Document> = (0..5).map(|i| doc(&format!("c{i}"), "b", &format!("word{i} x y z"))).collect();
        let refs: Vec<&Document> = cands.iter().collect();
        let zero = RerankerModel::zeros(small_cfg()).unwrap();
        let out = rerank(&zero, &q, &refs).unwrap();
        let ids: Vec<&str> = out.ranking.iter().map(|e| e.doc_id.as_str()).collect();
        assert_eq!(ids, ["c0", "c1", "c2", "c3", "c4"]);
        assert!(out.ranking.iter().all(|e| e.stage == Stage::Reranked));
        let single = rerank(&zero, &q, &refs[..1]).unwrap();
        assert_eq!(single.ranking[0].doc_id, "c0");
        assert!(rerank(&zero, &q, &[]).is_err());

        let m = random_model(3);
        let out = rerank(&m, &q, &refs).unwrap();
        let mut oracle: Vec<(f64, usize)> = refs.iter().enumerate().map(|(i, c)| (m.score(&q, c).unwrap(), i)).collect();
        // brute force: selection by max score, earliest index first
        let mut expected = Vec::new();
        while !oracle.is_empty() {
            let best = (0..oracle.len())
                .max_by(|&a, &b| oracle[a].0.total_cmp(&oracle[b].0).then(oracle[b].1.cmp(&oracle[a].1)))
                .unwrap();
            expected.push(format!("c{}", oracle.remove(best).1));
        }
        let got: Vec<String> = out.ranking.iter().map(|e| e.doc_id.clone()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn quotas() {
        use NegativeCategory::*;
        let q = |cats: &[NegativeCategory], m| SamplingStrategy::new(cats.iter().copied(), m).unwrap().quotas();
        assert_eq!(q(&[Random], 12), vec![(Random, 12)]);
        assert_eq!(q(&[NearQuery, NearPositive, Random], 12), vec![(NearQuery, 4), (NearPositive, 4), (Random, 4)]);
        assert_eq!(q(&[Random, NearQuery], 12), vec![(NearQuery, 6), (Random, 6)]);
        assert_eq!(q(&[NearQuery, NearPositive, Random], 14), vec![(NearQuery, 5), (NearPositive, 5), (Random, 4)]);
        assert!(SamplingStrategy::new([], 12).is_err());
        assert_eq!(SamplingStrategy::parse("nq+random", 4).unwrap().label(), "near_query+random");
        assert!(SamplingStrategy::parse("nearby", 4).is_err());
    }

    fn topic_corpus() -> Corpus {
        // q-author writes about ships and courts; others cover three topics
        let mut docs = vec![
            doc("q1", "qa", "ship harbor sail anchor ship harbor"),
            doc("q2", "qa", "court judge verdict appeal court judge"),
        ];
        let topics = [
            "ship harbor sail anchor mast",
            "court judge verdict appeal jury",
            "garden flower petal soil seed",
        ];
        for (t, words) in topics.iter().enumerate() {
            for i in 0..8 {
                let text = format!("{words} {}", words.split(' ').nth(i % 5).unwrap());
                docs.push(doc(&format!("t{t}d{i}"), &format!("o{t}{i}"), &text));
            }
        }
        Corpus::new(docs).unwrap()
    }

    #[test]
    fn pools_follow_topic_closeness() {
        let corpus = topic_corpus();
        let tf = TopicFeaturizer::new(4096, 7);
        let q = corpus.get("q1").unwrap();
        let p = corpus.get("q2").unwrap();
        let pools = categorize_pools(q, p, &corpus, &tf, 8, 12).unwrap();
        assert!(pools.near_query.iter().all(|id| id.starts_with("t0")));
        assert!(pools.near_positive.iter().all(|id| id.starts_with("t1")));
        assert!(pools.random.iter().all(|id| id.starts_with("t2")));
        assert_eq!(pools.len(), 24);
        let all: BTreeSet<&String> = pools.near_query.iter().chain(&pools.near_positive).chain(&pools.random).collect();
        assert_eq!(all.len(), 24);
        assert!(categorize_pools(q, p, &corpus, &tf, 8, 24).is_err());
    }

    #[test]
    fn overlap_goes_to_better_rank() {
        // x is the best match for both anchors: tie goes to near_query
        let docs = vec![
            doc("q", "qa", "alpha beta"),
            doc("p", "qa", "gamma delta"),
            doc("x", "o1", "alpha beta gamma delta"),
            doc("y", "o2", "gamma delta"),
            doc("z", "o3", "omega"),
        ];
        let corpus = Corpus::new(docs).unwrap();
        let tf = TopicFeaturizer::new(4096, 1);
        let pools = categorize_pools(&corpus.documents()[0], &corpus.documents()[1], &corpus, &tf, 2, 1).unwrap();
        // ranks: to q, x=0; to p, y=0 and x=1, so x lands near the query
        assert_eq!(pools.near_query[0], "x");
        assert_eq!(pools.near_positive, vec!["y".to_string()]);
        assert_eq!(pools.random, vec!["z".to_string()]);
        let tie = vec![
            doc("q", "qa", "alpha"),
            doc("p", "qa", "alpha"),
            doc("x", "o1", "alpha"),
            doc("z", "o3", "omega"),
        ];
        let corpus = Corpus::new(tie).unwrap();
        let pools = categorize_pools(&corpus.documents()[0], &corpus.documents()[1], &corpus, &tf, 1, 1).unwrap();
        assert_eq!(pools.near_query, vec!["x".to_string()]);
        assert!(pools.near_positive.is_empty());
    }

    #[test]
    fn sampling_bookkeeping() {
        let corpus = topic_corpus();
        let tf = TopicFeaturizer::new(4096, 7);
        let pools = categorize_pools(corpus.get("q1").unwrap(), corpus.get("q2").unwrap(), &corpus, &tf, 8, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let negs = sample_negatives(&pools, &SamplingStrategy::default(), &mut rng).unwrap();
        let inst = TrainingInstance {
            query: "q1".into(),
            positive: "q2".into(),
            negatives: negs.clone(),
        };
        assert_eq!(inst.label_counts(), [4, 4, 4]);
        let ids: BTreeSet<&String> = negs.iter().map(|n| &n.doc_id).collect();
        assert_eq!(ids.len(), 12);
        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(negs, sample_negatives(&pools, &SamplingStrategy::default(), &mut rng2).unwrap());
        let two = SamplingStrategy::new([NegativeCategory::NearQuery, NegativeCategory::Random], 12).unwrap();
        let negs = sample_negatives(&pools, &two, &mut rng).unwrap();
        assert_eq!(negs.iter().filter(|n| n.category == NegativeCategory::NearQuery).count(), 6);
        let greedy = SamplingStrategy::new([NegativeCategory::NearQuery], 9).unwrap();
        match sample_negatives(&pools, &greedy, &mut rng) {
            Err(Error::InsufficientPool { category, .. }) => assert_eq!(category, "near_query"),
            other => panic!("{other:?}"),
        }
    }

    fn many_authors(n: usize) -> Corpus {
        let words = ["ship sea", "court law", "garden seed", "music song", "stone hill"];
        let docs = (0..n)
            .flat_map(|a| {
                (0..2).map(move |d| {
                    let text = format!("{} text {a}", words[(a + d * 2) % 5]);
                    doc(&format!("a{a:03}d{d}"), &format!("a{a:03}"), &text)
                })
            })
            .collect();
        Corpus::new(docs).unwrap()
    }

    #[test]
    fn instance_stream_contract() {
        let tf = TopicFeaturizer::new(4096, 3);
        let strategy = SamplingStrategy::new(NegativeCategory::ALL, 6).unwrap();
        let corpus = many_authors(10);
        let cfg = InstanceConfig {
            fraction: 1.0,
            pool_size: 5,
            seed: 4,
        };
        let inst = build_training_instances(&corpus, &tf, &strategy, &cfg).unwrap();
        assert_eq!(inst.len(), 10);
        for i in &inst {
            let qa = &corpus.get(&i.query).unwrap().author_id;
            assert_eq!(&corpus.get(&i.positive).unwrap().author_id, qa);
            assert!(i.negatives.iter().all(|n| &corpus.get(&n.doc_id).unwrap().author_id != qa));
            assert_eq!(i.label_counts(), [2, 2, 2]);
        }
        let corpus = many_authors(200);
        let cfg = InstanceConfig {
            fraction: 0.1,
            pool_size: 10,
            seed: 9,
        };
        let a = build_training_instances(&corpus, &tf, &strategy, &cfg).unwrap();
        let b = build_training_instances(&corpus, &tf, &strategy, &cfg).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(a, b);
    }

    #[test]
    fn lone_pair_has_no_negatives() {
        let tf = TopicFeaturizer::new(4096, 3);
        let corpus = many_authors(1);
        let cfg = InstanceConfig {
            fraction: 1.0,
            ..InstanceConfig::default()
        };
        assert!(build_training_instances(&corpus, &tf, &SamplingStrategy::default(), &cfg).is_err());
    }

    #[test]
    fn instances_jsonl_roundtrip_and_featurize() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.jsonl");
        let corpus = many_authors(12);
        let tf = TopicFeaturizer::new(4096, 3);
        let strategy = SamplingStrategy::new(NegativeCategory::ALL, 3).unwrap();
        let cfg = InstanceConfig {
            fraction: 0.5,
            pool_size: 4,
            seed: 1,
        };
        let inst = build_training_instances(&corpus, &tf, &strategy, &cfg).unwrap();
        write_instances(&path, &inst).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"category\":\"near_positive\""));
        assert_eq!(read_instances(&path).unwrap(), inst);
        let ex = featurize_instances(&corpus, &small_cfg(), &inst).unwrap();
        assert_eq!(ex.len(), inst.len());
        assert!(ex.iter().all(|e| e.features.len() == 4 && e.features[0].len() == 64));
    }
}
