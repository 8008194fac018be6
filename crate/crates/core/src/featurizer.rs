//! Deterministic text featurization.
//!
//! Three views of a document are produced here:
//!
//! * a style aggregate: signed feature hashing of every token and its
//!   boundary-marked character n-grams, mean-pooled over the first
//!   `max_tokens` tokens;
//! * a topic vector: a hashed, L2-normalized bag of lowercased content words
//!   with stopwords removed, used wherever topical closeness is needed;
//! * pair features for the reranker, built from two style aggregates.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::corpus::{Corpus, Document};
use crate::error::{check_dims, Error, Result};
use crate::par;

/// Seed offset separating n-gram hashes from whole-token hashes.
const NGRAM_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;
/// N-gram contributions are scaled by an irrational weight so they can never
/// exactly cancel the whole-token contribution.
const NGRAM_WEIGHT: f64 = FRAC_1_SQRT_2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    /// Dimension E of token features and style aggregates.
    pub style_dim: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub max_tokens: usize,
    pub topic_dim: usize,
    pub hash_seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            style_dim: 768,
            ngram_min: 2,
            ngram_max: 4,
            max_tokens: 512,
            topic_dim: 4096,
            hash_seed: 0x5eed_0f_a77e,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.style_dim == 0 || self.topic_dim == 0 || self.max_tokens == 0 {
            return Err(Error::Config("feature dimensions and max_tokens must be positive".into()));
        }
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(Error::Config(format!(
                "empty n-gram range {}..={}",
                self.ngram_min, self.ngram_max
            )));
        }
        Ok(())
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '-')
}

/// Split text into word and punctuation tokens, keeping at most
/// `cfg.max_tokens`.
///
/// A word is a run of alphanumeric characters, optionally joined by internal
/// apostrophes or hyphens (`don't`, `well-known`). Every other
/// non-whitespace character is a token on its own.
pub fn tokenize<'a>(text: &'a str, cfg: &FeatureConfig) -> Vec<&'a str> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some((start, c)) = chars.next() {
        if tokens.len() == cfg.max_tokens {
            break;
        }
        if c.is_whitespace() {
            continue;
        }
        if !is_word_char(c) {
            tokens.push(&text[start..start + c.len_utf8()]);
            continue;
        }
        let mut end = start + c.len_utf8();
        while let Some(&(i, n)) = chars.peek() {
            if is_word_char(n) {
                chars.next();
                end = i + n.len_utf8();
            } else if is_joiner(n) {
                // a joiner only belongs to the word if a word char follows it
                let after = text[i + n.len_utf8()..].chars().next();
                if after.is_some_and(is_word_char) {
                    chars.next();
                    end = i + n.len_utf8();
                } else {
                    break;
                }
            } else {
                break;
            }
        }
        tokens.push(&text[start..end]);
    }
    tokens
}

#[inline]
fn hashed_add(key: &[u8], seed: u64, weight: f64, out: &mut [f64]) {
    let h = xxh3_64_with_seed(key, seed);
    let bucket = (h % out.len() as u64) as usize;
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    out[bucket] += sign * weight;
}

/// Accumulate `scale` times the hashed features of `token` into `out`.
fn add_token_features(token: &str, cfg: &FeatureConfig, scale: f64, out: &mut [f64]) {
    hashed_add(token.as_bytes(), cfg.hash_seed, scale, out);
    let marked: Vec<char> = std::iter::once('<')
        .chain(token.chars())
        .chain(std::iter::once('>'))
        .collect();
    let ngram_seed = cfg.hash_seed ^ NGRAM_SEED_MIX;
    let mut buf = String::new();
    for n in cfg.ngram_min..=cfg.ngram_max {
        if n > marked.len() {
            break;
        }
        for window in marked.windows(n) {
            buf.clear();
            buf.extend(window);
            hashed_add(buf.as_bytes(), ngram_seed, scale * NGRAM_WEIGHT, out);
        }
    }
}

/// Hashed feature vector of a single token (length `style_dim`).
pub fn token_features(token: &str, cfg: &FeatureConfig) -> Vec<f64> {
    let mut out = vec![0.0; cfg.style_dim];
    add_token_features(token, cfg, 1.0, &mut out);
    out
}

/// Mean of the token feature vectors of a document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleAggregate {
    pub vector: Vec<f64>,
    pub token_count: usize,
}

impl StyleAggregate {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

pub fn style_aggregate(doc: &Document, cfg: &FeatureConfig) -> Result<StyleAggregate> {
    style_aggregate_text(&doc.text, cfg).ok_or_else(|| Error::NoTokens(doc.doc_id.clone()))
}

/// Style aggregate of raw text; `None` when the text has no tokens.
pub fn style_aggregate_text(text: &str, cfg: &FeatureConfig) -> Option<StyleAggregate> {
    let tokens = tokenize(text, cfg);
    if tokens.is_empty() {
        return None;
    }
    // ordered map keeps the summation order, and so the bits, reproducible
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &tokens {
        *counts.entry(t).or_default() += 1;
    }
    let mut sum = vec![0.0; cfg.style_dim];
    for (token, count) in counts {
        add_token_features(token, cfg, count as f64, &mut sum);
    }
    let n = tokens.len() as f64;
    sum.iter_mut().for_each(|x| *x /= n);
    Some(StyleAggregate {
        vector: sum,
        token_count: tokens.len(),
    })
}

/// Style aggregates for every document of a corpus, in corpus order.
pub fn aggregate_corpus(corpus: &Corpus, cfg: &FeatureConfig) -> Result<Vec<StyleAggregate>> {
    par::try_map(corpus.documents(), |d| style_aggregate(d, cfg))
}

/// Reranker input `[u ⊙ c, |u − c|, u, c]` (length 4E).
pub fn pair_features(query: &[f64], cand: &[f64]) -> Result<Vec<f64>> {
    check_dims(query.len(), cand.len())?;
    let e = query.len();
    let mut out = Vec::with_capacity(4 * e);
    out.extend(query.iter().zip(cand).map(|(u, c)| u * c));
    out.extend(query.iter().zip(cand).map(|(u, c)| (u - c).abs()));
    out.extend_from_slice(query);
    out.extend_from_slice(cand);
    Ok(out)
}

/// Sparse, L2-normalized topic vector. Entries are sorted by index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TopicVector {
    pub dim: usize,
    pub entries: Vec<(u32, f64)>,
}

impl TopicVector {
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dot(&self, other: &TopicVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Cosine of two normalized vectors is their dot product; zero vectors
    /// give zero.
    pub fn cosine(&self, other: &TopicVector) -> f64 {
        self.dot(other)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for &(i, x) in &self.entries {
            v[i as usize] = x;
        }
        v
    }
}

/// Stand-in for a sentence-embedding model: hashed content-word bags.
#[derive(Debug, Clone)]
pub struct TopicFeaturizer {
    pub topic_dim: usize,
    pub hash_seed: u64,
    stopwords: HashSet<String>,
}

impl Default for TopicFeaturizer {
    fn default() -> Self {
        let cfg = FeatureConfig::default();
        TopicFeaturizer::new(cfg.topic_dim, cfg.hash_seed)
    }
}

impl TopicFeaturizer {
    pub fn new(topic_dim: usize, hash_seed: u64) -> Self {
        Self::with_stopwords(topic_dim, hash_seed, ENGLISH_STOPWORDS.iter().copied())
    }

    pub fn from_config(cfg: &FeatureConfig) -> Self {
        Self::new(cfg.topic_dim, cfg.hash_seed)
    }

    pub fn with_stopwords<'a>(
        topic_dim: usize,
        hash_seed: u64,
        stopwords: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        assert!(topic_dim > 0, "topic_dim must be positive");
        TopicFeaturizer {
            topic_dim,
            hash_seed,
            stopwords: stopwords.into_iter().map(str::to_lowercase).collect(),
        }
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    pub fn topic_vector(&self, doc: &Document) -> TopicVector {
        self.topic_vector_text(&doc.text)
    }

    pub fn topic_vector_text(&self, text: &str) -> TopicVector {
        let unbounded = FeatureConfig {
            max_tokens: usize::MAX,
            ..FeatureConfig::default()
        };
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for token in tokenize(text, &unbounded) {
            if !token.chars().any(char::is_alphabetic) {
                continue;
            }
            let word = token.to_lowercase();
            if self.stopwords.contains(&word) {
                continue;
            }
            let h = xxh3_64_with_seed(word.as_bytes(), self.hash_seed);
            let bucket = (h % self.topic_dim as u64) as u32;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            *acc.entry(bucket).or_default() += sign;
        }
        let norm = acc.values().map(|v| v * v).sum::<f64>().sqrt();
        let entries = if norm == 0.0 {
            Vec::new()
        } else {
            acc.into_iter()
                .filter(|(_, v)| *v != 0.0)
                .map(|(i, v)| (i, v / norm))
                .collect()
        };
        TopicVector {
            dim: self.topic_dim,
            entries,
        }
    }

    /// Topic vectors for a whole corpus, in order.
    pub fn corpus_vectors(&self, corpus: &Corpus) -> Vec<TopicVector> {
        par::map(corpus.documents(), |d| self.topic_vector(d))
    }
}

/// Common English function words.
pub const ENGLISH_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "although", "am", "among",
    "amongst", "an", "and", "any", "are", "aren't", "as", "at", "be", "because", "been", "before",
    "being", "below", "between", "both", "but", "by", "can", "can't", "cannot", "could",
    "couldn't", "did", "didn't", "do", "does", "doesn't", "doing", "don't", "down", "during",
    "each", "either", "else", "even", "ever", "every", "few", "for", "from", "further", "had",
    "hadn't", "has", "hasn't", "have", "haven't", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "however", "i", "i'm", "i've", "if", "in", "into",
    "is", "isn't", "it", "it's", "its", "itself", "just", "let's", "many", "may", "me", "might",
    "more", "most", "much", "must", "my", "myself", "neither", "no", "nor", "not", "now", "of",
    "off", "often", "on", "once", "only", "or", "other", "ought", "our", "ours", "ourselves",
    "out", "over", "own", "perhaps", "quite", "rather", "really", "same", "she", "should",
    "shouldn't", "since", "so", "some", "still", "such", "than", "that", "that's", "the",
    "their", "theirs", "them", "themselves", "then", "there", "there's", "these", "they",
    "they're", "this", "those", "though", "through", "thus", "to", "too", "toward", "towards",
    "under", "until", "up", "upon", "us", "very", "was", "wasn't", "we", "we're", "were",
    "weren't", "what", "when", "where", "whether", "which", "while", "whilst", "who", "whom",
    "why", "will", "with", "within", "without", "won't", "would", "wouldn't", "yet", "you",
    "you're", "your", "yours", "yourself",
];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> FeatureConfig {
        FeatureConfig::default()
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Hi, there", &cfg()), ["Hi", ",", "there"]);
        assert!(tokenize("", &cfg()).is_empty());
        assert_eq!(
            tokenize("don't stop... well-known 'quote'", &cfg()),
            ["don't", "stop", ".", ".", ".", "well-known", "'", "quote", "'"]
        );
        assert_eq!(tokenize("naïve café—ok", &cfg()), ["naïve", "café", "—", "ok"]);
    }

    #[test]
    fn tokenizer_truncates() {
        let text = vec!["w"; 600].join(" ");
        assert_eq!(tokenize(&text, &cfg()).len(), 512);
    }

    #[test]
    fn token_features_deterministic_and_distinct() {
        let c = cfg();
        assert_eq!(token_features("cat", &c), token_features("cat", &c));
        assert_ne!(token_features("cat", &c), token_features("dog", &c));
    }

    #[test]
    fn token_features_counts_every_ngram() {
        // "ab" → whole token + "<a","ab","b>" + "<ab","ab>" + "<ab>"
        let c = cfg();
        let v = token_features("ab", &c);
        let mass: f64 = v.iter().map(|x| x.abs()).sum();
        assert!(mass <= 1.0 + 6.0 * NGRAM_WEIGHT + 1e-12);
        assert!(mass > 0.0);
    }

    #[test]
    fn aggregate_single_token_and_repeats() {
        let c = cfg();
        let one = style_aggregate(&Document::new("d", "a", "g", "a"), &c).unwrap();
        assert_eq!(one.vector, token_features("a", &c));
        let rep = style_aggregate(&Document::new("d", "a", "g", "a a a"), &c).unwrap();
        assert_eq!(rep.token_count, 3);
        for (x, y) in rep.vector.iter().zip(token_features("a", &c)) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn aggregate_two_tokens_is_average() {
        let c = cfg();
        let agg = style_aggregate(&Document::new("d", "a", "g", "cat dog"), &c).unwrap();
        let (x, y) = (token_features("cat", &c), token_features("dog", &c));
        for i in 0..c.style_dim {
            assert!((agg.vector[i] - 0.5 * (x[i] + y[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregate_of_empty_doc_errors() {
        let err = style_aggregate(&Document::new("empty", "a", "g", "  \n "), &cfg()).unwrap_err();
        assert!(matches!(err, Error::NoTokens(id) if id == "empty"));
    }

    #[test]
    fn topic_identical_and_stopword_only() {
        let tf = TopicFeaturizer::default();
        let a = tf.topic_vector_text("Gardening tomatoes requires patience and sunlight.");
        assert!((a.cosine(&a) - 1.0).abs() < 1e-12);
        let z = tf.topic_vector_text("the and of it was but");
        assert!(z.is_zero());
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn topic_disjoint_vocabulary_monte_carlo() {
        // random pseudo-word vocabularies split into two disjoint halves;
        // any non-zero cosine comes from hash collisions only
        let tf = TopicFeaturizer::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vocab: Vec<String> = (0..2000)
            .map(|i| format!("w{i}x{}", rng.gen::<u32>()))
            .collect();
        let mut cos = Vec::new();
        for _ in 0..200 {
            let mut v = vocab.clone();
            v.shuffle(&mut rng);
            let (left, right) = v.split_at(1000);
            let a: Vec<&str> = (0..50).map(|_| left[rng.gen_range(0..1000)].as_str()).collect();
            let b: Vec<&str> = (0..50).map(|_| right[rng.gen_range(0..1000)].as_str()).collect();
            let ca = tf.topic_vector_text(&a.join(" "));
            let cb = tf.topic_vector_text(&b.join(" "));
            cos.push(ca.cosine(&cb).abs());
        }
        // ~0.6 expected collisions of weight ~1/50 each: the bulk sits well
        // under 0.05, a rare triple collision can exceed it
        cos.sort_by(f64::total_cmp);
        let mean = cos.iter().sum::<f64>() / cos.len() as f64;
        assert!(mean < 0.05, "mean |cos| {mean}");
        assert!(cos[189] < 0.05, "p95 |cos| {}", cos[189]);
    }

    #[test]
    fn dense_and_sparse_cosine_agree() {
        let tf = TopicFeaturizer::default();
        let a = tf.topic_vector_text("river boats sail down the river past mills");
        let b = tf.topic_vector_text("old mills grind grain beside the river");
        let dense = crate::cosine(&a.to_dense(), &b.to_dense());
        assert!((dense - a.cosine(&b)).abs() < 1e-12);
    }

    #[test]
    fn pair_feature_blocks() {
        let u = vec![1.0, -2.0, 0.5];
        let f = pair_features(&u, &u).unwrap();
        assert_eq!(&f[0..3], &[1.0, 4.0, 0.25]);
        assert_eq!(&f[3..6], &[0.0, 0.0, 0.0]);
        let zero = vec![0.0; 3];
        let c = vec![3.0, -1.0, 2.0];
        let f = pair_features(&zero, &c).unwrap();
        assert_eq!(f, vec![0.0, 0.0, 0.0, 3.0, 1.0, 2.0, 0.0, 0.0, 0.0, 3.0, -1.0, 2.0]);
        assert!(pair_features(&u, &[1.0]).is_err());
    }

    #[test]
    fn pair_features_match_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = pair_features(&u, &c).unwrap();
        for i in 0..64 {
            assert_eq!(f[i], u[i] * c[i]);
            assert_eq!(f[64 + i], (u[i] - c[i]).abs());
            assert_eq!(f[128 + i], u[i]);
            assert_eq!(f[192 + i], c[i]);
        }
    }

    proptest! {
        #[test]
        fn token_norm_positive(token in "[a-zA-Z0-9']{1,12}") {
            let v = token_features(&token, &cfg());
            prop_assert!(v.iter().any(|x| *x != 0.0));
        }

        #[test]
        fn topic_norm_is_zero_or_one(words in prop::collection::vec("[a-z]{1,9}", 0..40)) {
            let tf = TopicFeaturizer::default();
            let n = tf.topic_vector_text(&words.join(" ")).norm();
            prop_assert!(n.abs() < 1e-12 || (n - 1.0).abs() < 1e-12);
        }

        #[test]
        fn duplicating_tokens_keeps_mean(words in prop::collection::vec("[a-z]{1,6}|[.,;!?]", 1..100)) {
            let c = cfg();
            let text = words.join(" ");
            let once = style_aggregate_text(&text, &c).unwrap();
            let twice = style_aggregate_text(&format!("{text} {text}"), &c).unwrap();
            prop_assert_eq!(once.vector, twice.vector);
        }

        #[test]
        fn pair_feature_swap(u in prop::collection::vec(-5.0f64..5.0, 8), c in prop::collection::vec(-5.0f64..5.0, 8)) {
            let f = pair_features(&u, &c).unwrap();
            let g = pair_features(&c, &u).unwrap();
            prop_assert_eq!(&f[..16], &g[..16]);
            prop_assert_eq!(&f[16..24], &g[24..32]);
            prop_assert_eq!(&f[24..32], &g[16..24]);
        }
    }
}
