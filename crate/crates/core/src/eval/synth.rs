//! Synthetic cross-genre benchmark.
//!
//! Every author has a persistent style: function-word rates, preferred
//! spelling and contraction variants, punctuation habits, sentence length,
//! and for some authors a lowercase "i". Every genre has a register (a shift
//! of the function-word and punctuation rates shared by all authors) and a
//! pseudo-word vocabulary, and each of its topics adds a vocabulary of its
//! own. A document mixes content words from its genre and topic with
//! function words drawn from its author's profile, so topical overlap says
//! nothing about authorship across genres.
//!
//! Three corpora come out: training authors with 2 to 5 documents of mixed
//! genre and length, foreground authors with one document per genre, and
//! background documents by distractor authors spread over every genre and
//! topic.

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::featurizer::ENGLISH_STOPWORDS;
use crate::par;

/// Function words ordered roughly by English frequency.
pub(crate) const FUNCTION_WORDS: &[&str] = &[
    "the", "of", "and", "to", "a", "in", "is", "that", "it", "was", "for", "on", "as", "with", "he",
    "be", "at", "by", "I", "this", "had", "not", "are", "but", "from", "or", "have", "an", "they",
    "which", "you", "were", "her", "she", "there", "would", "their", "we", "him", "been", "has",
    "when", "who", "will", "more", "no", "if", "out", "so", "what", "up", "about", "into", "than",
    "them", "can", "only", "other", "some", "could", "these", "its", "then", "my", "do", "now",
    "such", "our", "over", "me", "even", "most", "also", "through", "much", "before", "between",
    "should", "very", "those", "just", "must", "where", "any", "again", "here", "might", "each",
    "how", "because", "both", "still", "however", "perhaps", "quite", "rather", "yet", "often",
    "thus", "whether", "once", "since", "every", "within", "without", "until", "few", "many",
];

/// Interchangeable forms; an author leans towards one side of each pair.
pub(crate) const VARIANT_PAIRS: &[(&str, &str)] = &[
    ("whilst", "while"),
    ("amongst", "among"),
    ("towards", "toward"),
    ("upon", "on"),
    ("although", "though"),
    ("cannot", "can't"),
    ("do not", "don't"),
    ("it is", "it's"),
    ("is not", "isn't"),
    ("would not", "wouldn't"),
    ("did not", "didn't"),
    ("I am", "I'm"),
    ("I have", "I've"),
];

const GENRE_NAMES: &[&str] = &["essay", "review", "forum", "letter", "news", "story", "speech", "memo"];

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "br",
    "cr", "dr", "fl", "gr", "pl", "st", "tr", "sh", "ch", "th", "qu",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ea", "ou", "io", "ee"];
const CODAS: &[&str] = &["", "", "", "n", "r", "s", "l", "m", "t", "nd", "st", "x"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_authors: usize,
    pub n_genres: usize,
    /// Spread of the per-author style parameters; 0 makes all authors alike.
    pub style_strength: f64,
    /// Fraction of word slots filled with content words.
    pub topic_strength: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub foreground_fraction: f64,
    pub topics_per_genre: usize,
    pub genre_vocab: usize,
    pub topic_vocab: usize,
    pub docs_per_background_author: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Probability that a training document is short (under curation's floor).
    pub short_doc_rate: f64,
    /// Strength of the genre register shared by all authors.
    pub register_strength: f64,
    /// Per-document jitter of the function-word rates.
    pub doc_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_authors: 500,
            n_genres: 3,
            style_strength: 1.0,
            topic_strength: 0.45,
            seed: 0,
            train_fraction: 0.5,
            foreground_fraction: 0.3,
            topics_per_genre: 4,
            genre_vocab: 120,
            topic_vocab: 60,
            docs_per_background_author: 4,
            min_words: 380,
            max_words: 620,
            short_doc_rate: 0.15,
            register_strength: 0.3,
            doc_noise: 0.15,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.n_genres < 2 {
            return err(format!("need at least 2 genres, got {}", self.n_genres));
        }
        if !(self.style_strength >= 0.0 && self.style_strength.is_finite()) {
            return err(format!("style_strength must be finite and >= 0, got {}", self.style_strength));
        }
        if !(0.0..1.0).contains(&self.topic_strength) {
            return err(format!("topic_strength must lie in [0, 1), got {}", self.topic_strength));
        }
        let (tr, fg, _) = self.author_counts();
        if !(self.train_fraction > 0.0 && self.foreground_fraction > 0.0)
            || self.train_fraction + self.foreground_fraction >= 1.0
        {
            return err("train and foreground fractions must be positive and sum below 1".into());
        }
        if tr < 2 || fg < 1 || self.n_authors < tr + fg + 1 {
            return err(format!("{} authors are too few to fill every role", self.n_authors));
        }
        if self.topics_per_genre == 0 || self.genre_vocab == 0 || self.topic_vocab == 0 {
            return err("vocabulary and topic counts must be positive".into());
        }
        if self.docs_per_background_author == 0 {
            return err("docs_per_background_author must be positive".into());
        }
        if self.min_words < 10 || self.min_words > self.max_words {
            return err(format!("bad word range {}..{}", self.min_words, self.max_words));
        }
        if !(0.0..=1.0).contains(&self.short_doc_rate) {
            return err("short_doc_rate must lie in [0, 1]".into());
        }
        if !(self.register_strength >= 0.0 && self.doc_noise >= 0.0) {
            return err("register_strength and doc_noise must be >= 0".into());
        }
        Ok(())
    }

    /// (train, foreground, background) author counts.
    pub fn author_counts(&self) -> (usize, usize, usize) {
        let tr = (self.train_fraction * self.n_authors as f64).round() as usize;
        let fg = (self.foreground_fraction * self.n_authors as f64).round() as usize;
        (tr, fg, self.n_authors.saturating_sub(tr + fg))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBenchmark {
    /// Uncurated training documents.
    pub train: Corpus,
    pub foreground: Corpus,
    pub background: Corpus,
}

pub fn make_synthetic_benchmark(
    n_authors: usize,
    n_genres: usize,
    style_strength: f64,
    topic_strength: f64,
    seed: u64,
) -> Result<SyntheticBenchmark> {
    generate(&SynthConfig {
        n_authors,
        n_genres,
        style_strength,
        topic_strength,
        seed,
        ..SynthConfig::default()
    })
}

fn mix(seed: u64, stream: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn rng_for(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, stream, index))
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (0..n).map(|r| 1.0 / ((r + 1) as f64).powf(exponent)).collect()
}

struct Genre {
    name: String,
    register: Vec<f64>,
    question: f64,
    exclaim: f64,
    sentence_scale: f64,
    vocab: Vec<String>,
    topics: Vec<Vec<String>>,
}

fn pseudo_words(rng: &mut ChaCha8Rng, n: usize, taken: &mut HashSet<String>) -> Vec<String> {
    let stop: HashSet<&str> = ENGLISH_STOPWORDS.iter().copied().collect();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
            w.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
            w.push_str(CODAS[rng.gen_range(0..CODAS.len())]);
        }
        if !stop.contains(w.as_str()) && taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn make_genres(cfg: &SynthConfig) -> Vec<Genre> {
    let mut rng = rng_for(cfg.seed, 1, 0);
    let mut taken = HashSet::new();
    (0..cfg.n_genres)
        .map(|g| {
            let name = GENRE_NAMES
                .get(g)
                .map_or_else(|| format!("genre{g}"), |s| s.to_string());
            let r = cfg.register_strength;
            Genre {
                name,
                register: (0..FUNCTION_WORDS.len()).map(|_| r * normal(&mut rng)).collect(),
                question: (1.5 * r * normal(&mut rng)).exp(),
                exclaim: (1.5 * r * normal(&mut rng)).exp(),
                sentence_scale: (0.5 * r * normal(&mut rng)).exp(),
                vocab: pseudo_words(&mut rng, cfg.genre_vocab, &mut taken),
                topics: (0..cfg.topics_per_genre)
                    .map(|_| pseudo_words(&mut rng, cfg.topic_vocab, &mut taken))
                    .collect(),
            }
        })
        .collect()
}

struct Style {
    logits: Vec<f64>,
    variant_first: Vec<f64>,
    variant_rate: f64,
    comma: f64,
    semicolon: f64,
    colon: f64,
    dash: f64,
    paren: f64,
    exclaim: f64,
    question: f64,
    ellipsis: f64,
    sentence_len: f64,
    lowercase_i: bool,
}

fn sample_style(rng: &mut ChaCha8Rng, s: f64) -> Style {
    let base = zipf_weights(FUNCTION_WORDS.len(), 0.8);
    let ln = |scale: f64, rng: &mut ChaCha8Rng| (scale * s * normal(rng)).exp();
    Style {
        logits: base.iter().map(|b| b.ln() + 0.5 * s * normal(rng)).collect(),
        variant_first: (0..VARIANT_PAIRS.len())
            .map(|_| 0.5 * (1.0 + (1.5 * s * normal(rng)).tanh()))
            .collect(),
        variant_rate: 0.05 * ln(0.3, rng),
        comma: 0.07 * ln(0.5, rng),
        semicolon: 0.006 * ln(0.8, rng),
        colon: 0.004 * ln(0.8, rng),
        dash: 0.005 * ln(0.8, rng),
        paren: 0.04 * ln(0.8, rng),
        exclaim: 0.03 * ln(0.8, rng),
        question: 0.05 * ln(0.6, rng),
        ellipsis: 0.01 * ln(0.8, rng),
        sentence_len: 17.0 * ln(0.25, rng),
        lowercase_i: rng.gen::<f64>() < 0.15 * s.min(1.0),
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn write_document(
    rng: &mut ChaCha8Rng,
    style: &Style,
    genre: &Genre,
    topic: usize,
    n_words: usize,
    cfg: &SynthConfig,
) -> String {
    let fw = WeightedIndex::new(
        style
            .logits
            .iter()
            .zip(&genre.register)
            .map(|(l, r)| (l + r + cfg.doc_noise * normal(rng)).exp()),
    )
    .expect("positive weights");
    let genre_words = WeightedIndex::new(zipf_weights(genre.vocab.len(), 1.0)).expect("weights");
    let topic_vocab = &genre.topics[topic];
    let topic_words = WeightedIndex::new(zipf_weights(topic_vocab.len(), 1.0)).expect("weights");
    let mean_len = style.sentence_len * genre.sentence_scale;

    let mut text = String::new();
    let mut written = 0;
    let mut in_paragraph = 0;
    while written < n_words {
        let len = (mean_len + 0.4 * mean_len * normal(rng)).round().max(3.0) as usize;
        let mut words: Vec<String> = Vec::with_capacity(len + 2);
        while words.len() < len {
            if rng.gen::<f64>() < cfg.topic_strength {
                let w = if rng.gen::<bool>() {
                    &genre.vocab[genre_words.sample(rng)]
                } else {
                    &topic_vocab[topic_words.sample(rng)]
                };
                words.push(w.clone());
            } else if rng.gen::<f64>() < style.variant_rate {
                let i = rng.gen_range(0..VARIANT_PAIRS.len());
                let (a, b) = VARIANT_PAIRS[i];
                let form = if rng.gen::<f64>() < style.variant_first[i] { a } else { b };
                words.extend(form.split(' ').map(str::to_string));
            } else {
                words.push(FUNCTION_WORDS[fw.sample(rng)].to_string());
            }
        }
        if style.lowercase_i {
            for w in &mut words {
                if w.starts_with('I') && (w.len() == 1 || w.as_bytes()[1] == b'\'') {
                    w.replace_range(0..1, "i");
                }
            }
        }
        words[0] = capitalize(&words[0]);
        let n = words.len();
        let paren = if n >= 6 && rng.gen::<f64>() < style.paren {
            let start = rng.gen_range(1..n - 3);
            Some((start, start + rng.gen_range(1..=3)))
        } else {
            None
        };
        let mut sentence = String::new();
        for (i, w) in words.iter().enumerate() {
            if i > 0 {
                sentence.push(' ');
            }
            if paren.is_some_and(|(s, _)| s == i) {
                sentence.push('(');
            }
            sentence.push_str(w);
            if paren.is_some_and(|(_, e)| e == i) {
                sentence.push(')');
            } else if i + 1 < n {
                let r: f64 = rng.gen();
                if r < style.comma {
                    sentence.push(',');
                } else if r < style.comma + style.semicolon {
                    sentence.push(';');
                } else if r < style.comma + style.semicolon + style.colon {
                    sentence.push(':');
                } else if r < style.comma + style.semicolon + style.colon + style.dash {
                    sentence.push_str(" -");
                }
            }
        }
        let r: f64 = rng.gen();
        let q = style.question * genre.question;
        let x = style.exclaim * genre.exclaim;
        sentence.push_str(if r < q {
            "?"
        } else if r < q + x {
            "!"
        } else if r < q + x + style.ellipsis {
            "..."
        } else {
            "."
        });
        if !text.is_empty() {
            if in_paragraph >= 4 && rng.gen::<f64>() < 0.3 {
                text.push_str("\n\n");
                in_paragraph = 0;
            } else {
                text.push(' ');
            }
        }
        text.push_str(&sentence);
        in_paragraph += 1;
        written += n;
    }
    text
}

fn hex_id(rng: &mut ChaCha8Rng) -> String {
    format!("{:016x}", rng.gen::<u64>())
}

#[derive(Clone, Copy)]
enum Role {
    Train,
    Foreground,
    Background,
}

fn author_docs(cfg: &SynthConfig, genres: &[Genre], role: Role, index: usize) -> Vec<Document> {
    let stream = match role {
        Role::Train => 10,
        Role::Foreground => 20,
        Role::Background => 30,
    };
    let mut rng = rng_for(cfg.seed, stream, index as u64);
    let style = sample_style(&mut rng, cfg.style_strength);
    let author_id = format!("au{}", hex_id(&mut rng));
    let plan: Vec<(usize, bool)> = match role {
        Role::Train => (0..rng.gen_range(2..=5))
            .map(|_| (rng.gen_range(0..genres.len()), rng.gen::<f64>() < cfg.short_doc_rate))
            .collect(),
        Role::Foreground => (0..genres.len()).map(|g| (g, false)).collect(),
        Role::Background => (0..cfg.docs_per_background_author)
            .map(|_| (rng.gen_range(0..genres.len()), false))
            .collect(),
    };
    plan.into_iter()
        .enumerate()
        .map(|(d, (g, short))| {
            let mut drng = rng_for(cfg.seed, stream + 1, ((index as u64) << 8) | d as u64);
            let genre = &genres[g];
            let topic = drng.gen_range(0..genre.topics.len());
            let words = if short {
                drng.gen_range(60..=300)
            } else {
                drng.gen_range(cfg.min_words..=cfg.max_words)
            };
            let text = write_document(&mut drng, &style, genre, topic, words, cfg);
            Document::new(hex_id(&mut drng), author_id.clone(), genre.name.clone(), text)
        })
        .collect()
}

/// Generate the three corpora. Identical configs give identical output.
pub fn generate(cfg: &SynthConfig) -> Result<SyntheticBenchmark> {
    cfg.validate()?;
    let genres = make_genres(cfg);
    let (tr, fg, bg) = cfg.author_counts();
    let build = |role: Role, n: usize| -> Result<Corpus> {
        let docs: Vec<Vec<Document>> = par::map_range(n, |i| author_docs(cfg, &genres, role, i));
        Corpus::new(docs.into_iter().flatten().collect())
    };
    Ok(SyntheticBenchmark {
        train: build(Role::Train, tr)?,
        foreground: build(Role::Foreground, fg)?,
        background: build(Role::Background, bg)?,
    })
}
