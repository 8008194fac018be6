//! Hard-negative epoch construction.
//!
//! All training documents are clustered with cosine k-means (optionally on
//! randomly projected embeddings), each author is pinned to one cluster,
//! oversized clusters are rebalanced, and batches are cut from a random
//! ordering of the clusters. Authors that end up sharing a batch tend to be
//! close in embedding space, which makes the in-batch negatives hard.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{check_dims, Error, Result};
use crate::{cosine, dot, par};

pub const KMEANS_MAX_ITERS: usize = 25;

/// Rademacher projection `r = R v` with entries `±1/√K`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomProjector {
    matrix: Vec<f64>,
    out_dim: usize,
    in_dim: usize,
    pub seed: u64,
}

impl RandomProjector {
    /// `out_dim` defaults to `in_dim / 3`.
    pub fn new(in_dim: usize, out_dim: Option<usize>, seed: u64) -> Result<Self> {
        let k = out_dim.unwrap_or(in_dim / 3);
        if k == 0 || k >= in_dim {
            return Err(Error::Config(format!(
                "projection dimension {k} must lie in 1..{in_dim}"
            )));
        }
        let scale = 1.0 / (k as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let matrix = (0..k * in_dim)
            .map(|_| if rng.gen::<bool>() { scale } else { -scale })
            .collect();
        Ok(RandomProjector {
            matrix,
            out_dim: k,
            in_dim,
            seed,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.in_dim, v.len())?;
        Ok(self
            .matrix
            .chunks_exact(self.in_dim)
            .map(|row| dot(row, v))
            .collect())
    }

    pub fn project_all(&self, vs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        par::try_map(vs, |v| self.project(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: Vec<usize>,
    /// Unit-norm centroids (a centroid is zero only if all its members are).
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        self.assignment.iter().for_each(|&c| sizes[c] += 1);
        sizes
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt();
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let s = dot(point, centroid);
        if s > best.1 {
            best = (c, s);
        }
    }
    best
}

/// Spherical k-means: points and centroids live on the unit sphere and the
/// objective is cosine distance. `k` is clamped to the number of vectors.
///
/// Seeding is k-means++ from a seeded generator; at most
/// [`KMEANS_MAX_ITERS`] Lloyd iterations run, stopping early once
/// assignments are stable. A cluster that empties is reseeded with the point
/// farthest from its own centroid.
pub fn kmeans_cosine(vectors: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if vectors.is_empty() {
        return Err(Error::InvalidData("cannot cluster an empty set".into()));
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: v.len(),
        });
    }
    let n = vectors.len();
    let k = k.min(n);
    let points: Vec<Vec<f64>> = par::map(vectors, |v| normalized(v));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(&points, k, &mut rng);

    let mut assignment = vec![usize::MAX; n];
    let mut iterations = 0;
    for _ in 0..KMEANS_MAX_ITERS {
        iterations += 1;
        let next: Vec<(usize, f64)> = par::map(&points, |p| nearest(p, &centroids));
        let mut next_assign: Vec<usize> = next.iter().map(|x| x.0).collect();
        let mut sims: Vec<f64> = next.iter().map(|x| x.1).collect();
        reseed_empty(&points, &mut centroids, &mut next_assign, &mut sims);
        let changed = next_assign != assignment;
        assignment = next_assign;
        centroids = update_centroids(&points, &assignment, k, dim);
        if !changed {
            break;
        }
    }
    Ok(KMeansResult {
        assignment,
        centroids,
        iterations,
    })
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| 1.0 - dot(p, &centroids[0])).collect();
    while centroids.len() < k {
        let weights: Vec<f64> = dist
            .iter()
            .zip(&chosen)
            .map(|(d, &c)| if c { 0.0 } else { d.max(0.0).powi(2) })
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, w) in weights.iter().enumerate() {
                if *w > 0.0 && target < *w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            if chosen[idx] {
                // numerical fall-through; take the heaviest remaining point
                (0..n).filter(|&i| !chosen[i]).max_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(b.cmp(&a))).unwrap()
            } else {
                idx
            }
        } else {
            (0..n).find(|&i| !chosen[i]).expect("k <= n")
        };
        chosen[pick] = true;
        let c = points[pick].clone();
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(1.0 - dot(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn reseed_empty(
    points: &[Vec<f64>],
    centroids: &mut [Vec<f64>],
    assign: &mut [usize],
    sims: &mut [f64],
) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        assign.iter().for_each(|&c| sizes[c] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        // farthest point that is not alone in its cluster
        let donor = (0..points.len())
            .filter(|&i| sizes[assign[i]] > 1)
            .min_by(|&a, &b| sims[a].total_cmp(&sims[b]).then(a.cmp(&b)));
        let Some(i) = donor else { return };
        centroids[empty] = points[i].clone();
        assign[i] = empty;
        sims[i] = dot(&points[i], &centroids[empty]);
    }
}

fn update_centroids(points: &[Vec<f64>], assign: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in assign.iter().enumerate() {
        members[c].push(i);
    }
    // one cluster per task, members summed in index order
    par::map(&members, |idx| {
        let mut sum = vec![0.0; dim];
        for &i in idx {
            sum.iter_mut().zip(&points[i]).for_each(|(s, x)| *s += x);
        }
        normalized(&sum)
    })
}

/// Pin each author to a single cluster. When an author's two documents land
/// in different clusters the author follows the cluster holding more
/// documents; equal sizes go to the lower cluster index.
pub fn assign_authors(assignment: &[usize], corpus: &Corpus) -> Result<BTreeMap<String, usize>> {
    check_dims(corpus.len(), assignment.len())?;
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    assignment.iter().for_each(|&c| sizes[c] += 1);
    let mut out = BTreeMap::new();
    for (author, positions) in corpus.author_index() {
        let [a, b] = positions[..] else {
            return Err(Error::InvalidData(format!(
                "author {author:?} has {} documents, expected exactly 2",
                positions.len()
            )));
        };
        let (ca, cb) = (assignment[a], assignment[b]);
        let chosen = if ca == cb {
            ca
        } else if sizes[ca] != sizes[cb] {
            if sizes[ca] > sizes[cb] {
                ca
            } else {
                cb
            }
        } else {
            ca.min(cb)
        };
        out.insert(author.clone(), chosen);
    }
    Ok(out)
}

/// Cap every cluster at `max_authors`.
///
/// Clusters are visited in index order. In an oversized cluster the authors
/// least similar to its centroid move out, one at a time, each to the
/// cluster with spare capacity whose centroid is most similar to the
/// author's mean embedding (ties go to the smaller, then lower-indexed
/// cluster).
pub fn rebalance(
    author_clusters: &BTreeMap<String, usize>,
    max_authors: usize,
    centroids: &[Vec<f64>],
    author_means: &BTreeMap<String, Vec<f64>>,
) -> Result<BTreeMap<String, usize>> {
    let k = centroids.len();
    let n = author_clusters.len();
    if max_authors == 0 || k * max_authors < n {
        return Err(Error::InvalidData(format!(
            "{n} authors do not fit in {k} clusters of at most {max_authors}"
        )));
    }
    let mut out = author_clusters.clone();
    let mut sizes = vec![0usize; k];
    for &c in out.values() {
        if c >= k {
            return Err(Error::InvalidData(format!("cluster index {c} out of range")));
        }
        sizes[c] += 1;
    }
    let mean_of = |a: &str| -> Result<&Vec<f64>> {
        author_means
            .get(a)
            .ok_or_else(|| Error::InvalidData(format!("no mean embedding for author {a:?}")))
    };
    for j in 0..k {
        if sizes[j] <= max_authors {
            continue;
        }
        let mut members: Vec<(&String, f64)> = Vec::new();
        for (a, _) in out.iter().filter(|(_, &c)| c == j) {
            members.push((a, cosine(mean_of(a)?, &centroids[j])));
        }
        // most typical first; the tail overflows
        members.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(y.0)));
        let movers: Vec<String> = members[max_authors..].iter().map(|(a, _)| (*a).clone()).collect();
        for author in movers {
            let mean = mean_of(&author)?;
            let target = (0..k)
                .filter(|&c| c != j && sizes[c] < max_authors)
                .map(|c| (c, cosine(mean, &centroids[c])))
                .max_by(|x, y| {
                    x.1.total_cmp(&y.1)
                        .then(sizes[y.0].cmp(&sizes[x.0]))
                        .then(y.0.cmp(&x.0))
                })
                .map(|(c, _)| c)
                .expect("capacity checked above");
            sizes[j] -= 1;
            sizes[target] += 1;
            out.insert(author, target);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorPair {
    pub author_id: String,
    pub doc_ids: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub authors: Vec<AuthorPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochPlan {
    pub batches: Vec<Batch>,
    pub batch_size: usize,
    pub clustering_factor: f64,
    pub num_clusters: usize,
    /// Dimension of the vectors handed to k-means.
    pub clustering_dim: usize,
}

impl EpochPlan {
    pub fn num_authors(&self) -> usize {
        self.batches.iter().map(|b| b.authors.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchConfig {
    /// Authors per batch (b).
    pub batch_size: usize,
    /// Clustering factor (s).
    pub clustering_factor: f64,
    /// Cluster on randomly projected embeddings of dimension `D / 3`.
    pub random_projection: bool,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            batch_size: 16,
            clustering_factor: 3.5,
            random_projection: true,
        }
    }
}

impl BatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.clustering_factor >= 1.0) || !self.clustering_factor.is_finite() {
            return Err(Error::Config("clustering_factor must be >= 1".into()));
        }
        Ok(())
    }

    pub fn num_clusters(&self) -> usize {
        ((self.batch_size as f64 * self.clustering_factor).round() as usize).max(1)
    }
}

/// Build one epoch of author batches from per-document embeddings (aligned
/// with `corpus.documents()`).
///
/// Clusters are visited in a seeded random order, taking `⌊s⌋` and `⌈s⌉`
/// clusters alternately per group; the authors of consecutive groups are
/// streamed into batches of at most `b`, so a group larger than `b` spills
/// into the next batch and no author is dropped.
pub fn build_epoch(
    embeddings: &[Vec<f64>],
    corpus: &Corpus,
    cfg: &BatchConfig,
    seed: u64,
    projector: Option<&RandomProjector>,
) -> Result<EpochPlan> {
    cfg.validate()?;
    check_dims(corpus.len(), embeddings.len())?;
    let n_authors = corpus.author_index().len();
    if n_authors < 2 {
        return Err(Error::InvalidData(format!(
            "need at least 2 authors to build batches, got {n_authors}"
        )));
    }
    let pairs: BTreeMap<&str, AuthorPair> = corpus
        .author_index()
        .iter()
        .map(|(a, pos)| match pos[..] {
            [x, y] => Ok((
                a.as_str(),
                AuthorPair {
                    author_id: a.clone(),
                    doc_ids: [
                        corpus.documents()[x].doc_id.clone(),
                        corpus.documents()[y].doc_id.clone(),
                    ],
                },
            )),
            _ => Err(Error::InvalidData(format!(
                "author {a:?} has {} documents, expected exactly 2",
                pos.len()
            ))),
        })
        .collect::<Result<_>>()?;

    let inputs = match projector {
        Some(p) => p.project_all(embeddings)?,
        None => embeddings.to_vec(),
    };
    let clustering_dim = inputs.first().map_or(0, Vec::len);

    if cfg.batch_size >= n_authors {
        return Ok(EpochPlan {
            batches: vec![Batch {
                authors: pairs.into_values().collect(),
            }],
            batch_size: cfg.batch_size,
            clustering_factor: cfg.clustering_factor,
            num_clusters: 1,
            clustering_dim,
        });
    }

    let km = kmeans_cosine(&inputs, cfg.num_clusters(), seed)?;
    let clusters = assign_authors(&km.assignment, corpus)?;
    let means: BTreeMap<String, Vec<f64>> = corpus
        .author_index()
        .iter()
        .map(|(a, pos)| {
            let mut m = vec![0.0; clustering_dim];
            for &p in pos {
                m.iter_mut().zip(&inputs[p]).for_each(|(s, x)| *s += 0.5 * x);
            }
            (a.clone(), m)
        })
        .collect();
    let clusters = rebalance(&clusters, cfg.batch_size, &km.centroids, &means)?;

    let k = km.k();
    let mut members: Vec<Vec<&str>> = vec![Vec::new(); k];
    for (a, &c) in &clusters {
        members[c].push(a.as_str());
    }
    let mut order: Vec<usize> = (0..k).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x0bad_5eed));
    order.shuffle(&mut rng);

    let lo = cfg.clustering_factor.floor() as usize;
    let hi = cfg.clustering_factor.ceil() as usize;
    let mut batches = Vec::new();
    let mut current: Vec<AuthorPair> = Vec::new();
    let mut cursor = 0;
    let mut take_hi = false;
    while cursor < order.len() {
        let take = if take_hi { hi } else { lo }.max(1);
        take_hi = !take_hi;
        for &c in &order[cursor..(cursor + take).min(order.len())] {
            for a in &members[c] {
                current.push(pairs[a].clone());
                if current.len() == cfg.batch_size {
                    batches.push(Batch {
                        authors: std::mem::take(&mut current),
                    });
                }
            }
        }
        cursor += take;
    }
    if !current.is_empty() {
        batches.push(Batch { authors: current });
    }
    Ok(EpochPlan {
        batches,
        batch_size: cfg.batch_size,
        clustering_factor: cfg.clustering_factor,
        num_clusters: k,
        clustering_dim,
    })
}
