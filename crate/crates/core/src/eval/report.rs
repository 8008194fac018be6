//! Per-split metrics, unweighted means across splits, and chance levels.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::{mrr_at_k, success_at_k};
use crate::eval::splits::QuerySplit;
use crate::par;
use crate::pipeline::RankedList;

/// Metric values as fractions in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub success_at_8: f64,
    pub success_at_100: f64,
    pub mrr_at_20: f64,
}

impl Metrics {
    fn mean(items: &[Metrics]) -> Metrics {
        let n = items.len().max(1) as f64;
        Metrics {
            success_at_8: items.iter().map(|m| m.success_at_8).sum::<f64>() / n,
            success_at_100: items.iter().map(|m| m.success_at_100).sum::<f64>() / n,
            mrr_at_20: items.iter().map(|m| m.mrr_at_20).sum::<f64>() / n,
        }
    }

    pub fn as_percent(&self) -> [f64; 3] {
        [self.success_at_8 * 100.0, self.success_at_100 * 100.0, self.mrr_at_20 * 100.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub seed: u64,
    pub num_queries: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub config_hash: Option<String>,
    pub splits: Vec<SplitReport>,
    /// Unweighted mean over splits.
    pub mean: Metrics,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn csv_header() -> &'static str {
        "system,success_at_8,success_at_100,mrr_at_20"
    }

    /// Summary row with percentages to one decimal.
    pub fn csv_row(&self) -> String {
        let [s8, s100, mrr] = self.mean.as_percent();
        format!("{},{s8:.1},{s100:.1},{mrr:.1}", self.system)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>8} {:>10} {:>8} {:>8}", "split", "queries", "S@8", "S@100", "MRR@20")?;
        for s in &self.splits {
            let [a, b, c] = s.metrics.as_percent();
            writeln!(f, "{:<10} {:>8} {a:>10.1} {b:>8.1} {c:>8.1}", s.seed, s.num_queries)?;
        }
        let [a, b, c] = self.mean.as_percent();
        write!(f, "{:<10} {:>8} {a:>10.1} {b:>8.1} {c:>8.1}", "mean", "")
    }
}

/// Metrics of one split's run.
pub fn evaluate_split(run: &[RankedList], split: &QuerySplit) -> Result<SplitReport> {
    let by_query: HashMap<&str, &RankedList> = run.iter().map(|l| (l.query_id.as_str(), l)).collect();
    let lists = split
        .queries
        .iter()
        .map(|q| by_query.get(q.as_str()).copied().ok_or_else(|| Error::MissingRanking(q.clone())))
        .collect::<Result<Vec<_>>>()?;
    let per: Vec<Metrics> = par::map(&lists, |l| {
        let needles = &split.needles[&l.query_id];
        Metrics {
            success_at_8: success_at_k(l, needles, 8),
            success_at_100: success_at_k(l, needles, 100),
            mrr_at_20: mrr_at_k(l, needles, 20),
        }
    });
    Ok(SplitReport {
        seed: split.seed,
        num_queries: per.len(),
        metrics: Metrics::mean(&per),
    })
}

/// `runs[i]` holds the rankings for `splits[i]`.
pub fn evaluate_run(runs: &[Vec<RankedList>], splits: &[QuerySplit]) -> Result<EvalReport> {
    if runs.len() != splits.len() {
        return Err(Error::InvalidData(format!(
            "{} runs for {} splits",
            runs.len(),
            splits.len()
        )));
    }
    if splits.is_empty() {
        return Err(Error::InvalidData("no splits to evaluate".into()));
    }
    let reports = runs
        .iter()
        .zip(splits)
        .map(|(r, s)| evaluate_split(r, s))
        .collect::<Result<Vec<_>>>()?;
    let mean = Metrics::mean(&reports.iter().map(|r| r.metrics).collect::<Vec<_>>());
    Ok(EvalReport {
        system: String::new(),
        config_hash: None,
        splits: reports,
        mean,
    })
}

/// Probability that a uniformly random ranking of `pool` candidates puts at
/// least one of `needles` in the top `k`: `1 − C(pool − needles, k) / C(pool, k)`.
pub fn chance_hit(pool: usize, needles: usize, k: usize) -> f64 {
    if needles == 0 {
        return 0.0;
    }
    if k + needles > pool {
        return 1.0;
    }
    let miss: f64 = (0..k).map(|i| (pool - needles - i) as f64 / (pool - i) as f64).product();
    1.0 - miss
}

/// Expected Success@k of a random ranker over a set of queries and the
/// standard deviation of the observed mean (Poisson-binomial).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChanceLevel {
    pub mean: f64,
    pub sd: f64,
    pub num_queries: usize,
}

impl ChanceLevel {
    /// Signed distance from chance in standard deviations.
    pub fn z(&self, observed: f64) -> f64 {
        if self.sd == 0.0 {
            return if observed == self.mean { 0.0 } else { f64::INFINITY.copysign(observed - self.mean) };
        }
        (observed - self.mean) / self.sd
    }
}

/// Chance level pooled over every query of every split.
pub fn chance_success(splits: &[QuerySplit], k: usize) -> ChanceLevel {
    let mut ps = Vec::new();
    for s in splits {
        for q in &s.queries {
            ps.push(chance_hit(s.candidates.len(), s.needles.get(q).map_or(0, |n| n.len()), k));
        }
    }
    let n = ps.len().max(1) as f64;
    ChanceLevel {
        mean: ps.iter().sum::<f64>() / n,
        sd: ps.iter().map(|p| p * (1.0 - p)).sum::<f64>().sqrt() / n,
        num_queries: ps.len(),
    }
}

/// Query-weighted Success@k over all splits, matching [`chance_success`].
pub fn pooled_success(runs: &[Vec<RankedList>], splits: &[QuerySplit], k: usize) -> Result<f64> {
    let mut hits = 0.0;
    let mut n = 0usize;
    for (run, split) in runs.iter().zip(splits) {
        let by_query: HashMap<&str, &RankedList> = run.iter().map(|l| (l.query_id.as_str(), l)).collect();
        for q in &split.queries {
            let l = by_query.get(q.as_str()).ok_or_else(|| Error::MissingRanking(q.clone()))?;
            hits += success_at_k(l, &split.needles[q], k);
            n += 1;
        }
    }
    Ok(hits / n.max(1) as f64)
}
