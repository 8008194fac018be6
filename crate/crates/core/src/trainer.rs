//! Supervised contrastive training for both stages.
//!
//! The loss for a query with candidate scores `s` and positive `p` is
//! `−log softmax(s / τ)[p]`. Only the linear heads are trained; gradients are
//! closed-form and checked against finite differences in the tests.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batcher::{build_epoch, Batch, BatchConfig, EpochPlan, RandomProjector};
use crate::corpus::Corpus;
use crate::error::{check_dims, Error, Result};
use crate::featurizer::aggregate_corpus;
use crate::reranker::{RerankerExample, RerankerModel};
use crate::retriever::{RetrieverModel, RetrieverParams};
use crate::{dot, par};

const PROJECTION_SEED_MIX: u64 = 0x5052_4f4a_4543_5431;

/// One query's candidate scores with the index of its positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveInstance {
    pub positive: usize,
    pub scores: Vec<f64>,
    pub tau: f64,
}

impl ContrastiveInstance {
    pub fn new(positive: usize, scores: Vec<f64>, tau: f64) -> Result<Self> {
        check_instance(&scores, positive, tau)?;
        Ok(ContrastiveInstance { positive, scores, tau })
    }
}

fn check_instance(scores: &[f64], positive: usize, tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    if positive >= scores.len() {
        return Err(Error::InvalidData(format!(
            "positive index {positive} outside {} scores",
            scores.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

pub fn contrastive_loss(inst: &ContrastiveInstance) -> Result<f64> {
    Ok(loss_and_score_grad(&inst.scores, inst.positive, inst.tau)?.0)
}

/// Loss together with its gradient with respect to the raw scores,
/// `∂l/∂s_j = (p_j − 1[j = positive]) / τ`.
pub fn loss_and_score_grad(scores: &[f64], positive: usize, tau: f64) -> Result<(f64, Vec<f64>)> {
    check_instance(scores, positive, tau)?;
    let z: Vec<f64> = scores.iter().map(|s| s / tau).collect();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|x| (x - max).exp()).sum();
    let lse = max + sum.ln();
    let loss = lse - z[positive];
    let grad = z
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let p = (x - lse).exp();
            (p - if j == positive { 1.0 } else { 0.0 }) / tau
        })
        .collect();
    Ok((loss, grad))
}

fn check_paired(batch: &[&[f64]], in_dim: usize) -> Result<()> {
    if batch.len() % 2 != 0 {
        return Err(Error::InvalidData(format!(
            "batch holds {} documents; expected two per author",
            batch.len()
        )));
    }
    if batch.len() < 4 {
        return Err(Error::InvalidData(
            "a batch needs at least two authors to have negatives".into(),
        ));
    }
    for u in batch {
        check_dims(in_dim, u.len())?;
    }
    Ok(())
}

/// Per-query losses and `G = ∂L/∂S` for a paired batch. Documents `2i` and
/// `2i + 1` belong to the same author.
fn batch_forward(embeddings: &[Vec<f64>], tau: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = embeddings.len();
    let rows: Vec<Result<(f64, Vec<f64>)>> = par::map_range(n, |i| {
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let scores: Vec<f64> = others.iter().map(|&j| dot(&embeddings[i], &embeddings[j])).collect();
        let mate = i ^ 1;
        let pos = others.iter().position(|&j| j == mate).expect("mate is in the batch");
        let (loss, g) = loss_and_score_grad(&scores, pos, tau)?;
        let mut row = vec![0.0; n];
        for (&j, gj) in others.iter().zip(g) {
            row[j] = gj / n as f64;
        }
        Ok((loss, row))
    });
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(n);
    for r in rows {
        let (l, row) = r?;
        total += l;
        grad.push(row);
    }
    Ok((total / n as f64, grad))
}

/// Mean contrastive loss over all `2N` documents of a paired batch, each
/// using its author-mate as the positive and the other `2N − 2` documents as
/// negatives.
pub fn batch_loss_retriever(params: &RetrieverParams, batch: &[&[f64]], tau: f64) -> Result<f64> {
    check_paired(batch, params.in_dim)?;
    let v: Vec<Vec<f64>> = par::map(batch, |u| params.project(u));
    Ok(batch_forward(&v, tau)?.0)
}

/// Loss and exact gradient of [`batch_loss_retriever`] with respect to `W`
/// and `b`.
pub fn grad_retriever(
    params: &RetrieverParams,
    batch: &[&[f64]],
    tau: f64,
) -> Result<(f64, RetrieverParams)> {
    check_paired(batch, params.in_dim)?;
    let v: Vec<Vec<f64>> = par::map(batch, |u| params.project(u));
    let (loss, g) = batch_forward(&v, tau)?;
    let n = v.len();
    let d = params.out_dim;
    // ∂L/∂v_i = Σ_j (G_ij + G_ji) v_j
    let dv: Vec<Vec<f64>> = par::map_range(n, |i| {
        let mut acc = vec![0.0; d];
        for j in 0..n {
            let c = g[i][j] + g[j][i];
            if c != 0.0 {
                acc.iter_mut().zip(&v[j]).for_each(|(a, x)| *a += c * x);
            }
        }
        acc
    });
    let e = params.in_dim;
    let rows: Vec<Vec<f64>> = par::map_range(d, |r| {
        let mut row = vec![0.0; e];
        for (dvi, u) in dv.iter().zip(batch) {
            let c = dvi[r];
            row.iter_mut().zip(u.iter()).for_each(|(a, x)| *a += c * x);
        }
        row
    });
    let mut out = RetrieverParams::zeros(d, e);
    out.w = rows.concat();
    for dvi in &dv {
        out.b.iter_mut().zip(dvi).for_each(|(a, x)| *a += x);
    }
    Ok((loss, out))
}

/// Summed loss of the reranker head over a set of examples.
pub fn reranker_loss(a: &[f64], bias: f64, examples: &[RerankerExample], tau: f64) -> Result<f64> {
    Ok(grad_reranker(a, bias, examples, tau)?.0)
}

/// Summed loss and `∇_a Σ l_q = Σ_q Σ_j (p_j − 1[j = pos]) χ_j / τ`. The
/// bias shifts every score of an instance equally, so its gradient is zero.
pub fn grad_reranker(
    a: &[f64],
    bias: f64,
    examples: &[RerankerExample],
    tau: f64,
) -> Result<(f64, Vec<f64>)> {
    if examples.is_empty() {
        return Err(Error::InvalidData("no reranker examples".into()));
    }
    let per: Vec<Result<(f64, Vec<f64>)>> = par::map(examples, |ex| {
        let mut scores = Vec::with_capacity(ex.features.len());
        for chi in &ex.features {
            check_dims(a.len(), chi.len())?;
            scores.push(dot(a, chi) + bias);
        }
        let (loss, gs) = loss_and_score_grad(&scores, ex.positive, tau)?;
        let mut grad = vec![0.0; a.len()];
        for (chi, gj) in ex.features.iter().zip(gs) {
            grad.iter_mut().zip(chi).for_each(|(acc, x)| *acc += gj * x);
        }
        Ok((loss, grad))
    });
    let mut loss = 0.0;
    let mut grad = vec![0.0; a.len()];
    for r in per {
        let (l, g) = r?;
        loss += l;
        grad.iter_mut().zip(g).for_each(|(acc, x)| *acc += x);
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    check_dims(params.len(), grads.len())?;
    check_dims(params.len(), state.m.len())?;
    check_dims(params.len(), state.v.len())?;
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub tau_retriever: f64,
    pub tau_reranker: f64,
    pub lr_retriever: f64,
    pub lr_reranker: f64,
    pub epochs_retriever: usize,
    pub epochs_reranker: usize,
    pub grad_accum_retriever: usize,
    pub grad_accum_reranker: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau_retriever: 0.01,
            tau_reranker: 1.0,
            lr_retriever: 1e-5,
            lr_reranker: 1e-4,
            epochs_retriever: 1,
            epochs_reranker: 1,
            grad_accum_retriever: 1,
            grad_accum_reranker: 10,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau_retriever", self.tau_retriever),
            ("tau_reranker", self.tau_reranker),
            ("lr_retriever", self.lr_retriever),
            ("lr_reranker", self.lr_reranker),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.grad_accum_retriever == 0 || self.grad_accum_reranker == 0 {
            return Err(Error::Config("grad_accum must be at least 1".into()));
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
}

pub fn write_loss_trace(path: impl AsRef<Path>, trace: &[LossRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("step,epoch,loss\n");
    for r in trace {
        out.push_str(&format!("{},{},{}\n", r.step, r.epoch, r.loss));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub trace: Vec<LossRecord>,
    /// Epoch plans used by the retriever, in order (empty for the reranker).
    pub plans: Vec<EpochPlan>,
}

fn batch_inputs<'a>(batch: &Batch, corpus: &Corpus, aggs: &'a [Vec<f64>]) -> Result<Vec<&'a [f64]>> {
    let mut out = Vec::with_capacity(2 * batch.authors.len());
    for pair in &batch.authors {
        for id in &pair.doc_ids {
            let pos = corpus
                .position(id)
                .ok_or_else(|| Error::UnknownDocument(id.clone()))?;
            out.push(aggs[pos].as_slice());
        }
    }
    Ok(out)
}

fn projector_for(model: &RetrieverModel, batch_cfg: &BatchConfig, seed: u64) -> Result<Option<RandomProjector>> {
    if batch_cfg.random_projection && model.out_dim() >= 3 {
        Ok(Some(RandomProjector::new(model.out_dim(), None, seed ^ PROJECTION_SEED_MIX)?))
    } else {
        Ok(None)
    }
}

/// Mean batch loss of `model` over the multi-author batches of `plan`.
pub fn mean_plan_loss(model: &RetrieverModel, corpus: &Corpus, plan: &EpochPlan, tau: f64) -> Result<f64> {
    let aggs: Vec<Vec<f64>> = aggregate_corpus(corpus, model.feature_config())?
        .into_iter()
        .map(|a| a.vector)
        .collect();
    let params = model.params();
    let mut total = 0.0;
    let mut count = 0;
    for batch in plan.batches.iter().filter(|b| b.authors.len() >= 2) {
        total += batch_loss_retriever(&params, &batch_inputs(batch, corpus, &aggs)?, tau)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidData("plan has no multi-author batch".into()));
    }
    Ok(total / count as f64)
}

/// Train the retriever head. Each epoch re-embeds the corpus with the
/// current parameters, rebuilds the clustered plan and takes one Adam step
/// per `grad_accum_retriever` batches. Single-author batches carry no
/// negatives and are skipped.
pub fn train_retriever(
    mut model: RetrieverModel,
    corpus: &Corpus,
    batch_cfg: &BatchConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<RetrieverModel>> {
    cfg.validate()?;
    batch_cfg.validate()?;
    let mut trace = Vec::new();
    let mut plans = Vec::new();
    if cfg.epochs_retriever == 0 {
        return Ok(TrainOutcome { model, trace, plans });
    }
    let aggs: Vec<Vec<f64>> = aggregate_corpus(corpus, model.feature_config())?
        .into_iter()
        .map(|a| a.vector)
        .collect();
    let projector = projector_for(&model, batch_cfg, cfg.seed)?;
    let adam = cfg.adam(cfg.lr_retriever);
    let mut params = model.params();
    let mut state = AdamState::new(params.num_params());
    let mut step = 0;
    for epoch in 0..cfg.epochs_retriever {
        let embeddings: Vec<Vec<f64>> = par::map(&aggs, |u| params.project(u));
        let plan = build_epoch(
            &embeddings,
            corpus,
            batch_cfg,
            cfg.seed.wrapping_add(epoch as u64),
            projector.as_ref(),
        )?;
        let usable: Vec<&Batch> = plan.batches.iter().filter(|b| b.authors.len() >= 2).collect();
        for group in usable.chunks(cfg.grad_accum_retriever) {
            let mut acc = RetrieverParams::zeros(params.out_dim, params.in_dim);
            let mut loss = 0.0;
            for batch in group {
                let (l, g) = grad_retriever(&params, &batch_inputs(batch, corpus, &aggs)?, cfg.tau_retriever)?;
                loss += l;
                acc.w.iter_mut().zip(&g.w).for_each(|(a, x)| *a += x);
                acc.b.iter_mut().zip(&g.b).for_each(|(a, x)| *a += x);
            }
            let scale = 1.0 / group.len() as f64;
            let mut flat = [params.w.as_slice(), params.b.as_slice()].concat();
            let grads: Vec<f64> = acc.w.iter().chain(&acc.b).map(|x| x * scale).collect();
            adam_step(&mut flat, &grads, &mut state, &adam)?;
            let (w, b) = flat.split_at(params.w.len());
            params.w.copy_from_slice(w);
            params.b.copy_from_slice(b);
            // parameters live in f32 between steps
            model.set_params(&params)?;
            params = model.params();
            trace.push(LossRecord {
                step,
                epoch,
                loss: loss * scale,
            });
            step += 1;
        }
        plans.push(plan);
    }
    Ok(TrainOutcome { model, trace, plans })
}

/// Train the reranker head over pre-featurized examples, one instance per
/// micro-step and one Adam step per `grad_accum_reranker` instances. The
/// instance order is reshuffled each epoch from the configured seed.
pub fn train_reranker(
    mut model: RerankerModel,
    examples: &[RerankerExample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<RerankerModel>> {
    cfg.validate()?;
    let mut trace = Vec::new();
    if cfg.epochs_reranker == 0 || examples.is_empty() {
        return Ok(TrainOutcome {
            model,
            trace,
            plans: Vec::new(),
        });
    }
    let adam = cfg.adam(cfg.lr_reranker);
    let mut a: Vec<f64> = model.head().iter().map(|&x| x as f64).collect();
    let bias = model.bias() as f64;
    let mut state = AdamState::new(a.len());
    let mut step = 0;
    for epoch in 0..cfg.epochs_reranker {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64)));
        for group in order.chunks(cfg.grad_accum_reranker) {
            let chunk: Vec<RerankerExample> = group.iter().map(|&i| examples[i].clone()).collect();
            let (loss, mut g) = grad_reranker(&a, bias, &chunk, cfg.tau_reranker)?;
            let scale = 1.0 / chunk.len() as f64;
            g.iter_mut().for_each(|x| *x *= scale);
            adam_step(&mut a, &g, &mut state, &adam)?;
            model.set_head(&a)?;
            a = model.head().iter().map(|&x| x as f64).collect();
            trace.push(LossRecord {
                step,
                epoch,
                loss: loss * scale,
            });
            step += 1;
        }
    }
    Ok(TrainOutcome {
        model,
        trace,
        plans: Vec::new(),
    })
}

/// Per-document aggregate lookup used when featurizing reranker instances.
pub(crate) fn aggregate_lookup(corpus: &Corpus, cfg: &crate::FeatureConfig) -> Result<HashMap<String, Vec<f64>>> {
    let aggs = aggregate_corpus(corpus, cfg)?;
    Ok(corpus
        .documents()
        .iter()
        .zip(aggs)
        .map(|(d, a)| (d.doc_id.clone(), a.vector))
        .collect())
}
