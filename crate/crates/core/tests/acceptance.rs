//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p authrank-core --test acceptance`.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use authrank::batcher::{build_epoch, kmeans_cosine, BatchConfig, EpochPlan, RandomProjector};
use authrank::corpus::{curate, word_count, CurationConfig};
use authrank::eval::{
    build_splits, chance_success, mrr_at_k, pooled_success, run_bm25, run_pipeline, success_at_k, synth,
    Bm25Params, SynthConfig, DEFAULT_SPLIT_SEEDS,
};
use authrank::reranker::{build_training_instances, featurize_instances, InstanceConfig, RerankerExample};
use authrank::retriever::RetrieverParams;
use authrank::trainer::{
    batch_loss_retriever, contrastive_loss, grad_reranker, grad_retriever, reranker_loss, train_reranker,
    train_retriever, ContrastiveInstance, TrainConfig,
};
use authrank::{
    cosine, Corpus, Document, FeatureConfig, NegativeCategory, Pipeline, RankedEntry, RankedList, RerankerModel,
    RetrieverModel, SamplingStrategy, Stage, TopicFeaturizer,
};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn central_diff(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

fn loss_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    for m in [2usize, 12, 50] {
        for tau in [0.01, 1.0] {
            for s in [0.0, 0.37, -4.2, 25.0] {
                let inst = ContrastiveInstance::new(0, vec![s; m + 1], tau).map_err(|e| e.to_string())?;
                let l = contrastive_loss(&inst).map_err(|e| e.to_string())?;
                worst = worst.max((l - ((1 + m) as f64).ln()).abs());
            }
        }
    }
    check(worst <= 1e-12, format!("max |loss - ln(1+m)| = {worst:.1e}"))
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut coords) = (0.0f64, 0usize);
    for _ in 0..10 {
        // retriever at its training temperature
        let (d, e, n) = (5, 9, 8);
        let p = RetrieverParams {
            out_dim: d,
            in_dim: e,
            w: (0..d * e).map(|_| rng.gen_range(-0.15..0.15)).collect(),
            b: (0..d).map(|_| rng.gen_range(-0.05..0.05)).collect(),
        };
        let batch: Vec<Vec<f64>> = (0..n).map(|_| (0..e).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let refs: Vec<&[f64]> = batch.iter().map(Vec::as_slice).collect();
        let tau = 0.01;
        let (_, g) = grad_retriever(&p, &refs, tau).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let k = rng.gen_range(0..p.w.len() + p.b.len());
            let analytic = if k < p.w.len() { g.w[k] } else { g.b[k - p.w.len()] };
            let fd = central_diff(
                |h| {
                    let mut q = p.clone();
                    if k < q.w.len() {
                        q.w[k] += h;
                    } else {
                        q.b[k - q.w.len()] += h;
                    }
                    batch_loss_retriever(&q, &refs, tau).unwrap()
                },
                1e-4,
            );
            worst = worst.max(rel_err(fd, analytic));
            coords += 1;
        }
        // reranker at its training temperature
        let dim = 24;
        let examples: Vec<RerankerExample> = (0..4)
            .map(|_| RerankerExample {
                features: (0..13).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
                positive: rng.gen_range(0..13),
            })
            .collect();
        let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let (_, g) = grad_reranker(&a, 0.1, &examples, 1.0).map_err(|e| e.to_string())?;
        for k in 0..dim {
            let fd = central_diff(
                |h| {
                    let mut b = a.clone();
                    b[k] += h;
                    reranker_loss(&b, 0.1, &examples, 1.0).unwrap()
                },
                1e-4,
            );
            worst = worst.max(rel_err(fd, g[k]));
            coords += 1;
        }
    }
    check(worst < 1e-4, format!("{coords} coordinates, max relative error {worst:.2e}"))
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for t in 0..1000 {
        let n = rng.gen_range(1..300);
        let mut ids: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        ids.shuffle(&mut rng);
        let needles: BTreeSet<String> = (0..rng.gen_range(0..4)).map(|_| format!("c{}", rng.gen_range(0..n))).collect();
        let list = RankedList {
            query_id: format!("q{t}"),
            ranking: ids
                .iter()
                .map(|id| RankedEntry {
                    doc_id: id.clone(),
                    score: 0.0,
                    stage: Stage::Retrieved,
                })
                .collect(),
        };
        for k in [1, 8, 20, 100] {
            let mut s = 0.0;
            let mut rr = 0.0;
            for (i, id) in ids.iter().take(k).enumerate() {
                if needles.contains(id) {
                    s = 1.0;
                    rr = 1.0 / (i + 1) as f64;
                    break;
                }
            }
            if success_at_k(&list, &needles, k) != s || mrr_at_k(&list, &needles, k) != rr {
                mismatches += 1;
            }
        }
    }
    check(mismatches == 0, format!("4000 (ranking, k) cases, {mismatches} mismatches"))
}

fn plan_violations(plan: &EpochPlan, corpus: &Corpus, b: usize) -> Vec<String> {
    let mut errs = Vec::new();
    let mut seen = BTreeSet::new();
    for batch in &plan.batches {
        if batch.authors.len() > b {
            errs.push(format!("batch of {}", batch.authors.len()));
        }
        for pair in &batch.authors {
            if !seen.insert(pair.author_id.clone()) {
                errs.push(format!("author {} twice", pair.author_id));
            }
            let ok = pair.doc_ids[0] != pair.doc_ids[1]
                && pair
                    .doc_ids
                    .iter()
                    .all(|id| corpus.get(id).is_some_and(|d| d.author_id == pair.author_id));
            if !ok {
                errs.push(format!("pair of {} broken", pair.author_id));
            }
        }
    }
    if seen.len() != corpus.author_index().len() {
        errs.push(format!("{} of {} authors planned", seen.len(), corpus.author_index().len()));
    }
    errs
}

fn algorithm_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = BatchConfig::default();
    let dim = 96;
    let mut failures = Vec::new();
    for trial in 0..100u64 {
        let n = rng.gen_range(20..=500);
        let centers: Vec<Vec<f64>> = (0..8).map(|_| gaussian(&mut rng, dim)).collect();
        let mut docs = Vec::new();
        let mut emb = Vec::new();
        for a in 0..n {
            let c = &centers[rng.gen_range(0..centers.len())];
            for j in 0..2 {
                docs.push(Document::new(format!("d{a}_{j}"), format!("a{a}"), "g", "x"));
                emb.push(c.iter().map(|x| x + 0.7 * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>());
            }
        }
        docs.shuffle(&mut rng);
        let order: BTreeMap<String, usize> =
            (0..2 * n).map(|i| (format!("d{}_{}", i / 2, i % 2), i)).collect();
        let emb: Vec<Vec<f64>> = docs.iter().map(|d| emb[order[&d.doc_id]].clone()).collect();
        let corpus = Corpus::new(docs).map_err(|e| e.to_string())?;
        let proj = RandomProjector::new(dim, None, trial).map_err(|e| e.to_string())?;
        let plan = build_epoch(&emb, &corpus, &cfg, trial, Some(&proj)).map_err(|e| e.to_string())?;
        let again = build_epoch(&emb, &corpus, &cfg, trial, Some(&proj)).map_err(|e| e.to_string())?;
        let mut errs = plan_violations(&plan, &corpus, cfg.batch_size);
        if plan.to_json() != again.to_json() {
            errs.push("not reproducible".into());
        }
        if !errs.is_empty() {
            failures.push(format!("trial {trial} ({n} authors): {}", errs.join("; ")));
        }
    }
    let first = failures.first().map(|f| format!(", first: {f:?}")).unwrap_or_default();
    check(failures.is_empty(), format!("100 corpora, {} failing{first}", failures.len()))
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let direct = a.iter().zip(b).all(|(x, y)| x == y);
    let swapped = a.iter().zip(b).all(|(x, y)| *x == 1 - *y);
    direct || swapped
}

fn projection_fidelity() -> Outcome {
    let (d, k) = (768, 256);
    let p = RandomProjector::new(d, Some(k), 5).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut total = 0.0;
    for _ in 0..1000 {
        let (u, v) = (gaussian(&mut rng, d), gaussian(&mut rng, d));
        let low = cosine(&p.project(&u).unwrap(), &p.project(&v).unwrap());
        total += (cosine(&u, &v) - low).abs();
    }
    let mean_err = total / 1000.0;

    let mut agree = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let centers = [gaussian(&mut rng, d), gaussian(&mut rng, d)];
        let vs: Vec<Vec<f64>> = (0..60)
            .map(|i| centers[i % 2].iter().map(|c| c + 1.0 * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let proj = RandomProjector::new(d, Some(k), trial).unwrap();
        let full = kmeans_cosine(&vs, 2, trial).unwrap();
        let low = kmeans_cosine(&proj.project_all(&vs).unwrap(), 2, trial).unwrap();
        agree += usize::from(same_partition(&full.assignment, &low.assignment));
    }
    check(
        mean_err < 0.08 && agree >= 95,
        format!("mean |cos error| {mean_err:.4}, 2-blob partitions agree {agree}/100"),
    )
}

fn two_stage_consistency() -> Outcome {
    let bench = synth::generate(&SynthConfig {
        n_authors: 120,
        seed: 6,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let queries = Corpus::new(bench.foreground.documents()[..50].to_vec()).map_err(|e| e.to_string())?;
    let candidates = bench.foreground.merged(&bench.background).map_err(|e| e.to_string())?;
    let fc = FeatureConfig::default();
    let retriever = RetrieverModel::new(fc.clone(), None, 6).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let head: Vec<f32> = (0..4 * fc.style_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let reranker = RerankerModel::from_parts(fc, head, 0.0).map_err(|e| e.to_string())?;
    let plain = Pipeline::new(retriever.clone(), None, 100).unwrap();
    let two = Pipeline::new(retriever, Some(reranker), 100).unwrap();
    let a = plain.attribute_all(&queries, &candidates).map_err(|e| e.to_string())?;
    let b = two.attribute_all(&queries, &candidates).map_err(|e| e.to_string())?;
    let mut set_mismatch = 0;
    let mut reordered = 0;
    let (mut sa, mut sb) = (0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        let top = |l: &RankedList| l.ranking[..100].iter().map(|e| e.doc_id.clone()).collect::<BTreeSet<_>>();
        set_mismatch += usize::from(top(x) != top(y));
        reordered += usize::from(x.ranking[..100].iter().zip(&y.ranking[..100]).any(|(p, q)| p.doc_id != q.doc_id));
        let q = queries.get(&x.query_id).unwrap();
        let needles: BTreeSet<String> = candidates
            .docs_by(&q.author_id)
            .filter(|d| d.doc_id != q.doc_id)
            .map(|d| d.doc_id.clone())
            .collect();
        sa += success_at_k(x, &needles, 100);
        sb += success_at_k(y, &needles, 100);
    }
    check(
        set_mismatch == 0 && sa.to_bits() == sb.to_bits() && reordered > 0,
        format!(
            "50 queries: {set_mismatch} top-100 set mismatches, {reordered} reordered, Success@100 {} vs {}",
            sa / 50.0,
            sb / 50.0
        ),
    )
}

fn negative_bookkeeping() -> Outcome {
    let bench = synth::generate(&SynthConfig {
        n_authors: 3000,
        train_fraction: 0.9,
        foreground_fraction: 0.05,
        seed: 7,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let tf = TopicFeaturizer::default();
    let train = curate(&bench.train, &CurationConfig::default(), &tf).map_err(|e| e.to_string())?;
    let strategy = SamplingStrategy::new(NegativeCategory::ALL, 12).unwrap();
    let inst = build_training_instances(
        &train,
        &tf,
        &strategy,
        &InstanceConfig {
            fraction: 1.0,
            pool_size: 50,
            seed: 7,
        },
    )
    .map_err(|e| e.to_string())?;
    let mut bad = 0;
    for i in &inst {
        let author = &train.get(&i.query).unwrap().author_id;
        let same_author = i.negatives.iter().any(|n| &train.get(&n.doc_id).unwrap().author_id == author);
        bad += usize::from(i.label_counts() != [4, 4, 4] || i.negatives.len() != 12 || same_author);
    }
    check(inst.len() >= 1000 && bad == 0, format!("{} instances, {bad} violating", inst.len()))
}

/// Desk-scale training used for the benchmark pattern checks.
fn bench_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        lr_retriever: 3e-3,
        epochs_retriever: 20,
        lr_reranker: 1e-2,
        epochs_reranker: 10,
        seed,
        ..TrainConfig::default()
    }
}

struct BenchResult {
    chance: authrank::eval::ChanceLevel,
    bm25: f64,
    untrained: f64,
    retriever: f64,
    near_query: f64,
    three_way: f64,
}

fn run_benchmark(seed: u64) -> authrank::Result<BenchResult> {
    let bench = synth::generate(&SynthConfig {
        n_authors: 500,
        n_genres: 3,
        seed,
        ..SynthConfig::default()
    })?;
    let (fg, bg) = (&bench.foreground, &bench.background);
    let fc = FeatureConfig::default();
    let tf = TopicFeaturizer::from_config(&fc);
    let train = curate(&bench.train, &CurationConfig::default(), &tf)?;
    let splits = build_splits(fg, bg, 0.25, &DEFAULT_SPLIT_SEEDS)?;
    let chance = chance_success(&splits, 8);
    let bm25 = pooled_success(&run_bm25(Bm25Params::default(), &splits, fg, bg)?, &splits, 8)?;

    let untrained_model = RetrieverModel::new(fc.clone(), None, seed)?;
    let untrained = Pipeline::new(untrained_model.clone(), None, 100)?;
    let untrained = pooled_success(&run_pipeline(&untrained, &splits, fg, bg)?, &splits, 8)?;

    let tcfg = bench_train_config(seed);
    let model = train_retriever(untrained_model, &train, &BatchConfig::default(), &tcfg)?.model;
    let retriever = Pipeline::new(model.clone(), None, 100)?;
    let retriever = pooled_success(&run_pipeline(&retriever, &splits, fg, bg)?, &splits, 8)?;

    let mut reranked = Vec::new();
    for strategy in [vec![NegativeCategory::NearQuery], NegativeCategory::ALL.to_vec()] {
        let strategy = SamplingStrategy::new(strategy, 12)?;
        let icfg = InstanceConfig {
            fraction: 1.0,
            pool_size: 50,
            seed,
        };
        let instances = build_training_instances(&train, &tf, &strategy, &icfg)?;
        let examples = featurize_instances(&train, &fc, &instances)?;
        let rr = train_reranker(RerankerModel::zeros(fc.clone())?, &examples, &tcfg)?.model;
        let p = Pipeline::new(model.clone(), Some(rr), 100)?;
        reranked.push(pooled_success(&run_pipeline(&p, &splits, fg, bg)?, &splits, 8)?);
    }
    Ok(BenchResult {
        chance,
        bm25,
        untrained,
        retriever,
        near_query: reranked[0],
        three_way: reranked[1],
    })
}

fn retrieval_pattern(r: &BenchResult) -> Outcome {
    let zb = r.chance.z(r.bm25);
    let zu = r.chance.z(r.untrained);
    let lift = r.retriever - r.chance.mean;
    check(
        zb.abs() <= 3.0 && zu.abs() <= 3.0 && lift >= 0.20,
        format!(
            "chance {:.1}% (sd {:.1}), BM25 {:.1}% (z {zb:.2}), untrained {:.1}% (z {zu:.2}), trained {:.1}% (+{:.1} points)",
            100.0 * r.chance.mean,
            100.0 * r.chance.sd,
            100.0 * r.bm25,
            100.0 * r.untrained,
            100.0 * r.retriever,
            100.0 * lift
        ),
    )
}

fn rerank_pattern(results: &[BenchResult]) -> Outcome {
    let n = results.len() as f64;
    let mean = |f: fn(&BenchResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    let (nq, ret, all) = (mean(|r| r.near_query), mean(|r| r.retriever), mean(|r| r.three_way));
    check(
        ret - nq >= 0.02 && all - ret >= 0.02,
        format!(
            "mean Success@8 over {} seeds: near_query-only {:.1}% < retriever {:.1}% < three-way {:.1}%",
            results.len(),
            100.0 * nq,
            100.0 * ret,
            100.0 * all
        ),
    )
}

fn curation_contract() -> Outcome {
    let bench = synth::generate(&SynthConfig {
        n_authors: 3200,
        train_fraction: 0.94,
        foreground_fraction: 0.03,
        seed: 10,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let docs = bench.train.documents();
    if docs.len() < 10_000 {
        return Err(format!("fixture has only {} documents", docs.len()));
    }
    let fixture = Corpus::new(docs[..10_000].to_vec()).map_err(|e| e.to_string())?;
    let tf = TopicFeaturizer::default();
    let out = curate(&fixture, &CurationConfig::default(), &tf).map_err(|e| e.to_string())?;
    let mut bad = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    for pos in out.author_index().values() {
        let d = out.documents();
        if pos.len() != 2 || pos.iter().any(|&i| word_count(&d[i].text) < 350) {
            bad += 1;
            continue;
        }
        let c = tf.topic_vector(&d[pos[0]]).cosine(&tf.topic_vector(&d[pos[1]]));
        worst = worst.max(c);
        bad += usize::from(c >= 0.2);
    }
    check(
        bad == 0 && !out.is_empty(),
        format!(
            "{} of {} authors kept, {bad} violating, max pair cosine {worst:.3}",
            out.author_index().len(),
            fixture.author_index().len()
        ),
    )
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored
    let start = Instant::now();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, t: Instant, o: Outcome| {
        let secs = t.elapsed().as_secs_f64();
        match o {
            Ok(d) => println!("PASS {n:>2} {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {d} [{secs:.1}s]")
            }
        }
    };
    let t = Instant::now();
    report(1, "loss identities", t, loss_identities());
    let t = Instant::now();
    report(2, "gradient correctness", t, gradient_correctness());
    let t = Instant::now();
    report(3, "metric oracle equivalence", t, metric_oracles());
    let t = Instant::now();
    report(4, "batch plan invariants", t, algorithm_invariants());
    let t = Instant::now();
    report(5, "random projection fidelity", t, projection_fidelity());
    let t = Instant::now();
    report(6, "two-stage consistency", t, two_stage_consistency());
    let t = Instant::now();
    report(7, "negative taxonomy bookkeeping", t, negative_bookkeeping());

    let t = Instant::now();
    let results: authrank::Result<Vec<BenchResult>> = (0..5).map(run_benchmark).collect();
    match results {
        Ok(rs) => {
            report(8, "retrieval pattern (seed 0)", t, retrieval_pattern(&rs[0]));
            report(9, "rerank pattern (5 seeds)", t, rerank_pattern(&rs));
        }
        Err(e) => {
            report(8, "retrieval pattern (seed 0)", t, Err(e.to_string()));
            report(9, "rerank pattern (5 seeds)", t, Err(e.to_string()));
        }
    }
    let t = Instant::now();
    report(10, "curation contract", t, curation_contract());
    println!(
        "acceptance: {} of 10 passed in {:.1}s",
        10 - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
