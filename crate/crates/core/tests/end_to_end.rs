use authrank::batcher::BatchConfig;
use authrank::corpus::{curate, load_corpus, write_corpus, CurationConfig};
use authrank::eval::{build_splits, chance_success, pooled_success, run_pipeline, synth, SynthConfig, DEFAULT_SPLIT_SEEDS};
use authrank::pipeline::{read_run, write_run};
use authrank::reranker::{build_training_instances, featurize_instances, InstanceConfig};
use authrank::trainer::{train_reranker, train_retriever, TrainConfig};
use authrank::{FeatureConfig, Pipeline, RerankerModel, RetrieverModel, SamplingStrategy, TopicFeaturizer};

fn train_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        lr_retriever: 3e-3,
        epochs_retriever: 20,
        seed,
        ..TrainConfig::default()
    }
}

/// Trained-retriever Success@8 and its distance from chance in sd units.
fn trained_z(style_strength: f64, seed: u64) -> (f64, f64) {
    let b = synth::generate(&SynthConfig {
        style_strength,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let fc = FeatureConfig::default();
    let train = curate(&b.train, &CurationConfig::default(), &TopicFeaturizer::from_config(&fc)).unwrap();
    let model = RetrieverModel::new(fc, None, seed).unwrap();
    let model = train_retriever(model, &train, &BatchConfig::default(), &train_cfg(seed)).unwrap().model;
    let splits = build_splits(&b.foreground, &b.background, 0.25, &DEFAULT_SPLIT_SEEDS).unwrap();
    let p = Pipeline::new(model, None, 100).unwrap();
    let runs = run_pipeline(&p, &splits, &b.foreground, &b.background).unwrap();
    let s = pooled_success(&runs, &splits, 8).unwrap();
    (s, chance_success(&splits, 8).z(s))
}

#[test]
fn styleless_authors_are_unattributable() {
    let (s, z) = trained_z(0.0, 1);
    assert!(z.abs() <= 3.0, "Success@8 {s} is {z} sd from chance");
}

#[test]
fn styled_authors_are_attributable() {
    let (s, z) = trained_z(1.0, 1);
    assert!(z > 5.0, "Success@8 {s} only {z} sd above chance");
}

#[test]
fn saved_models_rank_identically() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let b = synth::generate(&SynthConfig {
        n_authors: 80,
        seed: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    write_corpus(d.join("train.jsonl"), &b.train).unwrap();
    let raw = load_corpus(d.join("train.jsonl")).unwrap();
    assert_eq!(raw, b.train);

    let fc = FeatureConfig::default();
    let tf = TopicFeaturizer::from_config(&fc);
    let train = curate(&raw, &CurationConfig::default(), &tf).unwrap();
    let cfg = TrainConfig {
        epochs_retriever: 2,
        lr_retriever: 1e-3,
        lr_reranker: 1e-2,
        epochs_reranker: 2,
        seed: 4,
        ..TrainConfig::default()
    };
    let ret = train_retriever(RetrieverModel::new(fc.clone(), None, 4).unwrap(), &train, &BatchConfig::default(), &cfg)
        .unwrap()
        .model;
    let inst = build_training_instances(
        &train,
        &tf,
        &SamplingStrategy::default(),
        &InstanceConfig {
            fraction: 1.0,
            pool_size: 5,
            seed: 4,
        },
    )
    .unwrap();
    let ex = featurize_instances(&train, &fc, &inst).unwrap();
    let rr = train_reranker(RerankerModel::zeros(fc).unwrap(), &ex, &cfg).unwrap().model;
    ret.save(d.join("r.bin"), &[], Some(4)).unwrap();
    rr.save(d.join("k.bin"), &[], Some(4)).unwrap();
    assert_eq!(RetrieverModel::load(d.join("r.bin")).unwrap(), ret);
    assert_eq!(RerankerModel::load(d.join("k.bin")).unwrap(), rr);

    let splits = build_splits(&b.foreground, &b.background, 0.25, &[0]).unwrap();
    let live = Pipeline::new(ret, Some(rr), 100).unwrap();
    let loaded = Pipeline::new(
        RetrieverModel::load(d.join("r.bin")).unwrap(),
        Some(RerankerModel::load(d.join("k.bin")).unwrap()),
        100,
    )
    .unwrap();
    let a = run_pipeline(&live, &splits, &b.foreground, &b.background).unwrap();
    let c = run_pipeline(&loaded, &splits, &b.foreground, &b.background).unwrap();
    assert_eq!(a, c);
    write_run(d.join("run.jsonl"), &a[0], 1000).unwrap();
    assert_eq!(read_run(d.join("run.jsonl")).unwrap(), a[0]);
}
