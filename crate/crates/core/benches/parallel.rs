//! Rayon pool against a single worker on the data-parallel hot paths.
//!
//! Built without the `parallel` feature both variants run the sequential
//! fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use authrank::batcher::kmeans_cosine;
use authrank::eval::synth::{generate, SynthConfig};
use authrank::featurizer::FeatureConfig;
use authrank::retriever::RetrieverModel;
use authrank::Pipeline;

/// Runs a closure inside a particular thread setup.
type Runner = Box<dyn Fn(&mut (dyn FnMut() + Send))>;

fn modes() -> Vec<(&'static str, Runner)> {
    let mut v: Vec<(&'static str, Runner)> = vec![("default", Box::new(|f| f()))];
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        v.push(("single", Box::new(move |f| pool.install(f))));
    }
    #[cfg(not(feature = "parallel"))]
    v.push(("single", Box::new(|f| f())));
    v
}

fn bench(c: &mut Criterion) {
    let bench = generate(&SynthConfig {
        n_authors: 120,
        ..SynthConfig::default()
    })
    .unwrap();
    let corpus = bench.foreground.merged(&bench.background).unwrap();
    let model = RetrieverModel::new(FeatureConfig::default(), None, 0).unwrap();
    let embeddings: Vec<Vec<f64>> = model
        .embed_corpus(&corpus)
        .unwrap()
        .into_iter()
        .map(|e| e.vector)
        .collect();
    let queries = bench.foreground.filtered(|d| d.genre == "essay");

    let mut group = c.benchmark_group("parallel");
    group.sample_size(10);
    for (name, run) in modes() {
        group.bench_function(BenchmarkId::new("embed_corpus", name), |b| {
            b.iter(|| run(&mut || drop(model.embed_corpus(&corpus).unwrap())))
        });
        group.bench_function(BenchmarkId::new("kmeans", name), |b| {
            b.iter(|| run(&mut || drop(kmeans_cosine(&embeddings, 24, 0).unwrap())))
        });
        group.bench_function(BenchmarkId::new("attribute_all", name), |b| {
            b.iter(|| {
                run(&mut || {
                    let p = Pipeline::new(model.clone(), None, 100).unwrap();
                    drop(p.attribute_all(&queries, &corpus).unwrap())
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
