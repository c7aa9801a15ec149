use criterion::{criterion_group, criterion_main, Criterion};
use ssf::data::synth::{synthetic_dataset, SynthSpec};
use ssf::data::Split;
use ssf::models::{Architecture, HeadKind, Network, SemanticHead};
use ssf::FeatureSubset;

fn heads(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward_batch1_L40");
    for kind in [HeadKind::Cnn, HeadKind::Nn] {
        let net = Network::new(
            Architecture::Semantic {
                head: SemanticHead::of_kind(kind, 40, FeatureSubset::FULL),
                num_classes: 19,
            },
            0,
        )
        .unwrap();
        g.bench_function(kind.label(), |b| {
            b.iter(|| ssf::eval::measure_throughput(&net, 0, 1).unwrap())
        });
    }
    g.finish();
}

/// Scoring a test split batch-by-batch on one thread versus across the pool.
fn evaluation(c: &mut Criterion) {
    let spec = SynthSpec::standard(6, 8, 32, 40, 0.1, 0).unwrap();
    let data = synthetic_dataset(&spec).unwrap();
    let net = Network::new(
        Architecture::Semantic {
            head: SemanticHead::nn(8, FeatureSubset::FULL),
            num_classes: 6,
        },
        0,
    )
    .unwrap();
    let examples = data.split(Split::Train);
    let mut g = c.benchmark_group("score_train_split");
    g.bench_function("sequential", |b| {
        b.iter(|| ssf::par::with_threads(1, || net.score(&examples, 8).unwrap()))
    });
    g.bench_function("parallel", |b| b.iter(|| net.score(&examples, 8).unwrap()));
    g.finish();
}

criterion_group!(benches, heads, evaluation);
criterion_main!(benches);
