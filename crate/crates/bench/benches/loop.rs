use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use relabel_core::baseline::{predict, train};
use relabel_core::detectors::detect_classification;
use relabel_core::metrics::{auc, sentence_bleu};
use relabel_core::sim::{generate_dataset, inject_noise, NoiseKind, NoiseSpec};
use relabel_core::{BleuConfig, TaskKind, TrainConfig};

fn noisy_classification(n: usize) -> relabel_core::DatasetVersion {
    let (clean, truth) = generate_dataset(TaskKind::Classification, n, 2, 42).expect("fixture");
    let spec = NoiseSpec {
        rate: 0.15,
        kind: NoiseKind::UniformClassFlip,
        seed: 7,
    };
    inject_noise(&clean, &truth, &spec).expect("noise").0
}

fn bench_train_and_detect(c: &mut Criterion) {
    let version = noisy_classification(2000);
    let cfg = TrainConfig::for_task(TaskKind::Classification, 0);
    c.bench_function("train classification 2000", |b| b.iter(|| train(black_box(&version), &cfg).expect("train")));

    let model = train(&version, &cfg).expect("train");
    let preds = predict(&model, &version).expect("predict");
    c.bench_function("detect classification 2000", |b| {
        b.iter(|| detect_classification(black_box(&version), black_box(&preds)).expect("detect"))
    });
}

fn bench_auc(c: &mut Criterion) {
    let mut group = c.benchmark_group("auc");
    for n in [1_000usize, 100_000] {
        // deterministic mix of labels and tied scores
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i * 7919 % 13 < 5)).collect();
        let scores: Vec<f64> = (0..n).map(|i| (i * 104_729 % 997) as f64 / 997.0).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| auc(black_box(&labels), black_box(&scores)).expect("auc"))
        });
    }
    group.finish();
}

fn bench_bleu(c: &mut Criterion) {
    let sentence = |k: usize| -> Vec<String> { (0..30).map(|i| format!("t{}", (i * k) % 11)).collect() };
    let (candidate, reference) = (sentence(3), sentence(5));
    let cfg = BleuConfig::default();
    c.bench_function("sentence bleu 30 tokens", |b| {
        b.iter(|| sentence_bleu(black_box(&candidate), black_box(&reference), &cfg).expect("bleu"))
    });
}

criterion_group!(benches, bench_train_and_detect, bench_auc, bench_bleu);
criterion_main!(benches);
