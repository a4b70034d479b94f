use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use multisol_core::dirichlet::{sample_thresholds, DirichletPrior};
use multisol_core::loss::{self, LossConfig};
use multisol_core::simplex::{HardLabel, SimplexPoint};
use multisol_core::threshold::{scan, BarycentricGrid, ScanMetric};
use multisol_core::ScoreKind;

fn random_batch(n: usize, m: usize, seed: u64) -> (Vec<SimplexPoint>, Vec<HardLabel>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let preds = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.01..1.0f64)).collect();
            let s: f64 = raw.iter().sum();
            SimplexPoint::new(raw.iter().map(|v| v / s).collect()).unwrap()
        })
        .collect();
    let labels = (0..n).map(|_| HardLabel::new(rng.gen_range(0..m), m).unwrap()).collect();
    (preds, labels)
}

fn bench_membership(c: &mut Criterion) {
    let mut group = c.benchmark_group("smoothed_membership");
    for &n_thresholds in &[128usize, 1024] {
        let (preds, _) = random_batch(128, 10, 0);
        let prior = DirichletPrior::symmetric(1.0, 10).unwrap();
        let thresholds = sample_thresholds(&prior, n_thresholds, 0).unwrap();
        group.bench_with_input(
            BenchmarkId::from_parameter(n_thresholds),
            &n_thresholds,
            |b, _| {
                b.iter(|| {
                    for p in &preds {
                        std::hint::black_box(
                            multisol_core::confusion::smoothed_membership(p, &thresholds, 10.0)
                                .unwrap(),
                        );
                    }
                })
            },
        );
    }
    group.finish();
}

fn bench_loss_gradient(c: &mut Criterion) {
    let (preds, labels) = random_batch(128, 10, 1);
    let cfg = LossConfig {
        score: ScoreKind::F1,
        n_thresholds: 1024,
        ..LossConfig::default()
    };
    let thresholds = cfg.draw_thresholds(10).unwrap();
    c.bench_function("multisol_with_grad_batch128_m10", |b| {
        b.iter(|| {
            std::hint::black_box(
                loss::multisol_with_grad(&preds, &labels, &cfg, &thresholds).unwrap(),
            )
        })
    });
}

fn bench_dirichlet(c: &mut Criterion) {
    let prior = DirichletPrior::symmetric(10.0, 10).unwrap();
    c.bench_function("dirichlet_sample_1024_m10", |b| {
        b.iter(|| std::hint::black_box(sample_thresholds(&prior, 1024, 0).unwrap()))
    });
}

fn bench_scan(c: &mut Criterion) {
    let (preds, labels) = random_batch(1000, 3, 2);
    let grid = BarycentricGrid::new(60, 3).unwrap();
    c.bench_function("scan_k60_m3_n1000_top1", |b| {
        b.iter(|| std::hint::black_box(scan(&preds, &labels, &grid, ScanMetric::Top1).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_membership,
    bench_loss_gradient,
    bench_dirichlet,
    bench_scan
);
criterion_main!(benches);
