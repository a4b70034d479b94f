//! Acceptance suite: one test (and one printed pass/fail line) per criterion.
//!
//! Criterion 7 needs the MNIST IDX files; point `MNIST_DIR` at a directory
//! containing `train-images-idx3-ubyte` etc., or place them under
//! `data/mnist/`. Without them the criterion reports SKIP, not failure.

use std::path::PathBuf;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use multisol_core::confusion::mc_hard_membership;
use multisol_core::data::{self, make_blobs, BlobSpec, Dataset};
use multisol_core::dirichlet::{hoeffding_samples, sample_thresholds, DirichletPrior};
use multisol_core::loss::{self, LossConfig, LossSelector};
use multisol_core::mlp::MlpModel;
use multisol_core::score::{score, ScoreKind};
use multisol_core::simplex::{argmax_rule, classify, in_region, HardLabel, SimplexPoint};
use multisol_core::threshold::{scan, BarycentricGrid, ScanMetric};
use multisol_core::train::{train, TestMetrics, TrainConfig};

fn report(number: u32, name: &str, outcome: &str) {
    println!("acceptance {number:02} {name}: {outcome}");
}

fn random_simplex_point(rng: &mut impl Rng, m: usize) -> SimplexPoint {
    // Uniform on the simplex via normalized exponentials.
    let raw: Vec<f64> = (0..m).map(|_| -rng.gen_range(1e-12..1.0f64).ln()).collect();
    let s: f64 = raw.iter().sum();
    SimplexPoint::new(raw.iter().map(|v| v / s).collect()).unwrap()
}

#[test]
fn acceptance_01_mc_membership_analytic_oracle() {
    let n = hoeffding_samples(0.05, 0.05).unwrap();
    assert_eq!(n, 738);
    let pred = SimplexPoint::new(vec![0.7, 0.3]).unwrap();
    let prior = DirichletPrior::symmetric(1.0, 2).unwrap();
    let mut within = 0;
    let reps = 200;
    for seed in 0..reps {
        let set = sample_thresholds(&prior, n, seed).unwrap();
        let u0 = mc_hard_membership(&pred, &set)[0];
        if (u0 - 0.7).abs() <= 0.05 {
            within += 1;
        }
    }
    let frac = within as f64 / reps as f64;
    assert!(frac >= 0.95, "within-band fraction {frac}");
    report(1, "mc membership analytic oracle", "PASS");
}

#[test]
fn acceptance_02_hoeffding_calculator() {
    assert_eq!(hoeffding_samples(0.05, 0.05).unwrap(), 738);
    assert_eq!(hoeffding_samples(0.1, 0.1).unwrap(), 150);
    report(2, "hoeffding sample calculator", "PASS");
}

#[test]
fn acceptance_03_argmax_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for m in [2usize, 3, 5, 10] {
        let bary = SimplexPoint::barycenter(m);
        let mut checked = 0usize;
        while checked < 100_000 {
            let z = random_simplex_point(&mut rng, m);
            let vals = z.values();
            let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if vals.iter().filter(|&&v| v == max).count() > 1 {
                continue; // tied points are excluded by the criterion
            }
            let expected = vals.iter().position(|&v| v == max).unwrap();
            let got = classify(&z, &bary).unwrap();
            assert_eq!(got.label.index(), expected, "m={m}, z={vals:?}");
            assert_eq!(argmax_rule(&z).label.index(), expected);
            checked += 1;
        }
    }
    report(3, "argmax equivalence at the barycenter", "PASS");
}

#[test]
fn acceptance_04_proper_collection_partition() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for m in [2usize, 3, 5] {
        for _ in 0..10_000 {
            let z = random_simplex_point(&mut rng, m);
            let tau = random_simplex_point(&mut rng, m);
            let members = (0..m)
                .filter(|&j| in_region(&z, &tau, j).unwrap())
                .count();
            assert_eq!(members, 1, "m={m}");
        }
    }
    report(4, "proper collection partitions the simplex", "PASS");
}

fn all_selectors(n_thresholds: usize) -> Vec<LossSelector> {
    let mut selectors = vec![
        LossSelector::CrossEntropy,
        LossSelector::WeightedCrossEntropy,
        LossSelector::Squared,
    ];
    for kind in ScoreKind::ALL {
        selectors.push(LossSelector::Multisol(LossConfig {
            score: kind,
            n_thresholds,
            ..LossConfig::default()
        }));
    }
    selectors
}

#[test]
fn acceptance_05_gradient_fidelity_through_mlp() {
    let m = 3;
    for sel in all_selectors(32) {
        for instance in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + instance);
            let n = 4;
            let x = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
            // Cover every class so the balanced class weights are defined.
            let labels: Vec<HardLabel> = (0..n)
                .map(|i| {
                    let class = if i < m { i } else { rng.gen_range(0..m) };
                    HardLabel::new(class, m).unwrap()
                })
                .collect();
            let model = MlpModel::new(2, &[5, 4], m, instance).unwrap();

            let thresholds = match &sel {
                LossSelector::Multisol(cfg) => Some(cfg.draw_thresholds(m).unwrap()),
                _ => None,
            };
            let weights = match &sel {
                LossSelector::WeightedCrossEntropy => {
                    Some(loss::ClassWeights::balanced(&labels, m).unwrap())
                }
                _ => None,
            };
            let eval_loss = |preds: &[SimplexPoint]| -> f64 {
                match &sel {
                    LossSelector::Multisol(cfg) => {
                        loss::multisol(preds, &labels, cfg, thresholds.as_ref().unwrap())
                            .unwrap()
                            .value
                    }
                    LossSelector::CrossEntropy => {
                        loss::cross_entropy(preds, &labels, None).unwrap().value
                    }
                    LossSelector::WeightedCrossEntropy => {
                        loss::cross_entropy(preds, &labels, weights.as_ref()).unwrap().value
                    }
                    LossSelector::Squared => loss::squared_loss(preds, &labels).unwrap().value,
                }
            };
            let to_points = |out: &Array2<f64>| -> Vec<SimplexPoint> {
                out.rows()
                    .into_iter()
                    .map(|r| SimplexPoint::new(r.to_vec()).unwrap())
                    .collect()
            };

            let taped = model.forward_tape(&x).unwrap();
            let preds = to_points(taped.tape.value(taped.output));
            let grad_pred = match &sel {
                LossSelector::Multisol(cfg) => {
                    loss::multisol_with_grad(&preds, &labels, cfg, thresholds.as_ref().unwrap())
                        .unwrap()
                        .1
                }
                LossSelector::CrossEntropy => {
                    loss::cross_entropy_with_grad(&preds, &labels, None).unwrap().1
                }
                LossSelector::WeightedCrossEntropy => {
                    loss::cross_entropy_with_grad(&preds, &labels, weights.as_ref()).unwrap().1
                }
                LossSelector::Squared => loss::squared_loss_with_grad(&preds, &labels).unwrap().1,
            };
            let node_grads = taped.tape.backward(taped.output, grad_pred).unwrap();

            let param_ids: Vec<_> = taped
                .weight_ids
                .iter()
                .chain(taped.bias_ids.iter())
                .copied()
                .collect();
            let h = 1e-4;
            let mut max_ad: f64 = 0.0;
            let mut max_err: f64 = 0.0;
            for (pi, &id) in param_ids.iter().enumerate() {
                let g = node_grads.get(id).unwrap();
                for r in 0..g.nrows() {
                    for c in 0..g.ncols() {
                        let mut mp = model.clone();
                        let mut mm = model.clone();
                        mp.params_mut().nth(pi).unwrap()[[r, c]] += h;
                        mm.params_mut().nth(pi).unwrap()[[r, c]] -= h;
                        let fp = eval_loss(&to_points(&mp.forward(&x).unwrap()));
                        let fm = eval_loss(&to_points(&mm.forward(&x).unwrap()));
                        let fd = (fp - fm) / (2.0 * h);
                        max_ad = max_ad.max(g[[r, c]].abs());
                        max_err = max_err.max((g[[r, c]] - fd).abs());
                    }
                }
            }
            let rel = max_err / max_ad.max(1e-10);
            assert!(rel < 1e-3, "{sel:?} instance {instance}: relative error {rel}");
        }
    }
    report(5, "gradient fidelity vs finite differences", "PASS");
}

#[test]
fn acceptance_06_linear_score_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for m in [2usize, 3, 4] {
        let n = 20;
        let preds: Vec<SimplexPoint> = (0..n).map(|_| random_simplex_point(&mut rng, m)).collect();
        let labels: Vec<HardLabel> =
            (0..n).map(|_| HardLabel::new(rng.gen_range(0..m), m).unwrap()).collect();
        let prior = DirichletPrior::symmetric(1.0, m).unwrap();
        let thresholds = sample_thresholds(&prior, 128, 60 + m as u64).unwrap();

        let lhs = -loss::multisol_hard_indicator(&preds, &labels, ScoreKind::Accuracy, &thresholds)
            .unwrap()
            .value;

        // Brute force: average over sampled thresholds of the hard macro
        // one-vs-rest accuracy.
        let mut acc_sum = 0.0;
        for tau in thresholds.samples() {
            let cms = multisol_core::confusion::hard_confusions(&preds, &labels, tau).unwrap();
            let macro_acc: f64 = cms
                .iter()
                .map(|cm| score(ScoreKind::Accuracy, cm).unwrap())
                .sum::<f64>()
                / m as f64;
            acc_sum += macro_acc;
        }
        let rhs = acc_sum / thresholds.len() as f64;
        assert!((lhs - rhs).abs() < 1e-12, "m={m}: {lhs} vs {rhs}");
    }
    report(6, "linear-score exactness of the expectation", "PASS");
}

fn mnist_dir() -> Option<PathBuf> {
    let candidates = [
        std::env::var("MNIST_DIR").ok().map(PathBuf::from),
        Some(PathBuf::from("data/mnist")),
        Some(PathBuf::from("../../data/mnist")),
    ];
    candidates.into_iter().flatten().find(|dir| {
        [
            "train-images-idx3-ubyte",
            "train-labels-idx1-ubyte",
            "t10k-images-idx3-ubyte",
            "t10k-labels-idx1-ubyte",
        ]
        .iter()
        .all(|f| dir.join(f).is_file())
    })
}

fn load_mnist(dir: &PathBuf) -> (Dataset, Dataset, Dataset) {
    let full_train = data::load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
    .unwrap();
    let test = data::load_idx(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
    )
    .unwrap();
    let (train_set, val, _) = data::split(&full_train, (0.899999999, 0.1, 1e-9), 0, true).unwrap();
    (train_set, val, test)
}

fn train_once(
    splits: &(Dataset, Dataset, Dataset),
    hidden: &[usize],
    loss: LossSelector,
    seed: u64,
    learning_rate: f64,
    max_epochs: usize,
    patience: usize,
) -> TestMetrics {
    let (train_set, val, test) = splits;
    let mut model =
        MlpModel::new(train_set.feature_dim(), hidden, train_set.num_classes, seed).unwrap();
    let mut loss = loss;
    if let LossSelector::Multisol(ref mut lc) = loss {
        lc.seed = seed;
    }
    let cfg = TrainConfig {
        loss,
        learning_rate,
        max_epochs,
        patience,
        seed,
        ..TrainConfig::default()
    };
    train(&mut model, train_set, val, test, &cfg).unwrap().test
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn acceptance_07_mnist_accuracy_band() {
    let Some(dir) = mnist_dir() else {
        report(7, "mnist accuracy band", "SKIP (MNIST IDX files not found)");
        return;
    };
    let splits = load_mnist(&dir);
    let multisol = LossSelector::Multisol(LossConfig {
        score: ScoreKind::Accuracy,
        alpha: 1.0,
        lambda: 20.0,
        n_thresholds: 1024,
        seed: 0,
    });
    let mut sol_accs = Vec::new();
    let mut ce_accs = Vec::new();
    for seed in 0..3 {
        sol_accs.push(
            train_once(&splits, &[128, 64], multisol.clone(), seed, 1e-4, 60, 10).top1_accuracy,
        );
        ce_accs.push(
            train_once(&splits, &[128, 64], LossSelector::CrossEntropy, seed, 1e-4, 60, 10)
                .top1_accuracy,
        );
    }
    let sol = median(sol_accs.clone());
    let ce = median(ce_accs.clone());
    assert!(sol >= 0.965, "multisol accuracies {sol_accs:?}");
    assert!((sol - ce).abs() <= 0.015, "multisol {sol} vs ce {ce}");
    report(7, "mnist accuracy band", "PASS");
}

#[test]
fn acceptance_08_lambda_degradation_direction() {
    // MNIST variant when available, otherwise 10-class blobs: an extreme
    // steepness saturates the sigmoids and stalls training.
    let splits = if let Some(dir) = mnist_dir() {
        load_mnist(&dir)
    } else {
        let ds = make_blobs(&BlobSpec::balanced(10, 150, 2.0, 0.35, 8)).unwrap();
        let (a, b, c) = data::split(&ds, (0.7, 0.15, 0.15), 8, true).unwrap();
        (a, b, c)
    };
    let mk = |lambda: f64| {
        LossSelector::Multisol(LossConfig {
            score: ScoreKind::Accuracy,
            lambda,
            n_thresholds: 128,
            ..LossConfig::default()
        })
    };
    let mut low = Vec::new();
    let mut high = Vec::new();
    for seed in 0..3 {
        high.push(train_once(&splits, &[32, 16], mk(20.0), seed, 1e-2, 40, 40).top1_accuracy);
        low.push(train_once(&splits, &[32, 16], mk(1000.0), seed, 1e-2, 40, 40).top1_accuracy);
    }
    let (hi, lo) = (median(high.clone()), median(low.clone()));
    assert!(
        hi - lo >= 0.03,
        "lambda=20 accuracies {high:?} vs lambda=1000 {low:?}"
    );
    report(8, "extreme steepness degrades accuracy", "PASS");
}

#[test]
fn acceptance_09_score_oriented_effect_on_imbalance() {
    // 4-class blobs at ratio 10:3:2:1, 2000 points, overlapping heavily so
    // that minority recall genuinely competes with majority precision.
    let spec = BlobSpec {
        num_classes: 4,
        counts: vec![1250, 375, 250, 125],
        radius: 1.2,
        std_dev: 1.1,
        seed: 9,
    };
    let ds = make_blobs(&spec).unwrap();
    assert_eq!(ds.len(), 2000);
    let splits = data::split(&ds, (0.7, 0.15, 0.15), 9, true).unwrap();
    // A gentle sigmoid (lambda = 1) plus weight decay keeps logits away from
    // saturation, which otherwise silences minority-class gradients.
    let mk = |score: ScoreKind, seed: u64| {
        LossSelector::Multisol(LossConfig {
            score,
            lambda: 1.0,
            n_thresholds: 128,
            seed,
            ..LossConfig::default()
        })
    };
    let run = |sel: LossSelector, seed: u64| {
        let (train_set, val, test) = &splits;
        let mut model = MlpModel::new(2, &[16], 4, seed).unwrap();
        let cfg = TrainConfig {
            loss: sel,
            learning_rate: 3e-3,
            max_epochs: 200,
            patience: 200,
            weight_decay: 1e-3,
            seed,
            ..TrainConfig::default()
        };
        train(&mut model, train_set, val, test, &cfg).unwrap().test
    };
    let mut ce_f1 = Vec::new();
    let mut sol_f1 = Vec::new();
    let mut recall_of_recall = Vec::new();
    let mut recall_of_precision = Vec::new();
    for seed in 0..5 {
        ce_f1.push(run(LossSelector::CrossEntropy, seed).macro_f1);
        sol_f1.push(run(mk(ScoreKind::F1, seed), seed).macro_f1);
        recall_of_recall.push(run(mk(ScoreKind::Recall, seed), seed).macro_recall);
        recall_of_precision.push(run(mk(ScoreKind::Precision, seed), seed).macro_recall);
    }
    let sol = median(sol_f1.clone());
    let ce = median(ce_f1.clone());
    assert!(sol >= ce - 0.02, "multisol-f1 {sol_f1:?} vs ce {ce_f1:?}");
    let rr = median(recall_of_recall.clone());
    let rp = median(recall_of_precision.clone());
    assert!(
        rr >= rp,
        "recall-trained macro-recall {recall_of_recall:?} vs precision-trained {recall_of_precision:?}"
    );
    report(9, "score-oriented effect under class imbalance", "PASS");
}

#[test]
fn acceptance_10_prior_concentration_is_directional() {
    // Overlapping 3-class blobs; training with a tighter prior should leave a
    // near-optimal threshold region that sits closer to the barycenter.
    let ds = make_blobs(&BlobSpec::balanced(3, 400, 2.0, 1.0, 10)).unwrap();
    let splits = data::split(&ds, (0.7, 0.15, 0.15), 10, true).unwrap();
    let grid = BarycentricGrid::new(30, 3).unwrap();
    let bary = SimplexPoint::barycenter(3);

    let centroid_distance = |alpha: f64, seed: u64| -> f64 {
        let loss = LossSelector::Multisol(LossConfig {
            score: ScoreKind::Accuracy,
            alpha,
            lambda: 20.0,
            n_thresholds: 128,
            seed,
        });
        let (train_set, val, test) = &splits;
        let mut model = MlpModel::new(2, &[16], 3, seed).unwrap();
        let cfg = TrainConfig {
            loss,
            learning_rate: 1e-2,
            max_epochs: 30,
            patience: 30,
            seed,
            ..TrainConfig::default()
        };
        train(&mut model, train_set, val, test, &cfg).unwrap();
        let preds = model.predict(&test.features).unwrap();
        let result = scan(&preds, &test.labels, &grid, ScanMetric::Top1).unwrap();
        let best = result.best_score();
        let mut weight_sum = 0.0;
        let mut centroid = [0.0f64; 3];
        for (tau, &s) in result.thresholds.iter().zip(&result.scores) {
            if s >= best * 0.99 {
                weight_sum += s;
                for (ci, &ti) in centroid.iter_mut().zip(tau.values()) {
                    *ci += s * ti;
                }
            }
        }
        centroid
            .iter()
            .zip(bary.values())
            .map(|(&c, &b)| (c / weight_sum - b).powi(2))
            .sum::<f64>()
            .sqrt()
    };

    let mut medians = Vec::new();
    for &alpha in &[5.0, 10.0, 20.0] {
        let d: Vec<f64> = (0..5).map(|seed| centroid_distance(alpha, seed)).collect();
        medians.push(median(d));
    }
    assert!(
        medians[0] > medians[1] && medians[1] > medians[2],
        "centroid distances not monotone: {medians:?}"
    );
    report(10, "prior concentration is directional", "PASS");
}

#[test]
fn acceptance_11_threshold_scan_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for m in [2usize, 3, 4] {
        for k in [3usize, 10, 20] {
            let n = 100;
            let preds: Vec<SimplexPoint> =
                (0..n).map(|_| random_simplex_point(&mut rng, m)).collect();
            let labels: Vec<HardLabel> =
                (0..n).map(|_| HardLabel::new(rng.gen_range(0..m), m).unwrap()).collect();
            let grid = BarycentricGrid::new(k, m).unwrap();
            let result = scan(&preds, &labels, &grid, ScanMetric::Top1).unwrap();
            let mut best = f64::NEG_INFINITY;
            for tau in grid.points() {
                let correct = preds
                    .iter()
                    .zip(&labels)
                    .filter(|(p, l)| classify(p, tau).unwrap().label == **l)
                    .count();
                best = best.max(correct as f64 / n as f64);
            }
            assert_eq!(result.best_score(), best, "m={m}, k={k}");
        }
    }
    report(11, "threshold scan matches brute force", "PASS");
}
