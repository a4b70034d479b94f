//! Subcommand implementations. Every command echoes the effective config to
//! the output directory and writes deterministic CSV/JSON artifacts.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use multisol_core::data::Dataset;
use multisol_core::dirichlet::DirichletPrior;
use multisol_core::loss::{LossConfig, LossSelector};
use multisol_core::mlp::MlpModel;
use multisol_core::threshold::{heatmap_export, scan, BarycentricGrid, ScanMetric};
use multisol_core::train::{self, TrainConfig, TrainReport};
use multisol_core::ScoreKind;

use crate::config::ExperimentConfig;
use crate::table::{ResultRow, ResultsTable};

/// Config problems exit with 2, runtime failures with 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn selector_label(sel: &LossSelector) -> String {
    match sel {
        LossSelector::Multisol(cfg) => format!("multisol_{}", cfg.score),
        LossSelector::CrossEntropy => "cross_entropy".into(),
        LossSelector::WeightedCrossEntropy => "weighted_cross_entropy".into(),
        LossSelector::Squared => "squared".into(),
    }
}

/// Reseeds the per-run randomness: model init, batch shuffling, and the
/// MultiSOL threshold draw all follow the run seed.
fn reseed(train_cfg: &TrainConfig, seed: u64) -> TrainConfig {
    let mut cfg = train_cfg.clone();
    cfg.seed = seed;
    if let LossSelector::Multisol(ref mut lc) = cfg.loss {
        lc.seed = seed;
    }
    cfg
}

struct RunOutput {
    seed: u64,
    report: TrainReport,
    model: MlpModel,
    seconds: f64,
}

fn run_one(
    cfg: &ExperimentConfig,
    train_cfg: &TrainConfig,
    splits: &(Dataset, Dataset, Dataset),
    seed: u64,
) -> Result<RunOutput, CliError> {
    let (train_set, val_set, test_set) = splits;
    let started = Instant::now();
    let mut model = MlpModel::new(
        train_set.feature_dim(),
        &cfg.model.hidden,
        train_set.num_classes,
        seed,
    )
    .map_err(runtime)?;
    let run_cfg = reseed(train_cfg, seed);
    let report =
        train::train(&mut model, train_set, val_set, test_set, &run_cfg).map_err(runtime)?;
    Ok(RunOutput {
        seed,
        report,
        model,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Runs `jobs` in a bounded rayon pool; output order follows input order, so
/// results are deterministic regardless of scheduling.
fn run_all<T: Send>(
    jobs: usize,
    tasks: Vec<Box<dyn Fn() -> Result<T, CliError> + Send + Sync>>,
) -> Result<Vec<T>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(runtime)?;
    pool.install(|| tasks.par_iter().map(|t| t()).collect())
}

fn prepare(
    config_path: &Path,
    out_dir: &Path,
    seeds_override: Option<&[u64]>,
) -> Result<(ExperimentConfig, Arc<(Dataset, Dataset, Dataset)>), CliError> {
    let mut cfg = ExperimentConfig::load(config_path).map_err(CliError::Config)?;
    if let Some(seeds) = seeds_override {
        if seeds.is_empty() {
            return Err(CliError::Config("--seeds: need at least one seed".into()));
        }
        cfg.seeds = seeds.to_vec();
    }
    std::fs::create_dir_all(out_dir).map_err(runtime)?;
    cfg.echo(out_dir).map_err(runtime)?;
    let splits = cfg.load_splits().map_err(runtime)?;
    Ok((cfg, Arc::new(splits)))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    std::fs::write(path, text + "\n").map_err(runtime)
}

pub fn cmd_train(
    config_path: &Path,
    out_dir: &Path,
    seeds_override: Option<&[u64]>,
    jobs: usize,
) -> Result<(), CliError> {
    let (cfg, splits) = prepare(config_path, out_dir, seeds_override)?;
    let label = selector_label(&cfg.train.loss);
    let tasks: Vec<Box<dyn Fn() -> Result<RunOutput, CliError> + Send + Sync>> = cfg
        .seeds
        .iter()
        .map(|&seed| {
            let cfg = cfg.clone();
            let splits = Arc::clone(&splits);
            Box::new(move || run_one(&cfg, &cfg.train, &splits, seed))
                as Box<dyn Fn() -> Result<RunOutput, CliError> + Send + Sync>
        })
        .collect();
    let runs = run_all(jobs, tasks)?;

    let mut table = ResultsTable::default();
    for run in &runs {
        write_json(&out_dir.join(format!("report_seed{}.json", run.seed)), &run.report)?;
        run.model
            .save(&out_dir.join(format!("model_seed{}.ckpt", run.seed)))
            .map_err(runtime)?;
        table.push(ResultRow::from_report(label.clone(), None, run.seed, &run.report));
    }
    table.sort();
    table.write_csv(&out_dir.join("results.csv")).map_err(runtime)?;
    let timing_rows: Vec<(String, u64, f64)> = runs
        .iter()
        .map(|r| (label.clone(), r.seed, r.seconds))
        .collect();
    write_timings(out_dir, &timing_rows)?;
    Ok(())
}

/// Wall-clock seconds live in their own file so the metric tables stay
/// bit-identical across reruns.
fn write_timings(out_dir: &Path, rows: &[(String, u64, f64)]) -> Result<(), CliError> {
    let mut text = String::from("run,seed,wall_clock_seconds\n");
    for (label, seed, secs) in rows {
        text.push_str(&format!("{label},{seed},{secs:.3}\n"));
    }
    std::fs::write(out_dir.join("timings.csv"), text).map_err(runtime)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Alpha,
    Lambda,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alpha" => Ok(SweepAxis::Alpha),
            "lambda" => Ok(SweepAxis::Lambda),
            other => Err(format!("unknown sweep axis {other:?} (use alpha or lambda)")),
        }
    }
}

pub fn cmd_sweep(
    config_path: &Path,
    out_dir: &Path,
    seeds_override: Option<&[u64]>,
    jobs: usize,
    axis: SweepAxis,
    values: &[f64],
) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Config("--values: need at least one value".into()));
    }
    if let Some(&bad) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(CliError::Config(format!("--values: {bad} must be positive")));
    }
    let (cfg, splits) = prepare(config_path, out_dir, seeds_override)?;
    let base_loss = match &cfg.train.loss {
        LossSelector::Multisol(lc) => lc.clone(),
        _ => LossConfig::default(),
    };

    // One MultiSOL model per (value, seed), plus a CE baseline per seed.
    let mut variants: Vec<(Option<f64>, LossSelector)> = values
        .iter()
        .map(|&v| {
            let mut lc = base_loss.clone();
            match axis {
                SweepAxis::Alpha => lc.alpha = v,
                SweepAxis::Lambda => lc.lambda = v,
            }
            (Some(v), LossSelector::Multisol(lc))
        })
        .collect();
    variants.push((None, LossSelector::CrossEntropy));

    let tasks: Vec<Box<dyn Fn() -> Result<(Option<f64>, String, RunOutput), CliError> + Send + Sync>> =
        variants
            .iter()
            .flat_map(|(value, sel)| {
                let cfg = &cfg;
                let splits = &splits;
                cfg.seeds.iter().map(move |&seed| {
                    let cfg = cfg.clone();
                    let splits = Arc::clone(splits);
                    let value = *value;
                    let sel = sel.clone();
                    Box::new(move || {
                        let mut tc = cfg.train.clone();
                        tc.loss = sel.clone();
                        let run = run_one(&cfg, &tc, &splits, seed)?;
                        Ok((value, selector_label(&sel), run))
                    })
                        as Box<dyn Fn() -> Result<(Option<f64>, String, RunOutput), CliError> + Send + Sync>
                })
            })
            .collect();
    let runs = run_all(jobs, tasks)?;

    let mut table = ResultsTable::default();
    for (value, label, run) in &runs {
        table.push(ResultRow::from_report(label.clone(), *value, run.seed, &run.report));
    }
    table.sort();
    table.write_csv(&out_dir.join("results.csv")).map_err(runtime)?;

    // Compact summary: one row per sweep value, MultiSOL vs the CE baseline,
    // seed means.
    let axis_name = match axis {
        SweepAxis::Alpha => "alpha",
        SweepAxis::Lambda => "lambda",
    };
    let aggs = table.aggregates();
    let ce_mean = aggs
        .iter()
        .find(|a| a.loss == "cross_entropy" && a.statistic == "mean")
        .expect("CE baseline always present");
    let mut text = format!("{axis_name},multisol_macro_f1,multisol_accuracy,ce_macro_f1,ce_accuracy\n");
    for &v in values {
        let row = aggs
            .iter()
            .find(|a| a.sweep_value == Some(v) && a.statistic == "mean")
            .expect("every sweep value trained");
        text.push_str(&format!(
            "{v},{},{},{},{}\n",
            row.values[1], row.values[0], ce_mean.values[1], ce_mean.values[0]
        ));
    }
    std::fs::write(out_dir.join("sweep.csv"), text).map_err(runtime)?;
    let timing_rows: Vec<(String, u64, f64)> = runs
        .iter()
        .map(|(_, label, r)| (label.clone(), r.seed, r.seconds))
        .collect();
    write_timings(out_dir, &timing_rows)?;
    Ok(())
}

pub fn cmd_scores(
    config_path: &Path,
    out_dir: &Path,
    seeds_override: Option<&[u64]>,
    jobs: usize,
) -> Result<(), CliError> {
    let (cfg, splits) = prepare(config_path, out_dir, seeds_override)?;
    let base_loss = match &cfg.train.loss {
        LossSelector::Multisol(lc) => lc.clone(),
        _ => LossConfig::default(),
    };
    let mut selectors = vec![
        LossSelector::CrossEntropy,
        LossSelector::WeightedCrossEntropy,
        LossSelector::Squared,
    ];
    for kind in ScoreKind::ALL {
        selectors.push(LossSelector::Multisol(LossConfig {
            score: kind,
            ..base_loss.clone()
        }));
    }

    let tasks: Vec<Box<dyn Fn() -> Result<(String, RunOutput), CliError> + Send + Sync>> = selectors
        .iter()
        .flat_map(|sel| {
            let cfg = &cfg;
            let splits = &splits;
            cfg.seeds.iter().map(move |&seed| {
                let cfg = cfg.clone();
                let splits = Arc::clone(splits);
                let sel = sel.clone();
                Box::new(move || {
                    let mut tc = cfg.train.clone();
                    tc.loss = sel.clone();
                    let run = run_one(&cfg, &tc, &splits, seed)?;
                    Ok((selector_label(&sel), run))
                })
                    as Box<dyn Fn() -> Result<(String, RunOutput), CliError> + Send + Sync>
            })
        })
        .collect();
    let runs = run_all(jobs, tasks)?;

    let mut table = ResultsTable::default();
    for (label, run) in &runs {
        table.push(ResultRow::from_report(label.clone(), None, run.seed, &run.report));
    }
    table.sort();
    table.write_csv(&out_dir.join("results.csv")).map_err(runtime)?;

    // Summary in mean (min–max) form, one row per trained loss.
    let aggs = table.aggregates();
    let mut text =
        String::from("loss,top1_accuracy,macro_f1,macro_precision,macro_recall\n");
    let mut losses: Vec<&String> = table.rows.iter().map(|r| &r.loss).collect();
    losses.dedup();
    for loss in losses {
        let get = |stat: &str| {
            aggs.iter()
                .find(|a| &a.loss == loss && a.statistic == stat)
                .expect("aggregate exists")
        };
        let (mean, min, max) = (get("mean"), get("min"), get("max"));
        let cell = |i: usize| {
            format!(
                "{:.4} ({:.4}-{:.4})",
                mean.values[i], min.values[i], max.values[i]
            )
        };
        text.push_str(&format!(
            "{loss},{},{},{},{}\n",
            cell(0),
            cell(1),
            cell(2),
            cell(3)
        ));
    }
    std::fs::write(out_dir.join("scores_summary.csv"), text).map_err(runtime)?;
    let timing_rows: Vec<(String, u64, f64)> = runs
        .iter()
        .map(|(label, r)| (label.clone(), r.seed, r.seconds))
        .collect();
    write_timings(out_dir, &timing_rows)?;
    Ok(())
}

pub fn cmd_heatmap(
    config_path: &Path,
    checkpoint: &Path,
    out_dir: &Path,
    grid_k: usize,
    alpha: f64,
) -> Result<(), CliError> {
    if !(alpha > 0.0) {
        return Err(CliError::Config(format!("--alpha: {alpha} must be positive")));
    }
    let cfg = ExperimentConfig::load(config_path).map_err(CliError::Config)?;
    if !checkpoint.is_file() {
        return Err(CliError::Config(format!(
            "checkpoint: no such file {}",
            checkpoint.display()
        )));
    }
    let model = MlpModel::load(checkpoint).map_err(runtime)?;
    let m = model.num_classes();
    if m != 3 {
        return Err(CliError::Config(format!(
            "heatmap export supports 3-class models only (ternary plot); checkpoint has {m} classes"
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(runtime)?;
    cfg.echo(out_dir).map_err(runtime)?;
    let (_, _, test) = cfg.load_splits().map_err(runtime)?;
    if test.num_classes != m {
        return Err(CliError::Config(format!(
            "dataset has {} classes but checkpoint expects {m}",
            test.num_classes
        )));
    }
    let preds = model.predict(&test.features).map_err(runtime)?;
    let grid = BarycentricGrid::new(grid_k, m).map_err(runtime)?;
    let result = scan(&preds, &test.labels, &grid, ScanMetric::Top1).map_err(runtime)?;
    let prior = DirichletPrior::symmetric(alpha, m).map_err(runtime)?;
    heatmap_export(&result, Some(&prior), &out_dir.join("heatmap.csv")).map_err(runtime)?;
    Ok(())
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<u64>().map_err(|e| format!("bad seed {t:?}: {e}")))
        .collect()
}

pub fn parse_values(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad value {t:?}: {e}")))
        .collect()
}
