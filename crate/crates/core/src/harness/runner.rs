use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use crate::error::{FzooError, Result};
use crate::objectives::Objective;
use crate::optimizers::{run_with, OptimizerConfig, OptimizerState, StepReport};

/// Environment variable that overrides a config's `output_dir`.
pub const OUTPUT_ROOT_ENV: &str = "FZOO_OUTPUT_ROOT";
pub const CSV_HEADER: &str = "step,fwd_cum,loss,sigma,grad_norm,wall_ms";

/// One `(optimizer, grid point, seed)` run.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub optimizer: usize,
    pub lr: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Job {
    /// File stem shared by the run's CSV and checkpoint.
    pub fn stem(&self, config: &RunConfig) -> String {
        let kind = config.optimizers[self.optimizer].kind;
        format!(
            "{}-{}_lr{:e}_eps{:e}_seed{}",
            self.optimizer, kind, self.lr, self.eps, self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub optimizer: usize,
    pub lr: f64,
    pub eps: f64,
    pub seed: u64,
    pub steps: u64,
    pub forward_passes: u64,
    /// Full-batch loss at the final parameters (not charged to the budget).
    pub final_loss: f64,
    pub final_grad_norm: Option<f64>,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointSummary {
    pub lr: f64,
    pub eps: f64,
    pub mean_final_loss: f64,
    pub median_final_loss: f64,
    pub median_final_grad_norm: Option<f64>,
    /// In seed order.
    pub final_losses: Vec<f64>,
    pub incomplete_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSummary {
    pub index: usize,
    pub kind: String,
    pub directions: usize,
    pub forwards_per_step: u64,
    pub grid: Vec<GridPointSummary>,
    /// Index into `grid` of the selected point.
    pub best: usize,
}

impl OptimizerSummary {
    pub fn best_point(&self) -> &GridPointSummary {
        &self.grid[self.best]
    }
}

/// Paired comparison of two optimizers at their selected grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: usize,
    pub b: usize,
    /// Seeds where `a` ended strictly lower.
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
    /// One-sided exact sign-test p-value for "a beats b".
    pub p_value_a_better: f64,
    pub p_value_b_better: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub budget: u64,
    pub seeds: Vec<u64>,
    pub complete: bool,
    pub optimizers: Vec<OptimizerSummary>,
    pub comparisons: Vec<Comparison>,
    pub runs: Vec<RunRecord>,
}

/// `FZOO_OUTPUT_ROOT` when given, else the config's `output_dir` resolved
/// against `base`.
pub fn resolve_output_root(config: &RunConfig, base: &Path, env_override: Option<PathBuf>) -> PathBuf {
    match env_override {
        Some(root) => root,
        None => base.join(&config.output_dir),
    }
}

pub fn jobs(config: &RunConfig) -> Vec<Job> {
    config
        .optimizers
        .iter()
        .enumerate()
        .flat_map(|(i, entry)| {
            entry.grid().into_iter().flat_map(move |(lr, eps)| {
                config.seeds.iter().map(move |&seed| Job {
                    optimizer: i,
                    lr,
                    eps,
                    seed,
                })
            })
        })
        .collect()
}

/// Runs every job and writes `<root>/<name>/runs/*.csv` and
/// `<root>/<name>/summary.json`. Dataset paths resolve against `base`.
pub fn run_experiment(config: &RunConfig, base: &Path, output_root: &Path) -> Result<Summary> {
    config.validate()?;
    let objective = config.build_objective(base)?;
    let theta0 = config.init.build(objective.as_ref())?;
    let dir = output_root.join(&config.name);
    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir)?;

    let jobs = jobs(config);
    info!("{}: {} runs", config.name, jobs.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| FzooError::invalid(format!("worker pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let entry = &config.optimizers[job.optimizer];
                let opt = entry.optimizer_config(job.lr, job.eps, config.budget, job.seed);
                execute(
                    config,
                    job,
                    &opt,
                    objective.as_ref(),
                    OptimizerState::new(theta0.clone()),
                    Vec::new(),
                    &runs_dir,
                )
            })
            .collect::<Result<_>>()
    })?;

    let summary = summarize(config, records);
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

/// Continues the run stored in `checkpoint` under `config`, rewriting its CSV
/// and checkpoint. Returns the finished run's record.
pub fn resume_run(
    config: &RunConfig,
    checkpoint: Checkpoint,
    base: &Path,
    output_root: &Path,
) -> Result<RunRecord> {
    config.validate()?;
    let c = &checkpoint.config;
    let same = |a: f64, b: f64| a.to_bits() == b.to_bits();
    let job = jobs(config)
        .into_iter()
        .find(|j| {
            let entry = &config.optimizers[j.optimizer];
            entry.kind == c.kind
                && entry.directions == c.directions
                && same(j.lr, c.lr)
                && (c.kind.is_first_order() || same(j.eps, c.eps))
                && j.seed == c.run_seed
        })
        .ok_or_else(|| {
            FzooError::config(
                "optimizers",
                format!(
                    "no run matches the checkpoint ({} lr={} eps={} seed={})",
                    c.kind, c.lr, c.eps, c.run_seed
                ),
            )
        })?;
    let objective = config.build_objective(base)?;
    if checkpoint.state.theta.dim() != objective.dim() {
        return Err(FzooError::Checkpoint(format!(
            "checkpoint has {} parameters, objective expects {}",
            checkpoint.state.theta.dim(),
            objective.dim()
        )));
    }
    let entry = &config.optimizers[job.optimizer];
    let opt = entry.optimizer_config(job.lr, job.eps, config.budget, job.seed);
    let runs_dir = output_root.join(&config.name).join("runs");
    fs::create_dir_all(&runs_dir)?;
    execute(
        config,
        &job,
        &opt,
        objective.as_ref(),
        checkpoint.state,
        checkpoint.reports,
        &runs_dir,
    )
}

fn execute(
    config: &RunConfig,
    job: &Job,
    opt: &OptimizerConfig,
    objective: &dyn Objective,
    state: OptimizerState,
    mut history: Vec<StepReport>,
    runs_dir: &Path,
) -> Result<RunRecord> {
    let stem = job.stem(config);
    let ckpt_path = runs_dir.join(format!("{stem}.ckpt"));
    let start = Instant::now();
    let mut wall = vec![None; history.len()];
    let mut since_start = Vec::new();
    let mut taken = history.clone();
    let outcome = run_with(opt, objective, state, |state, report| {
        since_start.push(start.elapsed().as_secs_f64() * 1e3);
        if let Some(every) = config.checkpoint_every {
            taken.push(report.clone());
            if state.step % every == 0 {
                Checkpoint::new(opt.clone(), state.clone(), taken.clone()).save(&ckpt_path)?;
            }
        }
        Ok(())
    })?;
    if let Some(e) = &outcome.error {
        warn!("{stem}: {e}");
    }
    history.extend(outcome.reports.iter().cloned());
    wall.extend(since_start.into_iter().map(Some));

    let csv_name = format!("{stem}.csv");
    write_report_csv(&runs_dir.join(&csv_name), &history, config.record_wall_time.then_some(&wall[..]))?;

    let full = objective.full_batch();
    let theta = &outcome.state.theta;
    let final_loss = objective.evaluate(theta, &full).unwrap_or(f64::NAN);
    let final_grad_norm = if objective.has_gradient() {
        objective
            .gradient(theta, &full)
            .ok()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>().sqrt())
    } else {
        None
    };
    if config.checkpoint_every.is_some() {
        Checkpoint::new(opt.clone(), outcome.state.clone(), history.clone()).save(&ckpt_path)?;
    }
    Ok(RunRecord {
        optimizer: job.optimizer,
        lr: job.lr,
        eps: job.eps,
        seed: job.seed,
        steps: outcome.state.step,
        forward_passes: outcome.state.forward_passes,
        final_loss,
        final_grad_norm,
        complete: outcome.complete,
        error: outcome.error,
        csv: format!("runs/{csv_name}"),
    })
}

/// Writes one row per step. Optional values and a disabled `wall_ms` are
/// left empty.
pub fn write_report_csv(path: &Path, reports: &[StepReport], wall_ms: Option<&[Option<f64>]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(CSV_HEADER.split(',')).map_err(csv_error)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (i, r) in reports.iter().enumerate() {
        let wall = wall_ms.and_then(|w| w.get(i).copied().flatten());
        w.write_record([
            r.step.to_string(),
            r.forward_cum.to_string(),
            r.loss.to_string(),
            opt(r.sigma),
            opt(r.grad_norm),
            opt(wall.map(|x| (x * 1e3).round() / 1e3)),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> FzooError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => FzooError::Io(io),
        other => FzooError::invalid(format!("csv: {other:?}")),
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Non-finite losses rank worst.
fn rank_value(x: f64) -> f64 {
    if x.is_nan() {
        f64::INFINITY
    } else {
        x
    }
}

/// Index of the lowest mean final loss; ties go to the smaller η, then the
/// smaller ε.
pub fn select_best(grid: &[GridPointSummary]) -> usize {
    (0..grid.len())
        .min_by(|&i, &j| {
            let (a, b) = (&grid[i], &grid[j]);
            rank_value(a.mean_final_loss)
                .total_cmp(&rank_value(b.mean_final_loss))
                .then(a.lr.total_cmp(&b.lr))
                .then(a.eps.total_cmp(&b.eps))
        })
        .unwrap_or(0)
}

/// `P(X ≥ k)` for `X ~ Binomial(n, 1/2)`.
pub fn sign_test_p(k: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut coeff = 1.0f64;
    let mut tail = 0.0;
    for i in 0..=n {
        if i >= k {
            tail += coeff;
        }
        coeff = coeff * (n - i) as f64 / (i + 1) as f64;
    }
    (tail / 2f64.powi(n as i32)).min(1.0)
}

pub fn compare(a: usize, b: usize, losses_a: &[f64], losses_b: &[f64]) -> Comparison {
    let (mut wins_a, mut wins_b, mut ties) = (0, 0, 0);
    for (&x, &y) in losses_a.iter().zip(losses_b) {
        match rank_value(x).total_cmp(&rank_value(y)) {
            std::cmp::Ordering::Less => wins_a += 1,
            std::cmp::Ordering::Greater => wins_b += 1,
            std::cmp::Ordering::Equal => ties += 1,
        }
    }
    Comparison {
        a,
        b,
        wins_a,
        wins_b,
        ties,
        p_value_a_better: sign_test_p(wins_a, wins_a + wins_b),
        p_value_b_better: sign_test_p(wins_b, wins_a + wins_b),
    }
}

fn summarize(config: &RunConfig, runs: Vec<RunRecord>) -> Summary {
    let optimizers: Vec<OptimizerSummary> = config
        .optimizers
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let grid: Vec<GridPointSummary> = entry
                .grid()
                .into_iter()
                .map(|(lr, eps)| {
                    let rows: Vec<&RunRecord> = runs
                        .iter()
                        .filter(|r| r.optimizer == i && r.lr == lr && r.eps == eps)
                        .collect();
                    let losses: Vec<f64> = rows.iter().map(|r| r.final_loss).collect();
                    let grads: Option<Vec<f64>> = rows.iter().map(|r| r.final_grad_norm).collect();
                    GridPointSummary {
                        lr,
                        eps,
                        mean_final_loss: losses.iter().sum::<f64>() / losses.len() as f64,
                        median_final_loss: median(&losses),
                        median_final_grad_norm: grads.map(|g| median(&g)),
                        final_losses: losses,
                        incomplete_runs: rows.iter().filter(|r| !r.complete).count(),
                    }
                })
                .collect();
            OptimizerSummary {
                index: i,
                kind: entry.kind.to_string(),
                directions: entry.directions,
                forwards_per_step: entry.kind.forwards_per_step(entry.directions),
                best: select_best(&grid),
                grid,
            }
        })
        .collect();
    let mut comparisons = Vec::new();
    for a in 0..optimizers.len() {
        for b in a + 1..optimizers.len() {
            comparisons.push(compare(
                a,
                b,
                &optimizers[a].best_point().final_losses,
                &optimizers[b].best_point().final_losses,
            ));
        }
    }
    Summary {
        name: config.name.clone(),
        budget: config.budget,
        seeds: config.seeds.clone(),
        complete: runs.iter().all(|r| r.complete),
        optimizers,
        comparisons,
        runs,
    }
}
