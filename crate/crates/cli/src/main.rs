use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fzoo::harness::{
    resolve_output_root, resume_run, run_experiment, verify_suite, Checkpoint, RunConfig, Summary,
    VerifyOptions, DEFAULT_SAMPLES, OUTPUT_ROOT_ENV,
};
use fzoo::FzooError;

const EXIT_ERROR: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_VERIFY_FAILED: u8 = 3;
const EXIT_INCOMPLETE: u8 = 4;

/// Forward-only zeroth-order optimizer races and identity checks.
#[derive(Parser)]
#[command(name = "fzoo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every optimizer, grid point and seed in a config.
    Run {
        config: PathBuf,
    },
    /// Check the moment identities and forward-engine equivalence.
    Verify {
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use a population (divide by N) standard deviation, to exercise the suite.
        #[arg(long, hide = true)]
        mutate_sigma: bool,
    },
    /// Continue a checkpointed run to the config's budget.
    Resume {
        checkpoint: PathBuf,
        config: PathBuf,
    },
    /// Print a checkpoint as JSON.
    DumpCheckpoint {
        checkpoint: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<FzooError>(), Some(FzooError::Config { .. })));
            ExitCode::from(if config_error { EXIT_CONFIG } else { EXIT_ERROR })
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Run { config } => run(&config),
        Command::Verify { samples, seed, mutate_sigma } => verify(samples, seed, mutate_sigma),
        Command::Resume { checkpoint, config } => resume(&checkpoint, &config),
        Command::DumpCheckpoint { checkpoint } => {
            let c = Checkpoint::load(&checkpoint)?;
            println!("{}", c.to_debug_json()?);
            Ok(0)
        }
    }
}

fn load_config(path: &Path) -> anyhow::Result<(RunConfig, PathBuf)> {
    let config = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((config, base))
}

fn output_root(config: &RunConfig, base: &Path) -> PathBuf {
    let env = std::env::var_os(OUTPUT_ROOT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    resolve_output_root(config, base, env)
}

fn run(path: &Path) -> anyhow::Result<u8> {
    let (config, base) = load_config(path)?;
    let root = output_root(&config, &base);
    let summary = run_experiment(&config, &base, &root)?;
    print_summary(&summary);
    println!("results in {}", root.join(&config.name).display());
    Ok(if summary.complete { 0 } else { EXIT_INCOMPLETE })
}

fn print_summary(summary: &Summary) {
    println!("{} (budget {} forwards, {} seeds)", summary.name, summary.budget, summary.seeds.len());
    for o in &summary.optimizers {
        let best = o.best_point();
        println!(
            "  [{}] {:<8} lr={:<8e} eps={:<8e} mean={:.6e} median={:.6e}",
            o.index, o.kind, best.lr, best.eps, best.mean_final_loss, best.median_final_loss
        );
    }
    for c in &summary.comparisons {
        println!(
            "  [{}] vs [{}]: {}-{} ({} ties), p={:.4} / {:.4}",
            c.a, c.b, c.wins_a, c.wins_b, c.ties, c.p_value_a_better, c.p_value_b_better
        );
    }
    let incomplete = summary.runs.iter().filter(|r| !r.complete).count();
    if incomplete > 0 {
        println!("  {incomplete} run(s) incomplete");
    }
}

fn population_sigma(losses: &[f64]) -> fzoo::Result<f64> {
    let n = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    Ok((losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n).sqrt())
}

fn verify(samples: usize, seed: u64, mutate_sigma: bool) -> anyhow::Result<u8> {
    let mut options = VerifyOptions {
        samples,
        seed,
        ..VerifyOptions::default()
    };
    if mutate_sigma {
        options.sigma = population_sigma;
    }
    let report = verify_suite(&options)?;
    print!("{}", report.table());
    if report.ok() {
        Ok(0)
    } else {
        let failed: Vec<&str> = report.failures().iter().map(|r| r.name.as_str()).collect();
        eprintln!("failed: {}", failed.join("; "));
        Ok(EXIT_VERIFY_FAILED)
    }
}

fn resume(checkpoint: &Path, path: &Path) -> anyhow::Result<u8> {
    let (config, base) = load_config(path)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let root = output_root(&config, &base);
    let record = resume_run(&config, ckpt, &base, &root)?;
    println!(
        "{} steps, {} forwards, final loss {:.6e} -> {}",
        record.steps,
        record.forward_passes,
        record.final_loss,
        root.join(&config.name).join(&record.csv).display()
    );
    Ok(if record.complete { 0 } else { EXIT_INCOMPLETE })
}
