//! Command implementations. Every emitted file embeds the resolved seed and
//! config hash, floats are serialized with 17 significant digits, and writes
//! go through a temp-file-then-rename so readers never see partial output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::cli::config::RunConfig;
use crate::cli::trace::{annotate, parse_record, TraceOptions};
use crate::cli::{Cli, Command};
use crate::error::Error as ScpoError;
use crate::pipeline::score_group;
use crate::sim::{run_experiment, BucketSummary, Method, RunMetrics};
use crate::theory::{contribution_gap, summarize, uniform_density_instance, verify_theorem, TheoryReport};

/// Command failures carrying their exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or malformed input: exit 2.
    #[error("input error: {0}")]
    Input(String),
    /// Configuration or oracle problem: exit 3.
    #[error("configuration error: {0}")]
    Config(String),
    /// The verification run found violations: exit 4.
    #[error("theorem violated on {0} instances")]
    Theorem(u64),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Config(_) => 3,
            CliError::Theorem(_) => 4,
        }
    }
}

impl From<ScpoError> for CliError {
    fn from(err: ScpoError) -> Self {
        match err {
            ScpoError::ConfigError(_) | ScpoError::MissingProbability { .. } => {
                CliError::Config(err.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

/// Parses flags, dispatches, reports errors on stderr, returns the exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Score {
            traces,
            config,
            out,
            seed,
        } => {
            let config = load_config(config.as_deref(), seed)?;
            score(&traces, &config, &out)
        }
        Command::Simulate {
            config,
            method,
            out,
            seed,
        } => {
            let config = load_config(config.as_deref(), seed)?;
            let out_dir = resolve_out_dir(out, &config)?;
            simulate(&config, method.into(), &out_dir)
        }
        Command::TheoryCheck {
            trials,
            seed,
            min_steps,
            max_steps,
            fixture,
            out,
        } => theory_check(trials, seed, min_steps, max_steps, fixture.is_some(), out.as_deref()),
        Command::Compare {
            config,
            out,
            seed,
            debug_force_method,
        } => {
            let config = load_config(config.as_deref(), seed)?;
            let out_dir = resolve_out_dir(out, &config)?;
            compare(&config, &out_dir, debug_force_method.map(Method::from))
        }
    }
}

fn load_config(path: Option<&Path>, seed_override: Option<u64>) -> Result<RunConfig, CliError> {
    let mut config = match path {
        Some(path) => RunConfig::load(path).map_err(|e| CliError::Config(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    Ok(config)
}

fn resolve_out_dir(flag: Option<PathBuf>, config: &RunConfig) -> Result<PathBuf, CliError> {
    flag.or_else(|| config.io.out_dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set io.out_dir".into()))
}

/// Atomic write: temp file in the target directory, then rename.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Input(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| CliError::Input(format!("cannot move into place {}: {e}", path.display())))?;
    Ok(())
}

/// 17 significant digits, locale-free.
fn fmt_f64(value: f64) -> String {
    format!("{value:.16e}")
}

pub fn score(traces: &Path, config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(traces)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", traces.display())))?;
    let options = TraceOptions {
        keywords: config.keywords.clone(),
        segmentation: config.segmentation,
    };
    let score_config = crate::pipeline::ScoreConfig {
        reward: config.reward,
        gamma: config.train.gamma,
        effective_threshold: config.train.effective_threshold,
        norm_scope: config.norm_scope,
    };
    let hash = config.hash();
    let mut output = String::new();
    let mut records = 0usize;
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = index + 1;
        let loaded = parse_record(line, &options)
            .map_err(|e| CliError::Input(format!("line {line_no}: {e}")))?;
        let probs = loaded.probabilities.clone().ok_or_else(|| {
            CliError::Config(format!(
                "line {line_no}: steps are missing recorded probabilities and no oracle backend is configured"
            ))
        })?;
        let oracle = loaded.oracle().expect("probabilities imply an oracle");
        let scores = score_group(&loaded.group, &oracle, &score_config)
            .map_err(|e| CliError::Config(format!("line {line_no}: {e}")))?;
        let annotated = annotate(&loaded, &probs, &scores, config.seed, &hash);
        let json = serde_json::to_string(&annotated)
            .map_err(|e| CliError::Input(format!("line {line_no}: serialization: {e}")))?;
        output.push_str(&json);
        output.push('\n');
        records += 1;
    }
    write_atomic(out, &output)?;
    log::info!("scored {records} records into {}", out.display());
    Ok(())
}

fn metrics_csv(metrics: &RunMetrics, seed: u64, config_hash: &str) -> String {
    let mut csv = String::new();
    let _ = writeln!(csv, "# seed = {seed}");
    let _ = writeln!(csv, "# config_hash = {config_hash}");
    csv.push_str(
        "iteration,mean_length,accuracy,effective_step_fraction,effective_length_share,entropy,mean_rho,clipped_fraction\n",
    );
    for m in &metrics.iterations {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            m.iteration,
            fmt_f64(m.mean_length),
            fmt_f64(m.accuracy),
            fmt_f64(m.effective_step_fraction),
            fmt_f64(m.effective_length_share),
            fmt_f64(m.entropy),
            fmt_f64(m.mean_rho),
            fmt_f64(m.clipped_fraction),
        );
    }
    csv
}

pub fn simulate(config: &RunConfig, method: Method, out_dir: &Path) -> Result<(), CliError> {
    let metrics = run_experiment(&config.train_config(), &config.env, method)?;
    let hash = config.hash();
    write_atomic(
        &out_dir.join("metrics.csv"),
        &metrics_csv(&metrics, config.seed, &hash),
    )?;
    let metadata = json!({
        "command": "simulate",
        "method": method.to_string(),
        "seed": config.seed,
        "config_hash": hash,
        "iterations": metrics.len(),
        "config": config,
    });
    let line = serde_json::to_string(&metadata)
        .map_err(|e| CliError::Input(format!("metadata serialization: {e}")))?;
    write_atomic(&out_dir.join("run_metadata.json"), &format!("{line}\n"))?;
    println!("{line}");
    Ok(())
}

pub fn theory_check(
    trials: u64,
    seed: u64,
    min_steps: usize,
    max_steps: usize,
    uniform_fixture: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if trials < 1 {
        return Err(CliError::Config("need at least one trial".into()));
    }
    if min_steps < 1 || min_steps > max_steps {
        return Err(CliError::Config(format!(
            "invalid step range [{min_steps}, {max_steps}]"
        )));
    }
    let report: TheoryReport = if uniform_fixture {
        let instance = uniform_density_instance(max_steps.min(8), 0.37, 1.0)?;
        let gaps: Vec<f64> = (0..trials).map(|_| contribution_gap(&instance)).collect();
        summarize(trials, seed, min_steps, max_steps, &gaps)
    } else {
        verify_theorem(trials, seed, min_steps, max_steps)
    };
    let record = json!({
        "command": "theory-check",
        "trials": report.trials,
        "seed": report.seed,
        "min_steps": report.min_steps,
        "max_steps": report.max_steps,
        "min_gap": report.min_gap,
        "mean_gap": report.mean_gap,
        "max_gap": report.max_gap,
        "violations": report.violations,
        "fixture": if uniform_fixture { "uniform-v" } else { "random" },
    });
    let line = serde_json::to_string(&record)
        .map_err(|e| CliError::Input(format!("report serialization: {e}")))?;
    if let Some(path) = out {
        write_atomic(path, &format!("{line}\n"))?;
    }
    println!("{line}");
    if report.violations > 0 {
        return Err(CliError::Theorem(report.violations));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ArmSummary {
    method: String,
    initial_mean_length: f64,
    final_mean_length: f64,
    final_accuracy: f64,
    final_effective_step_fraction: f64,
    final_effective_length_share: f64,
    final_entropy: f64,
    low_bucket: BucketSummary,
    high_bucket: BucketSummary,
}

fn arm_summary(method: Method, metrics: &RunMetrics) -> ArmSummary {
    let (low, high) = metrics.final_bucket_summary();
    ArmSummary {
        method: method.to_string(),
        initial_mean_length: metrics.iterations.first().map_or(f64::NAN, |m| m.mean_length),
        final_mean_length: metrics.final_mean(|m| m.mean_length),
        final_accuracy: metrics.final_mean(|m| m.accuracy),
        final_effective_step_fraction: metrics.final_mean(|m| m.effective_step_fraction),
        final_effective_length_share: metrics.final_mean(|m| m.effective_length_share),
        final_entropy: metrics.final_mean(|m| m.entropy),
        low_bucket: low,
        high_bucket: high,
    }
}

pub fn compare(
    config: &RunConfig,
    out_dir: &Path,
    debug_force_method: Option<Method>,
) -> Result<(), CliError> {
    let train = config.train_config();
    let hash = config.hash();
    let step_method = debug_force_method.unwrap_or(Method::Scpo);
    let global_method = debug_force_method.unwrap_or(Method::Global);
    let step_arm = run_experiment(&train, &config.env, step_method)?;
    let global_arm = run_experiment(&train, &config.env, global_method)?;
    write_atomic(
        &out_dir.join("scpo_metrics.csv"),
        &metrics_csv(&step_arm, config.seed, &hash),
    )?;
    write_atomic(
        &out_dir.join("global_metrics.csv"),
        &metrics_csv(&global_arm, config.seed, &hash),
    )?;
    let step_summary = arm_summary(step_method, &step_arm);
    let global_summary = arm_summary(global_method, &global_arm);
    let summary = json!({
        "command": "compare",
        "seed": config.seed,
        "config_hash": hash,
        "iterations": train.iterations,
        "final_window": step_arm.final_window().len(),
        "final_length_ratio": step_summary.final_mean_length / global_summary.final_mean_length,
        "effective_step_fraction_delta":
            step_summary.final_effective_step_fraction - global_summary.final_effective_step_fraction,
        "effective_length_share_delta":
            step_summary.final_effective_length_share - global_summary.final_effective_length_share,
        "scpo": step_summary,
        "global": global_summary,
    });
    let line = serde_json::to_string(&summary)
        .map_err(|e| CliError::Input(format!("summary serialization: {e}")))?;
    write_atomic(&out_dir.join("summary.json"), &format!("{line}\n"))?;
    println!("{line}");
    Ok(())
}
