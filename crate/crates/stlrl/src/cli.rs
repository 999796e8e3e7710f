//! Command-line interface: `train`, `eval`, `monitor`, and `check`.
//!
//! Exit codes: 0 success, 1 usage error, 2 configuration/input error,
//! 3 runtime failure.

use crate::agents::{train, AlgoKind, TrainError};
use crate::config::load_config;
use crate::eval::evaluate;
use crate::nn::{Checkpoint, CheckpointError, Mlp};
use crate::stl::{parse, validate_fragment, State, TemporalKind};
use crate::tau::trajectory_robustness;
use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "stlrl",
    version,
    about = "Train and evaluate STL-constrained actor-critic policies; monitor traces against STL formulae"
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Run training for every configured seed (or one overridden seed).
    Train {
        /// Path to the key-value config file.
        #[arg(long)]
        config: PathBuf,
        /// Train this seed only, overriding the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a trained checkpoint with the deterministic policy head.
    Eval {
        /// Path to a checkpoint produced by `train`.
        #[arg(long)]
        ckpt: PathBuf,
        /// Config the checkpoint was trained with.
        #[arg(long)]
        config: PathBuf,
        /// Number of evaluation episodes (default: config's eval_episodes).
        #[arg(long)]
        episodes: Option<usize>,
        /// Master seed for the evaluation streams (default: first config seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a recorded trace against a formula.
    Monitor {
        /// CSV trace with header x0,x1,... and one row per step.
        #[arg(long)]
        trace: PathBuf,
        /// Formula text, or a path to a file containing it.
        #[arg(long)]
        formula: String,
    },
    /// Summarize a formula's fragment shape (window length, sub-formulae).
    Check {
        /// Formula text, or a path to a file containing it.
        #[arg(long)]
        formula: String,
    },
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

/// Parse arguments, dispatch, and map errors to exit codes.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Train { config, seed } => cmd_train(&config, seed),
        Cmd::Eval {
            ckpt,
            config,
            episodes,
            seed,
        } => cmd_eval(&ckpt, &config, episodes, seed),
        Cmd::Monitor { trace, formula } => cmd_monitor(&trace, &formula),
        Cmd::Check { formula } => cmd_check(&formula),
    }
}

fn cmd_train(config_path: &Path, seed_override: Option<u64>) -> Result<(), CliError> {
    let cfg = load_config(config_path).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.prepare().map_err(|e| CliError::Config(e.to_string()))?;
    let seeds = match seed_override {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };
    for seed in seeds {
        let dir = cfg.out_dir.join(format!("seed{seed}"));
        let report = train(&cfg, seed, &dir).map_err(|e| match e {
            TrainError::Config(c) => CliError::Config(c.to_string()),
            other => CliError::Runtime(other.to_string()),
        })?;
        println!(
            "seed {seed}: {} steps, {} episodes, success {:.2}, wall {:.1}s -> {}",
            report.steps,
            report.episodes,
            report.final_eval.success_rate(),
            report.wall_time.as_secs_f64(),
            dir.display()
        );
    }
    Ok(())
}

/// Deterministic policy head from a checkpointed actor.
fn policy_from(
    actor: &Mlp,
    algorithm: AlgoKind,
    action_dim: usize,
) -> impl FnMut(&[f64]) -> Vec<f64> + '_ {
    move |z: &[f64]| {
        let out = actor.forward_one(z);
        match algorithm {
            AlgoKind::Sac => out[..action_dim].iter().map(|m| m.tanh()).collect(),
            AlgoKind::Ddpg | AlgoKind::Td3 => out,
        }
    }
}

fn cmd_eval(
    ckpt_path: &Path,
    config_path: &Path,
    episodes: Option<usize>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let cfg = load_config(config_path).map_err(|e| CliError::Config(e.to_string()))?;
    let prep = cfg.prepare().map_err(|e| CliError::Config(e.to_string()))?;
    let ck = Checkpoint::load(ckpt_path).map_err(|e| match e {
        CheckpointError::Io(io) => CliError::Runtime(format!("cannot read checkpoint: {io}")),
        other => CliError::Config(other.to_string()),
    })?;

    let algo_name = ck
        .meta_value("algorithm")
        .ok_or_else(|| CliError::Config("checkpoint carries no algorithm tag".into()))?;
    if algo_name != cfg.algorithm.name() {
        return Err(CliError::Config(format!(
            "checkpoint algorithm {algo_name:?} does not match config {:?}",
            cfg.algorithm.name()
        )));
    }
    let actor = ck
        .net("actor")
        .ok_or_else(|| CliError::Config("checkpoint has no actor network".into()))?;
    if actor.input_dim() != prep.input_dim {
        return Err(CliError::Config(format!(
            "checkpoint input dimension {} does not match config {} \
             (formula/preprocessing mismatch)",
            actor.input_dim(),
            prep.input_dim
        )));
    }
    let expect_out = match cfg.algorithm {
        AlgoKind::Sac => 2 * prep.action_dim,
        _ => prep.action_dim,
    };
    if actor.output_dim() != expect_out {
        return Err(CliError::Config(format!(
            "checkpoint action head {} does not match config {expect_out}",
            actor.output_dim()
        )));
    }

    let n = episodes.unwrap_or(cfg.eval_episodes);
    let master_seed = seed.unwrap_or(cfg.seeds[0]);
    let mut policy = policy_from(actor, cfg.algorithm, prep.action_dim);
    let report = evaluate(
        &prep.plant,
        &prep.spec,
        &prep.info,
        &prep.formula,
        prep.mode,
        &mut policy,
        n,
        cfg.episode_steps,
        cfg.gamma,
        master_seed,
        0,
    );
    println!("episodes: {}", report.episodes);
    println!(
        "mean_reward: {} (std {})",
        report.mean_reward, report.std_reward
    );
    println!(
        "mean_stl_reward: {} (std {})",
        report.mean_stl_reward, report.std_stl_reward
    );
    println!(
        "success_rate: {} ({}/{})",
        report.success_rate(),
        report.success,
        report.episodes
    );
    Ok(())
}

fn cmd_monitor(trace_path: &Path, formula_arg: &str) -> Result<(), CliError> {
    let (state_dim, trace) = read_trace(trace_path)?;
    let text = formula_text(formula_arg)?;
    let formula = parse(&text, state_dim).map_err(|e| CliError::Config(e.to_string()))?;
    let info = validate_fragment(&formula).map_err(|e| CliError::Config(e.to_string()))?;
    if trace.len() < info.tau {
        return Err(CliError::Config(format!(
            "trace has {} states but the formula window needs {}",
            trace.len(),
            info.tau
        )));
    }
    let rho = trajectory_robustness(&trace, &info).expect("length checked against the window");
    println!("robustness: {rho}");
    println!(
        "verdict: {}",
        if rho >= 0.0 { "satisfied" } else { "violated" }
    );
    println!("window_end,robustness");
    for k in info.tau - 1..trace.len() {
        let w = info
            .inner
            .robustness(&trace, k + 1 - info.tau)
            .expect("window fits");
        println!("{k},{w}");
    }
    Ok(())
}

fn cmd_check(formula_arg: &str) -> Result<(), CliError> {
    let text = formula_text(formula_arg)?;
    let state_dim = infer_state_dim(&text);
    let formula = parse(&text, state_dim).map_err(|e| CliError::Config(e.to_string()))?;
    let info = validate_fragment(&formula).map_err(|e| CliError::Config(e.to_string()))?;
    println!(
        "outer: {}[0,{}]",
        match info.outer {
            TemporalKind::Globally => "G",
            TemporalKind::Finally => "F",
        },
        info.outer_end
    );
    println!("horizon: {}", formula.horizon());
    println!("tau: {}", info.tau);
    println!("sub_formulae: {}", info.sub_count());
    println!("flag_eligible: {}", info.flag_eligible);
    for (i, sub) in info.subs.iter().enumerate() {
        println!(
            "  phi{}: {}[{},{}]({})",
            i + 1,
            match sub.kind {
                TemporalKind::Globally => "G",
                TemporalKind::Finally => "F",
            },
            sub.window.start,
            sub.window.end,
            sub.inner
        );
    }
    Ok(())
}

/// Accept a formula either inline or as a path to a text file.
fn formula_text(arg: &str) -> Result<String, CliError> {
    let p = Path::new(arg);
    if p.is_file() {
        fs::read_to_string(p)
            .map(|s| s.trim().to_string())
            .map_err(|e| CliError::Runtime(format!("cannot read formula file: {e}")))
    } else {
        Ok(arg.to_string())
    }
}

/// Smallest state dimension covering every variable mentioned in the text.
fn infer_state_dim(text: &str) -> usize {
    let bytes = text.as_bytes();
    let mut max_idx = 0usize;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'x' {
            let mut j = i + 1;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            if j > i + 1 {
                if let Ok(idx) = text[i + 1..j].parse::<usize>() {
                    max_idx = max_idx.max(idx);
                }
            }
            i = j;
        } else {
            i += 1;
        }
    }
    max_idx + 1
}

/// Read a trace CSV with header `x0,x1,...` and one state per row.
fn read_trace(path: &Path) -> Result<(usize, Vec<State>), CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("cannot read trace: {e}")))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config("trace file is empty".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    for (i, c) in cols.iter().enumerate() {
        if *c != format!("x{i}") {
            return Err(CliError::Config(format!(
                "trace header must be x0,x1,...; column {i} is {c:?}"
            )));
        }
    }
    let dim = cols.len();
    let mut trace = Vec::new();
    for (ln, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Config(format!("trace row {}: {e}", ln + 2)))?;
        if vals.len() != dim {
            return Err(CliError::Config(format!(
                "trace row {} has {} columns, expected {dim}",
                ln + 2,
                vals.len()
            )));
        }
        trace.push(vals);
    }
    Ok((dim, trace))
}
