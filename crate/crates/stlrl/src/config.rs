//! Flat key-value run configuration. Every hyperparameter has an explicit
//! key; defaults are the benchmark values. Lines are `key = value`, `#`
//! starts a comment, whitespace is insignificant.

use crate::agents::AlgoKind;
use crate::preprocess::{input_dim, InputMode};
use crate::robot::{Box2, EnvConfig, Unicycle};
use crate::stl::{parse, validate_fragment, Formula, FragmentError, FragmentInfo, ParseError};
use crate::tau::StlRewardSpec;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config line {line}: expected 'key = value', got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("config line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("config key {key}: {message}")]
    Value { key: String, message: String },
    #[error("missing required config key {0:?}")]
    Missing(&'static str),
    #[error("formula: {0}")]
    Formula(#[from] ParseError),
    #[error("formula: {0}")]
    Fragment(#[from] FragmentError),
    #[error("formula is not flag-eligible; set preprocess = false to train on the raw window")]
    NotEligible,
    #[error("episode_steps = {steps} is shorter than the formula horizon {horizon}")]
    EpisodeTooShort { steps: usize, horizon: usize },
}

/// One training run's hyperparameters and environment settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub algorithm: AlgoKind,
    pub formula_text: String,
    pub beta: f64,
    pub l_stl: f64,
    /// Environment steps per episode (K).
    pub episode_steps: usize,
    pub total_steps: u64,
    pub k_pre: u64,
    pub gamma: f64,
    pub xi: f64,
    pub lr: f64,
    pub lr_kappa: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub h0: f64,
    pub alpha_init: f64,
    pub kappa_init: f64,
    pub seeds: Vec<u64>,
    pub preprocess: bool,
    pub hidden_width: usize,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub checkpoint_interval: u64,
    pub out_dir: PathBuf,
    pub env: EnvConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: AlgoKind::Sac,
            formula_text: String::new(),
            beta: 100.0,
            l_stl: f64::NAN,
            episode_steps: 1000,
            total_steps: 600_000,
            k_pre: 300_000,
            gamma: 0.99,
            xi: 0.01,
            lr: 3e-4,
            lr_kappa: 1e-5,
            buffer_capacity: 100_000,
            batch_size: 64,
            h0: -2.0,
            alpha_init: 1.0,
            kappa_init: 1.0,
            seeds: vec![0],
            preprocess: true,
            hidden_width: 256,
            eval_interval: 10_000,
            eval_episodes: 100,
            checkpoint_interval: 0,
            out_dir: PathBuf::from("runs/out"),
            env: EnvConfig::default(),
        }
    }
}

/// A validated configuration with the parsed formula and derived objects.
pub struct Prepared {
    pub formula: Formula,
    pub info: FragmentInfo,
    pub spec: StlRewardSpec,
    pub plant: Unicycle,
    pub mode: InputMode,
    pub input_dim: usize,
    pub action_dim: usize,
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen: Vec<String> = Vec::new();
    let mut have_formula = false;
    let mut have_l_stl = false;

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let stripped = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        let (key, value) = stripped.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            text: stripped.to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();
        if seen.iter().any(|k| k == key) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
        seen.push(key.to_string());

        let bad = |message: String| ConfigError::Value {
            key: key.to_string(),
            message,
        };
        match key {
            "algorithm" => {
                cfg.algorithm = match value {
                    "sac" => AlgoKind::Sac,
                    "ddpg" => AlgoKind::Ddpg,
                    "td3" => AlgoKind::Td3,
                    other => return Err(bad(format!("unknown algorithm {other:?}"))),
                }
            }
            "formula" => {
                cfg.formula_text = value.to_string();
                have_formula = true;
            }
            "beta" => cfg.beta = parse_num(key, value, |v| v > 0.0, "must be > 0")?,
            "l_stl" => {
                cfg.l_stl = parse_num(key, value, |v: f64| v.is_finite(), "must be finite")?;
                have_l_stl = true;
            }
            "episode_steps" => cfg.episode_steps = parse_int(key, value)?,
            "total_steps" => cfg.total_steps = parse_int(key, value)?,
            "k_pre" => cfg.k_pre = parse_int(key, value)?,
            "gamma" => {
                cfg.gamma = parse_num(key, value, |v| (0.0..1.0).contains(&v), "must be in [0,1)")?
            }
            "xi" => cfg.xi = parse_num(key, value, |v| v > 0.0 && v <= 1.0, "must be in (0,1]")?,
            "lr" => cfg.lr = parse_num(key, value, |v| v > 0.0, "must be > 0")?,
            "lr_kappa" => cfg.lr_kappa = parse_num(key, value, |v| v > 0.0, "must be > 0")?,
            "buffer_capacity" => cfg.buffer_capacity = parse_int(key, value)?,
            "batch_size" => cfg.batch_size = parse_int(key, value)?,
            "h0" => cfg.h0 = parse_num(key, value, |v: f64| v.is_finite(), "must be finite")?,
            "alpha_init" => cfg.alpha_init = parse_num(key, value, |v| v >= 0.0, "must be >= 0")?,
            "kappa_init" => cfg.kappa_init = parse_num(key, value, |v| v >= 0.0, "must be >= 0")?,
            "seeds" => {
                cfg.seeds = value
                    .split(',')
                    .map(|s| s.trim().parse::<u64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| bad(format!("bad seed list: {e}")))?;
                if cfg.seeds.is_empty() {
                    return Err(bad("seed list is empty".into()));
                }
            }
            "preprocess" => cfg.preprocess = parse_bool(key, value)?,
            "hidden_width" => cfg.hidden_width = parse_int(key, value)?,
            "eval_interval" => cfg.eval_interval = parse_int(key, value)?,
            "eval_episodes" => cfg.eval_episodes = parse_int(key, value)?,
            "checkpoint_interval" => cfg.checkpoint_interval = parse_int(key, value)?,
            "out_dir" => cfg.out_dir = PathBuf::from(value),
            "delta" => cfg.env.delta = parse_num(key, value, |v| v > 0.0, "must be > 0")?,
            "noise_scale" => {
                cfg.env.noise_scale = parse_num(key, value, |v| v >= 0.0, "must be >= 0")?
            }
            "region1" => cfg.env.region1 = parse_box(key, value)?,
            "region2" => cfg.env.region2 = parse_box(key, value)?,
            "init_box" => cfg.env.init_box = parse_box(key, value)?,
            "work_box" => cfg.env.work_box = parse_box(key, value)?,
            "init_heading" => {
                let v = parse_floats(key, value, 2)?;
                if v[0] > v[1] {
                    return Err(bad("heading range must be ordered".into()));
                }
                cfg.env.init_heading = (v[0], v[1]);
            }
            "normalize_offset" => {
                let v = parse_floats(key, value, 3)?;
                cfg.env.normalize_offset = [v[0], v[1], v[2]];
            }
            other => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: other.to_string(),
                })
            }
        }
    }

    if !have_formula {
        return Err(ConfigError::Missing("formula"));
    }
    if !have_l_stl {
        return Err(ConfigError::Missing("l_stl"));
    }
    if cfg.batch_size == 0 || cfg.eval_episodes == 0 || cfg.hidden_width == 0 {
        return Err(ConfigError::Value {
            key: "batch_size/eval_episodes/hidden_width".into(),
            message: "must be positive".into(),
        });
    }
    if cfg.buffer_capacity < cfg.batch_size {
        return Err(ConfigError::Value {
            key: "buffer_capacity".into(),
            message: "must be at least batch_size".into(),
        });
    }
    Ok(cfg)
}

impl RunConfig {
    /// Parse and shape-check the formula, check eligibility against the
    /// preprocessing mode, and build the plant and reward spec.
    pub fn prepare(&self) -> Result<Prepared, ConfigError> {
        let plant = Unicycle::new(self.env.clone());
        let formula = parse(&self.formula_text, 3)?;
        let info = validate_fragment(&formula)?;
        let mode = if self.preprocess {
            InputMode::Flags
        } else {
            InputMode::Window
        };
        if self.preprocess && !info.flag_eligible {
            return Err(ConfigError::NotEligible);
        }
        let horizon = formula.horizon();
        if self.episode_steps < horizon {
            return Err(ConfigError::EpisodeTooShort {
                steps: self.episode_steps,
                horizon,
            });
        }
        let spec = StlRewardSpec::from_fragment(&info, self.beta);
        let dim = input_dim(3, &info, mode);
        Ok(Prepared {
            formula,
            info,
            spec,
            plant,
            mode,
            input_dim: dim,
            action_dim: 2,
        })
    }
}

fn parse_num<F: FnOnce(f64) -> bool>(
    key: &str,
    value: &str,
    ok: F,
    req: &str,
) -> Result<f64, ConfigError> {
    let v: f64 = value.parse().map_err(|e| ConfigError::Value {
        key: key.to_string(),
        message: format!("{e}"),
    })?;
    if !ok(v) {
        return Err(ConfigError::Value {
            key: key.to_string(),
            message: format!("{req}, got {value}"),
        });
    }
    Ok(v)
}

fn parse_int<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| ConfigError::Value {
        key: key.to_string(),
        message: format!("{e}"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(ConfigError::Value {
            key: key.to_string(),
            message: format!("expected true/false, got {other:?}"),
        }),
    }
}

fn parse_floats(key: &str, value: &str, n: usize) -> Result<Vec<f64>, ConfigError> {
    let vals: Vec<f64> = value
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| ConfigError::Value {
            key: key.to_string(),
            message: format!("{e}"),
        })?;
    if vals.len() != n {
        return Err(ConfigError::Value {
            key: key.to_string(),
            message: format!("expected {n} comma-separated numbers"),
        });
    }
    Ok(vals)
}

fn parse_box(key: &str, value: &str) -> Result<Box2, ConfigError> {
    let v = parse_floats(key, value, 4)?;
    if v[0] > v[1] || v[2] > v[3] {
        return Err(ConfigError::Value {
            key: key.to_string(),
            message: "box bounds must be ordered lo0,hi0,lo1,hi1".into(),
        });
    }
    Ok(Box2::new(v[0], v[1], v[2], v[3]))
}

/// The benchmark recurrence formula over the default regions.
pub const PHI1: &str = "G[0,900](F[0,99](3.5 <= x0 <= 4.5 & 3.5 <= x1 <= 4.5) & F[0,99](3.5 <= x0 <= 4.5 & 1.5 <= x1 <= 2.5))";
/// The benchmark stabilization formula over the default regions.
pub const PHI2: &str = "F[0,450](G[0,49](3.5 <= x0 <= 4.5 & 3.5 <= x1 <= 4.5) | G[0,49](3.5 <= x0 <= 4.5 & 1.5 <= x1 <= 2.5))";
