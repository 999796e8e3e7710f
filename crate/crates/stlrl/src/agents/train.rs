//! The two-phase training loop: episodic rollouts on the windowed
//! environment, incremental flag preprocessing, experience replay, and
//! per-step learning that switches from pre-training to fine-tuning once
//! the step counter reaches the configured boundary.
//!
//! Determinism: one master seed derives every RNG stream (network init,
//! resets, plant noise, policy sampling, buffer sampling, multiplier
//! batches, and per-rollout evaluation streams), and the loop is strictly
//! sequential, so identical configs produce bit-identical outputs.

use super::{
    AlgoKind, DetPolicyAgent, Experience, LagrangianState, LearnStats, OuNoise, Phase,
    ReplayBuffer, SacAgent,
};
use crate::config::{ConfigError, Prepared, RunConfig};
use crate::eval::{evaluate, EvalReport};
use crate::nn::{Checkpoint, RngState};
use crate::preprocess::{initial_flags, InputBuilder, InputMode, PreprocessError};
use crate::stl::FragmentInfo;
use crate::tau::{Plant, WindowedEnv};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

/// Purpose-scoped RNG stream identifiers under one master seed.
#[derive(Debug, Clone, Copy)]
pub enum StreamId {
    NetInit = 0,
    Reset = 1,
    PlantNoise = 2,
    Policy = 3,
    Buffer = 4,
    InitStates = 5,
}

pub fn stream_rng(seed: u64, id: StreamId) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    rng
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("preprocess: {0}")]
    Preprocess(#[from] PreprocessError),
    #[error("non-finite {what} at step {step}; state dumped to {dump}")]
    NonFinite {
        what: String,
        step: u64,
        dump: PathBuf,
    },
}

/// Outcome of one training run.
pub struct TrainReport {
    pub steps: u64,
    pub episodes: u64,
    pub final_eval: EvalReport,
    pub metrics_path: PathBuf,
    pub eval_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub wall_time: Duration,
}

enum AnyAgent {
    Sac(SacAgent),
    Det(DetPolicyAgent),
}

impl AnyAgent {
    fn act_explore(&mut self, zhat: &[f64], rng: &mut ChaCha12Rng) -> Vec<f64> {
        match self {
            AnyAgent::Sac(a) => a.act_explore(zhat, rng),
            AnyAgent::Det(a) => a.act_explore(zhat, rng),
        }
    }

    fn act_eval(&self, zhat: &[f64]) -> Vec<f64> {
        match self {
            AnyAgent::Sac(a) => a.act_eval(zhat),
            AnyAgent::Det(a) => a.act_eval(zhat),
        }
    }

    fn on_episode_start(&mut self) {
        if let AnyAgent::Det(a) = self {
            a.on_episode_start();
        }
    }

    fn learn(
        &mut self,
        batch: &super::Batch,
        phase: Phase,
        init_inputs: Option<&[f64]>,
        rng: &mut ChaCha12Rng,
    ) -> LearnStats {
        match self {
            AnyAgent::Sac(a) => a.learn(batch, phase, init_inputs, rng),
            AnyAgent::Det(a) => a.learn(batch, phase, init_inputs, rng),
        }
    }

    fn kappa(&self) -> f64 {
        match self {
            AnyAgent::Sac(a) => a.lagrange.kappa,
            AnyAgent::Det(a) => a.lagrange.kappa,
        }
    }

    fn alpha(&self) -> f64 {
        match self {
            AnyAgent::Sac(a) => a.lagrange.alpha,
            AnyAgent::Det(a) => a.lagrange.alpha,
        }
    }

    fn to_checkpoint(&self) -> Checkpoint {
        match self {
            AnyAgent::Sac(a) => a.to_checkpoint(),
            AnyAgent::Det(a) => a.to_checkpoint(),
        }
    }
}

/// Initial-state network inputs for the multiplier update: fresh draws from
/// the plant's initial distribution preprocessed exactly like episode
/// starts.
fn init_state_inputs<P: Plant>(
    plant: &P,
    info: &FragmentInfo,
    mode: InputMode,
    n: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<f64> {
    let mut out = Vec::new();
    for _ in 0..n {
        let x0 = plant.reset(rng);
        let nx = plant.normalize(&x0);
        match mode {
            InputMode::Flags => {
                out.extend_from_slice(&nx);
                out.extend(initial_flags(&info.subs, &x0));
            }
            InputMode::Window => {
                for _ in 0..info.tau {
                    out.extend_from_slice(&nx);
                }
            }
        }
    }
    out
}

/// Run one seed to completion, writing `metrics.csv`, `eval.csv`, and
/// checkpoints under `out_dir`.
pub fn train(cfg: &RunConfig, seed: u64, out_dir: &Path) -> Result<TrainReport, TrainError> {
    let prep: Prepared = cfg.prepare()?;
    fs::create_dir_all(out_dir)?;
    let start = Instant::now();

    let mut rng_init = stream_rng(seed, StreamId::NetInit);
    let mut rng_reset = stream_rng(seed, StreamId::Reset);
    let mut rng_noise = stream_rng(seed, StreamId::PlantNoise);
    let mut rng_policy = stream_rng(seed, StreamId::Policy);
    let mut rng_buffer = stream_rng(seed, StreamId::Buffer);
    let mut rng_kappa = stream_rng(seed, StreamId::InitStates);

    let alpha0 = if cfg.algorithm == AlgoKind::Sac {
        cfg.alpha_init
    } else {
        0.0
    };
    let lagrange = LagrangianState::new(
        cfg.kappa_init,
        alpha0,
        cfg.l_stl,
        cfg.h0,
        cfg.lr_kappa,
        cfg.lr,
    );
    let ou = OuNoise::new(prep.action_dim, 0.15, 0.0, 0.3);
    let mut agent = match cfg.algorithm {
        AlgoKind::Sac => AnyAgent::Sac(SacAgent::new(
            prep.input_dim,
            prep.action_dim,
            cfg.hidden_width,
            cfg.lr,
            cfg.gamma,
            cfg.xi,
            lagrange,
            &mut rng_init,
        )),
        AlgoKind::Ddpg => AnyAgent::Det(DetPolicyAgent::ddpg(
            prep.input_dim,
            prep.action_dim,
            cfg.hidden_width,
            cfg.lr,
            cfg.gamma,
            cfg.xi,
            lagrange,
            ou,
            &mut rng_init,
        )),
        AlgoKind::Td3 => AnyAgent::Det(DetPolicyAgent::td3(
            prep.input_dim,
            prep.action_dim,
            cfg.hidden_width,
            cfg.lr,
            cfg.gamma,
            cfg.xi,
            lagrange,
            ou,
            &mut rng_init,
        )),
    };

    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut builder = InputBuilder::new(&prep.plant, &prep.info, prep.mode)?;

    let metrics_path = out_dir.join("metrics.csv");
    let eval_path = out_dir.join("eval.csv");
    let mut metrics = BufWriter::new(fs::File::create(&metrics_path)?);
    let mut evals = BufWriter::new(fs::File::create(&eval_path)?);
    writeln!(
        metrics,
        "step,episode,sum_reward,sum_stl_reward,kappa,alpha,actor_loss,critic_r_loss,critic_s_loss"
    )?;
    writeln!(
        evals,
        "step,episode,mean_reward,std_reward,mean_stl_reward,std_stl_reward,success_rate,episodes"
    )?;

    let mut steps: u64 = 0;
    let mut episodes: u64 = 0;
    let mut eval_index: u64 = 0;

    let run_eval = |agent: &AnyAgent, eval_index: u64| -> EvalReport {
        let mut policy = |z: &[f64]| agent.act_eval(z);
        evaluate(
            &prep.plant,
            &prep.spec,
            &prep.info,
            &prep.formula,
            prep.mode,
            &mut policy,
            cfg.eval_episodes,
            cfg.episode_steps,
            cfg.gamma,
            seed,
            eval_index,
        )
    };

    while steps < cfg.total_steps {
        episodes += 1;
        let mut env = WindowedEnv::reset(&prep.plant, &prep.spec, &mut rng_reset);
        let mut zhat = builder.start(env.window());
        agent.on_episode_start();
        let (mut disc_r, mut disc_s, mut gpow) = (0.0, 0.0, 1.0);
        let mut last = LearnStats::default();

        for _ in 0..cfg.episode_steps {
            if steps >= cfg.total_steps {
                break;
            }
            let a = agent.act_explore(&zhat, &mut rng_policy);
            if !a.iter().all(|v| v.is_finite()) {
                return Err(abort_dump(&agent, "action", steps, out_dir));
            }
            let out = env.step(&a, &mut rng_noise);
            let z_next = builder.next(env.window());
            disc_r += gpow * out.reward;
            disc_s += gpow * out.stl_reward;
            gpow *= cfg.gamma;
            buffer.push(Experience {
                z: std::mem::replace(&mut zhat, z_next.clone()),
                a,
                z_next,
                r: out.reward,
                s: out.stl_reward,
            });

            if buffer.len() >= cfg.batch_size {
                let batch = buffer
                    .sample(cfg.batch_size, &mut rng_buffer)
                    .expect("buffer holds at least one batch");
                let phase = if steps < cfg.k_pre {
                    Phase::Pretrain
                } else {
                    Phase::Finetune
                };
                let init = (phase == Phase::Finetune).then(|| {
                    init_state_inputs(
                        &prep.plant,
                        &prep.info,
                        prep.mode,
                        cfg.batch_size,
                        &mut rng_kappa,
                    )
                });
                last = agent.learn(&batch, phase, init.as_deref(), &mut rng_policy);
                if !last.all_finite() || !agent.kappa().is_finite() || !agent.alpha().is_finite() {
                    return Err(abort_dump(&agent, "loss", steps, out_dir));
                }
            }
            steps += 1;

            if cfg.eval_interval > 0 && steps % cfg.eval_interval == 0 && steps < cfg.total_steps {
                let report = run_eval(&agent, eval_index);
                write_eval_row(&mut evals, steps, episodes, &report)?;
                evals.flush()?;
                println!(
                    "seed {seed} step {steps}: success {:.2} mean_stl {:.3} kappa {:.4}",
                    report.success_rate(),
                    report.mean_stl_reward,
                    agent.kappa()
                );
                eval_index += 1;
            }
            if cfg.checkpoint_interval > 0
                && steps % cfg.checkpoint_interval == 0
                && steps < cfg.total_steps
            {
                save_checkpoint(&agent, cfg, steps, out_dir, &format!("checkpoint_{steps}.bin"))?;
            }
        }

        writeln!(
            metrics,
            "{steps},{episodes},{disc_r},{disc_s},{},{},{},{},{}",
            agent.kappa(),
            agent.alpha(),
            last.actor_loss,
            last.critic_r_loss,
            last.critic_s_loss
        )?;
    }

    let final_eval = run_eval(&agent, eval_index);
    write_eval_row(&mut evals, steps, episodes, &final_eval)?;
    println!(
        "seed {seed} final: success {:.2} mean_reward {:.3} mean_stl {:.3}",
        final_eval.success_rate(),
        final_eval.mean_reward,
        final_eval.mean_stl_reward
    );
    metrics.flush()?;
    evals.flush()?;

    let checkpoint_path = out_dir.join("checkpoint.bin");
    let mut ck = agent.to_checkpoint();
    ck.meta.push(("step".into(), steps.to_string()));
    ck.meta.push(("seed".into(), seed.to_string()));
    ck.meta.push(("hidden_width".into(), cfg.hidden_width.to_string()));
    ck.meta.push(("formula".into(), cfg.formula_text.clone()));
    ck.rngs = vec![
        ("reset".into(), RngState::capture(&rng_reset)),
        ("plant_noise".into(), RngState::capture(&rng_noise)),
        ("policy".into(), RngState::capture(&rng_policy)),
        ("buffer".into(), RngState::capture(&rng_buffer)),
        ("init_states".into(), RngState::capture(&rng_kappa)),
    ];
    ck.save(&checkpoint_path)?;

    Ok(TrainReport {
        steps,
        episodes,
        final_eval,
        metrics_path,
        eval_path,
        checkpoint_path,
        wall_time: start.elapsed(),
    })
}

fn write_eval_row(
    w: &mut impl Write,
    step: u64,
    episode: u64,
    report: &EvalReport,
) -> std::io::Result<()> {
    writeln!(
        w,
        "{step},{episode},{},{},{},{},{},{}",
        report.mean_reward,
        report.std_reward,
        report.mean_stl_reward,
        report.std_stl_reward,
        report.success_rate(),
        report.episodes
    )
}

fn save_checkpoint(
    agent: &AnyAgent,
    cfg: &RunConfig,
    steps: u64,
    out_dir: &Path,
    name: &str,
) -> std::io::Result<()> {
    let mut ck = agent.to_checkpoint();
    ck.meta.push(("step".into(), steps.to_string()));
    ck.meta.push(("hidden_width".into(), cfg.hidden_width.to_string()));
    ck.meta.push(("formula".into(), cfg.formula_text.clone()));
    ck.save(&out_dir.join(name))
}

fn abort_dump(agent: &AnyAgent, what: &str, step: u64, out_dir: &Path) -> TrainError {
    let dump = out_dir.join("abort_dump.bin");
    let mut ck = agent.to_checkpoint();
    ck.meta.push(("aborted_at_step".into(), step.to_string()));
    let _ = ck.save(&dump);
    TrainError::NonFinite {
        what: what.to_string(),
        step,
        dump,
    }
}
