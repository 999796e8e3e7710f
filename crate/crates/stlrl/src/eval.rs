//! Policy evaluation: deterministic-head rollouts on the stochastic plant,
//! discounted reward sums, trajectory robustness, and the success rate.

use crate::preprocess::{InputBuilder, InputMode};
use crate::stl::{Formula, FragmentInfo};
use crate::tau::{trajectory_robustness, Plant, StlRewardSpec, WindowedEnv};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Base of the RNG stream ids reserved for evaluation rollouts.
pub const STREAM_EVAL_BASE: u64 = 1 << 32;

/// Aggregated evaluation results over N rollouts.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub episodes: usize,
    /// Mean and standard deviation of the discounted reward sum.
    pub mean_reward: f64,
    pub std_reward: f64,
    /// Mean and standard deviation of the discounted STL-reward sum.
    pub mean_stl_reward: f64,
    pub std_stl_reward: f64,
    /// Rollouts whose trace satisfies the constraint (robustness ≥ 0).
    pub success: usize,
    /// Per-rollout trajectory robustness over the formula horizon.
    pub robustness: Vec<f64>,
    /// Per-rollout Boolean verdict from the independent semantics.
    pub satisfied: Vec<bool>,
}

impl EvalReport {
    pub fn success_rate(&self) -> f64 {
        self.success as f64 / self.episodes as f64
    }
}

/// Roll out the deterministic policy head for `episodes` trajectories and
/// score them. Each rollout draws from its own RNG stream derived from the
/// master seed and the evaluation index, so reruns are bit-identical and
/// aggregation is order-independent.
#[allow(clippy::too_many_arguments)]
pub fn evaluate<P: Plant>(
    plant: &P,
    spec: &StlRewardSpec,
    info: &FragmentInfo,
    formula: &Formula,
    mode: InputMode,
    policy: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    episodes: usize,
    episode_steps: usize,
    gamma: f64,
    master_seed: u64,
    eval_index: u64,
) -> EvalReport {
    assert!(episodes > 0 && episodes < (1 << 16), "episode count");
    let horizon = formula.horizon();
    assert!(
        episode_steps >= horizon,
        "episode must cover the formula horizon"
    );
    let mut sums_r = Vec::with_capacity(episodes);
    let mut sums_s = Vec::with_capacity(episodes);
    let mut robustness = Vec::with_capacity(episodes);
    let mut satisfied = Vec::with_capacity(episodes);
    let mut builder =
        InputBuilder::new(plant, info, mode).expect("mode was validated against the fragment");

    for i in 0..episodes {
        let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
        rng.set_stream(STREAM_EVAL_BASE + (eval_index << 16) + i as u64);
        let mut env = WindowedEnv::reset(plant, spec, &mut rng);
        let mut trace = vec![env.current_state().clone()];
        let mut zhat = builder.start(env.window());
        let (mut disc_r, mut disc_s, mut gpow) = (0.0, 0.0, 1.0);
        for _ in 0..episode_steps {
            let a = policy(&zhat);
            let out = env.step(&a, &mut rng);
            trace.push(out.x_next);
            zhat = builder.next(env.window());
            disc_r += gpow * out.reward;
            disc_s += gpow * out.stl_reward;
            gpow *= gamma;
        }
        let rho = trajectory_robustness(&trace[..=horizon], info)
            .expect("horizon-length prefix always covers the window");
        let sat = formula
            .eval_boolean(&trace, 0)
            .expect("trace covers the horizon");
        debug_assert!(rho == 0.0 || (rho > 0.0) == sat, "semantics disagree");
        sums_r.push(disc_r);
        sums_s.push(disc_s);
        robustness.push(rho);
        satisfied.push(sat);
    }

    let (mean_reward, std_reward) = mean_std(&sums_r);
    let (mean_stl_reward, std_stl_reward) = mean_std(&sums_s);
    let success = robustness.iter().filter(|&&r| r >= 0.0).count();
    EvalReport {
        episodes,
        mean_reward,
        std_reward,
        mean_stl_reward,
        std_stl_reward,
        success,
        robustness,
        satisfied,
    }
}

fn mean_std(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
