//! Sliding-window constrained MDP construction: the extended state (a window
//! of the last τ system states), indicator-based STL rewards derived from the
//! log-sum-exp approximation, and whole-trajectory robustness, wrapping any
//! plant that exposes `step`/`reset`.

use crate::stl::{Formula, FragmentInfo, State, TemporalKind};
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TauError {
    #[error("window length must be at least 1")]
    ZeroTau,
    #[error("state dimension mismatch: window holds {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("log-sum-exp of an empty value set")]
    EmptyValues,
    #[error("window length {got} does not match the formula horizon ({expected})")]
    WindowLength { expected: usize, got: usize },
    #[error("trace of {len} states is shorter than the window length {tau}")]
    TraceTooShort { tau: usize, len: usize },
}

/// Window of the last τ system states; index τ−1 is the newest.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    window: Vec<State>,
}

impl ExtendedState {
    /// Initial window: τ copies of the initial state.
    pub fn init(x0: &State, tau: usize) -> Result<Self, TauError> {
        if tau == 0 {
            return Err(TauError::ZeroTau);
        }
        Ok(Self {
            window: vec![x0.clone(); tau],
        })
    }

    /// Drop the oldest state and append `x_next`.
    pub fn shift(&mut self, x_next: State) -> Result<(), TauError> {
        let dim = self.window[0].len();
        if x_next.len() != dim {
            return Err(TauError::DimensionMismatch {
                expected: dim,
                got: x_next.len(),
            });
        }
        self.window.remove(0);
        self.window.push(x_next);
        Ok(())
    }

    pub fn tau(&self) -> usize {
        self.window.len()
    }

    /// The states oldest-first; the formula sees this as a length-τ trace.
    pub fn states(&self) -> &[State] {
        &self.window
    }

    /// The newest state `z[τ−1]`.
    pub fn latest(&self) -> &State {
        self.window.last().expect("window is never empty")
    }
}

/// Indicator `1(y)`: 1 if y ≥ 0, else 0.
pub fn indicator(y: f64) -> f64 {
    if y >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Smooth minimum `−(1/β)·log Σᵢ exp(−β yᵢ)`, evaluated in shifted form so
/// the sum stays in [1, n] and the result lands in
/// `[min − log(n)/β, min]` exactly.
pub fn lse_min(values: &[f64], beta: f64) -> Result<f64, TauError> {
    if values.is_empty() {
        return Err(TauError::EmptyValues);
    }
    assert!(beta > 0.0, "approximation sharpness must be positive");
    let m = values.iter().copied().fold(f64::INFINITY, f64::min);
    let sum: f64 = values.iter().map(|&v| (-beta * (v - m)).exp()).sum();
    Ok(m - sum.ln() / beta)
}

/// Smooth maximum `(1/β)·log Σᵢ exp(β yᵢ)`; lands in `[max, max + log(n)/β]`.
pub fn lse_max(values: &[f64], beta: f64) -> Result<f64, TauError> {
    if values.is_empty() {
        return Err(TauError::EmptyValues);
    }
    assert!(beta > 0.0, "approximation sharpness must be positive");
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|&v| (beta * (v - m)).exp()).sum();
    Ok(m + sum.ln() / beta)
}

/// Per-step STL reward specification: the windowed inner formula, the outer
/// operator kind, and the sharpness β of the indicator exponential.
#[derive(Debug, Clone)]
pub struct StlRewardSpec {
    pub inner: Formula,
    pub outer: TemporalKind,
    pub beta: f64,
    /// Divide F-type rewards by exp(β) so a satisfied window yields 1
    /// instead of exp(β); keeps the per-episode sum bounded.
    pub normalize: bool,
}

impl StlRewardSpec {
    pub fn new(inner: Formula, outer: TemporalKind, beta: f64, normalize: bool) -> Self {
        assert!(beta > 0.0, "approximation sharpness must be positive");
        Self {
            inner,
            outer,
            beta,
            normalize,
        }
    }

    pub fn from_fragment(info: &FragmentInfo, beta: f64) -> Self {
        Self::new(info.inner.clone(), info.outer, beta, true)
    }

    pub fn tau(&self) -> usize {
        self.inner.horizon() + 1
    }
}

/// STL reward of one window: `−exp(−β·1(ρ))` for an outer G,
/// `exp(β·(1(ρ)−1))` for an outer F in normalized form (raw `exp(β·1(ρ))`
/// otherwise), where ρ is the robustness of the inner formula on the window.
pub fn stl_reward(z: &ExtendedState, spec: &StlRewardSpec) -> Result<f64, TauError> {
    let tau = spec.tau();
    if z.tau() != tau {
        return Err(TauError::WindowLength {
            expected: tau,
            got: z.tau(),
        });
    }
    let rho = spec
        .inner
        .robustness(z.states(), 0)
        .expect("window length matches the inner horizon");
    let sat = indicator(rho);
    Ok(match spec.outer {
        TemporalKind::Globally => -(-spec.beta * sat).exp(),
        TemporalKind::Finally => {
            if spec.normalize {
                (spec.beta * (sat - 1.0)).exp()
            } else {
                (spec.beta * sat).exp()
            }
        }
    })
}

/// Robustness of a whole trace against the fragment: the min (outer G) or
/// max (outer F) of the inner-formula robustness over every length-τ window
/// of the trace.
pub fn trajectory_robustness(trace: &[State], info: &FragmentInfo) -> Result<f64, TauError> {
    let tau = info.tau;
    if trace.len() < tau {
        return Err(TauError::TraceTooShort {
            tau,
            len: trace.len(),
        });
    }
    let windows = (0..=trace.len() - tau).map(|k| {
        info.inner
            .robustness(trace, k)
            .expect("window fits inside the trace")
    });
    Ok(match info.outer {
        TemporalKind::Globally => windows.fold(f64::INFINITY, f64::min),
        TemporalKind::Finally => windows.fold(f64::NEG_INFINITY, f64::max),
    })
}

/// A plant the τ-CMDP wraps: stateless dynamics over real vectors with a
/// stochastic transition and initial-state distribution.
pub trait Plant {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Draw an initial system state.
    fn reset(&self, rng: &mut ChaCha12Rng) -> State;
    /// One transition from `x` under action `a`.
    fn step(&self, x: &[f64], a: &[f64], rng: &mut ChaCha12Rng) -> State;
    /// Task reward for taking `a` at `x`.
    fn reward(&self, x: &[f64], a: &[f64]) -> f64;
    /// Copy of `x` shifted by the plant's normalization offsets, for network
    /// input.
    fn normalize(&self, x: &[f64]) -> State;
}

/// Outcome of one windowed-environment step: the new system state and the
/// rewards attached to the state/window *before* the transition.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub x_next: State,
    pub reward: f64,
    pub stl_reward: f64,
}

/// A plant wrapped with window maintenance and reward computation. Rewards
/// are emitted at every step, including the early steps where the window
/// still contains padded copies of the initial state.
pub struct WindowedEnv<'a, P: Plant> {
    pub plant: &'a P,
    pub spec: &'a StlRewardSpec,
    window: ExtendedState,
}

impl<'a, P: Plant> WindowedEnv<'a, P> {
    /// Start an episode: sample an initial state and pad the window with it.
    pub fn reset(plant: &'a P, spec: &'a StlRewardSpec, rng: &mut ChaCha12Rng) -> Self {
        let x0 = plant.reset(rng);
        let window = ExtendedState::init(&x0, spec.tau()).expect("spec has tau >= 1");
        Self {
            plant,
            spec,
            window,
        }
    }

    pub fn window(&self) -> &ExtendedState {
        &self.window
    }

    pub fn current_state(&self) -> &State {
        self.window.latest()
    }

    /// Take one action: the task reward is evaluated at the current state,
    /// the STL reward on the current window, then the window shifts.
    pub fn step(&mut self, a: &[f64], rng: &mut ChaCha12Rng) -> StepOutcome {
        let s = stl_reward(&self.window, self.spec).expect("window length is invariant");
        let r = self.plant.reward(self.window.latest(), a);
        let x_next = self.plant.step(self.window.latest(), a, rng);
        self.window
            .shift(x_next.clone())
            .expect("plant preserves the state dimension");
        StepOutcome {
            x_next,
            reward: r,
            stl_reward: s,
        }
    }
}
