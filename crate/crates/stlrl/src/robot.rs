//! Benchmark plant: a stochastic discrete-time unicycle in a 4×4 working
//! area with two labeled goal regions.
//!
//! States are 3-vectors `[x0, x1, heading]` with the heading wrapped to
//! [−π, π]. Actions are `[drive, steer] ∈ [−1,1]²`. One step moves the
//! robot by `Δ·drive` along its heading, turns by `Δ·steer`, and adds
//! isotropic Gaussian noise scaled by the noise gain.

use crate::stl::{Formula, Predicate, State};
use crate::tau::Plant;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

/// Axis-aligned box `[lo0,hi0]×[lo1,hi1]` in the position plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2 {
    pub lo0: f64,
    pub hi0: f64,
    pub lo1: f64,
    pub hi1: f64,
}

impl Box2 {
    pub fn new(lo0: f64, hi0: f64, lo1: f64, hi1: f64) -> Self {
        assert!(lo0 <= hi0 && lo1 <= hi1, "box bounds must be ordered");
        Self { lo0, hi0, lo1, hi1 }
    }

    pub fn contains(&self, x0: f64, x1: f64) -> bool {
        x0 >= self.lo0 && x0 <= self.hi0 && x1 >= self.lo1 && x1 <= self.hi1
    }
}

/// Plant parameters; defaults are the benchmark values.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    /// Step gain Δ for both drive and steer.
    pub delta: f64,
    /// Noise gain (Δ_w is this multiple of the identity).
    pub noise_scale: f64,
    /// Goal region 1 (upper) and 2 (lower).
    pub region1: Box2,
    pub region2: Box2,
    /// Initial positions are sampled uniformly from this box.
    pub init_box: Box2,
    /// Initial headings are sampled uniformly from this range.
    pub init_heading: (f64, f64),
    /// Working area for the position-keeping reward term.
    pub work_box: Box2,
    /// Offsets subtracted from the state for network input.
    pub normalize_offset: [f64; 3],
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            noise_scale: 0.01,
            region1: Box2::new(3.5, 4.5, 3.5, 4.5),
            region2: Box2::new(3.5, 4.5, 1.5, 2.5),
            init_box: Box2::new(0.5, 2.5, 0.5, 2.5),
            init_heading: (-PI / 2.0, PI / 2.0),
            work_box: Box2::new(0.5, 4.5, 0.5, 4.5),
            normalize_offset: [2.5, 2.5, 0.0],
        }
    }
}

/// Wrap an angle additively into [−π, π].
fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// The unicycle plant.
#[derive(Debug, Clone, Default)]
pub struct Unicycle {
    pub cfg: EnvConfig,
}

impl Unicycle {
    pub fn new(cfg: EnvConfig) -> Self {
        Self { cfg }
    }

    /// Box-membership conjunction for one region over the 3-dim state.
    fn region_formula(b: &Box2) -> Formula {
        Formula::And(vec![
            Formula::Pred(Predicate::new(vec![-1.0, 0.0, 0.0], -b.lo0)),
            Formula::Pred(Predicate::new(vec![1.0, 0.0, 0.0], b.hi0)),
            Formula::Pred(Predicate::new(vec![0.0, -1.0, 0.0], -b.lo1)),
            Formula::Pred(Predicate::new(vec![0.0, 1.0, 0.0], b.hi1)),
        ])
    }

    /// The two goal-region membership formulae, for reuse when building
    /// constraint formulae programmatically.
    pub fn region_predicates(&self) -> (Formula, Formula) {
        (
            Self::region_formula(&self.cfg.region1),
            Self::region_formula(&self.cfg.region2),
        )
    }
}

impl Plant for Unicycle {
    fn state_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn reset(&self, rng: &mut ChaCha12Rng) -> State {
        let b = &self.cfg.init_box;
        let (hlo, hhi) = self.cfg.init_heading;
        vec![
            rng.gen_range(b.lo0..=b.hi0),
            rng.gen_range(b.lo1..=b.hi1),
            rng.gen_range(hlo..=hhi),
        ]
    }

    fn step(&self, x: &[f64], a: &[f64], rng: &mut ChaCha12Rng) -> State {
        assert!(
            a.iter().all(|v| v.is_finite()),
            "non-finite action {a:?} fed to the plant"
        );
        let drive = a[0].clamp(-1.0, 1.0);
        let steer = a[1].clamp(-1.0, 1.0);
        let d = self.cfg.delta;
        let w: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let dw = self.cfg.noise_scale;
        vec![
            x[0] + d * drive * x[2].cos() + dw * w[0],
            x[1] + d * drive * x[2].sin() + dw * w[1],
            wrap_angle(x[2] + d * steer + dw * w[2]),
        ]
    }

    /// Working-area penalty plus quadratic action cost:
    /// `min{x0−lo, hi−x0, x1−lo, hi−x1, 0} − ‖a‖²`.
    fn reward(&self, x: &[f64], a: &[f64]) -> f64 {
        let b = &self.cfg.work_box;
        let keep = (x[0] - b.lo0)
            .min(b.hi0 - x[0])
            .min(x[1] - b.lo1)
            .min(b.hi1 - x[1])
            .min(0.0);
        let fuel: f64 = a.iter().map(|v| v * v).sum();
        keep - fuel
    }

    fn normalize(&self, x: &[f64]) -> State {
        x.iter()
            .zip(self.cfg.normalize_offset.iter())
            .map(|(v, o)| v - o)
            .collect()
    }
}
