//! Flag-state preprocessing: reduce the τ·n_x-dimensional window to an
//! (n_x + M)-dimensional network input.
//!
//! Each eligible sub-formula (window ending at τ−1) contributes one flag, a
//! normalized timer over the window's satisfaction history. Flags take the
//! d+1 values {j/d − 1/2 | j = 0..d} with d = τ − k_s; internally they are
//! kept as the integer index j (j = 0 is the bottom case, no qualifying
//! window position), and every route to a flag float goes through one
//! canonical map so from-scratch recomputation and incremental updates
//! agree bit-for-bit.

use crate::stl::{FragmentInfo, State, SubFormula, TemporalKind};
use crate::tau::{ExtendedState, Plant};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PreprocessError {
    #[error("sub-formula window [{start},{end}] does not end at tau-1 = {tau_minus_1}")]
    NotEligible {
        start: usize,
        end: usize,
        tau_minus_1: usize,
    },
    #[error("window length {got} does not match the sub-formula span ({expected})")]
    WindowLength { expected: usize, got: usize },
}

/// Window length a standalone eligible sub-formula implies: k_e + 1.
fn sub_tau(sub: &SubFormula) -> usize {
    sub.window.end + 1
}

/// Flag denominator d = τ − k_s.
fn denom(sub: &SubFormula) -> usize {
    sub_tau(sub) - sub.window.start
}

/// Single-state satisfaction of the sub-formula body.
fn body_holds(sub: &SubFormula, x: &State) -> bool {
    sub.inner
        .eval_boolean(std::slice::from_ref(x), 0)
        .expect("sub-formula bodies have horizon 0")
}

/// Canonical float for the integer flag index; j = 0 is the bottom case.
fn flag_from_counter(j: usize, d: usize) -> f64 {
    if j == 0 {
        -0.5
    } else {
        (j as f64 / d as f64) - 0.5
    }
}

/// Recover the integer index from a flag float. Flags only ever hold values
/// produced by [`flag_from_counter`], so rounding is exact.
fn counter_from_flag(f_hat: f64, d: usize) -> usize {
    let j = ((f_hat + 0.5) * d as f64).round();
    debug_assert!((0.0..=d as f64).contains(&j), "flag value off-lattice");
    j as usize
}

/// One incremental step of the integer flag index given the satisfaction of
/// the body at the incoming state.
fn step_counter(j: usize, sat: bool, kind: TemporalKind, d: usize) -> usize {
    match kind {
        // run of satisfied states ending at the window tail: extend or reset
        TemporalKind::Globally => {
            if sat {
                (j + 1).min(d)
            } else {
                0
            }
        }
        // age of the most recent satisfied state: refresh or decay
        TemporalKind::Finally => {
            if sat {
                d
            } else {
                j.saturating_sub(1)
            }
        }
    }
}

/// From-scratch integer flag index of a window per the flag definition.
fn flag_counter(z: &ExtendedState, sub: &SubFormula) -> Result<usize, PreprocessError> {
    let tau = sub_tau(sub);
    if z.tau() != tau {
        return Err(PreprocessError::WindowLength {
            expected: tau,
            got: z.tau(),
        });
    }
    let ks = sub.window.start;
    let states = z.states();
    Ok(match sub.kind {
        TemporalKind::Globally => {
            // longest run of satisfied states ending at τ−1, clipped below k_s
            let mut run = 0;
            for l in (ks..tau).rev() {
                if body_holds(sub, &states[l]) {
                    run += 1;
                } else {
                    break;
                }
            }
            run
        }
        TemporalKind::Finally => {
            // most recent satisfied index at or after k_s
            (ks..tau)
                .rev()
                .find(|&l| body_holds(sub, &states[l]))
                .map_or(0, |l| l - ks + 1)
        }
    })
}

/// Flag value of a window for one sub-formula: `Some(f)` with f ∈ (0,1], or
/// `None` when no window position qualifies (max over the empty set).
pub fn flag_value(z: &ExtendedState, sub: &SubFormula) -> Result<Option<f64>, PreprocessError> {
    let j = flag_counter(z, sub)?;
    Ok(if j == 0 {
        None
    } else {
        Some(j as f64 / denom(sub) as f64)
    })
}

/// Center a flag value for network input: f − 1/2, with the bottom case
/// mapped to −1/2.
pub fn transform_flag(f: Option<f64>) -> f64 {
    match f {
        Some(v) => v - 0.5,
        None => -0.5,
    }
}

/// One incremental update of a transformed flag from the next system state:
/// for a G sub-formula min(f̂ + 1/d, 1/2) on satisfaction and −1/2 otherwise,
/// for an F sub-formula 1/2 on satisfaction and max(f̂ − 1/d, −1/2) otherwise.
pub fn incremental_update(f_hat: f64, x_next: &State, sub: &SubFormula) -> f64 {
    let d = denom(sub);
    let j = counter_from_flag(f_hat, d);
    let j2 = step_counter(j, body_holds(sub, x_next), sub.kind, d);
    flag_from_counter(j2, d)
}

/// Transformed flags of the padded initial window (τ copies of `x0`): the
/// whole window agrees with `x0`, so each flag is ±1/2 by satisfaction.
pub fn initial_flags(subs: &[SubFormula], x0: &State) -> Vec<f64> {
    subs.iter()
        .map(|sub| if body_holds(sub, x0) { 0.5 } else { -0.5 })
        .collect()
}

/// Transformed flag vector of a window, one entry per sub-formula.
pub fn flag_vector(z: &ExtendedState, subs: &[SubFormula]) -> Result<Vec<f64>, PreprocessError> {
    subs.iter()
        .map(|sub| Ok(flag_from_counter(flag_counter(z, sub)?, denom(sub))))
        .collect()
}

/// The preprocessed state: current window tail concatenated with the
/// transformed flags (states unnormalized; callers apply plant offsets).
pub fn preprocess_state(
    z: &ExtendedState,
    subs: &[SubFormula],
) -> Result<Vec<f64>, PreprocessError> {
    let mut out = z.latest().clone();
    out.extend(flag_vector(z, subs)?);
    Ok(out)
}

/// Whether network inputs are flag-compressed or the flattened raw window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    /// Current state plus one flag per sub-formula (requires eligibility).
    Flags,
    /// The whole τ·n_x window, for the no-preprocessing ablation.
    Window,
}

/// Network input dimension for a fragment under the given mode.
pub fn input_dim(state_dim: usize, info: &FragmentInfo, mode: InputMode) -> usize {
    match mode {
        InputMode::Flags => state_dim + info.sub_count(),
        InputMode::Window => state_dim * info.tau,
    }
}

/// Maintains flag counters across an episode and assembles network inputs.
pub struct InputBuilder<'a, P: Plant> {
    plant: &'a P,
    mode: InputMode,
    subs: Vec<SubFormula>,
    counters: Vec<usize>,
}

impl<'a, P: Plant> InputBuilder<'a, P> {
    pub fn new(plant: &'a P, info: &FragmentInfo, mode: InputMode) -> Result<Self, PreprocessError> {
        if mode == InputMode::Flags {
            for sub in &info.subs {
                if sub.window.end != info.tau - 1 {
                    return Err(PreprocessError::NotEligible {
                        start: sub.window.start,
                        end: sub.window.end,
                        tau_minus_1: info.tau - 1,
                    });
                }
            }
        }
        Ok(Self {
            plant,
            mode,
            subs: info.subs.clone(),
            counters: vec![0; info.subs.len()],
        })
    }

    /// Initialize flags from a fresh (padded) window and build the input.
    pub fn start(&mut self, window: &ExtendedState) -> Vec<f64> {
        if self.mode == InputMode::Flags {
            for (c, sub) in self.counters.iter_mut().zip(&self.subs) {
                *c = flag_counter(window, sub).expect("window length matches the fragment");
            }
        }
        self.assemble(window)
    }

    /// Advance flags with the state just appended to the window and build
    /// the input.
    pub fn next(&mut self, window: &ExtendedState) -> Vec<f64> {
        if self.mode == InputMode::Flags {
            let x_next = window.latest();
            for (c, sub) in self.counters.iter_mut().zip(&self.subs) {
                *c = step_counter(*c, body_holds(sub, x_next), sub.kind, denom(sub));
            }
        }
        self.assemble(window)
    }

    /// Current transformed flags.
    pub fn flags(&self) -> Vec<f64> {
        self.counters
            .iter()
            .zip(&self.subs)
            .map(|(&j, sub)| flag_from_counter(j, denom(sub)))
            .collect()
    }

    fn assemble(&self, window: &ExtendedState) -> Vec<f64> {
        match self.mode {
            InputMode::Flags => {
                let mut out = self.plant.normalize(window.latest());
                out.extend(self.flags());
                out
            }
            InputMode::Window => {
                let mut out = Vec::with_capacity(window.tau() * window.latest().len());
                for x in window.states() {
                    out.extend(self.plant.normalize(x));
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{parse, validate_fragment, Formula, Interval, Predicate};
    use crate::tau::ExtendedState;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn sub(kind: TemporalKind, ks: usize, ke: usize, coeff: f64, bound: f64) -> SubFormula {
        SubFormula {
            kind,
            window: Interval::new(ks, ke),
            inner: Formula::Pred(Predicate::new(vec![coeff], bound)),
        }
    }

    fn window_from(vals: &[f64]) -> ExtendedState {
        let mut z = ExtendedState::init(&vec![vals[0]], vals.len()).unwrap();
        for &v in &vals[1..] {
            z.shift(vec![v]).unwrap();
        }
        // init pads with vals[0]; shifting len-1 times leaves exactly vals
        assert_eq!(z.states().len(), vals.len());
        z
    }

    #[test]
    fn finally_flag_from_scratch() {
        // τ=8, k_s=2, body x ≥ 0 satisfied at window indices {3,6}
        let s = sub(TemporalKind::Finally, 2, 7, -1.0, 0.0);
        let z = window_from(&[-1., -1., -1., 1., -1., -1., 1., -1.]);
        assert_eq!(flag_value(&z, &s).unwrap(), Some(5.0 / 6.0));
        assert_eq!(transform_flag(Some(5.0 / 6.0)), 5.0 / 6.0 - 0.5);
    }

    #[test]
    fn globally_flag_counts_suffix_run() {
        // τ=8, k_s=4, satisfied at {5,6,7} but not 4 → (8−5)/(8−4) = 3/4
        let s = sub(TemporalKind::Globally, 4, 7, -1.0, 0.0);
        let z = window_from(&[1., 1., 1., 1., -1., 1., 1., 1.]);
        assert_eq!(flag_value(&z, &s).unwrap(), Some(0.75));
    }

    #[test]
    fn empty_set_is_bottom() {
        let s = sub(TemporalKind::Finally, 2, 7, -1.0, 0.0);
        let z = window_from(&[-1.; 8]);
        assert_eq!(flag_value(&z, &s).unwrap(), None);
        assert_eq!(transform_flag(None), -0.5);
    }

    #[test]
    fn incremental_globally() {
        // f̂ = 0.25, τ−k_s = 4, next state satisfies → min(0.25 + 0.25, 0.5)
        let s = sub(TemporalKind::Globally, 4, 7, -1.0, 0.0);
        assert_eq!(incremental_update(0.25, &vec![1.0], &s), 0.5);
        // violation resets to −1/2 from any value
        assert_eq!(incremental_update(0.25, &vec![-1.0], &s), -0.5);
        assert_eq!(incremental_update(0.5, &vec![-1.0], &s), -0.5);
    }

    #[test]
    fn incremental_finally_clamps() {
        // f̂ = −0.3, τ−k_s = 5, violation → max(−0.3 − 0.2, −0.5) = −0.5
        let s = sub(TemporalKind::Finally, 3, 7, -1.0, 0.0);
        assert_eq!(incremental_update(-0.3, &vec![-1.0], &s), -0.5);
        // satisfaction jumps to 1/2
        assert_eq!(incremental_update(-0.3, &vec![1.0], &s), 0.5);
    }

    #[test]
    fn initial_flags_match_from_scratch_on_padded_windows() {
        let subs = [
            sub(TemporalKind::Finally, 2, 7, -1.0, 0.0),
            sub(TemporalKind::Globally, 4, 7, -1.0, 0.0),
            sub(TemporalKind::Finally, 0, 7, 1.0, -0.5),
        ];
        for x0 in [-1.0, -0.4, 0.0, 0.7] {
            let z = ExtendedState::init(&vec![x0], 8).unwrap();
            let fast = initial_flags(&subs, &vec![x0]);
            let slow = flag_vector(&z, &subs).unwrap();
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn padded_window_of_satisfying_state() {
        // F-case with k_s = 0 on a fresh window of copies: newest index
        // satisfies → f = 1, f̂ = 1/2
        let s = sub(TemporalKind::Finally, 0, 7, -1.0, 0.0);
        let z = ExtendedState::init(&vec![0.3], 8).unwrap();
        assert_eq!(flag_value(&z, &s).unwrap(), Some(1.0));
        assert_eq!(transform_flag(flag_value(&z, &s).unwrap()), 0.5);
    }

    #[test]
    fn preprocessed_state_layout() {
        // two sub-formulae over a 1-D system: ẑ = [x_k, f̂¹, f̂²]
        let info = validate_fragment(
            &parse("G[0,5](F[2,7](x0 >= 0) & F[0,7](x0 >= 0.2))", 1).unwrap(),
        )
        .unwrap();
        assert_eq!(info.tau, 8);
        let z = window_from(&[-1., -1., -1., 0.1, -1., -1., 0.25, -1.]);
        let zhat = preprocess_state(&z, &info.subs).unwrap();
        assert_eq!(zhat.len(), 3);
        assert_eq!(zhat[0], -1.0);
        assert_eq!(zhat[1], 5.0 / 6.0 - 0.5); // sat at {3,6}, k_s=2
        assert_eq!(zhat[2], 7.0 / 8.0 - 0.5); // sat at {6}, k_s=0

        // no sub-formulae: ẑ is just the current state
        let depth_one = validate_fragment(&parse("G[0,5](x0 <= 1)", 1).unwrap()).unwrap();
        let z1 = window_from(&[0.7]);
        assert_eq!(preprocess_state(&z1, &depth_one.subs).unwrap(), vec![0.7]);
    }

    #[test]
    fn incremental_equals_recompute_along_trajectories() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for case in 0..200 {
            let tau = rng.gen_range(2..=8);
            let ks = rng.gen_range(0..tau);
            let kind = if rng.gen_bool(0.5) {
                TemporalKind::Globally
            } else {
                TemporalKind::Finally
            };
            let s = sub(kind, ks, tau - 1, -1.0, 0.0);
            let x0 = vec![rng.gen_range(-1.0..1.0)];
            let mut z = ExtendedState::init(&x0, tau).unwrap();
            let mut f_hat = transform_flag(flag_value(&z, &s).unwrap());
            for _ in 0..50 {
                let x = vec![rng.gen_range(-1.0..1.0)];
                f_hat = incremental_update(f_hat, &x, &s);
                z.shift(x).unwrap();
                let scratch = transform_flag(flag_value(&z, &s).unwrap());
                assert_eq!(f_hat.to_bits(), scratch.to_bits(), "case {case}");
                assert!((-0.5..=0.5).contains(&f_hat));
            }
        }
    }

    #[test]
    fn finally_flag_ignores_entries_below_ks() {
        let s = sub(TemporalKind::Finally, 3, 7, -1.0, 0.0);
        let a = window_from(&[9., 9., 9., -1., 1., -1., -1., -1.]);
        let b = window_from(&[-5., 0., 2., -1., 1., -1., -1., -1.]);
        assert_eq!(flag_value(&a, &s), flag_value(&b, &s));
    }

    #[test]
    fn flag_values_lie_in_unit_interval() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..500 {
            let tau = rng.gen_range(1..=10);
            let ks = rng.gen_range(0..tau);
            let kind = if rng.gen_bool(0.5) {
                TemporalKind::Globally
            } else {
                TemporalKind::Finally
            };
            let s = sub(kind, ks, tau - 1, 1.0, 0.5);
            let vals: Vec<f64> = (0..tau).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let z = window_from(&vals);
            if let Some(f) = flag_value(&z, &s).unwrap() {
                assert!(f > 0.0 && f <= 1.0);
            }
        }
    }

    #[test]
    fn builder_matches_public_ops() {
        struct Line;
        impl Plant for Line {
            fn state_dim(&self) -> usize {
                1
            }
            fn action_dim(&self) -> usize {
                1
            }
            fn reset(&self, _rng: &mut ChaCha12Rng) -> Vec<f64> {
                vec![0.0]
            }
            fn step(&self, x: &[f64], a: &[f64], _rng: &mut ChaCha12Rng) -> Vec<f64> {
                vec![x[0] + a[0]]
            }
            fn reward(&self, _x: &[f64], _a: &[f64]) -> f64 {
                0.0
            }
            fn normalize(&self, x: &[f64]) -> Vec<f64> {
                x.to_vec()
            }
        }

        let info = validate_fragment(&parse("G[0,5](F[0,3](x0 >= 1))", 1).unwrap()).unwrap();
        let plant = Line;
        let mut builder = InputBuilder::new(&plant, &info, InputMode::Flags).unwrap();
        let mut z = ExtendedState::init(&vec![0.0], info.tau).unwrap();
        let zhat = builder.start(&z);
        assert_eq!(zhat, preprocess_state(&z, &info.subs).unwrap());
        for step in 0..10 {
            let x = vec![(step as f64 * 0.7).sin() * 2.0];
            z.shift(x).unwrap();
            let zhat = builder.next(&z);
            assert_eq!(zhat, preprocess_state(&z, &info.subs).unwrap());
        }

        // ablation mode flattens the window
        let mut flat = InputBuilder::new(&plant, &info, InputMode::Window).unwrap();
        assert_eq!(flat.start(&z).len(), info.tau);
        assert_eq!(input_dim(1, &info, InputMode::Window), 4);
        assert_eq!(input_dim(1, &info, InputMode::Flags), 2);
    }

    #[test]
    fn ineligible_sub_rejected() {
        let info = validate_fragment(&parse("F[0,5](G[0,2](x0 <= 1) & F[1,3](x0 >= 0))", 1).unwrap())
            .unwrap();
        assert!(!info.flag_eligible);
        struct Dummy;
        impl Plant for Dummy {
            fn state_dim(&self) -> usize {
                1
            }
            fn action_dim(&self) -> usize {
                1
            }
            fn reset(&self, _: &mut ChaCha12Rng) -> Vec<f64> {
                vec![0.0]
            }
            fn step(&self, x: &[f64], _: &[f64], _: &mut ChaCha12Rng) -> Vec<f64> {
                x.to_vec()
            }
            fn reward(&self, _: &[f64], _: &[f64]) -> f64 {
                0.0
            }
            fn normalize(&self, x: &[f64]) -> Vec<f64> {
                x.to_vec()
            }
        }
        assert!(matches!(
            InputBuilder::new(&Dummy, &info, InputMode::Flags),
            Err(PreprocessError::NotEligible { .. })
        ));
        assert!(InputBuilder::new(&Dummy, &info, InputMode::Window).is_ok());
    }
}
