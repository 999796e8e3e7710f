//! Constrained actor-critic agents: replay buffer, Lagrangian multiplier and
//! entropy-temperature machinery, exploration noise, and the two-phase
//! training loop shared by the stochastic-policy and deterministic-policy
//! algorithm variants.

mod det;
mod sac;
mod train;

pub use det::DetPolicyAgent;
pub use sac::SacAgent;
pub use train::{train, StreamId, TrainError, TrainReport};

use crate::nn::ScalarAdam;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Which constrained algorithm drives the updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgoKind {
    Sac,
    Ddpg,
    Td3,
}

impl AlgoKind {
    pub fn name(self) -> &'static str {
        match self {
            AlgoKind::Sac => "sac",
            AlgoKind::Ddpg => "ddpg",
            AlgoKind::Td3 => "td3",
        }
    }
}

/// Learning phase: pre-training optimizes the policy against the STL critic
/// only; fine-tuning optimizes the full Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Finetune,
}

/// One stored transition of preprocessed states with both rewards.
#[derive(Debug, Clone)]
pub struct Experience {
    pub z: Vec<f64>,
    pub a: Vec<f64>,
    pub z_next: Vec<f64>,
    pub r: f64,
    pub s: f64,
}

/// A sampled mini-batch, flattened row-major for the networks.
#[derive(Debug, Clone)]
pub struct Batch {
    pub n: usize,
    pub z: Vec<f64>,
    pub a: Vec<f64>,
    pub z_next: Vec<f64>,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BufferError {
    #[error("cannot sample {want} experiences from a buffer of {have}")]
    Insufficient { want: usize, have: usize },
}

/// Fixed-capacity ring buffer with uniform without-replacement sampling.
pub struct ReplayBuffer {
    data: Vec<Experience>,
    capacity: usize,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            data: Vec::with_capacity(capacity.min(1 << 20)),
            capacity,
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, e: Experience) {
        if self.data.len() < self.capacity {
            self.data.push(e);
        } else {
            self.data[self.head] = e;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Uniform sample of `n` distinct experiences, flattened into a batch.
    pub fn sample(&self, n: usize, rng: &mut ChaCha12Rng) -> Result<Batch, BufferError> {
        if self.data.len() < n {
            return Err(BufferError::Insufficient {
                want: n,
                have: self.data.len(),
            });
        }
        let idx = rand::seq::index::sample(rng, self.data.len(), n);
        let dz = self.data[0].z.len();
        let da = self.data[0].a.len();
        let mut b = Batch {
            n,
            z: Vec::with_capacity(n * dz),
            a: Vec::with_capacity(n * da),
            z_next: Vec::with_capacity(n * dz),
            r: Vec::with_capacity(n),
            s: Vec::with_capacity(n),
        };
        for i in idx.iter() {
            let e = &self.data[i];
            b.z.extend_from_slice(&e.z);
            b.a.extend_from_slice(&e.a);
            b.z_next.extend_from_slice(&e.z_next);
            b.r.push(e.r);
            b.s.push(e.s);
        }
        Ok(b)
    }
}

/// Lagrange multiplier and entropy temperature with their Adam states and
/// the constraint/entropy targets. Both parameters are optimized in raw
/// space and projected back to [0, ∞) after every step.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianState {
    pub kappa: f64,
    pub alpha: f64,
    pub l_stl: f64,
    pub h0: f64,
    pub opt_kappa: ScalarAdam,
    pub opt_alpha: ScalarAdam,
}

impl LagrangianState {
    pub fn new(kappa0: f64, alpha0: f64, l_stl: f64, h0: f64, lr_kappa: f64, lr_alpha: f64) -> Self {
        assert!(kappa0 >= 0.0 && alpha0 >= 0.0);
        Self {
            kappa: kappa0,
            alpha: alpha0,
            l_stl,
            h0,
            opt_kappa: ScalarAdam::new(lr_kappa),
            opt_alpha: ScalarAdam::new(lr_alpha),
        }
    }

    /// Descend `E[κ(Q_s(z₀,a) − l_STL)]` in κ over a batch of STL-critic
    /// values at initial states, then project to κ ≥ 0.
    pub fn kappa_update(&mut self, qs_at_init: &[f64]) {
        let gap = qs_at_init.iter().sum::<f64>() / qs_at_init.len() as f64 - self.l_stl;
        self.kappa = self.opt_kappa.step(self.kappa, gap).max(0.0);
    }

    /// Descend `E[α(−log π − H₀)]` in α over a batch of log-probabilities,
    /// then project to α ≥ 0.
    pub fn alpha_update(&mut self, log_probs: &[f64]) {
        let grad =
            log_probs.iter().map(|lp| -lp - self.h0).sum::<f64>() / log_probs.len() as f64;
        self.alpha = self.opt_alpha.step(self.alpha, grad).max(0.0);
    }
}

/// Ornstein-Uhlenbeck exploration noise `ω′ = ω − p₁(ω − p₂) + p₃ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuNoise {
    pub omega: Vec<f64>,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

impl OuNoise {
    pub fn new(dim: usize, p1: f64, p2: f64, p3: f64) -> Self {
        Self {
            omega: vec![0.0; dim],
            p1,
            p2,
            p3,
        }
    }

    pub fn reset(&mut self) {
        self.omega.iter_mut().for_each(|w| *w = 0.0);
    }

    /// Advance with explicit noise draws (one per dimension).
    pub fn step_with(&mut self, eps: &[f64]) -> &[f64] {
        for (w, e) in self.omega.iter_mut().zip(eps) {
            *w = *w - self.p1 * (*w - self.p2) + self.p3 * e;
        }
        &self.omega
    }

    /// Advance with standard-normal draws from `rng`.
    pub fn step(&mut self, rng: &mut ChaCha12Rng) -> Vec<f64> {
        let eps: Vec<f64> = (0..self.omega.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        self.step_with(&eps).to_vec()
    }
}

/// Losses of one learning step, for the metrics stream.
#[derive(Debug, Clone, Copy, Default)]
pub struct LearnStats {
    pub actor_loss: f64,
    pub critic_r_loss: f64,
    pub critic_s_loss: f64,
}

impl LearnStats {
    pub fn all_finite(&self) -> bool {
        self.actor_loss.is_finite()
            && self.critic_r_loss.is_finite()
            && self.critic_s_loss.is_finite()
    }
}

/// Mean-squared-error regression step of one critic toward fixed targets;
/// shared by every algorithm variant.
pub(crate) fn critic_regression(
    net: &mut crate::nn::Mlp,
    opt: &mut crate::nn::AdamState,
    inputs: &[f64],
    n: usize,
    targets: &[f64],
) -> f64 {
    let tr = net.forward_batch(inputs, n);
    let y = tr.output();
    let mut d = vec![0.0; n];
    let mut loss = 0.0;
    for i in 0..n {
        let err = y[i] - targets[i];
        loss += err * err;
        d[i] = 2.0 * err / n as f64;
    }
    let grads = net.backward(&tr, &d);
    opt.step(net, &grads);
    loss / n as f64
}

/// Concatenate two row-major matrices column-wise: `[left | right]`.
pub(crate) fn concat_rows(left: &[f64], dl: usize, right: &[f64], dr: usize, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * (dl + dr));
    for i in 0..n {
        out.extend_from_slice(&left[i * dl..(i + 1) * dl]);
        out.extend_from_slice(&right[i * dr..(i + 1) * dr]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn exp(v: f64) -> Experience {
        Experience {
            z: vec![v],
            a: vec![0.0],
            z_next: vec![v + 1.0],
            r: v,
            s: -v,
        }
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut buf = ReplayBuffer::new(2);
        buf.push(exp(1.0));
        buf.push(exp(2.0));
        buf.push(exp(3.0));
        assert_eq!(buf.len(), 2);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let b = buf.sample(2, &mut rng).unwrap();
        let mut rewards = b.r.clone();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![2.0, 3.0]);
    }

    #[test]
    fn sampling_more_than_stored_fails() {
        let mut buf = ReplayBuffer::new(10);
        buf.push(exp(0.0));
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert_eq!(
            buf.sample(2, &mut rng).unwrap_err(),
            BufferError::Insufficient { want: 2, have: 1 }
        );
    }

    #[test]
    fn sampling_is_uniform() {
        // χ² test over draws from a 10-element buffer
        let mut buf = ReplayBuffer::new(10);
        for i in 0..10 {
            buf.push(exp(i as f64));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let mut counts = [0usize; 10];
        let draws = 100_000;
        for _ in 0..draws / 2 {
            let b = buf.sample(2, &mut rng).unwrap();
            for &r in &b.r {
                counts[r as usize] += 1;
            }
        }
        let expected = draws as f64 / 10.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 9 degrees of freedom: p > 0.01 requires χ² < 21.67
        assert!(chi2 < 21.67, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn batch_is_without_replacement() {
        let mut buf = ReplayBuffer::new(8);
        for i in 0..8 {
            buf.push(exp(i as f64));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..100 {
            let b = buf.sample(8, &mut rng).unwrap();
            let mut seen = b.r.clone();
            seen.sort_by(f64::total_cmp);
            assert_eq!(seen, (0..8).map(|i| i as f64).collect::<Vec<_>>());
        }
    }

    #[test]
    fn kappa_moves_against_the_gap() {
        let mut lag = LagrangianState::new(1.0, 1.0, -40.0, -2.0, 1e-5, 3e-4);
        // value estimate below the threshold: multiplier grows
        lag.kappa_update(&[-50.0, -45.0]);
        assert!(lag.kappa > 1.0);
        // above the threshold: multiplier shrinks
        let mut lag = LagrangianState::new(1.0, 1.0, -40.0, -2.0, 1e-5, 3e-4);
        lag.kappa_update(&[-30.0, -20.0]);
        assert!(lag.kappa < 1.0);
        // exactly at the threshold: unchanged
        let mut lag = LagrangianState::new(1.0, 1.0, -40.0, -2.0, 1e-5, 3e-4);
        lag.kappa_update(&[-40.0]);
        assert_eq!(lag.kappa, 1.0);
    }

    #[test]
    fn kappa_projects_to_zero() {
        let mut lag = LagrangianState::new(0.0, 1.0, -40.0, -2.0, 0.5, 3e-4);
        for _ in 0..10 {
            lag.kappa_update(&[100.0]);
            assert!(lag.kappa >= 0.0);
        }
        assert_eq!(lag.kappa, 0.0);
    }

    #[test]
    fn alpha_tracks_entropy_target() {
        // entropy below H0 (log-probs high): temperature grows
        let mut lag = LagrangianState::new(1.0, 1.0, -40.0, -2.0, 1e-5, 1e-2);
        lag.alpha_update(&[1.0, 1.2]); // entropy ≈ −1.1 < −2? no: −(−1.1)... −logπ = −1.1 < H0 = −2 is false
        // −log π = −1.1, H0 = −2 → grad = −1.1 − (−2) = 0.9 > 0 → α decreases
        assert!(lag.alpha < 1.0);
        let mut lag = LagrangianState::new(1.0, 1.0, -40.0, -2.0, 1e-5, 1e-2);
        lag.alpha_update(&[3.0]); // −log π = −3 < H0 → α increases
        assert!(lag.alpha > 1.0);
        // at the target: unchanged
        let mut lag = LagrangianState::new(0.5, 0.5, -40.0, -2.0, 1e-5, 1e-2);
        lag.alpha_update(&[2.0]); // −log π = −2 = H0
        assert_eq!(lag.alpha, 0.5);
    }

    #[test]
    fn ou_fixed_point_and_decay() {
        let mut ou = OuNoise::new(1, 0.15, 0.0, 0.3);
        assert_eq!(ou.step_with(&[0.0]), &[0.0]);
        ou.omega[0] = 1.0;
        assert!((ou.step_with(&[0.0])[0] - 0.85).abs() < 1e-15);
    }

    #[test]
    fn ou_long_run_variance() {
        // AR(1) with a = 1 − p1: stationary variance p3²/(2p1 − p1²)
        let (p1, p3) = (0.15, 0.3);
        let mut ou = OuNoise::new(1, p1, 0.0, p3);
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        let n = 1_000_000;
        let mut sq = 0.0;
        for _ in 0..n {
            let w = ou.step(&mut rng)[0];
            sq += w * w;
        }
        let var = sq / n as f64;
        let expect = p3 * p3 / (2.0 * p1 - p1 * p1);
        assert!((var - expect).abs() / expect < 0.05, "var {var} vs {expect}");
    }
}
