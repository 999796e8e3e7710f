//! Reparameterized squashed-Gaussian policy head.
//!
//! The actor network emits `[mean.., log_std..]` per action dimension. The
//! log standard deviation is clamped to [−20, 2], the pre-squash sample is
//! `u = μ + σ·ε` with ε from a standard normal, and the action is `tanh(u)`
//! in (−1, 1). Log-probabilities include the tanh change-of-variables
//! correction, computed through softplus so saturated actions stay finite.

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log(1 − tanh²(u))` without cancellation: `2(ln 2 − u − softplus(−2u))`.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Split a raw actor output into the mean, the clamped log-std, and the
/// clamp pass-through mask.
pub fn split_head(out: &[f64], action_dim: usize) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    assert_eq!(out.len(), 2 * action_dim, "head expects mean and log-std");
    let mu = out[..action_dim].to_vec();
    let mut log_std = Vec::with_capacity(action_dim);
    let mut mask = Vec::with_capacity(action_dim);
    for &raw in &out[action_dim..] {
        log_std.push(raw.clamp(LOG_STD_MIN, LOG_STD_MAX));
        mask.push(raw > LOG_STD_MIN && raw < LOG_STD_MAX);
    }
    (mu, log_std, mask)
}

/// One reparameterized draw and its log-probability.
#[derive(Debug, Clone)]
pub struct GaussianSample {
    /// `u = μ + σ·ε`.
    pub pre_squash: Vec<f64>,
    /// `tanh(u)`, inside the action box.
    pub action: Vec<f64>,
    pub sigma: Vec<f64>,
    pub eps: Vec<f64>,
    pub log_prob: f64,
}

/// Sample through the reparameterization `u = μ + σ·ε`, squash, and score.
pub fn sample_squashed_gaussian(mu: &[f64], log_std: &[f64], eps: &[f64]) -> GaussianSample {
    assert_eq!(mu.len(), log_std.len());
    assert_eq!(mu.len(), eps.len());
    let mut pre = Vec::with_capacity(mu.len());
    let mut act = Vec::with_capacity(mu.len());
    let mut sigma = Vec::with_capacity(mu.len());
    let mut log_prob = 0.0;
    for i in 0..mu.len() {
        let s = log_std[i].exp();
        let u = mu[i] + s * eps[i];
        log_prob += -log_std[i] - 0.5 * eps[i] * eps[i] - HALF_LN_2PI - log_one_minus_tanh_sq(u);
        pre.push(u);
        act.push(u.tanh());
        sigma.push(s);
    }
    GaussianSample {
        pre_squash: pre,
        action: act,
        sigma,
        eps: eps.to_vec(),
        log_prob,
    }
}

/// Log-probability of the action `tanh(u)` under the head `(μ, log σ)`.
pub fn log_prob_of_pre_squash(mu: &[f64], log_std: &[f64], u: &[f64]) -> f64 {
    let eps: Vec<f64> = u
        .iter()
        .zip(mu.iter().zip(log_std))
        .map(|(ui, (m, ls))| (ui - m) / ls.exp())
        .collect();
    sample_squashed_gaussian(mu, log_std, &eps).log_prob
}

/// Gradient of a per-sample loss through the head, back to the raw actor
/// output `[dμ.., d log_std_raw..]`.
#[derive(Debug, Clone)]
pub struct HeadGrad {
    pub d_out: Vec<f64>,
}

/// Backpropagate `g_action = ∂L/∂a` and `g_log_prob = ∂L/∂log π` through
/// the sampling path, with ε held fixed (reparameterization).
pub fn head_backward(
    sample: &GaussianSample,
    mask: &[bool],
    g_action: &[f64],
    g_log_prob: f64,
) -> HeadGrad {
    let na = sample.action.len();
    let mut d_out = vec![0.0; 2 * na];
    for i in 0..na {
        let a = sample.action[i];
        // ∂a/∂u = 1 − a², ∂log π/∂u = 2a
        let du = g_action[i] * (1.0 - a * a) + g_log_prob * 2.0 * a;
        d_out[i] = du;
        if mask[i] {
            // u depends on log σ through σ·ε; log π carries a direct −1
            d_out[na + i] = du * sample.sigma[i] * sample.eps[i] - g_log_prob;
        }
    }
    HeadGrad { d_out }
}
