//! Adam with bias correction, for networks and for scalar parameters.

use super::{Mlp, MlpGrads};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Per-parameter first/second moment accumulators for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub t: u64,
    pub m: Vec<(Vec<f64>, Vec<f64>)>,
    pub v: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        let zeros: Vec<(Vec<f64>, Vec<f64>)> = net
            .layers
            .iter()
            .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
            .collect();
        Self {
            lr,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One Adam update of `net` in place from summed-over-batch `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) {
        assert_eq!(grads.layers.len(), net.layers.len(), "gradient shape");
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t as i32);
        let c2 = 1.0 - BETA2.powi(self.t as i32);
        for (li, layer) in net.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[li];
            let (mw, mb) = &mut self.m[li];
            let (vw, vb) = &mut self.v[li];
            update_slice(&mut layer.w, gw, mw, vw, self.lr, c1, c2);
            update_slice(&mut layer.b, gb, mb, vb, self.lr, c1, c2);
        }
    }
}

fn update_slice(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, c1: f64, c2: f64) {
    for i in 0..p.len() {
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
    }
}

/// Adam for a single scalar (entropy temperature, Lagrange multiplier).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarAdam {
    pub lr: f64,
    pub t: u64,
    pub m: f64,
    pub v: f64,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        Self {
            lr,
            t: 0,
            m: 0.0,
            v: 0.0,
        }
    }

    /// One update; returns the new parameter value.
    pub fn step(&mut self, param: f64, grad: f64) -> f64 {
        self.t += 1;
        self.m = BETA1 * self.m + (1.0 - BETA1) * grad;
        self.v = BETA2 * self.v + (1.0 - BETA2) * grad * grad;
        let m_hat = self.m / (1.0 - BETA1.powi(self.t as i32));
        let v_hat = self.v / (1.0 - BETA2.powi(self.t as i32));
        param - self.lr * m_hat / (v_hat.sqrt() + EPS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::OutputActivation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn first_step_moves_by_signed_learning_rate() {
        // m̂ = g, v̂ = g² on the first step, so the move is lr·sign(g) up to ε
        let mut opt = ScalarAdam::new(0.01);
        let p = opt.step(1.0, 2.5);
        assert!((p - (1.0 - 0.01)).abs() < 1e-8);
        let mut opt = ScalarAdam::new(0.01);
        let p = opt.step(1.0, -0.3);
        assert!((p - 1.01).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut opt = ScalarAdam::new(0.1);
        let mut p = 0.7;
        for _ in 0..50 {
            p = opt.step(p, 0.0);
        }
        assert_eq!(p, 0.7);
    }

    #[test]
    fn two_steps_match_scripted_trace() {
        // hand-rolled two-iteration Adam on a single weight
        let g1 = 0.4;
        let g2 = -0.1;
        let lr = 0.05;
        let mut m = 0.0;
        let mut v = 0.0;
        let mut p_ref = 2.0;
        for (t, g) in [(1, g1), (2, g2)] {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            p_ref -= lr * mh / (vh.sqrt() + 1e-8);
        }

        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut net = Mlp::new(&[1, 1], OutputActivation::Identity, &mut rng);
        net.layers[0].w[0] = 2.0;
        net.layers[0].b[0] = 0.0;
        let mut opt = AdamState::new(&net, lr);
        for g in [g1, g2] {
            let grads = MlpGrads {
                layers: vec![(vec![g], vec![0.0])],
            };
            opt.step(&mut net, &grads);
        }
        assert!((net.layers[0].w[0] - p_ref).abs() < 1e-15);
        assert_eq!(net.layers[0].b[0], 0.0);
    }
}
