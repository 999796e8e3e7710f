//! Minimal dense-network stack: fully connected multilayer perceptrons with
//! rectifier hidden layers, exact reverse-mode gradients over recorded batch
//! traces, Adam, and target-network soft updates. Everything is double
//! precision and single-threaded; separate networks can run on separate
//! threads.

mod adam;
mod checkpoint;
mod gaussian;

pub use adam::{AdamState, ScalarAdam};
pub use checkpoint::{Checkpoint, CheckpointError, RngState};
pub use gaussian::{
    head_backward, log_prob_of_pre_squash, sample_squashed_gaussian, split_head, GaussianSample,
    HeadGrad, LOG_STD_MAX, LOG_STD_MIN,
};

use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Activation applied to the final layer's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Tanh,
}

/// One fully connected layer; weights are row-major `[out_dim][in_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// A dense network: rectifier hidden layers, configurable output activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub out_act: OutputActivation,
}

/// Recorded forward pass of a batch: the input and each layer's
/// post-activation, consumed by [`Mlp::backward`].
pub struct BatchTrace {
    pub n: usize,
    input: Vec<f64>,
    acts: Vec<Vec<f64>>,
}

impl BatchTrace {
    /// Final-layer outputs, row-major `n × out_dim`.
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("networks have at least one layer")
    }
}

/// Parameter gradients shaped like the network: per layer `(dw, db)`,
/// summed over the batch.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Mlp {
    /// Fresh network with `dims = [input, hidden.., output]`, parameters
    /// uniform in ±1/√fan_in.
    pub fn new(dims: &[usize], out_act: OutputActivation, rng: &mut ChaCha12Rng) -> Self {
        assert!(dims.len() >= 2, "network needs an input and an output layer");
        let layers = dims
            .windows(2)
            .map(|d| {
                let (in_dim, out_dim) = (d[0], d[1]);
                let bound = 1.0 / (in_dim as f64).sqrt();
                Linear {
                    in_dim,
                    out_dim,
                    w: (0..in_dim * out_dim)
                        .map(|_| rng.gen_range(-bound..bound))
                        .collect(),
                    b: (0..out_dim).map(|_| rng.gen_range(-bound..bound)).collect(),
                }
            })
            .collect();
        Self { layers, out_act }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().expect("nonempty").in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Single forward pass without recording.
    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        let tr = self.forward_batch(x, 1);
        tr.acts.into_iter().next_back().expect("nonempty")
    }

    /// Forward pass over `n` row-major inputs, recording activations.
    pub fn forward_batch(&self, xs: &[f64], n: usize) -> BatchTrace {
        assert_eq!(
            xs.len(),
            n * self.input_dim(),
            "input size does not match batch {n} x {}",
            self.input_dim()
        );
        let last = self.layers.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let src: &[f64] = if li == 0 { xs } else { &acts[li - 1] };
            let mut out = vec![0.0; n * layer.out_dim];
            for s in 0..n {
                let x = &src[s * layer.in_dim..(s + 1) * layer.in_dim];
                let row = &mut out[s * layer.out_dim..(s + 1) * layer.out_dim];
                for (o, slot) in row.iter_mut().enumerate() {
                    let wrow = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    let mut acc = layer.b[o];
                    for (wi, xi) in wrow.iter().zip(x) {
                        acc += wi * xi;
                    }
                    *slot = acc;
                }
            }
            if li != last {
                for v in &mut out {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            } else if self.out_act == OutputActivation::Tanh {
                for v in &mut out {
                    *v = v.tanh();
                }
            }
            acts.push(out);
        }
        BatchTrace {
            n,
            input: xs.to_vec(),
            acts,
        }
    }

    /// Parameter gradients for the recorded pass under upstream gradient
    /// `d_out` (row-major `n × out_dim`, d loss / d output).
    pub fn backward(&self, tr: &BatchTrace, d_out: &[f64]) -> MlpGrads {
        self.backward_impl(tr, d_out, false).0
    }

    /// As [`backward`](Self::backward), additionally returning the gradient
    /// with respect to the batch input.
    pub fn backward_with_input_grad(&self, tr: &BatchTrace, d_out: &[f64]) -> (MlpGrads, Vec<f64>) {
        let (g, dx) = self.backward_impl(tr, d_out, true);
        (g, dx.expect("input gradient requested"))
    }

    /// Input gradient alone, skipping parameter-gradient accumulation; for
    /// differentiating through a network that is not being updated.
    pub fn backward_input_only(&self, tr: &BatchTrace, d_out: &[f64]) -> Vec<f64> {
        let n = tr.n;
        assert_eq!(d_out.len(), n * self.output_dim(), "upstream gradient size");
        let last = self.layers.len() - 1;
        let mut d_post = d_out.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let post = &tr.acts[li];
            if li == last {
                if self.out_act == OutputActivation::Tanh {
                    for (d, p) in d_post.iter_mut().zip(post) {
                        *d *= 1.0 - p * p;
                    }
                }
            } else {
                for (d, p) in d_post.iter_mut().zip(post) {
                    if *p <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let mut d_src = vec![0.0; n * layer.in_dim];
            for s in 0..n {
                let drow = &d_post[s * layer.out_dim..(s + 1) * layer.out_dim];
                let dx = &mut d_src[s * layer.in_dim..(s + 1) * layer.in_dim];
                for (o, &d) in drow.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let wrow = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (slot, wi) in dx.iter_mut().zip(wrow) {
                        *slot += d * wi;
                    }
                }
            }
            d_post = d_src;
        }
        d_post
    }

    fn backward_impl(
        &self,
        tr: &BatchTrace,
        d_out: &[f64],
        want_input: bool,
    ) -> (MlpGrads, Option<Vec<f64>>) {
        let n = tr.n;
        assert_eq!(d_out.len(), n * self.output_dim(), "upstream gradient size");
        let last = self.layers.len() - 1;
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
            .collect();
        let mut d_post = d_out.to_vec();
        let mut d_input = None;
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let post = &tr.acts[li];
            // activation derivative: post > 0 masks the rectifier, tanh uses
            // 1 − post² on the output layer
            if li == last {
                if self.out_act == OutputActivation::Tanh {
                    for (d, p) in d_post.iter_mut().zip(post) {
                        *d *= 1.0 - p * p;
                    }
                }
            } else {
                for (d, p) in d_post.iter_mut().zip(post) {
                    if *p <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let src: &[f64] = if li == 0 { &tr.input } else { &tr.acts[li - 1] };
            let (dw, db) = &mut grads[li];
            let need_src_grad = li > 0 || want_input;
            let mut d_src = if need_src_grad {
                vec![0.0; n * layer.in_dim]
            } else {
                Vec::new()
            };
            for s in 0..n {
                let x = &src[s * layer.in_dim..(s + 1) * layer.in_dim];
                let drow = &d_post[s * layer.out_dim..(s + 1) * layer.out_dim];
                for (o, &d) in drow.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    db[o] += d;
                    let wrow_grad = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (g, xi) in wrow_grad.iter_mut().zip(x) {
                        *g += d * xi;
                    }
                    if need_src_grad {
                        let wrow = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                        let dx = &mut d_src[s * layer.in_dim..(s + 1) * layer.in_dim];
                        for (slot, wi) in dx.iter_mut().zip(wrow) {
                            *slot += d * wi;
                        }
                    }
                }
            }
            if li == 0 {
                if want_input {
                    d_input = Some(d_src);
                }
            } else {
                d_post = d_src;
            }
        }
        (MlpGrads { layers: grads }, d_input)
    }

    /// Apply `f` to every parameter, weights before biases, layer by layer.
    pub fn visit_params_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for l in &mut self.layers {
            for w in &mut l.w {
                f(w);
            }
            for b in &mut l.b {
                f(b);
            }
        }
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }
}

/// Target-network tracking `θ⁻ ← ξ·θ + (1−ξ)·θ⁻`, elementwise.
pub fn soft_update(target: &mut Mlp, main: &Mlp, xi: f64) {
    assert!(xi > 0.0 && xi <= 1.0, "soft update rate must be in (0, 1]");
    assert_eq!(
        target.layers.len(),
        main.layers.len(),
        "network shapes differ"
    );
    for (t, m) in target.layers.iter_mut().zip(&main.layers) {
        assert_eq!((t.in_dim, t.out_dim), (m.in_dim, m.out_dim));
        for (tv, mv) in t.w.iter_mut().zip(&m.w) {
            *tv = xi * mv + (1.0 - xi) * *tv;
        }
        for (tv, mv) in t.b.iter_mut().zip(&m.b) {
            *tv = xi * mv + (1.0 - xi) * *tv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = Mlp::new(&[3, 8, 8, 2], OutputActivation::Identity, &mut rng(0));
        net.visit_params_mut(|p| *p = 0.0);
        assert_eq!(net.forward_one(&[1.0, -2.0, 3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn rectifier_clips_negative_path() {
        // identity-like 1-1-1 chain: hidden rectifier kills a negative input
        let mut net = Mlp::new(&[1, 1, 1], OutputActivation::Identity, &mut rng(0));
        net.visit_params_mut(|p| *p = 0.0);
        net.layers[0].w[0] = 1.0;
        net.layers[1].w[0] = 1.0;
        assert_eq!(net.forward_one(&[-3.0]), vec![0.0]);
        assert_eq!(net.forward_one(&[2.0]), vec![2.0]);
    }

    #[test]
    fn forward_matches_straight_line_recomputation() {
        let net = Mlp::new(&[4, 6, 6, 3], OutputActivation::Tanh, &mut rng(7));
        let mut r = rng(8);
        let x: Vec<f64> = (0..4).map(|_| r.gen_range(-2.0..2.0)).collect();
        let got = net.forward_one(&x);

        // independent recomputation with explicit loops
        let mut cur = x.clone();
        for (li, l) in net.layers.iter().enumerate() {
            let mut nxt = vec![0.0; l.out_dim];
            for o in 0..l.out_dim {
                let mut acc = l.b[o];
                for i in 0..l.in_dim {
                    acc += l.w[o * l.in_dim + i] * cur[i];
                }
                nxt[o] = if li + 1 < net.layers.len() {
                    acc.max(0.0)
                } else {
                    acc.tanh()
                };
            }
            cur = nxt;
        }
        for (a, b) in got.iter().zip(&cur) {
            assert_eq!(a, b);
        }
    }

    /// Central-difference gradient check used by the module tests; the
    /// acceptance suite runs the full-scale version.
    fn grad_check(dims: &[usize], out_act: OutputActivation, seed: u64) -> f64 {
        let mut net = Mlp::new(dims, out_act, &mut rng(seed));
        let mut r = rng(seed + 1000);
        let n = 3;
        // keep pre-activations away from the rectifier kink
        let xs: Vec<f64> = (0..n * dims[0]).map(|_| r.gen_range(-1.5..1.5)).collect();
        let c: Vec<f64> = (0..n * *dims.last().unwrap())
            .map(|_| r.gen_range(-1.0..1.0))
            .collect();
        let loss = |net: &Mlp| -> f64 {
            let tr = net.forward_batch(&xs, n);
            tr.output().iter().zip(&c).map(|(y, ci)| y * ci).sum()
        };
        let tr = net.forward_batch(&xs, n);
        let grads = net.backward(&tr, &c);

        let mut max_rel = 0.0f64;
        let h = 1e-5;
        for li in 0..net.layers.len() {
            for pi in 0..net.layers[li].w.len() + net.layers[li].b.len() {
                let read = |net: &mut Mlp, v: Option<f64>| -> f64 {
                    let l = &mut net.layers[li];
                    let slot = if pi < l.w.len() {
                        &mut l.w[pi]
                    } else {
                        &mut l.b[pi - l.w.len()]
                    };
                    let old = *slot;
                    if let Some(v) = v {
                        *slot = v;
                    }
                    old
                };
                let old = read(&mut net, None);
                read(&mut net, Some(old + h));
                let up = loss(&net);
                read(&mut net, Some(old - h));
                let dn = loss(&net);
                read(&mut net, Some(old));
                let fd = (up - dn) / (2.0 * h);
                let an = {
                    let (dw, db) = &grads.layers[li];
                    if pi < dw.len() {
                        dw[pi]
                    } else {
                        db[pi - dw.len()]
                    }
                };
                let denom = an.abs().max(fd.abs()).max(1e-6);
                max_rel = max_rel.max((an - fd).abs() / denom);
            }
        }
        max_rel
    }

    #[test]
    fn gradients_match_finite_differences() {
        assert!(grad_check(&[4, 8, 8, 1], OutputActivation::Identity, 1) < 1e-4);
        assert!(grad_check(&[3, 8, 8, 2], OutputActivation::Tanh, 2) < 1e-4);
        assert!(grad_check(&[5, 8, 8, 4], OutputActivation::Identity, 3) < 1e-4);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let net = Mlp::new(&[3, 6, 6, 2], OutputActivation::Identity, &mut rng(4));
        let mut r = rng(5);
        let xs: Vec<f64> = (0..3).map(|_| r.gen_range(-1.0..1.0)).collect();
        let c = vec![0.7, -1.3];
        let tr = net.forward_batch(&xs, 1);
        let (_, dx) = net.backward_with_input_grad(&tr, &c);
        let h = 1e-6;
        for i in 0..3 {
            let mut up = xs.clone();
            up[i] += h;
            let mut dn = xs.clone();
            dn[i] -= h;
            let f = |v: &[f64]| -> f64 {
                net.forward_one(v).iter().zip(&c).map(|(y, ci)| y * ci).sum()
            };
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            assert!((dx[i] - fd).abs() < 1e-6, "dx[{i}] = {} vs {fd}", dx[i]);
        }
    }

    #[test]
    fn input_only_backward_matches_full_backward() {
        let net = Mlp::new(&[4, 8, 8, 2], OutputActivation::Tanh, &mut rng(11));
        let mut r = rng(12);
        let xs: Vec<f64> = (0..3 * 4).map(|_| r.gen_range(-1.0..1.0)).collect();
        let dy: Vec<f64> = (0..3 * 2).map(|_| r.gen_range(-1.0..1.0)).collect();
        let tr = net.forward_batch(&xs, 3);
        let (_, full) = net.backward_with_input_grad(&tr, &dy);
        let lean = net.backward_input_only(&tr, &dy);
        for (a, b) in full.iter().zip(&lean) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let net = Mlp::new(&[3, 8, 2], OutputActivation::Identity, &mut rng(6));
        let tr = net.forward_batch(&[0.1, 0.2, 0.3, -0.1, 0.0, 0.5], 2);
        let g = net.backward(&tr, &[0.0; 4]);
        assert!(g
            .layers
            .iter()
            .all(|(dw, db)| dw.iter().chain(db).all(|&v| v == 0.0)));
    }

    #[test]
    fn soft_update_is_convex_tracking() {
        let mut r = rng(9);
        let main = Mlp::new(&[2, 4, 1], OutputActivation::Identity, &mut r);
        let mut target = Mlp::new(&[2, 4, 1], OutputActivation::Identity, &mut r);

        // ξ = 1 copies the main network
        let mut t1 = target.clone();
        soft_update(&mut t1, &main, 1.0);
        assert_eq!(t1, main);

        // θ = 1, θ⁻ = 0, ξ = 0.01 → 0.01
        let mut ones = main.clone();
        ones.visit_params_mut(|p| *p = 1.0);
        target.visit_params_mut(|p| *p = 0.0);
        soft_update(&mut target, &ones, 0.01);
        target.visit_params_mut(|p| assert_eq!(*p, 0.01));

        // repeated updates shrink the gap by (1 − ξ) per call
        let mut gap_prev = 1.0 - 0.01;
        for _ in 0..5 {
            soft_update(&mut target, &ones, 0.01);
            let gap = 1.0 - target.layers[0].w[0];
            assert!((gap - gap_prev * 0.99).abs() < 1e-12);
            gap_prev = gap;
        }
    }
}
