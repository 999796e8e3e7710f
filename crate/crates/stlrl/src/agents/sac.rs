//! Soft-actor-critic variant: stochastic tanh-Gaussian policy, twin critics
//! per reward head with clipped double-Q targets, automatic entropy
//! temperature, and the Lagrange multiplier on the STL critic.

use super::{concat_rows, critic_regression, Batch, LagrangianState, LearnStats, Phase};
use crate::nn::{
    head_backward, sample_squashed_gaussian, split_head, AdamState, BatchTrace, Checkpoint,
    GaussianSample, Mlp, OutputActivation,
};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

pub struct SacAgent {
    pub actor: Mlp,
    pub critics_r: [Mlp; 2],
    pub critics_s: [Mlp; 2],
    pub targets_r: [Mlp; 2],
    pub targets_s: [Mlp; 2],
    opt_actor: AdamState,
    opt_r: [AdamState; 2],
    opt_s: [AdamState; 2],
    pub lagrange: LagrangianState,
    pub gamma: f64,
    pub xi: f64,
    action_dim: usize,
}

/// A batch of fresh policy draws with the actor trace kept for backprop.
struct Sampled {
    trace: BatchTrace,
    samples: Vec<GaussianSample>,
    masks: Vec<Vec<bool>>,
    actions: Vec<f64>,
    log_probs: Vec<f64>,
}

impl SacAgent {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        input_dim: usize,
        action_dim: usize,
        width: usize,
        lr: f64,
        gamma: f64,
        xi: f64,
        lagrange: LagrangianState,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let actor_dims = [input_dim, width, width, 2 * action_dim];
        let critic_dims = [input_dim + action_dim, width, width, 1];
        let actor = Mlp::new(&actor_dims, OutputActivation::Identity, rng);
        let mk_critic = |rng: &mut ChaCha12Rng| Mlp::new(&critic_dims, OutputActivation::Identity, rng);
        let critics_r = [mk_critic(rng), mk_critic(rng)];
        let critics_s = [mk_critic(rng), mk_critic(rng)];
        let targets_r = critics_r.clone();
        let targets_s = critics_s.clone();
        let opt_actor = AdamState::new(&actor, lr);
        let opt_r = [
            AdamState::new(&critics_r[0], lr),
            AdamState::new(&critics_r[1], lr),
        ];
        let opt_s = [
            AdamState::new(&critics_s[0], lr),
            AdamState::new(&critics_s[1], lr),
        ];
        Self {
            actor,
            critics_r,
            critics_s,
            targets_r,
            targets_s,
            opt_actor,
            opt_r,
            opt_s,
            lagrange,
            gamma,
            xi,
            action_dim,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn input_dim(&self) -> usize {
        self.actor.input_dim()
    }

    fn sample_batch(&self, z: &[f64], n: usize, rng: &mut ChaCha12Rng) -> Sampled {
        let trace = self.actor.forward_batch(z, n);
        let out = trace.output();
        let na = self.action_dim;
        let mut samples = Vec::with_capacity(n);
        let mut masks = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n * na);
        let mut log_probs = Vec::with_capacity(n);
        for i in 0..n {
            let (mu, ls, mask) = split_head(&out[i * 2 * na..(i + 1) * 2 * na], na);
            let eps: Vec<f64> = (0..na).map(|_| rng.sample(StandardNormal)).collect();
            let s = sample_squashed_gaussian(&mu, &ls, &eps);
            actions.extend_from_slice(&s.action);
            log_probs.push(s.log_prob);
            samples.push(s);
            masks.push(mask);
        }
        Sampled {
            trace,
            samples,
            masks,
            actions,
            log_probs,
        }
    }

    /// Stochastic action for exploration.
    pub fn act_explore(&self, zhat: &[f64], rng: &mut ChaCha12Rng) -> Vec<f64> {
        let out = self.actor.forward_one(zhat);
        let (mu, ls, _) = split_head(&out, self.action_dim);
        let eps: Vec<f64> = (0..self.action_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        sample_squashed_gaussian(&mu, &ls, &eps).action
    }

    /// Deterministic head for evaluation: the squashed mean.
    pub fn act_eval(&self, zhat: &[f64]) -> Vec<f64> {
        let out = self.actor.forward_one(zhat);
        out[..self.action_dim].iter().map(|m| m.tanh()).collect()
    }

    /// One learning step: both critic pairs regress to their targets, the
    /// actor descends the phase objective, the temperature tracks the
    /// entropy target, and in fine-tuning the multiplier tracks the
    /// constraint at the provided initial-state inputs.
    pub fn learn(
        &mut self,
        batch: &Batch,
        phase: Phase,
        init_inputs: Option<&[f64]>,
        rng: &mut ChaCha12Rng,
    ) -> LearnStats {
        let n = batch.n;
        let dz = self.input_dim();
        let na = self.action_dim;
        let alpha = self.lagrange.alpha;

        // Fresh next actions for targets; the STL head carries the entropy
        // term only while pre-training, where it stands in for the task
        // objective.
        let next = self.sample_batch(&batch.z_next, n, rng);
        let next_in = concat_rows(&batch.z_next, dz, &next.actions, na, n);
        let qr = [
            self.targets_r[0].forward_batch(&next_in, n),
            self.targets_r[1].forward_batch(&next_in, n),
        ];
        let qs = [
            self.targets_s[0].forward_batch(&next_in, n),
            self.targets_s[1].forward_batch(&next_in, n),
        ];
        let mut t_r = Vec::with_capacity(n);
        let mut t_s = Vec::with_capacity(n);
        for i in 0..n {
            let vr = qr[0].output()[i].min(qr[1].output()[i]) - alpha * next.log_probs[i];
            let mut vs = qs[0].output()[i].min(qs[1].output()[i]);
            if phase == Phase::Pretrain {
                vs -= alpha * next.log_probs[i];
            }
            t_r.push(batch.r[i] + self.gamma * vr);
            t_s.push(batch.s[i] + self.gamma * vs);
        }

        let inputs = concat_rows(&batch.z, dz, &batch.a, na, n);
        let mut critic_r_loss = 0.0;
        let mut critic_s_loss = 0.0;
        for k in 0..2 {
            critic_r_loss +=
                critic_regression(&mut self.critics_r[k], &mut self.opt_r[k], &inputs, n, &t_r);
            critic_s_loss +=
                critic_regression(&mut self.critics_s[k], &mut self.opt_s[k], &inputs, n, &t_s);
        }
        critic_r_loss /= 2.0;
        critic_s_loss /= 2.0;

        // Actor step on a fresh draw; gradients flow through the selected
        // (minimum) twin of each head and through the log-probability.
        let cur = self.sample_batch(&batch.z, n, rng);
        let cur_in = concat_rows(&batch.z, dz, &cur.actions, na, n);
        let kappa = self.lagrange.kappa;
        let scale = 1.0 / n as f64;

        let mut g_action = vec![0.0; n * na];
        let mut actor_loss = 0.0;
        let accumulate = |critics: &[Mlp; 2], weight: f64, g_action: &mut [f64]| -> Vec<f64> {
            let tr0 = critics[0].forward_batch(&cur_in, n);
            let tr1 = critics[1].forward_batch(&cur_in, n);
            let mut dy0 = vec![0.0; n];
            let mut dy1 = vec![0.0; n];
            let mut q_min = Vec::with_capacity(n);
            for i in 0..n {
                let (q0, q1) = (tr0.output()[i], tr1.output()[i]);
                if q0 <= q1 {
                    dy0[i] = -weight * scale;
                    q_min.push(q0);
                } else {
                    dy1[i] = -weight * scale;
                    q_min.push(q1);
                }
            }
            let dx0 = critics[0].backward_input_only(&tr0, &dy0);
            let dx1 = critics[1].backward_input_only(&tr1, &dy1);
            let din = dz + na;
            for i in 0..n {
                for j in 0..na {
                    g_action[i * na + j] += dx0[i * din + dz + j] + dx1[i * din + dz + j];
                }
            }
            q_min
        };

        if phase == Phase::Finetune {
            let qr_min = accumulate(&self.critics_r, 1.0, &mut g_action);
            let qs_min = accumulate(&self.critics_s, kappa, &mut g_action);
            for i in 0..n {
                actor_loss += alpha * cur.log_probs[i] - (qr_min[i] + kappa * qs_min[i]);
            }
        } else {
            let qs_min = accumulate(&self.critics_s, 1.0, &mut g_action);
            for i in 0..n {
                actor_loss += alpha * cur.log_probs[i] - qs_min[i];
            }
        }
        actor_loss *= scale;

        let g_log_prob = alpha * scale;
        let mut d_out = vec![0.0; n * 2 * na];
        for i in 0..n {
            let hg = head_backward(
                &cur.samples[i],
                &cur.masks[i],
                &g_action[i * na..(i + 1) * na],
                g_log_prob,
            );
            d_out[i * 2 * na..(i + 1) * 2 * na].copy_from_slice(&hg.d_out);
        }
        let grads = self.actor.backward(&cur.trace, &d_out);
        self.opt_actor.step(&mut self.actor, &grads);

        self.lagrange.alpha_update(&cur.log_probs);

        if phase == Phase::Finetune {
            if let Some(init) = init_inputs {
                let m = init.len() / dz;
                let draw = self.sample_batch(init, m, rng);
                let init_in = concat_rows(init, dz, &draw.actions, na, m);
                let q0 = self.critics_s[0].forward_batch(&init_in, m);
                let q1 = self.critics_s[1].forward_batch(&init_in, m);
                let qs_min: Vec<f64> = (0..m)
                    .map(|i| q0.output()[i].min(q1.output()[i]))
                    .collect();
                self.lagrange.kappa_update(&qs_min);
            }
        }

        for k in 0..2 {
            crate::nn::soft_update(&mut self.targets_r[k], &self.critics_r[k], self.xi);
            crate::nn::soft_update(&mut self.targets_s[k], &self.critics_s[k], self.xi);
        }

        LearnStats {
            actor_loss,
            critic_r_loss,
            critic_s_loss,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            meta: vec![
                ("algorithm".into(), "sac".into()),
                ("input_dim".into(), self.input_dim().to_string()),
                ("action_dim".into(), self.action_dim.to_string()),
            ],
            nets: vec![
                ("actor".into(), self.actor.clone()),
                ("critic_r1".into(), self.critics_r[0].clone()),
                ("critic_r2".into(), self.critics_r[1].clone()),
                ("critic_s1".into(), self.critics_s[0].clone()),
                ("critic_s2".into(), self.critics_s[1].clone()),
                ("target_r1".into(), self.targets_r[0].clone()),
                ("target_r2".into(), self.targets_r[1].clone()),
                ("target_s1".into(), self.targets_s[0].clone()),
                ("target_s2".into(), self.targets_s[1].clone()),
            ],
            opts: vec![
                ("actor".into(), self.opt_actor.clone()),
                ("critic_r1".into(), self.opt_r[0].clone()),
                ("critic_r2".into(), self.opt_r[1].clone()),
                ("critic_s1".into(), self.opt_s[0].clone()),
                ("critic_s2".into(), self.opt_s[1].clone()),
            ],
            scalars: vec![
                ("kappa".into(), self.lagrange.kappa),
                ("alpha".into(), self.lagrange.alpha),
            ],
            scalar_opts: vec![
                ("kappa".into(), self.lagrange.opt_kappa),
                ("alpha".into(), self.lagrange.opt_alpha),
            ],
            rngs: Vec::new(),
        }
    }
}
