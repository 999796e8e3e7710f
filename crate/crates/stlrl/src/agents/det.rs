//! Deterministic-policy variants: the classic single-critic form and the
//! twin-critic form with clipped double-Q targets, target policy smoothing,
//! and delayed policy updates. Exploration adds Ornstein-Uhlenbeck noise to
//! the policy output.

use super::{concat_rows, critic_regression, Batch, LagrangianState, LearnStats, OuNoise, Phase};
use crate::nn::{AdamState, Checkpoint, Mlp, OutputActivation};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Perturb target actions with clipped Gaussian noise and re-clip to the
/// action box.
pub fn smooth_target_actions(actions: &mut [f64], sigma: f64, clip: f64, rng: &mut ChaCha12Rng) {
    for a in actions.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        let pert = (sigma * e).clamp(-clip, clip);
        *a = (*a + pert).clamp(-1.0, 1.0);
    }
}

pub struct DetPolicyAgent {
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critics_r: Vec<Mlp>,
    pub critics_s: Vec<Mlp>,
    pub targets_r: Vec<Mlp>,
    pub targets_s: Vec<Mlp>,
    opt_actor: AdamState,
    opt_r: Vec<AdamState>,
    opt_s: Vec<AdamState>,
    pub lagrange: LagrangianState,
    pub noise: OuNoise,
    pub gamma: f64,
    pub xi: f64,
    /// Standard deviation of target policy smoothing noise; 0 disables it.
    pub smooth_sigma: f64,
    /// Clip bound for the smoothing perturbation.
    pub smooth_clip: f64,
    /// Actor and target networks update once per this many learning steps.
    pub policy_delay: u64,
    learn_steps: u64,
    action_dim: usize,
    algo: &'static str,
}

impl DetPolicyAgent {
    #[allow(clippy::too_many_arguments)]
    fn build(
        input_dim: usize,
        action_dim: usize,
        width: usize,
        lr: f64,
        gamma: f64,
        xi: f64,
        lagrange: LagrangianState,
        noise: OuNoise,
        twins: usize,
        smooth_sigma: f64,
        smooth_clip: f64,
        policy_delay: u64,
        algo: &'static str,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let actor_dims = [input_dim, width, width, action_dim];
        let critic_dims = [input_dim + action_dim, width, width, 1];
        let actor = Mlp::new(&actor_dims, OutputActivation::Tanh, rng);
        let critics_r: Vec<Mlp> = (0..twins)
            .map(|_| Mlp::new(&critic_dims, OutputActivation::Identity, rng))
            .collect();
        let critics_s: Vec<Mlp> = (0..twins)
            .map(|_| Mlp::new(&critic_dims, OutputActivation::Identity, rng))
            .collect();
        let actor_target = actor.clone();
        let targets_r = critics_r.clone();
        let targets_s = critics_s.clone();
        let opt_actor = AdamState::new(&actor, lr);
        let opt_r = critics_r.iter().map(|c| AdamState::new(c, lr)).collect();
        let opt_s = critics_s.iter().map(|c| AdamState::new(c, lr)).collect();
        Self {
            actor,
            actor_target,
            critics_r,
            critics_s,
            targets_r,
            targets_s,
            opt_actor,
            opt_r,
            opt_s,
            lagrange,
            noise,
            gamma,
            xi,
            smooth_sigma,
            smooth_clip,
            policy_delay,
            learn_steps: 0,
            action_dim,
            algo,
        }
    }

    /// Single critic per head, no smoothing, policy updated every step.
    #[allow(clippy::too_many_arguments)]
    pub fn ddpg(
        input_dim: usize,
        action_dim: usize,
        width: usize,
        lr: f64,
        gamma: f64,
        xi: f64,
        lagrange: LagrangianState,
        noise: OuNoise,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        Self::build(
            input_dim, action_dim, width, lr, gamma, xi, lagrange, noise, 1, 0.0, 0.0, 1, "ddpg",
            rng,
        )
    }

    /// Twin critics per head, target policy smoothing N(0, 0.2) clipped to
    /// ±0.5, policy and targets updated every 2 learning steps.
    #[allow(clippy::too_many_arguments)]
    pub fn td3(
        input_dim: usize,
        action_dim: usize,
        width: usize,
        lr: f64,
        gamma: f64,
        xi: f64,
        lagrange: LagrangianState,
        noise: OuNoise,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        Self::build(
            input_dim, action_dim, width, lr, gamma, xi, lagrange, noise, 2, 0.2, 0.5, 2, "td3",
            rng,
        )
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn input_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn on_episode_start(&mut self) {
        self.noise.reset();
    }

    /// Policy output plus Ornstein-Uhlenbeck noise, clamped to the box.
    pub fn act_explore(&mut self, zhat: &[f64], rng: &mut ChaCha12Rng) -> Vec<f64> {
        let mut a = self.actor.forward_one(zhat);
        let w = self.noise.step(rng);
        for (ai, wi) in a.iter_mut().zip(w) {
            *ai = (*ai + wi).clamp(-1.0, 1.0);
        }
        a
    }

    pub fn act_eval(&self, zhat: &[f64]) -> Vec<f64> {
        self.actor.forward_one(zhat)
    }

    /// Minimum over target twins at the given inputs.
    fn target_min(&self, nets: &[Mlp], inputs: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; n];
        for net in nets {
            let tr = net.forward_batch(inputs, n);
            for (o, &q) in out.iter_mut().zip(tr.output()) {
                *o = o.min(q);
            }
        }
        out
    }

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

        // Target actions, smoothed and re-clipped for the twin-critic form.
        let mut a_next = self
            .actor_target
            .forward_batch(&batch.z_next, n)
            .output()
            .to_vec();
        if self.smooth_sigma > 0.0 {
            smooth_target_actions(&mut a_next, self.smooth_sigma, self.smooth_clip, rng);
        }
        let next_in = concat_rows(&batch.z_next, dz, &a_next, na, n);
        let qr_next = self.target_min(&self.targets_r, &next_in, n);
        let qs_next = self.target_min(&self.targets_s, &next_in, n);
        let t_r: Vec<f64> = (0..n)
            .map(|i| batch.r[i] + self.gamma * qr_next[i])
            .collect();
        let t_s: Vec<f64> = (0..n)
            .map(|i| batch.s[i] + self.gamma * qs_next[i])
            .collect();

        let inputs = concat_rows(&batch.z, dz, &batch.a, na, n);
        let twins = self.critics_r.len();
        let mut critic_r_loss = 0.0;
        let mut critic_s_loss = 0.0;
        for k in 0..twins {
            critic_r_loss +=
                critic_regression(&mut self.critics_r[k], &mut self.opt_r[k], &inputs, n, &t_r);
            critic_s_loss +=
                critic_regression(&mut self.critics_s[k], &mut self.opt_s[k], &inputs, n, &t_s);
        }
        critic_r_loss /= twins as f64;
        critic_s_loss /= twins as f64;

        self.learn_steps += 1;
        let mut actor_loss = 0.0;
        if self.learn_steps % self.policy_delay == 0 {
            // Policy ascent through the first critic of each head.
            let tr_a = self.actor.forward_batch(&batch.z, n);
            let a_new = tr_a.output().to_vec();
            let cur_in = concat_rows(&batch.z, dz, &a_new, na, n);
            let scale = 1.0 / n as f64;
            let kappa = self.lagrange.kappa;
            let din = dz + na;
            let mut g_action = vec![0.0; n * na];

            let pull = |net: &Mlp, weight: f64, g_action: &mut [f64]| -> f64 {
                let tr = net.forward_batch(&cur_in, n);
                let dy = vec![-weight * scale; n];
                let dx = net.backward_input_only(&tr, &dy);
                for i in 0..n {
                    for j in 0..na {
                        g_action[i * na + j] += dx[i * din + dz + j];
                    }
                }
                tr.output().iter().sum::<f64>() * scale
            };

            match phase {
                Phase::Finetune => {
                    let qr = pull(&self.critics_r[0], 1.0, &mut g_action);
                    let qs = pull(&self.critics_s[0], kappa, &mut g_action);
                    actor_loss = -(qr + kappa * qs);
                }
                Phase::Pretrain => {
                    let qs = pull(&self.critics_s[0], 1.0, &mut g_action);
                    actor_loss = -qs;
                }
            }
            let grads = self.actor.backward(&tr_a, &g_action);
            self.opt_actor.step(&mut self.actor, &grads);

            crate::nn::soft_update(&mut self.actor_target, &self.actor, self.xi);
            for k in 0..twins {
                crate::nn::soft_update(&mut self.targets_r[k], &self.critics_r[k], self.xi);
                crate::nn::soft_update(&mut self.targets_s[k], &self.critics_s[k], self.xi);
            }
        }

        if phase == Phase::Finetune {
            if let Some(init) = init_inputs {
                let m = init.len() / dz;
                let a0 = self.actor.forward_batch(init, m).output().to_vec();
                let init_in = concat_rows(init, dz, &a0, na, m);
                let qs = self.target_min_main_s(&init_in, m);
                self.lagrange.kappa_update(&qs);
            }
        }

        LearnStats {
            actor_loss,
            critic_r_loss,
            critic_s_loss,
        }
    }

    /// Minimum over the main STL critics (single critic passes through).
    fn target_min_main_s(&self, inputs: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; n];
        for net in &self.critics_s {
            let tr = net.forward_batch(inputs, n);
            for (o, &q) in out.iter_mut().zip(tr.output()) {
                *o = o.min(q);
            }
        }
        out
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut nets = vec![
            ("actor".to_string(), self.actor.clone()),
            ("actor_target".to_string(), self.actor_target.clone()),
        ];
        let mut opts = vec![("actor".to_string(), self.opt_actor.clone())];
        for (k, c) in self.critics_r.iter().enumerate() {
            nets.push((format!("critic_r{}", k + 1), c.clone()));
            opts.push((format!("critic_r{}", k + 1), self.opt_r[k].clone()));
        }
        for (k, c) in self.critics_s.iter().enumerate() {
            nets.push((format!("critic_s{}", k + 1), c.clone()));
            opts.push((format!("critic_s{}", k + 1), self.opt_s[k].clone()));
        }
        for (k, c) in self.targets_r.iter().enumerate() {
            nets.push((format!("target_r{}", k + 1), c.clone()));
        }
        for (k, c) in self.targets_s.iter().enumerate() {
            nets.push((format!("target_s{}", k + 1), c.clone()));
        }
        Checkpoint {
            meta: vec![
                ("algorithm".into(), self.algo.into()),
                ("input_dim".into(), self.input_dim().to_string()),
                ("action_dim".into(), self.action_dim.to_string()),
            ],
            nets,
            opts,
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

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn lag() -> LagrangianState {
        LagrangianState::new(1.0, 0.0, -40.0, -2.0, 1e-5, 3e-4)
    }

    fn noise() -> OuNoise {
        OuNoise::new(2, 0.15, 0.0, 0.3)
    }

    fn toy_batch(n: usize, dz: usize, na: usize, seed: u64) -> Batch {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Batch {
            n,
            z: (0..n * dz).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            a: (0..n * na).map(|_| rng.gen_range(-0.9..0.9)).collect(),
            z_next: (0..n * dz).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            r: (0..n).map(|_| rng.gen_range(-2.0..0.0)).collect(),
            s: (0..n).map(|_| rng.gen_range(-1.0..0.0)).collect(),
        }
    }

    #[test]
    fn delayed_updates_skip_odd_steps() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut agent = DetPolicyAgent::td3(3, 2, 8, 3e-4, 0.99, 0.01, lag(), noise(), &mut rng);
        let batch = toy_batch(8, 3, 2, 1);
        let before = agent.actor.clone();
        agent.learn(&batch, Phase::Pretrain, None, &mut rng); // step 1: odd, no actor move
        assert_eq!(agent.actor, before);
        agent.learn(&batch, Phase::Pretrain, None, &mut rng); // step 2: actor moves
        assert_ne!(agent.actor, before);
    }

    #[test]
    fn smoothing_clip_bounds_perturbation() {
        // with a saturating sigma every perturbation clips at exactly ±0.5
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut actions = vec![0.0; 64];
        smooth_target_actions(&mut actions, 1e6, 0.5, &mut rng);
        assert!(actions.iter().all(|a| *a == 0.5 || *a == -0.5));
        // and the result stays inside the action box from the boundary
        let mut edge = vec![1.0; 64];
        smooth_target_actions(&mut edge, 1e6, 0.5, &mut rng);
        assert!(edge.iter().all(|a| (-1.0..=1.0).contains(a)));
    }

    #[test]
    fn ddpg_matches_single_step_td3_with_degenerate_parameters() {
        // same seeds: a twin-disabled, delay-1, smoothing-0 agent takes the
        // same actor step as the plain variant
        let mk = |rng: &mut ChaCha12Rng| {
            DetPolicyAgent::build(
                3,
                2,
                8,
                3e-4,
                0.99,
                0.01,
                lag(),
                noise(),
                1,
                0.0,
                0.0,
                1,
                "ddpg",
                rng,
            )
        };
        let mut r1 = ChaCha12Rng::seed_from_u64(3);
        let mut r2 = ChaCha12Rng::seed_from_u64(3);
        let mut a = DetPolicyAgent::ddpg(3, 2, 8, 3e-4, 0.99, 0.01, lag(), noise(), &mut r1);
        let mut b = mk(&mut r2);
        let batch = toy_batch(8, 3, 2, 4);
        let mut l1 = ChaCha12Rng::seed_from_u64(5);
        let mut l2 = ChaCha12Rng::seed_from_u64(5);
        let s1 = a.learn(&batch, Phase::Finetune, None, &mut l1);
        let s2 = b.learn(&batch, Phase::Finetune, None, &mut l2);
        assert_eq!(s1.actor_loss.to_bits(), s2.actor_loss.to_bits());
        assert_eq!(a.actor, b.actor);
    }

    #[test]
    fn frozen_targets_make_constant_td_targets() {
        // the TD target depends on target networks only, so main-net updates
        // leave it unchanged
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let mut agent = DetPolicyAgent::ddpg(2, 1, 8, 1e-3, 0.9, 1e-9, lag(), noise(), &mut rng);
        let batch = toy_batch(8, 2, 1, 7);
        let target_of = |agent: &DetPolicyAgent| -> Vec<f64> {
            let a_next = agent
                .actor_target
                .forward_batch(&batch.z_next, batch.n)
                .output()
                .to_vec();
            let next_in = concat_rows(&batch.z_next, 2, &a_next, 1, batch.n);
            agent.target_min(&agent.targets_r, &next_in, batch.n)
        };
        let t0 = target_of(&agent);
        let mut lrng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..5 {
            agent.learn(&batch, Phase::Finetune, None, &mut lrng);
        }
        let t1 = target_of(&agent);
        // ξ ≈ 0 freezes targets up to rounding
        for (a0, a1) in t0.iter().zip(&t1) {
            assert!((a0 - a1).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_discount_regresses_to_rewards() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let mut agent = DetPolicyAgent::ddpg(2, 1, 32, 1e-3, 0.0, 0.01, lag(), noise(), &mut rng);
        let batch = toy_batch(16, 2, 1, 11);
        let mut lrng = ChaCha12Rng::seed_from_u64(12);
        for _ in 0..3000 {
            agent.learn(&batch, Phase::Finetune, None, &mut lrng);
        }
        let inputs = concat_rows(&batch.z, 2, &batch.a, 1, batch.n);
        let q = agent.critics_s[0].forward_batch(&inputs, batch.n);
        for i in 0..batch.n {
            assert!((q.output()[i] - batch.s[i]).abs() < 1e-2);
        }
    }
}
