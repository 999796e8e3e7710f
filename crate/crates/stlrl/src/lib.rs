//! Signal-temporal-logic constrained reinforcement learning.
//!
//! The crate monitors discrete-time STL formulae (Boolean satisfaction and
//! quantitative robustness), builds the sliding-window constrained MDP with
//! indicator-based STL rewards, reduces the window to a low-dimensional
//! flag-state input, and trains constrained actor-critic agents (SAC, DDPG,
//! TD3 variants) with Lagrangian relaxation and a two-phase
//! pre-train/fine-tune schedule. A stochastic unicycle plant is included as
//! the benchmark environment, together with a CLI for training, evaluation,
//! and trace monitoring.

pub mod agents;
pub mod cli;
pub mod config;
pub mod eval;
pub mod nn;
pub mod preprocess;
pub mod robot;
pub mod stl;
pub mod tau;
