//! Behavior models of a human supervising a dual-task robot (an object
//! collector plus a target tracker), tools to estimate those models from
//! trial logs, and a receding-horizon assistance-seeking policy evaluated
//! against a synthetic supervisor.
//!
//! Layout:
//! - [`domain`]: trial vocabulary, events, rewards, the log row format
//! - [`dynamics`]: trust/engagement linear dynamics and the reliance model
//! - [`params_io`] / [`log_io`]: TOML parameter documents and CSV trial logs
//! - [`estimation`]: Kalman inference, EM, action-model MLE, particle filter
//! - [`policy`]: expected rewards, certainty-equivalent rollout, MPC, baselines
//! - [`simulation`]: closed-loop sessions and paired policy evaluation

pub mod domain;
pub mod dynamics;
pub mod estimation;
pub mod log_io;
pub mod params_io;
pub mod policy;
pub mod simulation;

/// Tool version embedded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
