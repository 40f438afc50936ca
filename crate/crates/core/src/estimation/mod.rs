//! Parameter and state estimation: exact Kalman inference, EM for the two
//! LDSs, Monte-Carlo MLE for the reliance model, and the online particle
//! filter.

pub mod action_fit;
pub mod em;
pub mod kalman;
pub mod particle;

pub use action_fit::{fit_action_model, sequences_from_records, ActionFitConfig, ActionFitReport};
pub use em::{em_fit_lds, EmConfig, EmReport, LdsBounds, Sequence, EM_MONOTONICITY_TOL};
pub use kalman::{
    kalman_filter, kalman_smooth, sample_posterior_trajectory, EstimationError, FilterOutput,
    FilterStep, GaussianBelief, LdsModel, SmootherOutput,
};
pub use particle::{
    pf_estimate, pf_step, ParticleBelief, TrialEvents, TrialObservations,
};
