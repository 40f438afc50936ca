//! Exact inference for the scalar event-driven LDS shared by the trust and
//! engagement models: forward filter, RTS smoother with lag-one covariances,
//! and forward-filter backward-sampling for posterior trajectory draws.

use crate::dynamics::{EngagementParams, TrustParams};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("empty input")]
    EmptyInput,
    #[error("inputs and observations have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("event index {0} out of range for {1} events")]
    EventOutOfRange(usize, usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unidentifiable: {0}")]
    Unidentifiable(String),
    #[error("particle degeneracy: {0}")]
    Degeneracy(String),
}

/// Scalar Gaussian posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianBelief {
    pub fn new(mean: f64, variance: f64) -> Self {
        assert!(variance >= 0.0, "variance must be nonnegative");
        Self { mean, variance }
    }
}

/// A scalar LDS with a one-hot event input row: `x' = a x + b[u] + v`,
/// `y = c x + w`, `v ~ N(0, q)`, `w ~ N(0, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LdsModel {
    pub a: f64,
    pub b: Vec<f64>,
    pub c: f64,
    pub q: f64,
    pub r: f64,
}

impl From<&TrustParams> for LdsModel {
    fn from(p: &TrustParams) -> Self {
        Self { a: p.a, b: p.b.to_vec(), c: p.c, q: p.q_process, r: p.r_measure }
    }
}

impl From<&EngagementParams> for LdsModel {
    fn from(p: &EngagementParams) -> Self {
        Self { a: p.a, b: p.b.to_vec(), c: p.c, q: p.q_process, r: p.r_measure }
    }
}

/// One filtering step: the one-step-ahead prediction and the posterior after
/// folding in the observation (equal when the observation is missing).
#[derive(Debug, Clone, Copy)]
pub struct FilterStep {
    pub predicted: GaussianBelief,
    pub filtered: GaussianBelief,
}

/// Filtering output plus the observation log-likelihood.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub steps: Vec<FilterStep>,
    /// Sum of log p(y_t | y_1..t-1) over observed steps.
    pub loglik: f64,
}

/// Smoothed posteriors for a full sequence.
#[derive(Debug, Clone)]
pub struct SmootherOutput {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// `lag_one[t] = Cov(x_{t+1}, x_t | y_1..n)`, length n-1.
    pub lag_one: Vec<f64>,
}

fn check_inputs(
    model: &LdsModel,
    inputs: &[usize],
    observations: &[Option<f64>],
) -> Result<(), EstimationError> {
    if inputs.is_empty() {
        return Err(EstimationError::EmptyInput);
    }
    if inputs.len() != observations.len() {
        return Err(EstimationError::LengthMismatch(inputs.len(), observations.len()));
    }
    if let Some(&bad) = inputs.iter().find(|&&u| u >= model.b.len()) {
        return Err(EstimationError::EventOutOfRange(bad, model.b.len()));
    }
    Ok(())
}

const LN_2PI: f64 = 1.837877066409345483560659472811;

/// Forward Kalman filter over a sequence of events and (optionally missing)
/// observations. `inputs[t]` is the 0-based event index driving the
/// transition from `x_t` to `x_{t+1}`; the last input is not consumed.
/// The filtered belief at step t conditions on observations up to t.
pub fn kalman_filter(
    model: &LdsModel,
    inputs: &[usize],
    observations: &[Option<f64>],
    prior: GaussianBelief,
) -> Result<FilterOutput, EstimationError> {
    check_inputs(model, inputs, observations)?;
    let n = inputs.len();
    let mut steps = Vec::with_capacity(n);
    let mut loglik = 0.0;
    let mut mean = prior.mean;
    let mut var = prior.variance;
    for t in 0..n {
        if t > 0 {
            let u = inputs[t - 1];
            mean = model.a * mean + model.b[u];
            var = model.a * model.a * var + model.q;
        }
        let predicted = GaussianBelief { mean, variance: var };
        if let Some(y) = observations[t] {
            let innovation = y - model.c * mean;
            let s = model.c * model.c * var + model.r;
            if s <= 0.0 {
                return Err(EstimationError::Numerical(format!(
                    "non-positive innovation variance {s} at step {t}"
                )));
            }
            let gain = var * model.c / s;
            mean += gain * innovation;
            var *= 1.0 - gain * model.c;
            if var < 0.0 {
                // scalar update can only go negative through rounding
                var = 0.0;
            }
            loglik += -0.5 * (LN_2PI + s.ln() + innovation * innovation / s);
        }
        steps.push(FilterStep { predicted, filtered: GaussianBelief { mean, variance: var } });
    }
    Ok(FilterOutput { steps, loglik })
}

/// RTS smoother. Returns per-step smoothed means/variances and the lag-one
/// covariances needed by the EM M-step.
pub fn kalman_smooth(
    model: &LdsModel,
    inputs: &[usize],
    observations: &[Option<f64>],
    prior: GaussianBelief,
) -> Result<SmootherOutput, EstimationError> {
    let filt = kalman_filter(model, inputs, observations, prior)?;
    let n = filt.steps.len();
    let mut means = vec![0.0; n];
    let mut variances = vec![0.0; n];
    let mut lag_one = vec![0.0; n.saturating_sub(1)];
    means[n - 1] = filt.steps[n - 1].filtered.mean;
    variances[n - 1] = filt.steps[n - 1].filtered.variance;
    for t in (0..n - 1).rev() {
        let f = filt.steps[t].filtered;
        let pred_next = filt.steps[t + 1].predicted;
        let gain = if pred_next.variance > 0.0 {
            f.variance * model.a / pred_next.variance
        } else {
            0.0
        };
        means[t] = f.mean + gain * (means[t + 1] - pred_next.mean);
        variances[t] = (f.variance + gain * gain * (variances[t + 1] - pred_next.variance)).max(0.0);
        lag_one[t] = gain * variances[t + 1];
    }
    Ok(SmootherOutput { means, variances, lag_one })
}

/// Draws one latent trajectory from the joint smoothing posterior
/// (forward filter, backward sample).
pub fn sample_posterior_trajectory<R: Rng>(
    model: &LdsModel,
    inputs: &[usize],
    observations: &[Option<f64>],
    prior: GaussianBelief,
    rng: &mut R,
) -> Result<Vec<f64>, EstimationError> {
    let filt = kalman_filter(model, inputs, observations, prior)?;
    let n = filt.steps.len();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut traj = vec![0.0; n];
    let last = filt.steps[n - 1].filtered;
    traj[n - 1] = last.mean + last.variance.sqrt() * std_normal.sample(rng);
    for t in (0..n - 1).rev() {
        let f = filt.steps[t].filtered;
        let pred_next = filt.steps[t + 1].predicted;
        let gain = if pred_next.variance > 0.0 {
            f.variance * model.a / pred_next.variance
        } else {
            0.0
        };
        let mean = f.mean + gain * (traj[t + 1] - pred_next.mean);
        let var = (f.variance - gain * gain * pred_next.variance).max(0.0);
        traj[t] = mean + var.sqrt() * std_normal.sample(rng);
    }
    Ok(traj)
}
