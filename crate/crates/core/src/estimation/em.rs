//! EM parameter estimation for the scalar event-driven LDS.
//!
//! The E-step runs the RTS smoother per sequence; the M-step maximizes the
//! expected complete-data log-likelihood in closed form, with (A, B) solved
//! by coordinate ascent on the box-constrained quadratic so every update is
//! an ascent step even at the bounds.

use super::kalman::{kalman_filter, kalman_smooth, EstimationError, GaussianBelief, LdsModel};

/// Box bounds on the LDS parameters, applied during the M-step.
#[derive(Debug, Clone, Copy)]
pub struct LdsBounds {
    pub a_min: f64,
    pub a_max: f64,
    pub b_min: f64,
    pub b_max: f64,
    pub c_min: f64,
    pub c_max: f64,
}

impl LdsBounds {
    /// Declared trust-model ranges: A in (0,1), B in [-1,1]^7, C in [0,1].
    pub fn trust() -> Self {
        Self { a_min: 1e-6, a_max: 1.0 - 1e-6, b_min: -1.0, b_max: 1.0, c_min: 0.0, c_max: 1.0 }
    }

    /// Declared engagement-model ranges: A in [0,1], B in [0,10]^8, C in [0,10].
    pub fn engagement() -> Self {
        Self { a_min: 0.0, a_max: 1.0, b_min: 0.0, b_max: 10.0, c_min: 0.0, c_max: 10.0 }
    }
}

#[derive(Debug, Clone)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop when the log-likelihood improvement drops below this.
    pub tol: f64,
    pub bounds: LdsBounds,
    /// Fixed initial-state prior, shared by all sequences.
    pub prior: GaussianBelief,
}

impl EmConfig {
    pub fn trust_default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-6,
            bounds: LdsBounds::trust(),
            prior: GaussianBelief::new(7.0, 4.0),
        }
    }

    pub fn engagement_default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-6,
            bounds: LdsBounds::engagement(),
            prior: GaussianBelief::new(7.0, 4.0),
        }
    }
}

/// One observed sequence: 0-based event indices and (optionally missing)
/// observations, same length.
pub type Sequence = (Vec<usize>, Vec<Option<f64>>);

#[derive(Debug, Clone)]
pub struct EmReport {
    pub model: LdsModel,
    /// Marginal log-likelihood evaluated at the start of each iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Event indices never observed in the data; their B entries are held at
    /// the initialization value.
    pub unidentified_events: Vec<usize>,
}

/// Allowed backward drift in the log-likelihood before EM is declared broken.
pub const EM_MONOTONICITY_TOL: f64 = 1e-8;

const VAR_FLOOR: f64 = 1e-10;

fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    x.clamp(lo, hi)
}

/// Data-driven initialization: A from the pooled lag-1 autocorrelation of
/// observations, B from per-event observation differences, C near the
/// observation/state scale ratio, variances from residuals.
fn initialize(sequences: &[Sequence], n_events: usize, bounds: &LdsBounds) -> LdsModel {
    let mut ys: Vec<f64> = Vec::new();
    let mut lag_num = 0.0;
    let mut lag_den = 0.0;
    for (_, obs) in sequences {
        for t in 1..obs.len() {
            if let (Some(y0), Some(y1)) = (obs[t - 1], obs[t]) {
                lag_num += y0 * y1;
                lag_den += y0 * y0;
            }
        }
        ys.extend(obs.iter().flatten());
    }
    let mean_y = if ys.is_empty() { 0.0 } else { ys.iter().sum::<f64>() / ys.len() as f64 };
    let a0 = if lag_den > 0.0 {
        clamp(lag_num / lag_den, bounds.a_min.max(0.05), bounds.a_max.min(0.95))
    } else {
        0.5
    };
    // typical latent scale around 8 on both reporting scales
    let c0 = clamp((mean_y.abs() / 8.0).max(1.0), bounds.c_min.max(1e-3), bounds.c_max);

    let mut b_sum = vec![0.0; n_events];
    let mut b_cnt = vec![0usize; n_events];
    let mut resid_sq = 0.0;
    let mut resid_n = 0usize;
    for (inputs, obs) in sequences {
        for t in 1..obs.len() {
            if let (Some(y0), Some(y1)) = (obs[t - 1], obs[t]) {
                let d = (y1 - a0 * y0) / c0;
                let k = inputs[t - 1];
                b_sum[k] += d;
                b_cnt[k] += 1;
            }
        }
    }
    let b0: Vec<f64> = (0..n_events)
        .map(|k| {
            if b_cnt[k] > 0 {
                clamp(b_sum[k] / b_cnt[k] as f64, bounds.b_min, bounds.b_max)
            } else {
                clamp(0.0, bounds.b_min, bounds.b_max)
            }
        })
        .collect();
    for (inputs, obs) in sequences {
        for t in 1..obs.len() {
            if let (Some(y0), Some(y1)) = (obs[t - 1], obs[t]) {
                let r = (y1 - a0 * y0) / c0 - b0[inputs[t - 1]];
                resid_sq += r * r;
                resid_n += 1;
            }
        }
    }
    let resid_var = if resid_n > 0 { resid_sq / resid_n as f64 } else { 1.0 };
    LdsModel {
        a: a0,
        b: b0,
        c: c0,
        q: (resid_var * 0.5).max(1e-3),
        r: (resid_var * 0.5 * c0 * c0).max(1e-3),
    }
}

/// Expected sufficient statistics accumulated across sequences.
#[derive(Debug, Default)]
struct SufficientStats {
    /// Over transition sources t: sum of E[x_t^2].
    s_xx: f64,
    /// Sum of E[x_t x_{t+1}].
    s_x1x: f64,
    /// Sum of E[x_{t+1}^2].
    s_x1x1: f64,
    /// Per event: transition count, sum E[x_t], sum E[x_{t+1}].
    n_k: Vec<f64>,
    sx_k: Vec<f64>,
    sx1_k: Vec<f64>,
    /// Over observed steps: sum y E[x], sum E[x^2], sum y^2, count.
    o_yx: f64,
    o_xx: f64,
    o_yy: f64,
    o_n: f64,
    n_transitions: f64,
}

fn accumulate(
    stats: &mut SufficientStats,
    inputs: &[usize],
    observations: &[Option<f64>],
    means: &[f64],
    variances: &[f64],
    lag_one: &[f64],
) {
    let n = inputs.len();
    for t in 0..n - 1 {
        let ex2 = variances[t] + means[t] * means[t];
        let ex1x = lag_one[t] + means[t] * means[t + 1];
        let ex1sq = variances[t + 1] + means[t + 1] * means[t + 1];
        stats.s_xx += ex2;
        stats.s_x1x += ex1x;
        stats.s_x1x1 += ex1sq;
        let k = inputs[t];
        stats.n_k[k] += 1.0;
        stats.sx_k[k] += means[t];
        stats.sx1_k[k] += means[t + 1];
        stats.n_transitions += 1.0;
    }
    for t in 0..n {
        if let Some(y) = observations[t] {
            stats.o_yx += y * means[t];
            stats.o_xx += variances[t] + means[t] * means[t];
            stats.o_yy += y * y;
            stats.o_n += 1.0;
        }
    }
}

/// M-step for (a, b): coordinate ascent on the box-constrained quadratic
/// starting from the current values. Each coordinate update is an exact
/// 1-D constrained maximizer, so the expected likelihood never decreases.
fn solve_transition(
    stats: &SufficientStats,
    a_init: f64,
    b_init: &[f64],
    bounds: &LdsBounds,
    identified: &[bool],
) -> (f64, Vec<f64>) {
    let k = b_init.len();
    let mut a = a_init;
    let mut b = b_init.to_vec();
    for _sweep in 0..200 {
        let mut max_delta: f64 = 0.0;
        // a coordinate: G_aa = s_xx, cross terms sx_k b_k
        if stats.s_xx > 0.0 {
            let cross: f64 = (0..k).map(|i| stats.sx_k[i] * b[i]).sum();
            let new_a = clamp((stats.s_x1x - cross) / stats.s_xx, bounds.a_min, bounds.a_max);
            max_delta = max_delta.max((new_a - a).abs());
            a = new_a;
        }
        for i in 0..k {
            if !identified[i] || stats.n_k[i] == 0.0 {
                continue;
            }
            let new_b = clamp(
                (stats.sx1_k[i] - a * stats.sx_k[i]) / stats.n_k[i],
                bounds.b_min,
                bounds.b_max,
            );
            max_delta = max_delta.max((new_b - b[i]).abs());
            b[i] = new_b;
        }
        if max_delta < 1e-13 {
            break;
        }
    }
    (a, b)
}

/// Fits the LDS by EM. Event columns never observed in the data are flagged
/// and held at their initialization values.
pub fn em_fit_lds(
    sequences: &[Sequence],
    n_events: usize,
    config: &EmConfig,
) -> Result<EmReport, EstimationError> {
    if sequences.is_empty() {
        return Err(EstimationError::EmptyInput);
    }
    for (inputs, obs) in sequences {
        if inputs.len() != obs.len() {
            return Err(EstimationError::LengthMismatch(inputs.len(), obs.len()));
        }
        if inputs.len() < 3 {
            return Err(EstimationError::EmptyInput);
        }
        if let Some(&bad) = inputs.iter().find(|&&u| u >= n_events) {
            return Err(EstimationError::EventOutOfRange(bad, n_events));
        }
    }

    let mut seen = vec![false; n_events];
    for (inputs, _) in sequences {
        for &u in &inputs[..inputs.len() - 1] {
            seen[u] = true;
        }
    }
    let unidentified_events: Vec<usize> =
        (0..n_events).filter(|&kk| !seen[kk]).collect();

    let mut model = initialize(sequences, n_events, &config.bounds);
    let mut loglik_trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..config.max_iters {
        iterations = iter + 1;
        // E-step under the current parameters, scoring them as a side effect
        let mut stats = SufficientStats {
            n_k: vec![0.0; n_events],
            sx_k: vec![0.0; n_events],
            sx1_k: vec![0.0; n_events],
            ..Default::default()
        };
        let mut loglik = 0.0;
        for (inputs, obs) in sequences {
            let filt = kalman_filter(&model, inputs, obs, config.prior)?;
            loglik += filt.loglik;
            let sm = kalman_smooth(&model, inputs, obs, config.prior)?;
            accumulate(&mut stats, inputs, obs, &sm.means, &sm.variances, &sm.lag_one);
        }
        if let Some(&prev) = loglik_trace.last() {
            // scale-aware: a decrease of a few ulps on a large log-likelihood
            // is round-off, not a broken M-step
            if loglik < prev - EM_MONOTONICITY_TOL * (1.0 + prev.abs()) {
                return Err(EstimationError::Numerical(format!(
                    "log-likelihood decreased from {prev} to {loglik} at iteration {iter}"
                )));
            }
            if loglik - prev < config.tol {
                loglik_trace.push(loglik);
                converged = true;
                break;
            }
        }
        loglik_trace.push(loglik);

        // M-step
        let (a, b) = solve_transition(&stats, model.a, &model.b, &config.bounds, &seen);
        let mut resid = stats.s_x1x1 - 2.0 * a * stats.s_x1x + a * a * stats.s_xx;
        for i in 0..n_events {
            resid += -2.0 * b[i] * stats.sx1_k[i]
                + 2.0 * a * b[i] * stats.sx_k[i]
                + b[i] * b[i] * stats.n_k[i];
        }
        let q = (resid / stats.n_transitions).max(VAR_FLOOR);

        let c = if stats.o_xx > 0.0 {
            clamp(stats.o_yx / stats.o_xx, config.bounds.c_min, config.bounds.c_max)
        } else {
            model.c
        };
        let r = if stats.o_n > 0.0 {
            ((stats.o_yy - 2.0 * c * stats.o_yx + c * c * stats.o_xx) / stats.o_n).max(VAR_FLOOR)
        } else {
            model.r
        };

        model = LdsModel { a, b, c, q, r };
    }

    Ok(EmReport { model, loglik_trace, iterations, converged, unidentified_events })
}
