//! Generative human-behavior models: the trust and engagement linear
//! dynamical systems and the sigmoid reliance model.
//!
//! Trust evolves as `T' = A_T * T + B_T . u + v` with a scaled noisy report
//! `y = C_T * T + w`; engagement as `G' = A_G * G + B_G . u + v` with the
//! tracking score `p = C_G * G + w`. The reliance probability is
//! `sigmoid(a_T * T + a_G * G + b)` with complexity-specific coefficients.
//! All step functions take the noise term explicitly so deterministic replay
//! is a matter of passing zero.

use crate::domain::{CollectionComplexity, DomainError, EngagementEvent, HumanAction, TrustEvent};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Trust LDS coefficients and noise variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustParams {
    /// State coefficient A_T, in (0, 1).
    pub a: f64,
    /// Event input row B_T, entries in [-1, 1].
    pub b: [f64; 7],
    /// Measurement scale C_T, in [0, 1].
    pub c: f64,
    /// Process noise variance.
    pub q_process: f64,
    /// Measurement noise variance.
    pub r_measure: f64,
}

/// Engagement LDS coefficients and noise variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementParams {
    /// State coefficient A_G, in [0, 1].
    pub a: f64,
    /// Event input row B_G, entries in [0, 10].
    pub b: [f64; 8],
    /// Measurement scale C_G, in [0, 10].
    pub c: f64,
    /// Process noise variance.
    pub q_process: f64,
    /// Measurement noise variance.
    pub r_measure: f64,
}

/// Sigmoid coefficients for one collection complexity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidCoeffs {
    /// Trust weight a_T.
    pub a_t: f64,
    /// Engagement weight a_G.
    pub a_g: f64,
    /// Bias b.
    pub bias: f64,
}

/// Reliance-model coefficients for both complexities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionModelParams {
    pub low: SigmoidCoeffs,
    pub high: SigmoidCoeffs,
}

impl ActionModelParams {
    pub fn coeffs(&self, c1: CollectionComplexity) -> SigmoidCoeffs {
        match c1 {
            CollectionComplexity::Low => self.low,
            CollectionComplexity::High => self.high,
        }
    }
}

/// Latent state of the simulated or estimated human.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub trust: f64,
    pub engagement: f64,
}

/// Diagnostic bounds: the model itself does not bound the latent states, but
/// values far outside the scales the parameters were estimated on indicate a
/// misconfigured simulation.
pub fn latent_state_suspicious(s: LatentState) -> bool {
    s.trust.abs() > 12.0 || !(-2.0..=12.0).contains(&s.engagement)
}

/// The parameter estimates reported with the models.
pub fn default_paper_params() -> (TrustParams, EngagementParams, ActionModelParams) {
    let trust = TrustParams {
        a: 0.92,
        b: [0.76, -0.38, 0.26, 0.78, -0.43, 0.52, -0.12],
        c: 1.00,
        q_process: 0.22,
        r_measure: 0.22,
    };
    let engagement = EngagementParams {
        a: 0.19,
        b: [7.47, 6.72, 7.24, 6.38, 7.30, 6.51, 7.06, 6.59],
        c: 9.96,
        q_process: 1.44,
        r_measure: 3.79,
    };
    let action = ActionModelParams {
        low: SigmoidCoeffs { a_t: 0.09, a_g: 0.08, bias: 3.6 },
        high: SigmoidCoeffs { a_t: 0.20, a_g: 0.40, bias: -2.7 },
    };
    (trust, engagement, action)
}

/// One trust transition: `A_T * t + B_T . one_hot(event) + noise`.
pub fn trust_step(params: &TrustParams, t: f64, event: TrustEvent, noise: f64) -> f64 {
    params.a * t + params.b[event.index() as usize - 1] + noise
}

/// Trust report model: `C_T * t + noise`.
pub fn trust_measure(params: &TrustParams, t: f64, noise: f64) -> f64 {
    params.c * t + noise
}

/// One engagement transition: `A_G * g + B_G . one_hot(event) + noise`.
pub fn engagement_step(params: &EngagementParams, g: f64, event: EngagementEvent, noise: f64) -> f64 {
    params.a * g + params.b[event.index() as usize - 1] + noise
}

/// Tracking-score model in generative mode: `C_G * g + noise`, clamped to the
/// percentage range. Likelihood evaluation uses the unclamped Gaussian
/// density instead (see the estimation module).
pub fn performance_measure(params: &EngagementParams, g: f64, noise: f64) -> f64 {
    (params.c * g + noise).clamp(0.0, 100.0)
}

/// Unclamped tracking-score mean, for likelihood evaluation.
pub fn performance_mean(params: &EngagementParams, g: f64) -> f64 {
    params.c * g
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability that the human relies on an autonomous attempt.
pub fn reliance_probability(
    params: &ActionModelParams,
    t: f64,
    g: f64,
    c1: CollectionComplexity,
) -> f64 {
    let w = params.coeffs(c1);
    sigmoid(w.a_t * t + w.a_g * g + w.bias)
}

/// Bernoulli draw from the reliance model.
pub fn sample_human_action<R: Rng>(
    params: &ActionModelParams,
    t: f64,
    g: f64,
    c1: CollectionComplexity,
    rng: &mut R,
) -> HumanAction {
    if rng.gen::<f64>() < reliance_probability(params, t, g, c1) {
        HumanAction::Rely
    } else {
        HumanAction::Interrupt
    }
}

impl TrustParams {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(DomainError::OutOfRange(format!("A_T = {} not in (0,1)", self.a)));
        }
        if self.b.iter().any(|&x| !(-1.0..=1.0).contains(&x)) {
            return Err(DomainError::OutOfRange(format!("B_T = {:?} not in [-1,1]^7", self.b)));
        }
        if !(0.0..=1.0).contains(&self.c) {
            return Err(DomainError::OutOfRange(format!("C_T = {} not in [0,1]", self.c)));
        }
        if self.q_process < 0.0 || self.r_measure < 0.0 {
            return Err(DomainError::OutOfRange("trust variance < 0".into()));
        }
        Ok(())
    }
}

impl EngagementParams {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !(0.0..=1.0).contains(&self.a) {
            return Err(DomainError::OutOfRange(format!("A_G = {} not in [0,1]", self.a)));
        }
        if self.b.iter().any(|&x| !(0.0..=10.0).contains(&x)) {
            return Err(DomainError::OutOfRange(format!("B_G = {:?} not in [0,10]^8", self.b)));
        }
        if !(0.0..=10.0).contains(&self.c) {
            return Err(DomainError::OutOfRange(format!("C_G = {} not in [0,10]", self.c)));
        }
        if self.q_process < 0.0 || self.r_measure < 0.0 {
            return Err(DomainError::OutOfRange("engagement variance < 0".into()));
        }
        Ok(())
    }
}
