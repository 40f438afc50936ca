//! Particle filter over the joint (trust, engagement) state for online
//! estimation when trust reports are unavailable. Observations per trial are
//! the human's rely/interrupt choice (Bernoulli through the sigmoid model),
//! the tracking score (Gaussian), and optionally a trust report (Gaussian).

use super::kalman::EstimationError;
use crate::domain::{CollectionComplexity, EngagementEvent, HumanAction, TrustEvent};
use crate::dynamics::{
    engagement_step, performance_mean, reliance_probability, trust_step, ActionModelParams,
    EngagementParams, LatentState, TrustParams,
};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Weighted particle representation of the latent (T, G) belief.
#[derive(Debug, Clone)]
pub struct ParticleBelief {
    pub particles: Vec<LatentState>,
    /// Normalized weights.
    pub weights: Vec<f64>,
}

/// Likelihood floor applied before declaring degeneracy.
const LIKELIHOOD_FLOOR: f64 = 1e-300;

impl ParticleBelief {
    /// Initializes particles from independent Gaussian priors on T and G.
    pub fn from_prior<R: Rng>(
        n: usize,
        trust_mean: f64,
        trust_var: f64,
        engagement_mean: f64,
        engagement_var: f64,
        rng: &mut R,
    ) -> Self {
        let nt = Normal::new(trust_mean, trust_var.sqrt()).expect("valid prior");
        let ng = Normal::new(engagement_mean, engagement_var.sqrt()).expect("valid prior");
        let particles = (0..n)
            .map(|_| LatentState { trust: nt.sample(rng), engagement: ng.sample(rng) })
            .collect();
        Self { particles, weights: vec![1.0 / n as f64; n] }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Effective sample size 1 / sum(w^2).
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Weighted posterior mean.
pub fn pf_estimate(belief: &ParticleBelief) -> LatentState {
    let mut t = 0.0;
    let mut g = 0.0;
    for (p, w) in belief.particles.iter().zip(&belief.weights) {
        t += w * p.trust;
        g += w * p.engagement;
    }
    LatentState { trust: t, engagement: g }
}

/// Observations available from one completed trial.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrialObservations {
    /// The human's choice during an autonomous attempt, with the collection
    /// complexity it was made under.
    pub human_action: Option<(HumanAction, CollectionComplexity)>,
    /// Tracking score for the trial.
    pub tracking_score: Option<f64>,
    /// Trust report, when the participant gave one.
    pub trust_report: Option<f64>,
}

/// The classified events of one completed trial.
#[derive(Debug, Clone, Copy)]
pub struct TrialEvents {
    pub trust: TrustEvent,
    pub engagement: EngagementEvent,
}

fn gaussian_log_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (d * d / var + var.ln() + core::f64::consts::TAU.ln())
}

/// Systematic resampling with a single uniform draw.
fn systematic_resample<R: Rng>(belief: &ParticleBelief, rng: &mut R) -> ParticleBelief {
    let n = belief.len();
    let step = 1.0 / n as f64;
    let mut u = rng.gen::<f64>() * step;
    let mut cum = belief.weights[0];
    let mut i = 0;
    let mut particles = Vec::with_capacity(n);
    for _ in 0..n {
        while u > cum && i + 1 < n {
            i += 1;
            cum += belief.weights[i];
        }
        particles.push(belief.particles[i]);
        u += step;
    }
    ParticleBelief { particles, weights: vec![step; n] }
}

/// One particle-filter update for a completed trial: reweight by the trial's
/// observation likelihoods at the current states, resample if the effective
/// sample size drops below half the particle count, then propagate every
/// particle through the trust and engagement dynamics with sampled process
/// noise. The returned belief is over the next trial's starting state.
pub fn pf_step<R: Rng>(
    belief: &ParticleBelief,
    trust: &TrustParams,
    engagement: &EngagementParams,
    action: &ActionModelParams,
    events: TrialEvents,
    observations: &TrialObservations,
    rng: &mut R,
) -> Result<ParticleBelief, EstimationError> {
    if belief.is_empty() {
        return Err(EstimationError::EmptyInput);
    }
    let n = belief.len();

    // reweight by the product of available likelihoods; Gaussian channels
    // with zero measurement variance carry no usable density and are skipped
    let use_tracking = observations.tracking_score.is_some() && engagement.r_measure > 0.0;
    let use_report = observations.trust_report.is_some() && trust.r_measure > 0.0;
    let has_obs = observations.human_action.is_some() || use_tracking || use_report;

    let mut weights = belief.weights.clone();
    if has_obs {
        for (i, p) in belief.particles.iter().enumerate() {
            let mut log_lik = 0.0;
            if let Some((ah, c1)) = observations.human_action {
                let pr = reliance_probability(action, p.trust, p.engagement, c1);
                log_lik += match ah {
                    HumanAction::Rely => pr.ln(),
                    HumanAction::Interrupt => (1.0 - pr).ln(),
                };
            }
            if use_tracking {
                log_lik += gaussian_log_density(
                    observations.tracking_score.unwrap(),
                    performance_mean(engagement, p.engagement),
                    engagement.r_measure,
                );
            }
            if use_report {
                log_lik += gaussian_log_density(
                    observations.trust_report.unwrap(),
                    trust.c * p.trust,
                    trust.r_measure,
                );
            }
            weights[i] *= log_lik.exp().max(LIKELIHOOD_FLOOR);
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(EstimationError::Degeneracy(format!(
                "all particle weights vanished (sum = {total})"
            )));
        }
        for w in &mut weights {
            *w /= total;
        }
    }

    let mut updated = ParticleBelief { particles: belief.particles.clone(), weights };
    if updated.effective_sample_size() < n as f64 / 2.0 {
        updated = systematic_resample(&updated, rng);
    }

    // propagate
    let proc_t = Normal::new(0.0, trust.q_process.sqrt())
        .map_err(|e| EstimationError::Numerical(e.to_string()))?;
    let proc_g = Normal::new(0.0, engagement.q_process.sqrt())
        .map_err(|e| EstimationError::Numerical(e.to_string()))?;
    for p in &mut updated.particles {
        p.trust = trust_step(trust, p.trust, events.trust, proc_t.sample(rng));
        p.engagement =
            engagement_step(engagement, p.engagement, events.engagement, proc_g.sample(rng));
    }
    Ok(updated)
}
