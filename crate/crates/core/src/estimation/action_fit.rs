//! Monte-Carlo maximum likelihood for the sigmoid reliance model.
//!
//! Latent trust/engagement trajectories are drawn from the smoothing
//! posterior of the two LDSs (forward filter, backward sample), and each
//! trial's rely/interrupt likelihood is averaged over the draws before
//! taking the log — the simulated marginal likelihood of the choice given
//! the Gaussian observations. Averaging inside the log (rather than
//! averaging log-likelihoods) is what keeps the coefficients from being
//! attenuated by the posterior uncertainty in the latent covariates. The
//! objective is smooth but no longer concave, so gradient ascent with step
//! halving runs from multiple starts.

use super::em::Sequence;
use super::kalman::{sample_posterior_trajectory, EstimationError, GaussianBelief, LdsModel};
use crate::domain::{
    classify_engagement_event, classify_trust_event, experience_of, CollectionComplexity,
    HumanAction, Outcome, RobotAction, TrialRecord,
};
use crate::dynamics::{ActionModelParams, EngagementParams, SigmoidCoeffs, TrustParams};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct ActionFitConfig {
    /// Posterior trajectory draws per participant.
    pub mc_samples: usize,
    /// Gradient-ascent iteration cap per restart.
    pub max_iters: usize,
    /// Random restarts in addition to the zero start.
    pub restarts: usize,
    /// Bias magnitude at which the optimizer stops and flags separation.
    pub bias_cap: f64,
    /// Stop when the gradient norm of the per-observation mean log-likelihood
    /// falls below this.
    pub grad_tol: f64,
    pub trust_prior: GaussianBelief,
    pub engagement_prior: GaussianBelief,
}

impl Default for ActionFitConfig {
    fn default() -> Self {
        Self {
            mc_samples: 50,
            max_iters: 500,
            restarts: 10,
            bias_cap: 20.0,
            grad_tol: 1e-6,
            trust_prior: GaussianBelief::new(7.0, 4.0),
            engagement_prior: GaussianBelief::new(7.0, 4.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ActionFitReport {
    pub params: ActionModelParams,
    /// Mean log-likelihood per observation, per complexity (low, high).
    pub objective: (f64, f64),
    /// Perfect-separation flags per complexity: the bias hit its cap.
    pub separation: (bool, bool),
    /// Autonomous-attempt observation counts per complexity.
    pub n_obs: (usize, usize),
}

/// One reliance observation with its latent covariates across MC draws.
struct Observation {
    /// 1.0 for rely, 0.0 for interrupt.
    relied: f64,
    /// (trust, engagement) per posterior draw.
    latents: Vec<(f64, f64)>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    // log(sigmoid(x)) computed without overflow
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Builds the per-model event/observation sequences for one participant log.
pub fn sequences_from_records(
    records: &[TrialRecord],
) -> Result<(Sequence, Sequence), EstimationError> {
    let mut trust_inputs = Vec::with_capacity(records.len());
    let mut trust_obs = Vec::with_capacity(records.len());
    let mut eng_inputs = Vec::with_capacity(records.len());
    let mut eng_obs = Vec::with_capacity(records.len());
    let mut prev_experience = Outcome::Success;
    for rec in records {
        let theta = classify_trust_event(rec.c1, rec.robot_action, rec.human_action, rec.outcome)
            .map_err(|e| EstimationError::Numerical(format!("bad record: {e}")))?;
        trust_inputs.push(theta.index() as usize - 1);
        trust_obs.push(rec.trust_report);
        let phi = classify_engagement_event(rec.c2, rec.robot_action, prev_experience);
        eng_inputs.push(phi.index() as usize - 1);
        eng_obs.push(Some(rec.tracking_score));
        prev_experience = experience_of(rec.robot_action, rec.human_action, rec.outcome);
    }
    Ok(((trust_inputs, trust_obs), (eng_inputs, eng_obs)))
}

/// Mean per-observation log of the draw-averaged choice likelihood and its
/// gradient in (a_t, a_g, bias). Per trial: log((1/M) sum_m p(a | x_m)),
/// evaluated in log space for stability.
fn objective_and_gradient(obs: &[Observation], w: &SigmoidCoeffs) -> (f64, [f64; 3]) {
    let mut f = 0.0;
    let mut g = [0.0; 3];
    for o in obs {
        // log p(a | x_m) per draw, plus the gradient weight (1 - p) for rely
        // and -p for interrupt that d log p / dz evaluates to
        let mut log_p = Vec::with_capacity(o.latents.len());
        let mut max_lp = f64::NEG_INFINITY;
        for &(t, gg) in &o.latents {
            let z = w.a_t * t + w.a_g * gg + w.bias;
            let lp = if o.relied > 0.5 { log_sigmoid(z) } else { log_sigmoid(-z) };
            max_lp = max_lp.max(lp);
            log_p.push((lp, z));
        }
        let mut sum_r = 0.0;
        let mut grad_o = [0.0; 3];
        for (&(lp, z), &(t, gg)) in log_p.iter().zip(&o.latents) {
            let r = (lp - max_lp).exp();
            sum_r += r;
            let dz = if o.relied > 0.5 { 1.0 - sigmoid(z) } else { -sigmoid(z) };
            grad_o[0] += r * dz * t;
            grad_o[1] += r * dz * gg;
            grad_o[2] += r * dz;
        }
        f += max_lp + (sum_r / o.latents.len() as f64).ln();
        for j in 0..3 {
            g[j] += grad_o[j] / sum_r;
        }
    }
    let n = obs.len() as f64;
    (f / n, [g[0] / n, g[1] / n, g[2] / n])
}

/// Inverse of the covariate second-moment matrix E[(T, G, 1)(T, G, 1)'],
/// used to precondition the ascent direction. Plain gradient steps stall on
/// this problem: uncentered covariates make the logistic Hessian badly
/// conditioned, and the iterates stop far from the optimum along the nearly
/// flat (a_g, bias) direction.
fn preconditioner(obs: &[Observation]) -> [[f64; 3]; 3] {
    let mut m = [[0.0f64; 3]; 3];
    let mut n = 0.0;
    for o in obs {
        for &(t, g) in &o.latents {
            let x = [t, g, 1.0];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += x[i] * x[j];
                }
            }
            n += 1.0;
        }
    }
    for row in &mut m {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    // ridge for safety when covariates are degenerate
    for i in 0..3 {
        m[i][i] += 1e-8;
    }
    invert3(&m)
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let cof = |r1: usize, c1: usize, r2: usize, c2: usize| {
        m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]
    };
    [
        [cof(1, 1, 2, 2) / det, -cof(0, 1, 2, 2) / det, cof(0, 1, 1, 2) / det],
        [-cof(1, 0, 2, 2) / det, cof(0, 0, 2, 2) / det, -cof(0, 0, 1, 2) / det],
        [cof(1, 0, 2, 1) / det, -cof(0, 0, 2, 1) / det, cof(0, 0, 1, 1) / det],
    ]
}

fn mat_vec(m: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Maximizes the averaged objective from one start. Returns the coefficients,
/// the objective value, and whether the bias cap was hit.
fn ascend(
    obs: &[Observation],
    start: SigmoidCoeffs,
    precond: &[[f64; 3]; 3],
    config: &ActionFitConfig,
) -> (SigmoidCoeffs, f64, bool) {
    let mut w = start;
    let mut hit_cap = false;
    let (mut f, mut grad) = objective_and_gradient(obs, &w);
    for _ in 0..config.max_iters {
        let dir = mat_vec(precond, &grad);
        // preconditioned gradient norm, scale-free in the covariates
        let norm = (dir[0] * grad[0] + dir[1] * grad[1] + dir[2] * grad[2]).max(0.0).sqrt();
        if norm < config.grad_tol {
            break;
        }
        let mut step = 16.0;
        let mut advanced = false;
        for _ in 0..60 {
            let cand = SigmoidCoeffs {
                a_t: w.a_t + step * dir[0],
                a_g: w.a_g + step * dir[1],
                bias: (w.bias + step * dir[2]).clamp(-config.bias_cap, config.bias_cap),
            };
            let (fc, gc) = objective_and_gradient(obs, &cand);
            if fc > f {
                hit_cap = cand.bias.abs() >= config.bias_cap;
                w = cand;
                f = fc;
                grad = gc;
                advanced = true;
                break;
            }
            step *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    (w, f, hit_cap)
}

/// Fits the sigmoid reliance coefficients per complexity from trial logs,
/// marginalizing the latent states with `mc_samples` smoother-posterior draws
/// per participant.
pub fn fit_action_model<R: Rng>(
    logs: &[Vec<TrialRecord>],
    trust: &TrustParams,
    engagement: &EngagementParams,
    config: &ActionFitConfig,
    rng: &mut R,
) -> Result<ActionFitReport, EstimationError> {
    if logs.is_empty() {
        return Err(EstimationError::EmptyInput);
    }
    let trust_model = LdsModel::from(trust);
    let eng_model = LdsModel::from(engagement);

    let mut obs_low: Vec<Observation> = Vec::new();
    let mut obs_high: Vec<Observation> = Vec::new();
    for records in logs {
        if records.is_empty() {
            continue;
        }
        let ((t_in, t_obs), (g_in, g_obs)) = sequences_from_records(records)?;
        let mut t_draws = Vec::with_capacity(config.mc_samples);
        let mut g_draws = Vec::with_capacity(config.mc_samples);
        for _ in 0..config.mc_samples {
            t_draws.push(sample_posterior_trajectory(
                &trust_model,
                &t_in,
                &t_obs,
                config.trust_prior,
                rng,
            )?);
            g_draws.push(sample_posterior_trajectory(
                &eng_model,
                &g_in,
                &g_obs,
                config.engagement_prior,
                rng,
            )?);
        }
        for (t, rec) in records.iter().enumerate() {
            let Some(action) = rec.human_action else { continue };
            if rec.robot_action != RobotAction::AttemptAutonomous {
                continue;
            }
            let latents = (0..config.mc_samples)
                .map(|s| (t_draws[s][t], g_draws[s][t]))
                .collect();
            let o = Observation {
                relied: if action == HumanAction::Rely { 1.0 } else { 0.0 },
                latents,
            };
            match rec.c1 {
                CollectionComplexity::Low => obs_low.push(o),
                CollectionComplexity::High => obs_high.push(o),
            }
        }
    }

    for (name, obs) in [("low", &obs_low), ("high", &obs_high)] {
        if obs.is_empty() {
            return Err(EstimationError::Unidentifiable(format!(
                "no autonomous-attempt trials with a recorded human action in {name} complexity"
            )));
        }
    }

    let mut fit_one = |obs: &[Observation]| {
        // one-class data: the likelihood is maximized by pushing z to the
        // matching infinity, which a pure bias achieves — report the capped
        // bias and flag separation instead of chasing unbounded slopes
        let all_rely = obs.iter().all(|o| o.relied > 0.5);
        let all_interrupt = obs.iter().all(|o| o.relied < 0.5);
        if all_rely || all_interrupt {
            let sign = if all_rely { 1.0 } else { -1.0 };
            let w = SigmoidCoeffs { a_t: 0.0, a_g: 0.0, bias: sign * config.bias_cap };
            let (f, _) = objective_and_gradient(obs, &w);
            return (w, f, true);
        }
        let mut starts = vec![SigmoidCoeffs { a_t: 0.0, a_g: 0.0, bias: 0.0 }];
        for _ in 0..config.restarts {
            starts.push(SigmoidCoeffs {
                a_t: rng.gen_range(-1.0..1.0),
                a_g: rng.gen_range(-1.0..1.0),
                bias: rng.gen_range(-5.0..5.0),
            });
        }
        let precond = preconditioner(obs);
        let mut best: Option<(SigmoidCoeffs, f64, bool)> = None;
        for start in starts {
            let got = ascend(obs, start, &precond, config);
            if best.as_ref().is_none_or(|b| got.1 > b.1) {
                best = Some(got);
            }
        }
        best.expect("at least one start")
    };

    let (low, f_low, sep_low) = fit_one(&obs_low);
    let (high, f_high, sep_high) = fit_one(&obs_high);

    Ok(ActionFitReport {
        params: ActionModelParams { low, high },
        objective: (f_low, f_high),
        separation: (sep_low, sep_high),
        n_obs: (obs_low.len(), obs_high.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CollectionComplexity::*, HumanAction::*, Outcome::*, RobotAction::*, TrackingComplexity};
    use crate::dynamics::{default_paper_params, reliance_probability};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn record(
        i: u32,
        c1: CollectionComplexity,
        ah: HumanAction,
        p: f64,
        y: f64,
    ) -> TrialRecord {
        TrialRecord {
            participant_id: "p".into(),
            trial_index: i,
            c1,
            c2: TrackingComplexity::Slow,
            robot_action: AttemptAutonomous,
            human_action: Some(ah),
            outcome: if ah == Rely { Some(Success) } else { None },
            trust_report: Some(y),
            tracking_score: p,
        }
    }

    /// Noise-free logs: latent states pinned by exact observations.
    fn noise_free_logs(rng: &mut impl Rng, n_participants: usize, n_trials: usize) -> Vec<Vec<TrialRecord>> {
        let (_, _, action) = default_paper_params();
        (0..n_participants)
            .map(|_| {
                // constant latent state per participant, exactly observed
                let t = rng.gen_range(2.0..10.0);
                let g = rng.gen_range(2.0..10.0);
                (0..n_trials as u32)
                    .map(|i| {
                        let c1 = if rng.gen_bool(0.5) { Low } else { High };
                        let pr = reliance_probability(&action, t, g, c1);
                        let ah = if rng.gen_bool(pr) { Rely } else { Interrupt };
                        record(i + 1, c1, ah, (9.96 * g).clamp(0.0, 100.0), t)
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn recovers_high_coefficients_from_pinned_states() {
        let (trust, engagement, truth) = default_paper_params();
        // zero-noise models so the smoother pins the states to the observations
        let trust = TrustParams { q_process: 1e-9, r_measure: 1e-9, ..trust };
        let engagement = EngagementParams { q_process: 1e-9, r_measure: 1e-9, a: 0.0, ..engagement };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let logs = noise_free_logs(&mut rng, 60, 60);
        let config = ActionFitConfig { mc_samples: 5, restarts: 3, ..Default::default() };
        let report = fit_action_model(&logs, &trust, &engagement, &config, &mut rng).unwrap();
        let h = report.params.high;
        assert!((h.a_t - truth.high.a_t).abs() < 0.06, "a_t = {}", h.a_t);
        assert!((h.a_g - truth.high.a_g).abs() < 0.12, "a_g = {}", h.a_g);
        assert!((h.bias - truth.high.bias).abs() < 1.0, "bias = {}", h.bias);
        assert!(!report.separation.1);
    }

    #[test]
    fn all_rely_data_flags_separation() {
        let (trust, engagement, _) = default_paper_params();
        let logs: Vec<Vec<TrialRecord>> = vec![(1..=40)
            .map(|i| {
                let c1 = if i % 2 == 0 { Low } else { High };
                record(i, c1, Rely, 80.0, 7.0)
            })
            .collect()];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let config = ActionFitConfig { mc_samples: 10, restarts: 2, ..Default::default() };
        let report = fit_action_model(&logs, &trust, &engagement, &config, &mut rng).unwrap();
        assert!(report.separation.0 && report.separation.1);
        assert_eq!(report.params.low.bias, config.bias_cap);
        assert_eq!(report.params.high.bias, config.bias_cap);
    }

    #[test]
    fn missing_complexity_is_unidentifiable() {
        let (trust, engagement, _) = default_paper_params();
        let logs: Vec<Vec<TrialRecord>> =
            vec![(1..=20).map(|i| record(i, Low, Rely, 80.0, 7.0)).collect()];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let err = fit_action_model(&logs, &trust, &engagement, &ActionFitConfig::default(), &mut rng)
            .unwrap_err();
        assert!(matches!(err, EstimationError::Unidentifiable(_)));
    }

    #[test]
    fn degenerate_mc_equals_plug_in_loglik() {
        // S = 1 with a zero-variance smoother: the objective is the plain
        // logistic log-likelihood at the posterior means
        let obs = vec![
            Observation { relied: 1.0, latents: vec![(7.0, 8.0)] },
            Observation { relied: 0.0, latents: vec![(3.0, 2.0)] },
        ];
        let w = SigmoidCoeffs { a_t: 0.2, a_g: 0.4, bias: -2.7 };
        let (f, _) = objective_and_gradient(&obs, &w);
        let z1 = 0.2 * 7.0 + 0.4 * 8.0 - 2.7;
        let z2 = 0.2 * 3.0 + 0.4 * 2.0 - 2.7;
        let plug_in = (log_sigmoid(z1) + log_sigmoid(-z2)) / 2.0;
        assert!((f - plug_in).abs() < 1e-12);
    }
}
