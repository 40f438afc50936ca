//! Assistance-seeking policies: expected one-trial rewards, the
//! certainty-equivalent trust/engagement rollout driven by the autonomous
//! -attempt probability q, the receding-horizon optimization over q
//! sequences, and the greedy/random baselines.

use crate::domain::{
    CollectionComplexity, EnvironmentParams, HumanAction, Outcome, RobotAction,
    TrackingComplexity, TRACKING_THRESHOLD,
};
use crate::dynamics::{reliance_probability, ActionModelParams, EngagementParams, TrustParams};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("horizon must be at least 1")]
    ZeroHorizon,
}

/// Certainty-equivalent rollout state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CEState {
    /// Mean trust.
    pub t_bar: f64,
    /// Mean engagement.
    pub g_bar: f64,
    /// Probability that the previous trial's experience was positive.
    pub epsilon: f64,
    /// Previous trial's autonomous-attempt probability.
    pub prev_q: f64,
}

/// Event probabilities for the trust dynamics, each conditioned on the robot
/// action stated in its event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaProbs(pub [f64; 7]);

/// Event probabilities for the engagement dynamics, one block per robot
/// action; each block sums to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiProbs(pub [f64; 8]);

/// Which success probability enters the high-complexity relied events.
///
/// `ComplexityMatched` uses the high-complexity success rate there;
/// `LowComplexityThroughout` reproduces a published variant that uses the
/// low-complexity rate in every relied event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThetaConvention {
    ComplexityMatched,
    LowComplexityThroughout,
}

/// How the step-shaped tracking reward enters the planning objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackingRewardMode {
    /// The realized step function on the mean score.
    HardThreshold,
    /// The threshold indicator replaced by the Gaussian exceedance
    /// probability, keeping the objective differentiable.
    GaussianSmoothed,
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / core::f64::consts::SQRT_2))
}

/// Expected collection reward for one trial under the given robot action,
/// marginalizing complexity, human action, and outcome.
pub fn expected_collection_reward(
    t: f64,
    g: f64,
    action: RobotAction,
    env: &EnvironmentParams,
    params: &ActionModelParams,
) -> f64 {
    match action {
        RobotAction::SeekAssistance => 1.0,
        RobotAction::AttemptAutonomous => {
            let mut total = 0.0;
            for (c1, w) in [
                (CollectionComplexity::Low, 1.0 - env.beta1),
                (CollectionComplexity::High, env.beta1),
            ] {
                let pr = reliance_probability(params, t, g, c1);
                let p_suc = env.p_suc(c1);
                let auto = p_suc * 3.0 + (1.0 - p_suc) * -4.0;
                total += w * (pr * auto /* + (1 - pr) * 0 for interruption */);
            }
            total
        }
    }
}

/// Expected tracking reward for the next trial given the robot action taken
/// now: the certainty-equivalent engagement step under that action determines
/// the mean score, then the threshold reward is taken either hard or
/// Gaussian-smoothed.
pub fn expected_tracking_reward(
    ce: &CEState,
    action: RobotAction,
    env: &EnvironmentParams,
    params: &EngagementParams,
    mode: TrackingRewardMode,
) -> f64 {
    let phi = phi_probabilities(ce, env);
    let offset = match action {
        RobotAction::AttemptAutonomous => (4..8).map(|i| phi.0[i] * params.b[i]).sum::<f64>(),
        RobotAction::SeekAssistance => (0..4).map(|i| phi.0[i] * params.b[i]).sum::<f64>(),
    };
    let g_next = params.a * ce.g_bar + offset;
    let p_bar = params.c * g_next;
    let reward_if_hit = (1.0 - env.beta2) * 0.25 + env.beta2 * 0.5;
    match mode {
        TrackingRewardMode::HardThreshold => {
            if p_bar >= TRACKING_THRESHOLD {
                reward_if_hit
            } else {
                0.0
            }
        }
        TrackingRewardMode::GaussianSmoothed => {
            let s = (params.r_measure + params.c * params.c * params.q_process).sqrt();
            std_normal_cdf((p_bar - TRACKING_THRESHOLD) / s) * reward_if_hit
        }
    }
}

/// Trust-event probabilities at a mean state, each conditioned on the robot
/// action stated in the event.
pub fn theta_probabilities(
    t: f64,
    g: f64,
    env: &EnvironmentParams,
    params: &ActionModelParams,
    convention: ThetaConvention,
) -> ThetaProbs {
    let pr_low = reliance_probability(params, t, g, CollectionComplexity::Low);
    let pr_high = reliance_probability(params, t, g, CollectionComplexity::High);
    let p_suc_relied_high = match convention {
        ThetaConvention::ComplexityMatched => env.p_suc_high,
        ThetaConvention::LowComplexityThroughout => env.p_suc_low,
    };
    let b1 = env.beta1;
    ThetaProbs([
        (1.0 - b1) * env.p_suc_low * pr_low,
        (1.0 - b1) * (1.0 - env.p_suc_low) * pr_low,
        1.0 - b1,
        b1 * p_suc_relied_high * pr_high,
        b1 * (1.0 - p_suc_relied_high) * pr_high,
        b1,
        (1.0 - b1) * (1.0 - pr_low) + b1 * (1.0 - pr_high),
    ])
}

/// Engagement-event probabilities from the positive-experience probability
/// and the tracking-speed rate. The two robot-action blocks are identical.
pub fn phi_probabilities(ce: &CEState, env: &EnvironmentParams) -> PhiProbs {
    let e = ce.epsilon;
    let b2 = env.beta2;
    let block = [(1.0 - b2) * e, b2 * e, (1.0 - b2) * (1.0 - e), b2 * (1.0 - e)];
    PhiProbs([
        block[0], block[1], block[2], block[3], block[0], block[1], block[2], block[3],
    ])
}

/// Probability that the current trial's experience resolves positive, given
/// the previous attempt probability and mean state: assistance always counts
/// as positive; an autonomous attempt is positive only when relied on and
/// successful.
pub fn epsilon_update(
    prev_q: f64,
    t_prev: f64,
    g_prev: f64,
    env: &EnvironmentParams,
    params: &ActionModelParams,
) -> f64 {
    let success_given_auto = (1.0 - env.beta1)
        * env.p_suc_low
        * reliance_probability(params, t_prev, g_prev, CollectionComplexity::Low)
        + env.beta1
            * env.p_suc_high
            * reliance_probability(params, t_prev, g_prev, CollectionComplexity::High);
    prev_q * success_given_auto + (1.0 - prev_q)
}

/// One certainty-equivalent transition under attempt probability q: both mean
/// states advance through their probability-averaged event columns, and the
/// positive-experience probability is refreshed from the pre-step state.
pub fn ce_step(
    ce: &CEState,
    q: f64,
    env: &EnvironmentParams,
    trust: &TrustParams,
    engagement: &EngagementParams,
    action: &ActionModelParams,
) -> CEState {
    let theta = theta_probabilities(ce.t_bar, ce.g_bar, env, action, ThetaConvention::ComplexityMatched);
    let bt_auto: f64 = [0usize, 1, 3, 4, 6].iter().map(|&i| theta.0[i] * trust.b[i]).sum();
    let bt_assist: f64 = [2usize, 5].iter().map(|&i| theta.0[i] * trust.b[i]).sum();
    let phi = phi_probabilities(ce, env);
    let bg_auto: f64 = (4..8).map(|i| phi.0[i] * engagement.b[i]).sum();
    let bg_assist: f64 = (0..4).map(|i| phi.0[i] * engagement.b[i]).sum();
    CEState {
        t_bar: trust.a * ce.t_bar + bt_auto * q + bt_assist * (1.0 - q),
        g_bar: engagement.a * ce.g_bar + bg_auto * q + bg_assist * (1.0 - q),
        epsilon: epsilon_update(q, ce.t_bar, ce.g_bar, env, action),
        prev_q: q,
    }
}

/// Solver knobs for the receding-horizon problem.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Constant-q interior starts in addition to all-0 and all-1.
    pub coarse_starts: usize,
    pub max_iters: usize,
    /// Stop when the projected gradient norm falls below this.
    pub grad_tol: f64,
    /// Central finite-difference step.
    pub fd_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { coarse_starts: 6, max_iters: 500, grad_tol: 1e-7, fd_step: 1e-5 }
    }
}

/// Receding-horizon policy configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MPCConfig {
    /// Look-ahead horizon N.
    pub horizon: usize,
    /// Environment rates assumed for future (not-yet-revealed) trials.
    pub env: EnvironmentParams,
    pub tracking_reward_mode: TrackingRewardMode,
    pub solver: SolverConfig,
    /// In deterministic mode, attempt autonomously iff q1 >= this threshold.
    pub action_threshold: f64,
    /// Sample the realized action from q1 instead of thresholding.
    pub stochastic_action: bool,
}

impl Default for MPCConfig {
    fn default() -> Self {
        Self {
            horizon: 5,
            env: EnvironmentParams::default_rates(),
            tracking_reward_mode: TrackingRewardMode::GaussianSmoothed,
            solver: SolverConfig::default(),
            action_threshold: 0.5,
            stochastic_action: false,
        }
    }
}

/// The revealed context of the trial being planned.
#[derive(Debug, Clone, Copy)]
pub struct KnownContext {
    pub c1: CollectionComplexity,
    pub c2: TrackingComplexity,
    pub prev_experience: Outcome,
}

/// Environment with the first-step rates pinned to the revealed context.
fn first_step_env(env: &EnvironmentParams, known: &KnownContext) -> EnvironmentParams {
    EnvironmentParams {
        beta1: match known.c1 {
            CollectionComplexity::Low => 0.0,
            CollectionComplexity::High => 1.0,
        },
        beta2: match known.c2 {
            TrackingComplexity::Slow => 0.0,
            TrackingComplexity::Normal => 1.0,
        },
        ..*env
    }
}

/// Objective value of a full q sequence from the given start state.
fn rollout_objective(
    qs: &[f64],
    start: &CEState,
    env_first: &EnvironmentParams,
    config: &MPCConfig,
    trust: &TrustParams,
    engagement: &EngagementParams,
    action: &ActionModelParams,
) -> f64 {
    let mut ce = *start;
    let mut total = 0.0;
    for (tau, &q) in qs.iter().enumerate() {
        let env = if tau == 0 { env_first } else { &config.env };
        let coll_auto = expected_collection_reward(
            ce.t_bar,
            ce.g_bar,
            RobotAction::AttemptAutonomous,
            env,
            action,
        );
        let r_coll = q * coll_auto + (1.0 - q) * 1.0;
        let track_auto = expected_tracking_reward(
            &ce,
            RobotAction::AttemptAutonomous,
            env,
            engagement,
            config.tracking_reward_mode,
        );
        let track_assist = expected_tracking_reward(
            &ce,
            RobotAction::SeekAssistance,
            env,
            engagement,
            config.tracking_reward_mode,
        );
        let r_track = q * track_auto + (1.0 - q) * track_assist;
        total += r_coll + r_track;
        ce = ce_step(&ce, q, env, trust, engagement, action);
    }
    total
}

/// Solves the receding-horizon problem by multi-start projected-gradient
/// ascent over the box [0,1]^N. Returns the best q sequence and its value.
pub fn mpc_solve(
    state: &CEState,
    known: &KnownContext,
    config: &MPCConfig,
    trust: &TrustParams,
    engagement: &EngagementParams,
    action: &ActionModelParams,
) -> Result<(Vec<f64>, f64), PolicyError> {
    let n = config.horizon;
    if n == 0 {
        return Err(PolicyError::ZeroHorizon);
    }
    let env_first = first_step_env(&config.env, known);
    let start = CEState {
        epsilon: match known.prev_experience {
            Outcome::Success => 1.0,
            Outcome::Failure => 0.0,
        },
        ..*state
    };
    let objective = |qs: &[f64]| {
        rollout_objective(qs, &start, &env_first, config, trust, engagement, action)
    };

    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; n], vec![1.0; n]];
    for k in 1..=config.solver.coarse_starts {
        let q0 = k as f64 / (config.solver.coarse_starts + 1) as f64;
        starts.push(vec![q0; n]);
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    for mut qs in starts {
        let mut value = objective(&qs);
        for _ in 0..config.solver.max_iters {
            // central finite differences on the box
            let h = config.solver.fd_step;
            let mut grad = vec![0.0; n];
            for i in 0..n {
                let saved = qs[i];
                let hi = (saved + h).min(1.0);
                let lo = (saved - h).max(0.0);
                qs[i] = hi;
                let f_hi = objective(&qs);
                qs[i] = lo;
                let f_lo = objective(&qs);
                qs[i] = saved;
                grad[i] = (f_hi - f_lo) / (hi - lo);
            }
            // projected gradient norm: active-bound components pointing
            // outward contribute nothing
            let pg_norm: f64 = (0..n)
                .map(|i| {
                    let g = grad[i];
                    if (qs[i] <= 0.0 && g < 0.0) || (qs[i] >= 1.0 && g > 0.0) {
                        0.0
                    } else {
                        g * g
                    }
                })
                .sum::<f64>()
                .sqrt();
            if pg_norm < config.solver.grad_tol {
                break;
            }
            // step-halving line search on the projected step
            let mut step = 1.0;
            let mut advanced = false;
            for _ in 0..40 {
                let cand: Vec<f64> = (0..n)
                    .map(|i| (qs[i] + step * grad[i]).clamp(0.0, 1.0))
                    .collect();
                let f_cand = objective(&cand);
                if f_cand > value + 1e-15 {
                    qs = cand;
                    value = f_cand;
                    advanced = true;
                    break;
                }
                step *= 0.5;
            }
            if !advanced {
                break;
            }
        }
        if best.as_ref().is_none_or(|(_, v)| value > *v) {
            best = Some((qs, value));
        }
    }
    Ok(best.expect("at least one start"))
}

/// Realizes the robot action from the first planned attempt probability.
pub fn mpc_policy_action<R: Rng>(q1: f64, config: &MPCConfig, rng: &mut R) -> RobotAction {
    let attempt = if config.stochastic_action {
        rng.gen::<f64>() < q1
    } else {
        q1 >= config.action_threshold
    };
    if attempt {
        RobotAction::AttemptAutonomous
    } else {
        RobotAction::SeekAssistance
    }
}

/// Baseline: always attempt autonomous collection.
pub fn greedy_action(_c1: CollectionComplexity, _c2: TrackingComplexity) -> RobotAction {
    RobotAction::AttemptAutonomous
}

/// Assistance rates of the randomized data-collection policy.
pub const RANDOM_ASSIST_RATE_LOW: f64 = 0.1;
pub const RANDOM_ASSIST_RATE_HIGH: f64 = 0.3;

/// Data-collection baseline: seek assistance with a complexity-dependent
/// fixed probability.
pub fn random_policy_action<R: Rng>(c1: CollectionComplexity, rng: &mut R) -> RobotAction {
    let rate = match c1 {
        CollectionComplexity::Low => RANDOM_ASSIST_RATE_LOW,
        CollectionComplexity::High => RANDOM_ASSIST_RATE_HIGH,
    };
    if rng.gen::<f64>() < rate {
        RobotAction::SeekAssistance
    } else {
        RobotAction::AttemptAutonomous
    }
}

/// Brute-force oracle for the expected collection reward: exhaustive
/// enumeration over complexity, human action, and outcome. Test support,
/// kept independent of `expected_collection_reward`.
pub fn enumerate_collection_reward(
    t: f64,
    g: f64,
    action: RobotAction,
    env: &EnvironmentParams,
    params: &ActionModelParams,
) -> f64 {
    use crate::domain::reward_collection;
    if action == RobotAction::SeekAssistance {
        return reward_collection(RobotAction::SeekAssistance, None, None).unwrap();
    }
    let mut total = 0.0;
    for (c1, w_c) in [
        (CollectionComplexity::Low, 1.0 - env.beta1),
        (CollectionComplexity::High, env.beta1),
    ] {
        let pr = reliance_probability(params, t, g, c1);
        for (ah, w_a) in [(HumanAction::Rely, pr), (HumanAction::Interrupt, 1.0 - pr)] {
            match ah {
                HumanAction::Interrupt => {
                    total += w_c
                        * w_a
                        * reward_collection(action, Some(ah), None).unwrap();
                }
                HumanAction::Rely => {
                    for (e, w_e) in
                        [(Outcome::Success, env.p_suc(c1)), (Outcome::Failure, 1.0 - env.p_suc(c1))]
                    {
                        total += w_c
                            * w_a
                            * w_e
                            * reward_collection(action, Some(ah), Some(e)).unwrap();
                    }
                }
            }
        }
    }
    total
}

/// One cell of a policy map: the first-step attempt probability and the
/// resulting deterministic action for a hypothetical mean state.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PolicyMapCell {
    pub t: f64,
    pub g: f64,
    pub c1: CollectionComplexity,
    pub c2: TrackingComplexity,
    pub prev_experience: Outcome,
    pub q1: f64,
    pub action: RobotAction,
}

/// Sweeps `mpc_solve` over a (T, G) grid for a fixed known context. Cells are
/// independent and computed in parallel; output order is row-major over
/// (t_values, g_values).
#[allow(clippy::too_many_arguments)]
pub fn policy_map(
    t_values: &[f64],
    g_values: &[f64],
    known: &KnownContext,
    config: &MPCConfig,
    trust: &TrustParams,
    engagement: &EngagementParams,
    action: &ActionModelParams,
) -> Result<Vec<PolicyMapCell>, PolicyError> {
    let cells: Vec<(f64, f64)> = t_values
        .iter()
        .flat_map(|&t| g_values.iter().map(move |&g| (t, g)))
        .collect();
    cells
        .into_par_iter()
        .map(|(t, g)| {
            let ce = CEState { t_bar: t, g_bar: g, epsilon: 1.0, prev_q: 1.0 };
            let (qs, _) = mpc_solve(&ce, known, config, trust, engagement, action)?;
            let q1 = qs[0];
            Ok(PolicyMapCell {
                t,
                g,
                c1: known.c1,
                c2: known.c2,
                prev_experience: known.prev_experience,
                q1,
                action: if q1 >= config.action_threshold {
                    RobotAction::AttemptAutonomous
                } else {
                    RobotAction::SeekAssistance
                },
            })
        })
        .collect()
}
