//! Closed-loop harness: a synthetic supervisor generated by the stochastic
//! behavior models, session orchestration under a chosen robot policy,
//! reward accounting, and paired Monte-Carlo policy comparison.

use crate::domain::{
    classify_engagement_event, classify_trust_event, experience_of, reward_collection,
    reward_tracking, CollectionComplexity, HumanAction, Outcome, RobotAction, TrackingComplexity,
    TrialRecord,
};
use crate::dynamics::{
    engagement_step, performance_measure, sample_human_action, trust_measure, trust_step,
    LatentState,
};
use crate::estimation::{
    pf_estimate, pf_step, EstimationError, ParticleBelief, TrialEvents, TrialObservations,
};
use crate::params_io::ModelParams;
use crate::policy::{
    greedy_action, mpc_policy_action, mpc_solve, random_policy_action, CEState, KnownContext,
    MPCConfig, PolicyError,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("n_trials must be at least 1")]
    NoTrials,
    #[error("n_sessions must be at least 1")]
    NoSessions,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error("internal: {0}")]
    Internal(String),
}

/// Deterministic seed derivation for independent streams: splitmix64 over
/// the master seed mixed with a stream tag. Used everywhere a child
/// generator is needed so results are independent of execution order.
pub fn child_seed(master: u64, tag: u64) -> u64 {
    fn splitmix64(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E3779B97F4A7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }
    splitmix64(master ^ splitmix64(tag))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Mpc,
    Greedy,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexitySchedule {
    /// Equal counts per complexity level, order permuted per seed; the two
    /// task schedules are permuted independently.
    BalancedPermuted,
    /// i.i.d. Bernoulli draws at the environment rates.
    Iid,
}

/// Gaussian initial-state distribution for the synthetic supervisor.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InitialStateDist {
    pub trust_mean: f64,
    pub trust_std: f64,
    pub engagement_mean: f64,
    pub engagement_std: f64,
}

impl Default for InitialStateDist {
    fn default() -> Self {
        Self { trust_mean: 7.0, trust_std: 0.5, engagement_mean: 7.0, engagement_std: 0.5 }
    }
}

/// Particle-filter defaults for online state estimation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PfConfig {
    pub particles: usize,
    pub trust_prior_mean: f64,
    pub trust_prior_var: f64,
    pub engagement_prior_mean: f64,
    pub engagement_prior_var: f64,
}

impl Default for PfConfig {
    fn default() -> Self {
        Self {
            particles: 2000,
            trust_prior_mean: 7.0,
            trust_prior_var: 1.0,
            engagement_prior_mean: 7.0,
            engagement_prior_var: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionConfig {
    pub n_trials: usize,
    pub schedule: ComplexitySchedule,
    pub policy: PolicyKind,
    pub init: InitialStateDist,
    /// Seed for the complexity schedules, kept separate so paired policy
    /// comparisons can share schedules.
    pub schedule_seed: u64,
    /// Seed for the synthetic supervisor: the initial latent state and one
    /// noise substream per trial (human action, outcome, measurement and
    /// process noise). Per-trial substreams keep paired sessions aligned on
    /// trials where the two policies act identically.
    pub human_seed: u64,
    /// Seed for robot-side randomness: stochastic action realization and the
    /// particle filter.
    pub robot_seed: u64,
    pub mpc: MPCConfig,
    pub pf: PfConfig,
}

impl SessionConfig {
    pub fn new(policy: PolicyKind, n_trials: usize, master_seed: u64) -> Self {
        Self {
            n_trials,
            schedule: ComplexitySchedule::BalancedPermuted,
            policy,
            init: InitialStateDist::default(),
            schedule_seed: child_seed(master_seed, 0),
            human_seed: child_seed(master_seed, 1),
            robot_seed: child_seed(master_seed, 2),
            mpc: MPCConfig::default(),
            pf: PfConfig::default(),
        }
    }
}

/// One simulated trial with everything the evaluation needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionTrial {
    pub record: TrialRecord,
    /// Ground-truth latent state at the start of the trial.
    pub latent: LatentState,
    /// Particle-filter estimate the policy acted on (MPC sessions only).
    pub estimate: Option<LatentState>,
    /// First planned attempt probability (MPC sessions only).
    pub q1: Option<f64>,
    pub reward_collection: f64,
    pub reward_tracking: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionResult {
    pub trials: Vec<SessionTrial>,
    pub total_collection: f64,
    pub total_tracking: f64,
    pub total_score: f64,
    pub interruptions: usize,
    pub assists: usize,
}

/// Advances the synthetic supervisor through one trial under the given robot
/// action: samples the human action and outcome, emits the tracking score and
/// trust report, classifies both events, and steps both latent dynamics.
pub fn run_trial<R: Rng>(
    state: LatentState,
    c1: CollectionComplexity,
    c2: TrackingComplexity,
    robot_action: RobotAction,
    prev_experience: Outcome,
    participant_id: &str,
    trial_index: u32,
    params: &ModelParams,
    rng: &mut R,
) -> Result<(LatentState, TrialRecord, (f64, f64)), SimulationError> {
    let (human_action, outcome) = match robot_action {
        RobotAction::SeekAssistance => (None, None),
        RobotAction::AttemptAutonomous => {
            let ah = sample_human_action(&params.action, state.trust, state.engagement, c1, rng);
            let outcome = match ah {
                HumanAction::Interrupt => None,
                HumanAction::Rely => Some(if rng.gen::<f64>() < params.env.p_suc(c1) {
                    Outcome::Success
                } else {
                    Outcome::Failure
                }),
            };
            (Some(ah), outcome)
        }
    };

    let meas_g = Normal::new(0.0, params.engagement.r_measure.sqrt())
        .map_err(|e| SimulationError::Internal(e.to_string()))?;
    let meas_t = Normal::new(0.0, params.trust.r_measure.sqrt())
        .map_err(|e| SimulationError::Internal(e.to_string()))?;
    let proc_t = Normal::new(0.0, params.trust.q_process.sqrt())
        .map_err(|e| SimulationError::Internal(e.to_string()))?;
    let proc_g = Normal::new(0.0, params.engagement.q_process.sqrt())
        .map_err(|e| SimulationError::Internal(e.to_string()))?;

    let tracking_score = performance_measure(&params.engagement, state.engagement, meas_g.sample(rng));
    let trust_report = trust_measure(&params.trust, state.trust, meas_t.sample(rng));

    let theta = classify_trust_event(c1, robot_action, human_action, outcome)
        .map_err(|e| SimulationError::Internal(e.to_string()))?;
    let phi = classify_engagement_event(c2, robot_action, prev_experience);

    let next = LatentState {
        trust: trust_step(&params.trust, state.trust, theta, proc_t.sample(rng)),
        engagement: engagement_step(&params.engagement, state.engagement, phi, proc_g.sample(rng)),
    };

    let record = TrialRecord {
        participant_id: participant_id.to_string(),
        trial_index,
        c1,
        c2,
        robot_action,
        human_action,
        outcome,
        trust_report: Some(trust_report),
        tracking_score,
    };
    let r_coll = reward_collection(robot_action, human_action, outcome)
        .map_err(|e| SimulationError::Internal(e.to_string()))?;
    let r_track = reward_tracking(c2, tracking_score)
        .map_err(|e| SimulationError::Internal(e.to_string()))?;
    Ok((next, record, (r_coll, r_track)))
}

fn balanced_schedule<T: Copy, R: Rng>(a: T, b: T, n: usize, rng: &mut R) -> Vec<T> {
    let mut v: Vec<T> = (0..n).map(|i| if i < n / 2 { a } else { b }).collect();
    v.shuffle(rng);
    v
}

fn make_schedules(
    config: &SessionConfig,
    env_beta1: f64,
    env_beta2: f64,
) -> (Vec<CollectionComplexity>, Vec<TrackingComplexity>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.schedule_seed);
    match config.schedule {
        ComplexitySchedule::BalancedPermuted => {
            let c1 = balanced_schedule(
                CollectionComplexity::High,
                CollectionComplexity::Low,
                config.n_trials,
                &mut rng,
            );
            let c2 = balanced_schedule(
                TrackingComplexity::Normal,
                TrackingComplexity::Slow,
                config.n_trials,
                &mut rng,
            );
            (c1, c2)
        }
        ComplexitySchedule::Iid => {
            let c1 = (0..config.n_trials)
                .map(|_| {
                    if rng.gen::<f64>() < env_beta1 {
                        CollectionComplexity::High
                    } else {
                        CollectionComplexity::Low
                    }
                })
                .collect();
            let c2 = (0..config.n_trials)
                .map(|_| {
                    if rng.gen::<f64>() < env_beta2 {
                        TrackingComplexity::Normal
                    } else {
                        TrackingComplexity::Slow
                    }
                })
                .collect();
            (c1, c2)
        }
    }
}

/// Runs one session under the configured policy. MPC sessions maintain a
/// particle belief from the robot-visible observations only (human actions
/// and tracking scores, never trust reports or ground truth).
pub fn run_session(
    config: &SessionConfig,
    params: &ModelParams,
    participant_id: &str,
) -> Result<SessionResult, SimulationError> {
    if config.n_trials == 0 {
        return Err(SimulationError::NoTrials);
    }
    let (c1s, c2s) = make_schedules(config, params.env.beta1, params.env.beta2);

    let mut init_rng = ChaCha8Rng::seed_from_u64(child_seed(config.human_seed, 0));
    let human_stream = child_seed(config.human_seed, 1);
    let mut policy_rng = ChaCha8Rng::seed_from_u64(child_seed(config.robot_seed, 0));
    let mut pf_rng = ChaCha8Rng::seed_from_u64(child_seed(config.robot_seed, 1));

    let mut state = LatentState {
        trust: config.init.trust_mean + config.init.trust_std * init_rng.sample::<f64, _>(rand_distr::StandardNormal),
        engagement: config.init.engagement_mean
            + config.init.engagement_std * init_rng.sample::<f64, _>(rand_distr::StandardNormal),
    };
    let mut belief = match config.policy {
        PolicyKind::Mpc => Some(ParticleBelief::from_prior(
            config.pf.particles,
            config.pf.trust_prior_mean,
            config.pf.trust_prior_var,
            config.pf.engagement_prior_mean,
            config.pf.engagement_prior_var,
            &mut pf_rng,
        )),
        _ => None,
    };

    // the planner assumes the session's true success rates; only the future
    // complexity mix stays at the configured assumed rates
    let mut mpc_cfg = config.mpc.clone();
    mpc_cfg.env.p_suc_low = params.env.p_suc_low;
    mpc_cfg.env.p_suc_high = params.env.p_suc_high;

    let mut prev_experience = Outcome::Success;
    let mut trials = Vec::with_capacity(config.n_trials);
    let mut total_collection = 0.0;
    let mut total_tracking = 0.0;
    let mut interruptions = 0;
    let mut assists = 0;

    for t in 0..config.n_trials {
        let (c1, c2) = (c1s[t], c2s[t]);
        let (robot_action, estimate, q1) = match config.policy {
            PolicyKind::Greedy => (greedy_action(c1, c2), None, None),
            PolicyKind::Random => (random_policy_action(c1, &mut policy_rng), None, None),
            PolicyKind::Mpc => {
                let est = pf_estimate(belief.as_ref().expect("belief present for MPC"));
                let ce = CEState {
                    t_bar: est.trust,
                    g_bar: est.engagement,
                    epsilon: 1.0, // overridden by the known context
                    prev_q: 1.0,
                };
                let known = KnownContext { c1, c2, prev_experience };
                let (qs, _) = mpc_solve(
                    &ce,
                    &known,
                    &mpc_cfg,
                    &params.trust,
                    &params.engagement,
                    &params.action,
                )?;
                let action = mpc_policy_action(qs[0], &mpc_cfg, &mut policy_rng);
                (action, Some(est), Some(qs[0]))
            }
        };

        // fresh substream per trial so paired sessions stay aligned past a
        // trial where the two policies diverge
        let mut trial_rng = ChaCha8Rng::seed_from_u64(child_seed(human_stream, t as u64));
        let (next, record, (r_coll, r_track)) = run_trial(
            state,
            c1,
            c2,
            robot_action,
            prev_experience,
            participant_id,
            t as u32 + 1,
            params,
            &mut trial_rng,
        )?;

        if let Some(b) = belief.as_mut() {
            let events = TrialEvents {
                trust: classify_trust_event(c1, robot_action, record.human_action, record.outcome)
                    .map_err(|e| SimulationError::Internal(e.to_string()))?,
                engagement: classify_engagement_event(c2, robot_action, prev_experience),
            };
            let observations = TrialObservations {
                human_action: record.human_action.map(|ah| (ah, c1)),
                tracking_score: Some(record.tracking_score),
                trust_report: None,
            };
            *b = pf_step(
                b,
                &params.trust,
                &params.engagement,
                &params.action,
                events,
                &observations,
                &mut pf_rng,
            )?;
        }

        match record.human_action {
            Some(HumanAction::Interrupt) => interruptions += 1,
            _ => {}
        }
        if robot_action == RobotAction::SeekAssistance {
            assists += 1;
        }
        prev_experience = experience_of(robot_action, record.human_action, record.outcome);
        total_collection += r_coll;
        total_tracking += r_track;
        trials.push(SessionTrial {
            record,
            latent: state,
            estimate,
            q1,
            reward_collection: r_coll,
            reward_tracking: r_track,
        });
        state = next;
    }

    Ok(SessionResult {
        trials,
        total_collection,
        total_tracking,
        total_score: total_collection + total_tracking,
        interruptions,
        assists,
    })
}

/// Simulates the data-collection experiment: the randomized assistance
/// policy over balanced permuted schedules, trust reports emitted every
/// trial. The returned logs feed the estimation pipeline.
pub fn generate_synthetic_logs(
    n_participants: usize,
    n_trials: usize,
    params: &ModelParams,
    seed: u64,
) -> Result<Vec<Vec<TrialRecord>>, SimulationError> {
    let mut logs = Vec::with_capacity(n_participants);
    for p in 0..n_participants {
        let config = SessionConfig {
            init: InitialStateDist { trust_std: 0.5, engagement_std: 0.5, ..Default::default() },
            ..SessionConfig::new(PolicyKind::Random, n_trials, child_seed(seed, p as u64))
        };
        let id = format!("p{:03}", p + 1);
        let result = run_session(&config, params, &id)?;
        logs.push(result.trials.into_iter().map(|t| t.record).collect());
    }
    Ok(logs)
}

/// Per-policy summary across sessions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub mean_score: f64,
    pub median_score: f64,
    /// Bootstrap 95% CI on the mean score.
    pub mean_ci: (f64, f64),
    pub total_interruptions: usize,
    pub total_assists: usize,
    pub scores: Vec<f64>,
}

/// Paired comparison of two policies over shared complexity schedules.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub first: PolicySummary,
    pub second: PolicySummary,
    /// Mean of the per-session score differences (first minus second).
    pub mean_diff: f64,
    /// Bootstrap 95% CI on the mean difference.
    pub diff_ci: (f64, f64),
    pub n_sessions: usize,
    pub n_trials: usize,
}

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

fn bootstrap_mean_ci(values: &[f64], rng: &mut ChaCha8Rng) -> (f64, f64) {
    let n = values.len();
    let mut means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..n {
                s += values[rng.gen_range(0..n)];
            }
            s / n as f64
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (means[(BOOTSTRAP_RESAMPLES as f64 * 0.025) as usize], means[(BOOTSTRAP_RESAMPLES as f64 * 0.975) as usize])
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn summarize(policy: PolicyKind, sessions: &[SessionResult], rng: &mut ChaCha8Rng) -> PolicySummary {
    let scores: Vec<f64> = sessions.iter().map(|s| s.total_score).collect();
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    PolicySummary {
        policy,
        mean_score: mean,
        median_score: median(&scores),
        mean_ci: bootstrap_mean_ci(&scores, rng),
        total_interruptions: sessions.iter().map(|s| s.interruptions).sum(),
        total_assists: sessions.iter().map(|s| s.assists).sum(),
        scores,
    }
}

/// Settings for a paired policy comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub first: PolicyKind,
    pub second: PolicyKind,
    pub n_sessions: usize,
    pub n_trials: usize,
    pub schedule: ComplexitySchedule,
    pub init: InitialStateDist,
    pub pf: PfConfig,
    pub mpc: MPCConfig,
    pub seed: u64,
}

impl EvaluationConfig {
    pub fn new(
        first: PolicyKind,
        second: PolicyKind,
        n_sessions: usize,
        n_trials: usize,
        seed: u64,
    ) -> Self {
        Self {
            first,
            second,
            n_sessions,
            n_trials,
            schedule: ComplexitySchedule::BalancedPermuted,
            init: InitialStateDist::default(),
            pf: PfConfig::default(),
            mpc: MPCConfig::default(),
            seed,
        }
    }
}

/// Runs paired sessions for two policies: each session index shares one
/// complexity schedule across the two policies while noise streams stay
/// independent. Sessions execute in parallel; seeding is per session, so the
/// result does not depend on the thread count.
pub fn evaluate_policies(
    config: &EvaluationConfig,
    params: &ModelParams,
) -> Result<EvaluationReport, SimulationError> {
    let EvaluationConfig { first, second, n_sessions, n_trials, seed, .. } = *config;
    if n_sessions == 0 {
        return Err(SimulationError::NoSessions);
    }
    let run_pair = |i: usize| -> Result<(SessionResult, SessionResult), SimulationError> {
        // the pair shares one simulated supervisor (schedule + human noise);
        // robot-side randomness is per policy
        let schedule_seed = child_seed(seed, 4 * i as u64);
        let human_seed = child_seed(seed, 4 * i as u64 + 1);
        let mk = |policy: PolicyKind, robot_tag: u64| SessionConfig {
            n_trials,
            schedule: config.schedule,
            policy,
            init: config.init,
            schedule_seed,
            human_seed,
            robot_seed: child_seed(seed, robot_tag),
            mpc: config.mpc.clone(),
            pf: config.pf,
        };
        let id = format!("s{:04}", i + 1);
        let a = run_session(&mk(first, 4 * i as u64 + 2), params, &id)?;
        let b = run_session(&mk(second, 4 * i as u64 + 3), params, &id)?;
        Ok((a, b))
    };
    let pairs: Vec<(SessionResult, SessionResult)> = (0..n_sessions)
        .into_par_iter()
        .map(run_pair)
        .collect::<Result<_, _>>()?;
    let (a_sessions, b_sessions): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();

    let mut boot_rng = ChaCha8Rng::seed_from_u64(child_seed(seed, u64::MAX));
    let summary_a = summarize(first, &a_sessions, &mut boot_rng);
    let summary_b = summarize(second, &b_sessions, &mut boot_rng);
    let diffs: Vec<f64> = summary_a
        .scores
        .iter()
        .zip(&summary_b.scores)
        .map(|(x, y)| x - y)
        .collect();
    let mean_diff = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let diff_ci = bootstrap_mean_ci(&diffs, &mut boot_rng);

    Ok(EvaluationReport {
        first: summary_a,
        second: summary_b,
        mean_diff,
        diff_ci,
        n_sessions,
        n_trials,
    })
}
