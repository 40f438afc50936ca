//! Shared value types for the dual-task supervision setting: task
//! complexities, robot/human actions, collection outcomes, the discrete
//! trust/engagement events that drive the latent dynamics, and the two
//! team reward functions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by the domain layer.
#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    /// An (action, action, outcome) combination that cannot occur in a trial,
    /// e.g. an outcome recorded for an assistance request.
    #[error("inconsistent trial fields: {0}")]
    InconsistentTrial(String),

    /// A value outside its declared range.
    #[error("value out of range: {0}")]
    OutOfRange(String),

    /// A malformed trial-log row.
    #[error("bad log row {row}: {msg}")]
    BadLogRow { row: usize, msg: String },
}

/// Object-collection complexity: whether the manipulator's direct path to the
/// object is obstructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CollectionComplexity {
    Low,
    High,
}

/// Target-tracking complexity: ball speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrackingComplexity {
    Slow,
    Normal,
}

/// The robot's per-trial choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RobotAction {
    /// Attempt autonomous collection (a^R+).
    AttemptAutonomous,
    /// Halt and request human teleoperation (a^R-).
    SeekAssistance,
}

/// The supervisor's choice during an autonomous attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HumanAction {
    /// Let the autonomous collection proceed (a^H+).
    Rely,
    /// Take over via teleoperation (a^H-).
    Interrupt,
}

/// Result of a completed autonomous collection attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Failure,
}

/// One of the 7 discrete events driving the trust dynamics.
///
/// Indices follow the event table: 1-2 low-complexity relied attempts
/// (success/failure), 3 low-complexity assistance, 4-5 high-complexity relied
/// attempts, 6 high-complexity assistance, 7 interruption (any complexity).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrustEvent(u8);

impl TrustEvent {
    pub const COUNT: usize = 7;

    pub fn new(index: u8) -> Result<Self, DomainError> {
        if (1..=7).contains(&index) {
            Ok(Self(index))
        } else {
            Err(DomainError::OutOfRange(format!(
                "trust event index {index} not in 1..=7"
            )))
        }
    }

    /// 1-based event index.
    pub fn index(self) -> u8 {
        self.0
    }

    /// One-hot input vector u^T.
    pub fn one_hot(self) -> [f64; 7] {
        let mut v = [0.0; 7];
        v[self.0 as usize - 1] = 1.0;
        v
    }
}

/// One of the 8 discrete events driving the engagement dynamics.
///
/// Indices 1-4 are assistance trials, 5-8 autonomous attempts; within each
/// block the order is (slow,E+), (norm,E+), (slow,E-), (norm,E-).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EngagementEvent(u8);

impl EngagementEvent {
    pub const COUNT: usize = 8;

    pub fn new(index: u8) -> Result<Self, DomainError> {
        if (1..=8).contains(&index) {
            Ok(Self(index))
        } else {
            Err(DomainError::OutOfRange(format!(
                "engagement event index {index} not in 1..=8"
            )))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// One-hot input vector u^G.
    pub fn one_hot(self) -> [f64; 8] {
        let mut v = [0.0; 8];
        v[self.0 as usize - 1] = 1.0;
        v
    }
}

/// Environment probabilities: autonomous success rates per complexity and the
/// Bernoulli rates for the two complexity draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentParams {
    /// Autonomous collection success probability in low complexity.
    pub p_suc_low: f64,
    /// Autonomous collection success probability in high complexity.
    pub p_suc_high: f64,
    /// Probability that a collection trial is high complexity.
    pub beta1: f64,
    /// Probability that a tracking trial is normal speed.
    pub beta2: f64,
}

impl EnvironmentParams {
    /// The rates used in the data-collection experiment.
    pub fn default_rates() -> Self {
        Self {
            p_suc_low: 0.96,
            p_suc_high: 0.75,
            beta1: 0.5,
            beta2: 0.5,
        }
    }

    pub fn p_suc(&self, c1: CollectionComplexity) -> f64 {
        match c1 {
            CollectionComplexity::Low => self.p_suc_low,
            CollectionComplexity::High => self.p_suc_high,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        for (name, v) in [
            ("p_suc_low", self.p_suc_low),
            ("p_suc_high", self.p_suc_high),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(DomainError::OutOfRange(format!("{name} = {v}")));
            }
        }
        Ok(())
    }
}

/// One logged trial of the dual task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub participant_id: String,
    pub trial_index: u32,
    pub c1: CollectionComplexity,
    pub c2: TrackingComplexity,
    pub robot_action: RobotAction,
    /// Present iff the robot attempted autonomous collection.
    pub human_action: Option<HumanAction>,
    /// Present iff an autonomous attempt completed (robot attempted and the
    /// human relied).
    pub outcome: Option<Outcome>,
    /// Reported trust on the 11-point scale, when reported.
    pub trust_report: Option<f64>,
    /// Tracking performance in percent.
    pub tracking_score: f64,
}

impl TrialRecord {
    pub fn validate(&self) -> Result<(), DomainError> {
        check_consistent(self.robot_action, self.human_action, self.outcome)?;
        if !(0.0..=100.0).contains(&self.tracking_score) {
            return Err(DomainError::OutOfRange(format!(
                "tracking_score = {}",
                self.tracking_score
            )));
        }
        Ok(())
    }
}

fn check_consistent(
    robot_action: RobotAction,
    human_action: Option<HumanAction>,
    outcome: Option<Outcome>,
) -> Result<(), DomainError> {
    match robot_action {
        RobotAction::SeekAssistance => {
            if human_action.is_some() {
                return Err(DomainError::InconsistentTrial(
                    "human action recorded for an assistance request".into(),
                ));
            }
            if outcome.is_some() {
                return Err(DomainError::InconsistentTrial(
                    "outcome recorded for an assistance request".into(),
                ));
            }
        }
        RobotAction::AttemptAutonomous => match human_action {
            None => {
                return Err(DomainError::InconsistentTrial(
                    "autonomous attempt without a human action".into(),
                ))
            }
            Some(HumanAction::Interrupt) => {
                if outcome.is_some() {
                    return Err(DomainError::InconsistentTrial(
                        "outcome recorded for an interrupted attempt".into(),
                    ));
                }
            }
            Some(HumanAction::Rely) => {
                if outcome.is_none() {
                    return Err(DomainError::InconsistentTrial(
                        "relied attempt without an outcome".into(),
                    ));
                }
            }
        },
    }
    Ok(())
}

/// Maps a completed collection trial onto its trust event.
pub fn classify_trust_event(
    c1: CollectionComplexity,
    robot_action: RobotAction,
    human_action: Option<HumanAction>,
    outcome: Option<Outcome>,
) -> Result<TrustEvent, DomainError> {
    check_consistent(robot_action, human_action, outcome)?;
    let index = match (c1, robot_action, human_action, outcome) {
        (_, RobotAction::AttemptAutonomous, Some(HumanAction::Interrupt), None) => 7,
        (CollectionComplexity::Low, RobotAction::SeekAssistance, ..) => 3,
        (CollectionComplexity::High, RobotAction::SeekAssistance, ..) => 6,
        (CollectionComplexity::Low, _, Some(HumanAction::Rely), Some(Outcome::Success)) => 1,
        (CollectionComplexity::Low, _, Some(HumanAction::Rely), Some(Outcome::Failure)) => 2,
        (CollectionComplexity::High, _, Some(HumanAction::Rely), Some(Outcome::Success)) => 4,
        (CollectionComplexity::High, _, Some(HumanAction::Rely), Some(Outcome::Failure)) => 5,
        _ => unreachable!("consistency checked above"),
    };
    Ok(TrustEvent(index))
}

/// Maps a tracking trial onto its engagement event.
///
/// `prev_experience` must already be resolved per the convention: the previous
/// trial's autonomous outcome, `Failure` if the human interrupted, `Success`
/// if the robot asked for assistance.
pub fn classify_engagement_event(
    c2: TrackingComplexity,
    robot_action: RobotAction,
    prev_experience: Outcome,
) -> EngagementEvent {
    let block = match robot_action {
        RobotAction::SeekAssistance => 0,
        RobotAction::AttemptAutonomous => 4,
    };
    let within = match (c2, prev_experience) {
        (TrackingComplexity::Slow, Outcome::Success) => 1,
        (TrackingComplexity::Normal, Outcome::Success) => 2,
        (TrackingComplexity::Slow, Outcome::Failure) => 3,
        (TrackingComplexity::Normal, Outcome::Failure) => 4,
    };
    EngagementEvent(block + within)
}

/// Resolves the "previous experience" fed to the next trial's engagement
/// event from this trial's record.
pub fn experience_of(
    robot_action: RobotAction,
    human_action: Option<HumanAction>,
    outcome: Option<Outcome>,
) -> Outcome {
    match robot_action {
        RobotAction::SeekAssistance => Outcome::Success,
        RobotAction::AttemptAutonomous => match human_action {
            Some(HumanAction::Interrupt) => Outcome::Failure,
            _ => outcome.unwrap_or(Outcome::Failure),
        },
    }
}

/// Team reward for the object-collection task.
pub fn reward_collection(
    robot_action: RobotAction,
    human_action: Option<HumanAction>,
    outcome: Option<Outcome>,
) -> Result<f64, DomainError> {
    check_consistent(robot_action, human_action, outcome)?;
    Ok(match (robot_action, human_action, outcome) {
        (RobotAction::SeekAssistance, ..) => 1.0,
        (_, Some(HumanAction::Interrupt), _) => 0.0,
        (_, Some(HumanAction::Rely), Some(Outcome::Success)) => 3.0,
        (_, Some(HumanAction::Rely), Some(Outcome::Failure)) => -4.0,
        _ => unreachable!("consistency checked above"),
    })
}

/// Tracking threshold below which no tracking reward is earned.
pub const TRACKING_THRESHOLD: f64 = 75.0;

/// Reward for the target-tracking task given the performance percentage.
pub fn reward_tracking(c2: TrackingComplexity, p: f64) -> Result<f64, DomainError> {
    if !(0.0..=100.0).contains(&p) {
        return Err(DomainError::OutOfRange(format!("tracking score p = {p}")));
    }
    Ok(if p < TRACKING_THRESHOLD {
        0.0
    } else {
        match c2 {
            TrackingComplexity::Normal => 0.5,
            TrackingComplexity::Slow => 0.25,
        }
    })
}

// Trial-log CSV: `participant_id,trial,c1,c2,a_r,a_h,outcome,y_trust,p_track`
// with empty cells for absent optionals.

pub const LOG_HEADER: [&str; 9] = [
    "participant_id",
    "trial",
    "c1",
    "c2",
    "a_r",
    "a_h",
    "outcome",
    "y_trust",
    "p_track",
];

pub fn c1_code(c: CollectionComplexity) -> &'static str {
    match c {
        CollectionComplexity::Low => "L",
        CollectionComplexity::High => "H",
    }
}

pub fn c2_code(c: TrackingComplexity) -> &'static str {
    match c {
        TrackingComplexity::Slow => "slow",
        TrackingComplexity::Normal => "norm",
    }
}

impl TrialRecord {
    pub fn to_csv_row(&self) -> [String; 9] {
        [
            self.participant_id.clone(),
            self.trial_index.to_string(),
            c1_code(self.c1).to_string(),
            c2_code(self.c2).to_string(),
            match self.robot_action {
                RobotAction::AttemptAutonomous => "auto",
                RobotAction::SeekAssistance => "ask",
            }
            .to_string(),
            match self.human_action {
                Some(HumanAction::Rely) => "rely",
                Some(HumanAction::Interrupt) => "interrupt",
                None => "",
            }
            .to_string(),
            match self.outcome {
                Some(Outcome::Success) => "succ",
                Some(Outcome::Failure) => "fail",
                None => "",
            }
            .to_string(),
            self.trust_report.map(|y| y.to_string()).unwrap_or_default(),
            self.tracking_score.to_string(),
        ]
    }

    pub fn from_csv_row(row: usize, fields: &[&str]) -> Result<Self, DomainError> {
        let bad = |msg: String| DomainError::BadLogRow { row, msg };
        if fields.len() != 9 {
            return Err(bad(format!("expected 9 fields, got {}", fields.len())));
        }
        let trial_index: u32 = fields[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad trial index {:?}", fields[1])))?;
        let c1 = match fields[2].trim() {
            "L" => CollectionComplexity::Low,
            "H" => CollectionComplexity::High,
            other => return Err(bad(format!("bad c1 {other:?}"))),
        };
        let c2 = match fields[3].trim() {
            "slow" => TrackingComplexity::Slow,
            "norm" => TrackingComplexity::Normal,
            other => return Err(bad(format!("bad c2 {other:?}"))),
        };
        let robot_action = match fields[4].trim() {
            "auto" => RobotAction::AttemptAutonomous,
            "ask" => RobotAction::SeekAssistance,
            other => return Err(bad(format!("bad a_r {other:?}"))),
        };
        let human_action = match fields[5].trim() {
            "" => None,
            "rely" => Some(HumanAction::Rely),
            "interrupt" => Some(HumanAction::Interrupt),
            other => return Err(bad(format!("bad a_h {other:?}"))),
        };
        let outcome = match fields[6].trim() {
            "" => None,
            "succ" => Some(Outcome::Success),
            "fail" => Some(Outcome::Failure),
            other => return Err(bad(format!("bad outcome {other:?}"))),
        };
        let trust_report = match fields[7].trim() {
            "" => None,
            s => Some(
                s.parse::<f64>()
                    .map_err(|_| bad(format!("bad y_trust {s:?}")))?,
            ),
        };
        let tracking_score: f64 = fields[8]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad p_track {:?}", fields[8])))?;
        let rec = Self {
            participant_id: fields[0].trim().to_string(),
            trial_index,
            c1,
            c2,
            robot_action,
            human_action,
            outcome,
            trust_report,
            tracking_score,
        };
        rec.validate()
            .map_err(|e| bad(format!("inconsistent record: {e}")))?;
        Ok(rec)
    }
}
