//! On-disk parameter document. Keys mirror the model symbols (`A_T`,
//! `B_T`, `sigma2_T`, ...) so a fitted document reads like the parameter
//! tables it stores.

use crate::domain::{DomainError, EnvironmentParams};
use crate::dynamics::{ActionModelParams, EngagementParams, SigmoidCoeffs, TrustParams};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParamsIoError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse parameter document {path}: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
    #[error("invalid parameters: {0}")]
    Invalid(#[from] DomainError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrustDoc {
    #[serde(rename = "A_T")]
    a: f64,
    #[serde(rename = "B_T")]
    b: [f64; 7],
    #[serde(rename = "C_T")]
    c: f64,
    #[serde(rename = "sigma2_T")]
    sigma2_process: f64,
    #[serde(rename = "sigma2_y")]
    sigma2_measure: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EngagementDoc {
    #[serde(rename = "A_G")]
    a: f64,
    #[serde(rename = "B_G")]
    b: [f64; 8],
    #[serde(rename = "C_G")]
    c: f64,
    #[serde(rename = "sigma2_G")]
    sigma2_process: f64,
    #[serde(rename = "sigma2_p")]
    sigma2_measure: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SigmoidDoc {
    #[serde(rename = "a_T")]
    a_t: f64,
    #[serde(rename = "a_G")]
    a_g: f64,
    b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ActionModelDoc {
    low: SigmoidDoc,
    high: SigmoidDoc,
}

/// The full parameter set as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsDoc {
    trust: TrustDoc,
    engagement: EngagementDoc,
    action_model: ActionModelDoc,
    environment: EnvironmentParams,
}

/// A complete, validated parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub trust: TrustParams,
    pub engagement: EngagementParams,
    pub action: ActionModelParams,
    pub env: EnvironmentParams,
}

impl ModelParams {
    /// The shipped default: reported model estimates plus the experiment's
    /// environment rates.
    pub fn paper_defaults() -> Self {
        let (trust, engagement, action) = crate::dynamics::default_paper_params();
        Self {
            trust,
            engagement,
            action,
            env: EnvironmentParams::default_rates(),
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        self.trust.validate()?;
        self.engagement.validate()?;
        self.env.validate()?;
        Ok(())
    }
}

impl From<&ModelParams> for ParamsDoc {
    fn from(p: &ModelParams) -> Self {
        ParamsDoc {
            trust: TrustDoc {
                a: p.trust.a,
                b: p.trust.b,
                c: p.trust.c,
                sigma2_process: p.trust.q_process,
                sigma2_measure: p.trust.r_measure,
            },
            engagement: EngagementDoc {
                a: p.engagement.a,
                b: p.engagement.b,
                c: p.engagement.c,
                sigma2_process: p.engagement.q_process,
                sigma2_measure: p.engagement.r_measure,
            },
            action_model: ActionModelDoc {
                low: SigmoidDoc {
                    a_t: p.action.low.a_t,
                    a_g: p.action.low.a_g,
                    b: p.action.low.bias,
                },
                high: SigmoidDoc {
                    a_t: p.action.high.a_t,
                    a_g: p.action.high.a_g,
                    b: p.action.high.bias,
                },
            },
            environment: p.env,
        }
    }
}

impl From<ParamsDoc> for ModelParams {
    fn from(d: ParamsDoc) -> Self {
        ModelParams {
            trust: TrustParams {
                a: d.trust.a,
                b: d.trust.b,
                c: d.trust.c,
                q_process: d.trust.sigma2_process,
                r_measure: d.trust.sigma2_measure,
            },
            engagement: EngagementParams {
                a: d.engagement.a,
                b: d.engagement.b,
                c: d.engagement.c,
                q_process: d.engagement.sigma2_process,
                r_measure: d.engagement.sigma2_measure,
            },
            action: ActionModelParams {
                low: SigmoidCoeffs {
                    a_t: d.action_model.low.a_t,
                    a_g: d.action_model.low.a_g,
                    bias: d.action_model.low.b,
                },
                high: SigmoidCoeffs {
                    a_t: d.action_model.high.a_t,
                    a_g: d.action_model.high.a_g,
                    bias: d.action_model.high.b,
                },
            },
            env: d.environment,
        }
    }
}

/// Serializes a parameter set to the document text.
pub fn params_to_string(params: &ModelParams) -> String {
    toml::to_string_pretty(&ParamsDoc::from(params)).expect("parameter document serializes")
}

/// Writes a parameter document.
pub fn save_params(params: &ModelParams, path: &Path) -> Result<(), ParamsIoError> {
    std::fs::write(path, params_to_string(params)).map_err(|source| ParamsIoError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Reads and validates a parameter document.
pub fn load_params(path: &Path) -> Result<ModelParams, ParamsIoError> {
    let text = std::fs::read_to_string(path).map_err(|source| ParamsIoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let doc: ParamsDoc = toml::from_str(&text).map_err(|source| ParamsIoError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    let params = ModelParams::from(doc);
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_paper_defaults() {
        let params = ModelParams::paper_defaults();
        let text = params_to_string(&params);
        let doc: ParamsDoc = toml::from_str(&text).unwrap();
        let back = ModelParams::from(doc);
        assert_eq!(params, back);
        assert!(text.contains("A_T"));
        assert!(text.contains("sigma2_p"));
    }

    #[test]
    fn load_rejects_out_of_range() {
        let mut params = ModelParams::paper_defaults();
        params.trust.a = 1.5;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        save_params(&params, &path).unwrap();
        assert!(load_params(&path).is_err());
    }

    #[test]
    fn shipped_default_document_matches_code() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../default_params.toml");
        let loaded = load_params(&path).unwrap();
        assert_eq!(loaded, ModelParams::paper_defaults());
    }
}
