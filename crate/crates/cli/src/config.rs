//! Run configuration: a single JSON document with `"schema_version": 1`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rhpert_core::dynamics::SubsystemSelector;
use rhpert_core::experiments::{ChainStateSpec, LimitSchedule, SweepGrid};
use rhpert_core::kernel::{validate_hypotheses, HypothesisReport};
use rhpert_core::records::ComplexRepr;
use rhpert_core::{InverseTemperature, ModelParams, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
}

fn default_cutoff() -> usize {
    25
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection { enabled: false, cutoff: default_cutoff() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemSection {
    pub selectors: Vec<SubsystemSelector>,
    /// Explicit argument vectors, one per selector. When absent, `samples`
    /// arguments per selector are drawn from the seeded generator.
    #[serde(default)]
    pub alphas: Option<Vec<Vec<ComplexRepr>>>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Arguments of the system's reduced characteristic function recorded
    /// at every step.
    #[serde(default = "default_thetas")]
    pub thetas: Vec<ComplexRepr>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { thetas: default_thetas() }
    }
}

fn default_thetas() -> Vec<ComplexRepr> {
    vec![ComplexRepr { re: 0.0, im: 0.0 }, ComplexRepr { re: 0.5, im: 0.0 }, ComplexRepr { re: 1.0, im: 0.0 }]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitSection {
    #[serde(default = "default_chain_state")]
    pub chain_state: ChainStateSpec,
    #[serde(default = "default_thetas")]
    pub thetas: Vec<ComplexRepr>,
    #[serde(default = "default_limit_cutoff")]
    pub cutoff: usize,
}

fn default_chain_state() -> ChainStateSpec {
    ChainStateSpec::NumberState { n: 1 }
}

fn default_limit_cutoff() -> usize {
    16
}

impl Default for LimitSection {
    fn default() -> Self {
        LimitSection { chain_state: default_chain_state(), thetas: default_thetas(), cutoff: default_limit_cutoff() }
    }
}

/// Per-suite tolerance overrides for `verify`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default)]
    pub identity: Option<f64>,
    #[serde(default)]
    pub propagation: Option<f64>,
    #[serde(default)]
    pub oracle_char_fn: Option<f64>,
    #[serde(default)]
    pub oracle_relative_entropy: Option<f64>,
    #[serde(default)]
    pub oracle_entropy: Option<f64>,
    #[serde(default)]
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub subsystem: Option<SubsystemSection>,
    #[serde(default)]
    pub schedule: Option<LimitSchedule>,
    #[serde(default)]
    pub limit: LimitSection,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_seed() -> u64 {
    20_240_601
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            model: ModelSpec {
                energy: 2.0,
                eps: 1.0,
                eta: 0.5,
                tau: 1.0,
                chain_len: 2,
                beta0: InverseTemperature::new(3f64.ln()).expect("ln 3 > 0"),
                beta: InverseTemperature::new(2f64.ln()).expect("ln 2 > 0"),
            },
            seed: default_seed(),
            simulate: SimulateSection::default(),
            subsystem: None,
            schedule: None,
            limit: LimitSection::default(),
            sweep: None,
            oracle: OracleSection::default(),
            tolerances: Tolerances::default(),
            output: OutputSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn hypotheses(&self) -> HypothesisReport {
        validate_hypotheses(&self.model)
    }

    /// Validated model parameters; rejects η² > Eε.
    pub fn params(&self) -> Result<ModelParams, CliError> {
        Ok(ModelParams::try_from(self.model.clone())?)
    }

    pub fn schedule(&self) -> LimitSchedule {
        self.schedule.clone().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let cfg = RunConfig::from_json(
            r#"{"schema_version": 1, "model": {"E": 1, "eps": 1, "eta": 0.5, "tau": 0.1, "N": 3, "beta0": "inf", "beta": 2}}"#,
        )
        .unwrap();
        assert!(cfg.model.beta0.is_vacuum());
        assert_eq!(cfg.limit.cutoff, 16);
        assert_eq!(cfg.oracle.cutoff, 25);
    }

    #[test]
    fn rejects_unknown_fields_and_versions() {
        let base = r#""model": {"E": 1, "eps": 1, "eta": 0.5, "tau": 0.1, "N": 3, "beta0": 1, "beta": 2}"#;
        assert!(RunConfig::from_json(&format!(r#"{{"schema_version": 2, {base}}}"#)).is_err());
        assert!(RunConfig::from_json(&format!(r#"{{"schema_version": 1, {base}, "extra": 0}}"#)).is_err());
        assert!(RunConfig::from_json(r#"{"schema_version": 1}"#).is_err());
    }

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }
}
