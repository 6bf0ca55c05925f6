//! TOML experiment configuration.
//!
//! ```toml
//! methods = ["stkf-aa", "kf-aa"]
//! aa_variant = "v1"
//! dof_rule = "average"
//! p_o = [0.0, 0.05, 0.1]
//! output = "results.csv"
//!
//! [scenario]
//! runs = 10
//! ```
//!
//! Every key is optional. Missing scenario keys take the default values of
//! [`ScenarioConfig`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tfusion::fusion::{AaVariant, DofRule};
use tfusion::scenario::{Method, ScenarioConfig, METHOD_NAMES};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfigFile {
    pub methods: Vec<String>,
    pub aa_variant: AaVariant,
    pub dof_rule: DofRule,
    /// Outlier probabilities to sweep; absent means the scenario's own values.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_o: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub scenario: ScenarioConfig,
}

impl Default for CliConfigFile {
    fn default() -> Self {
        Self {
            methods: METHOD_NAMES.iter().map(|s| s.to_string()).collect(),
            aa_variant: AaVariant::default(),
            dof_rule: DofRule::default(),
            p_o: None,
            output: None,
            scenario: ScenarioConfig::default(),
        }
    }
}

/// Everything a run needs, validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub scenario: ScenarioConfig,
    pub methods: Vec<Method>,
    /// `None` keeps the per-channel probabilities of the scenario.
    pub sweep: Option<Vec<f64>>,
    pub output: Option<PathBuf>,
}

impl CliConfigFile {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        // The toml error message already carries line and column.
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn into_experiment(self) -> Result<Experiment, CliError> {
        let invalid = |key: &str, msg: String| CliError::Config(format!("invalid `{key}`: {msg}"));
        if self.methods.is_empty() {
            return Err(invalid("methods", "at least one method is required".into()));
        }
        let methods = self
            .methods
            .iter()
            .map(|m| {
                Method::parse(m, self.aa_variant, self.dof_rule).map_err(|_| {
                    invalid("methods", format!("unknown method '{m}', expected one of {}", METHOD_NAMES.join(", ")))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let sweep = match self.p_o {
            Some(list) => {
                if list.is_empty() {
                    return Err(invalid("p_o", "list is empty".into()));
                }
                if let Some(p) = list.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return Err(invalid("p_o", format!("{p} is outside [0, 1]")));
                }
                Some(list)
            }
            None => None,
        };
        self.scenario.validate().map_err(|e| invalid("scenario", e.to_string()))?;
        Ok(Experiment {
            scenario: self.scenario,
            methods,
            sweep,
            output: self.output,
        })
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<Experiment, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    CliConfigFile::from_toml(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        .into_experiment()
}
