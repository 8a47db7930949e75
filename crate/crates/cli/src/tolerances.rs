//! Pass/fail thresholds of the verification suites. The shipped defaults live
//! in `tolerances.json` at the crate root; a run may override any subset.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULTS_JSON: &str = include_str!("../tolerances.json");
pub const TOLERANCES_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Operators {
    pub relative_residual: f64,
    pub metric_laplacian: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratIto {
    pub min_corrected_slope: f64,
    pub max_uncorrected_slope: f64,
    pub covariation_sigmas: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Casimirs {
    pub max_halving_ratio: f64,
    pub max_finest_drift: f64,
    pub rossby_relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kelvin {
    pub max_reference_drift: f64,
    pub min_slope: f64,
    pub ito_relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Helicity {
    pub max_reference_drift: f64,
    /// Refinement convergence: drift must fall monotonically with at least
    /// this log-log slope.
    pub min_slope: f64,
    pub constant_noise: f64,
    pub ito_relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvPaths {
    pub max_halving_ratio: f64,
    pub ito_standard_errors: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pod {
    pub eigenvalue: f64,
    pub mode: f64,
    pub residual_over_lambda1_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub version: u32,
    pub operators: Operators,
    pub strat_ito: StratIto,
    pub casimirs: Casimirs,
    pub kelvin: Kelvin,
    pub helicity: Helicity,
    pub pv_paths: PvPaths,
    pub pod: Pod,
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl Tolerances {
    pub fn defaults() -> Self {
        serde_json::from_str(DEFAULTS_JSON).expect("shipped tolerances parse")
    }

    /// Defaults with the keys present in `overrides` replaced. Unknown keys
    /// and version mismatches are rejected.
    pub fn with_overrides(overrides: &str) -> Result<Self, CliError> {
        let mut base: serde_json::Value = serde_json::from_str(DEFAULTS_JSON).expect("shipped tolerances parse");
        let over: serde_json::Value =
            serde_json::from_str(overrides).map_err(|e| CliError::Config(format!("tolerances: {e}")))?;
        merge(&mut base, over);
        let t: Tolerances =
            serde_json::from_value(base).map_err(|e| CliError::Config(format!("tolerances: {e}")))?;
        if t.version != TOLERANCES_VERSION {
            return Err(CliError::Config(format!(
                "tolerances version {} (this build reads {TOLERANCES_VERSION})",
                t.version
            )));
        }
        Ok(t)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::defaults()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Self::with_overrides(&text)
            }
        }
    }
}
