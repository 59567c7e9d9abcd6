//! Run configuration and verification thresholds.

use crate::error::{FeecError, Result};
use crate::mesh::{generate, Triangulation};
use crate::problem::{Problem, ProblemSpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

const DEFAULT_THRESHOLDS: &str = include_str!("../thresholds.json");

/// Tolerances of every check, loaded from the bundled defaults file and
/// optionally overridden per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub exact: f64,
    pub stokes: f64,
    pub duality_slack: f64,
    pub interpolation_commutation: f64,
    pub weak_derivative: f64,
    pub boundary_constant_replay: f64,
    pub gauge_on_boundary: f64,
    pub flattening_round_trip: f64,
    pub lipschitz_slack: f64,
    pub extension_weak: f64,
    pub local_bound_slack: f64,
    pub mollifier_weight_sum: f64,
    pub mollifier_constant_zero_form: f64,
    pub mollifier_constant_one_form: f64,
    pub mollifier_commutation_whitney: f64,
    pub mollifier_commutation_polynomial: f64,
    pub mollifier_linearity: f64,
    pub continuity_shrink_ratio: f64,
    pub idempotency: f64,
    pub commutation: f64,
    pub neumann_gap: f64,
    pub callable_path: f64,
    pub slope_low: f64,
    pub slope_high: f64,
    pub constant_form: f64,
    pub level_ratio: f64,
    pub halving_factor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_THRESHOLDS).expect("bundled thresholds parse")
    }
}

impl Thresholds {
    /// Defaults overridden by the keys present in `path`; other keys keep
    /// their defaults.
    pub fn from_file(path: &Path) -> Result<Thresholds> {
        let bad = |e: serde_json::Error| FeecError::InvalidConfig(format!("{}: {e}", path.display()));
        let overrides: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(&std::fs::read_to_string(path)?).map_err(bad)?;
        let mut merged: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(DEFAULT_THRESHOLDS).expect("bundled thresholds parse");
        merged.extend(overrides);
        serde_json::from_value(serde_json::Value::Object(merged)).map_err(bad)
    }
}

/// How `ε` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonPolicy {
    /// Half the smallest admissibility bound.
    Auto,
    Explicit(f64),
}

impl EpsilonPolicy {
    pub fn parse(s: &str) -> Result<EpsilonPolicy> {
        if s == "auto" {
            return Ok(EpsilonPolicy::Auto);
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| *v > 0.0 && v.is_finite())
            .map(EpsilonPolicy::Explicit)
            .ok_or_else(|| FeecError::InvalidConfig(format!("epsilon must be 'auto' or a positive number, got '{s}'")))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            EpsilonPolicy::Auto => None,
            EpsilonPolicy::Explicit(e) => Some(*e),
        }
    }
}

/// Everything that determines a run; echoed into reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub domain: String,
    pub level: usize,
    pub mesh_file: Option<PathBuf>,
    pub complex: String,
    pub epsilon: EpsilonPolicy,
    pub p: f64,
    pub seed: u64,
    /// Face quadrature degree for `Q`; `None` uses `2r + 6`.
    pub quad_degree: Option<usize>,
    pub thresholds: Thresholds,
}

impl Default for RunConfig {
    /// Unit square refined twice, the lowest-order trimmed complex, `p = 2`,
    /// automatic `ε`, seed 7.
    fn default() -> Self {
        RunConfig {
            domain: "unit_square".into(),
            level: 2,
            mesh_file: None,
            complex: "P1-minus".into(),
            epsilon: EpsilonPolicy::Auto,
            p: 2.0,
            seed: 7,
            quad_degree: None,
            thresholds: Thresholds::default(),
        }
    }
}

impl RunConfig {
    pub fn mesh(&self) -> Result<Triangulation> {
        match &self.mesh_file {
            Some(path) => Triangulation::from_json(&std::fs::read_to_string(path)?),
            None => generate(&self.domain, self.level),
        }
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        let mut spec = ProblemSpec::new(&self.domain, &self.complex);
        spec.p = self.p;
        spec.eps = self.epsilon.value();
        spec.seed = self.seed;
        spec
    }

    pub fn problem(&self) -> Result<Problem> {
        Problem::build(&self.problem_spec(), self.mesh()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_defaults_load() {
        let t = Thresholds::default();
        assert_eq!(t.idempotency, 1e-9);
        assert_eq!(t.level_ratio, 1.5);
    }

    #[test]
    fn partial_override_keeps_other_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        std::fs::write(&path, r#"{"commutation": 1e-6}"#).unwrap();
        let t = Thresholds::from_file(&path).unwrap();
        assert_eq!(t.commutation, 1e-6);
        assert_eq!(t.idempotency, 1e-9);
        std::fs::write(&path, r#"{"no_such_key": 1}"#).unwrap();
        assert!(matches!(Thresholds::from_file(&path), Err(FeecError::InvalidConfig(_))));
    }

    #[test]
    fn epsilon_policy_parsing() {
        assert_eq!(EpsilonPolicy::parse("auto").unwrap(), EpsilonPolicy::Auto);
        assert_eq!(EpsilonPolicy::parse("1e-3").unwrap(), EpsilonPolicy::Explicit(1e-3));
        assert!(EpsilonPolicy::parse("-1").is_err());
        assert!(EpsilonPolicy::parse("x").is_err());
    }
}
