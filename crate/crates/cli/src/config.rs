//! Run configuration: one JSON file describing a batch of experiments.
//!
//! ```json
//! {
//!   "seed": 7,
//!   "budget": {"restarts": 4},
//!   "experiments": [
//!     {"name": "calculus", "kind": "calculus", "n": 512, "p_list": [4.0], "count": 50},
//!     {"name": "khintchine", "kind": "khintchine", "n_max": 10}
//!   ]
//! }
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use calkin_lab::Budget;
use serde::{Deserialize, Serialize};

fn default_p_list() -> Vec<f64> {
    vec![4.0]
}
fn default_n() -> usize {
    512
}
fn default_count() -> usize {
    16
}
fn default_window() -> f64 {
    calkin_lab::transfer::DEFAULT_WINDOW_FRACTION
}
fn default_tolerance() -> f64 {
    0.05
}
fn default_plain_tolerance() -> f64 {
    0.02
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegreeRange {
    pub min: usize,
    pub max: usize,
}

impl Default for DegreeRange {
    fn default() -> Self {
        DegreeRange { min: 1, max: 16 }
    }
}

/// Transferred tail norms against `sup |f|` and the plain `ℓ^p` contrast.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalculusParams {
    #[serde(default = "default_p_list")]
    pub p_list: Vec<f64>,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Truncation of the plain contrast; defaults to `n`.
    #[serde(default)]
    pub plain_n: Option<usize>,
    #[serde(default)]
    pub degrees: DegreeRange,
    /// Random symbols, normalized to `max |f| = 1`.
    #[serde(default = "default_count")]
    pub count: usize,
    /// Extra symbols in `n:re,im;…` form, used as given.
    #[serde(default)]
    pub symbols: Vec<String>,
    #[serde(default = "default_window")]
    pub window_fraction: f64,
    /// Slack on the `[1/3, 3]` band for `tail norm / sup |f|`.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Slack for `plain norm ≥ sup |f|`.
    #[serde(default = "default_plain_tolerance")]
    pub plain_tolerance: f64,
}

impl Default for CalculusParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

/// Shared cut plan, `ℓ²` versus `X_p` tail norms per symbol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiParams {
    pub symbols: Vec<String>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_p_list")]
    pub p_list: Vec<f64>,
    #[serde(default = "default_window")]
    pub window_fraction: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

/// Winding oracle against finite-section kernel counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexParams {
    pub symbols: Vec<String>,
    #[serde(default = "default_index_n")]
    pub n: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_index_n() -> usize {
    128
}
fn default_threshold() -> f64 {
    calkin_lab::fredholm::DEFAULT_THRESHOLD
}

/// Rademacher embedding constants over a range of `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KhintchineParams {
    #[serde(default = "one")]
    pub n_min: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_khintchine_p")]
    pub p_list: Vec<f64>,
}

fn one() -> usize {
    1
}
fn default_n_max() -> usize {
    10
}
fn default_khintchine_p() -> Vec<f64> {
    vec![1.5, 2.0, 3.0, 4.0]
}

/// Cut selection and residual profile for Toeplitz symbols plus an
/// optional dense decay matrix `ρ^{|i−j|}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TridiagParams {
    #[serde(default)]
    pub symbols: Vec<String>,
    #[serde(default)]
    pub decay: Option<f64>,
    /// Prepend `U` and `U*` to the family.
    #[serde(default = "default_true")]
    pub shifts: bool,
    #[serde(default = "default_tridiag_n")]
    pub n: usize,
}

fn default_tridiag_n() -> usize {
    256
}

/// Random coefficient-space paths between symbols of equal winding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathParams {
    #[serde(default = "default_path_count")]
    pub count: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Windings are drawn from `−max_winding..=max_winding`.
    #[serde(default = "default_max_winding")]
    pub max_winding: i64,
}

fn default_path_count() -> usize {
    100
}
fn default_steps() -> usize {
    32
}
fn default_max_winding() -> i64 {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentKind {
    Calculus(CalculusParams),
    Phi(PhiParams),
    Index(IndexParams),
    Khintchine(KhintchineParams),
    Tridiag(TridiagParams),
    Paths(PathParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub name: String,
    /// Overrides the run seed for this experiment.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub kind: ExperimentKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub budget: Budget,
    /// Turn failed checks into a nonzero exit status.
    #[serde(default = "default_true")]
    pub assertions: bool,
    #[serde(default)]
    pub experiments: Vec<Experiment>,
}

fn check_p(p: f64, what: &str) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        bail!("{what}: exponent {p} is outside (1, ∞)");
    }
    Ok(())
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).context("invalid run configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.budget.validate()?;
        let mut names: Vec<&str> = self.experiments.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            bail!("duplicate experiment name {:?}", w[0]);
        }
        for e in &self.experiments {
            if e.name.is_empty() || !e.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                bail!("experiment name {:?} must be non-empty and use only [A-Za-z0-9_-]", e.name);
            }
            let ps: &[f64] = match &e.kind {
                ExperimentKind::Calculus(c) => &c.p_list,
                ExperimentKind::Phi(c) => &c.p_list,
                ExperimentKind::Khintchine(c) => &c.p_list,
                _ => &[],
            };
            for &p in ps {
                check_p(p, &e.name)?;
            }
            if let ExperimentKind::Calculus(c) = &e.kind {
                if c.degrees.min > c.degrees.max {
                    bail!("{}: degree range {}..{} is empty", e.name, c.degrees.min, c.degrees.max);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_and_full_configs() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert!(cfg.experiments.is_empty());
        assert!(cfg.assertions);

        let cfg = RunConfig::from_json(
            r#"{"seed": 3, "experiments": [
                {"name": "a", "kind": "calculus", "n": 64, "count": 2},
                {"name": "b", "kind": "index", "symbols": ["-1:1,0"]},
                {"name": "c", "kind": "khintchine", "n_max": 4, "p_list": [2.0]},
                {"name": "d", "kind": "paths", "count": 3, "seed": 9}
            ]}"#,
        )
        .unwrap();
        assert_eq!(cfg.experiments.len(), 4);
        assert_eq!(cfg.experiments[3].seed, Some(9));
        match &cfg.experiments[0].kind {
            ExperimentKind::Calculus(c) => {
                assert_eq!(c.n, 64);
                assert_eq!(c.p_list, vec![4.0]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(RunConfig::from_json(
            r#"{"experiments": [{"name": "a", "kind": "khintchine", "p_list": [1.0]}]}"#
        )
        .is_err());
        assert!(RunConfig::from_json(
            r#"{"experiments": [{"name": "a", "kind": "paths"}, {"name": "a", "kind": "paths"}]}"#
        )
        .is_err());
        assert!(RunConfig::from_json(r#"{"experiments": [{"name": "../x", "kind": "paths"}]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"budget": {"restarts": 0, "basis_seeds": 0}}"#).is_ok());
    }
}
