//! Experiment runner for `calkin-lab`: configuration, experiment tables,
//! CSV/JSON/SVG artifacts and hashed manifests.
//!
//! The `calkin` binary is a thin shell over this library.

pub mod config;
pub mod experiments;
pub mod suite;
pub mod svg;
pub mod symbols;
pub mod table;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const ASSERTION_FAILED: i32 = 1;
    pub const INVALID_INPUT: i32 = 2;
}

use std::path::Path;

use anyhow::{bail, Context, Result};
use calkin_lab::Budget;

/// Named budgets: `quick`, `default`, `thorough`.
pub fn budget_preset(name: &str) -> Option<Budget> {
    let base = Budget::default();
    match name {
        "quick" => Some(Budget {
            max_iterations: 200,
            ascent_iterations: 80,
            restarts: 3,
            basis_seeds: 2,
            ..base
        }),
        "default" => Some(base),
        "thorough" => Some(Budget {
            max_iterations: 1500,
            ascent_iterations: 600,
            restarts: 24,
            basis_seeds: 8,
            ..base
        }),
        _ => None,
    }
}

/// A preset name or a path to a JSON budget file.
pub fn parse_budget(arg: &str) -> Result<Budget> {
    let budget = match budget_preset(arg) {
        Some(b) => b,
        None => {
            let path = Path::new(arg);
            if !path.exists() {
                bail!("--budget {arg:?} is neither a preset (quick, default, thorough) nor an existing file");
            }
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("invalid budget in {}", path.display()))?
        }
    };
    budget.validate()?;
    Ok(budget)
}
