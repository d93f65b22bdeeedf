//! Batch runs from a [`RunConfig`] with a hashed manifest.

use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Experiment, ExperimentKind, RunConfig};
use crate::experiments::{self, Output};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FileRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentRecord {
    pub name: String,
    pub kind: String,
    pub seed: u64,
    pub files: Vec<FileRecord>,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub seed: u64,
    pub assertions: bool,
    pub experiments: Vec<ExperimentRecord>,
}

impl Manifest {
    pub fn failures(&self) -> impl Iterator<Item = (&str, &str)> {
        self.experiments
            .iter()
            .flat_map(|e| e.failures.iter().map(move |f| (e.name.as_str(), f.as_str())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write every table as `<stem><suffix>.csv` and every document as
/// `<stem><suffix>` into `dir`.
pub fn write_output(dir: &Path, stem: &str, out: &Output) -> Result<Vec<FileRecord>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    for (suffix, table) in &out.tables {
        files.push((format!("{stem}{suffix}.csv"), table.to_csv()?));
    }
    for (suffix, doc) in &out.documents {
        files.push((format!("{stem}{suffix}"), doc.as_bytes().to_vec()));
    }
    files
        .into_iter()
        .map(|(name, bytes)| {
            let path = dir.join(&name);
            std::fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
            Ok(FileRecord {
                sha256: sha256_hex(&bytes),
                bytes: bytes.len(),
                file: name,
            })
        })
        .collect()
}

fn kind_name(kind: &ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Calculus(_) => "calculus",
        ExperimentKind::Phi(_) => "phi",
        ExperimentKind::Index(_) => "index",
        ExperimentKind::Khintchine(_) => "khintchine",
        ExperimentKind::Tridiag(_) => "tridiag",
        ExperimentKind::Paths(_) => "paths",
    }
}

pub fn run_experiment(e: &Experiment, cfg: &RunConfig, plot: bool) -> Result<Output> {
    let seed = e.seed.unwrap_or(cfg.seed);
    let budget = cfg.budget.clone().with_seed(seed);
    match &e.kind {
        ExperimentKind::Calculus(p) => experiments::calculus(p, seed, &budget, plot),
        ExperimentKind::Phi(p) => experiments::phi(p, seed, &budget),
        ExperimentKind::Index(p) => experiments::index(p, seed),
        ExperimentKind::Khintchine(p) => experiments::khintchine(p, seed, &budget),
        ExperimentKind::Tridiag(p) => experiments::tridiag(p, seed),
        ExperimentKind::Paths(p) => experiments::paths(p, seed),
    }
    .with_context(|| format!("experiment {:?}", e.name))
}

/// Run every experiment (concurrently), write artifacts sorted by
/// experiment name, and write `manifest.json`.
pub fn run_suite(cfg: &RunConfig, config_bytes: &[u8], out_dir: &Path, plot: bool) -> Result<Manifest> {
    let mut order: Vec<&Experiment> = cfg.experiments.iter().collect();
    order.sort_by(|a, b| a.name.cmp(&b.name));
    let outputs: Vec<Output> = order
        .par_iter()
        .map(|e| run_experiment(e, cfg, plot))
        .collect::<Result<_>>()?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut records = Vec::with_capacity(order.len());
    for (e, out) in order.iter().zip(&outputs) {
        records.push(ExperimentRecord {
            name: e.name.clone(),
            kind: kind_name(&e.kind).to_string(),
            seed: e.seed.unwrap_or(cfg.seed),
            files: write_output(out_dir, &e.name, out)?,
            failures: out.failures.clone(),
        });
    }
    let manifest = Manifest {
        config_sha256: sha256_hex(config_bytes),
        seed: cfg.seed,
        assertions: cfg.assertions,
        experiments: records,
    };
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(manifest)
}
