//! Experiment runners. Each returns tables and checks; nothing here
//! touches the file system.

use anyhow::{Context, Result};
use calkin_lab::fredholm::{index_report, path_index_constancy};
use calkin_lab::linalg::CMatrix;
use calkin_lab::pelczynski::{fourth_moment_max, measure_constants};
use calkin_lab::transfer::{run_calculus_with, run_phi_pipeline, shift_pair, CalculusExperiment, CalculusSettings};
use calkin_lab::tridiag::{tridiagonalize, verify_tridiag_error, Schedule};
use calkin_lab::{Budget, Error, LaurentPolynomial, SymbolPath, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{CalculusParams, IndexParams, KhintchineParams, PathParams, PhiParams, TridiagParams};
use crate::svg;
use crate::symbols::{parse_symbols, random_normalized, random_with_winding};
use crate::table::{num, opt, Table};

/// Artifacts of one experiment, keyed by file suffix.
#[derive(Debug, Default)]
pub struct Output {
    /// `(suffix, table)`; the main table has an empty suffix.
    pub tables: Vec<(String, Table)>,
    /// `(suffix, document)`.
    pub documents: Vec<(String, String)>,
    /// Failed checks, one message each.
    pub failures: Vec<String>,
}

impl Output {
    pub fn main_table(&self) -> &Table {
        &self.tables[0].1
    }
}

/// Symbols for a calculus run: random normalized ones first, then the
/// explicit ones. Returns `(degree, symbol)`.
pub fn calculus_symbols(params: &CalculusParams, seed: u64) -> Result<Vec<(usize, LaurentPolynomial)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(usize, LaurentPolynomial)> = (0..params.count)
        .map(|_| {
            let d = rng.gen_range(params.degrees.min..=params.degrees.max);
            (d, random_normalized(&mut rng, d))
        })
        .collect();
    for f in parse_symbols(&params.symbols)? {
        out.push((f.degree(), f));
    }
    Ok(out)
}

pub const CALCULUS_COLUMNS: [&str; 19] = [
    "seed",
    "p",
    "n",
    "plain_n",
    "index",
    "degree",
    "symbol",
    "sup_circle",
    "blocks",
    "window",
    "compression_residual",
    "transferred_lower",
    "transferred_upper",
    "transferred_ratio",
    "plain_lower",
    "plain_upper",
    "plain_ratio",
    "index_expected",
    "index_observed",
];

pub fn calculus(params: &CalculusParams, seed: u64, budget: &Budget, plot: bool) -> Result<Output> {
    let symbols = calculus_symbols(params, seed)?;
    let jobs: Vec<(f64, usize, &(usize, LaurentPolynomial))> = params
        .p_list
        .iter()
        .flat_map(|&p| symbols.iter().enumerate().map(move |(i, s)| (p, i, s)))
        .collect();
    let runs: Vec<CalculusExperiment> = jobs
        .par_iter()
        .map(|&(p, _, (_, f))| {
            let settings = CalculusSettings {
                n: params.n,
                p,
                window_fraction: params.window_fraction,
                plain_n: params.plain_n,
            };
            run_calculus_with(f, &settings, budget).with_context(|| format!("symbol {f}"))
        })
        .collect::<Result<_>>()?;

    let mut out = Output::default();
    let mut table = Table::new(&CALCULUS_COLUMNS);
    let mut summary = Table::new(&[
        "seed",
        "p",
        "polynomials",
        "min_transferred_ratio",
        "max_transferred_ratio",
        "max_plain_ratio",
        "failures",
    ]);
    for &p in &params.p_list {
        let mut stats = (f64::INFINITY, 0.0f64, 0.0f64, 0usize);
        let mut count = 0;
        for (&(_, i, (degree, _)), e) in jobs.iter().zip(&runs).filter(|(j, _)| j.0 == p) {
            count += 1;
            let t_ratio = e.transferred_norm.lower / e.sup_circle;
            let p_ratio = e.plain_shift_norm.lower / e.sup_circle;
            let mut bad = Vec::new();
            if t_ratio > 3.0 + params.tolerance || t_ratio < 1.0 / 3.0 - params.tolerance {
                bad.push(format!("transferred ratio {t_ratio:.6} outside [1/3, 3]"));
            }
            if e.plain_shift_norm.lower < e.sup_circle - params.plain_tolerance {
                bad.push(format!(
                    "plain norm {:.6} below sup {:.6}",
                    e.plain_shift_norm.lower, e.sup_circle
                ));
            }
            stats.0 = stats.0.min(t_ratio);
            stats.1 = stats.1.max(t_ratio);
            stats.2 = stats.2.max(p_ratio);
            stats.3 += bad.len();
            out.failures.extend(bad.into_iter().map(|b| format!("p={p} symbol #{i}: {b}")));
            table.push(vec![
                seed.to_string(),
                num(p),
                e.n.to_string(),
                e.plain_n.to_string(),
                i.to_string(),
                degree.to_string(),
                e.f.to_string(),
                num(e.sup_circle),
                e.plan.num_blocks().to_string(),
                e.window.to_string(),
                num(e.compression_residual),
                num(e.transferred_norm.lower),
                num(e.transferred_norm.upper),
                num(t_ratio),
                num(e.plain_shift_norm.lower),
                num(e.plain_shift_norm.upper),
                num(p_ratio),
                opt(e.index_expected),
                opt(e.index_observed),
            ]);
        }
        summary.push(vec![
            seed.to_string(),
            num(p),
            count.to_string(),
            if count > 0 { num(stats.0) } else { String::new() },
            num(stats.1),
            num(stats.2),
            stats.3.to_string(),
        ]);
    }
    if plot {
        out.documents.push((".svg".into(), svg::ratio_scatter(&table)));
    }
    out.tables.push((String::new(), table));
    out.tables.push((".summary".into(), summary));
    Ok(out)
}

pub fn phi(params: &PhiParams, seed: u64, budget: &Budget) -> Result<Output> {
    let family = parse_symbols(&params.symbols)?;
    let mut out = Output::default();
    let mut table = Table::new(&[
        "seed",
        "p",
        "n",
        "symbol",
        "band",
        "window",
        "compression_residual",
        "source_lower",
        "source_upper",
        "target_lower",
        "target_upper",
        "ratio_lower",
        "ratio_upper",
        "within_bounds",
    ]);
    for &p in &params.p_list {
        let results = run_phi_pipeline(&family, params.n, p, params.window_fraction, budget)?;
        for r in results {
            let ok = r.within_bounds(params.tolerance);
            if !ok {
                out.failures.push(format!(
                    "p={p} symbol {}: ratios [{:.6}, {:.6}] outside band {}",
                    r.f, r.ratio_lower, r.ratio_upper, r.band
                ));
            }
            table.push(vec![
                seed.to_string(),
                num(p),
                params.n.to_string(),
                r.f.to_string(),
                r.band.to_string(),
                r.window.to_string(),
                num(r.compression_residual),
                num(r.source_norm2.lower),
                num(r.source_norm2.upper),
                num(r.target_norm_p.lower),
                num(r.target_norm_p.upper),
                num(r.ratio_lower),
                num(r.ratio_upper),
                ok.to_string(),
            ]);
        }
    }
    out.tables.push((String::new(), table));
    Ok(out)
}

pub fn index(params: &IndexParams, seed: u64) -> Result<Output> {
    let symbols = parse_symbols(&params.symbols)?;
    let reports = symbols
        .par_iter()
        .map(|f| index_report(f, params.n, params.threshold).with_context(|| format!("symbol {f}")))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Output::default();
    let mut table = Table::new(&[
        "seed",
        "n",
        "symbol",
        "winding_index",
        "truncation_index",
        "kernel_dim",
        "cokernel_dim",
        "gap_ratio",
        "agree",
    ]);
    for r in &reports {
        if !r.agree {
            out.failures.push(format!(
                "symbol {}: winding index {} but truncation gives {:?}",
                r.symbol, r.winding_index, r.truncation_index
            ));
        }
        table.push(vec![
            seed.to_string(),
            params.n.to_string(),
            r.symbol.to_string(),
            r.winding_index.to_string(),
            opt(r.truncation_index),
            r.details.kernel_dim.to_string(),
            r.details.cokernel_dim.to_string(),
            num(r.details.gap_ratio),
            r.agree.to_string(),
        ]);
    }
    out.tables.push((String::new(), table));
    out.documents.push((".json".into(), serde_json::to_string_pretty(&reports)?));
    Ok(out)
}

pub const KHINTCHINE_TOLERANCE: f64 = 1e-9;

pub fn khintchine(params: &KhintchineParams, seed: u64, budget: &Budget) -> Result<Output> {
    let jobs: Vec<(usize, f64)> = (params.n_min..=params.n_max)
        .flat_map(|n| params.p_list.iter().map(move |&p| (n, p)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(n, p)| measure_constants(n, p, budget).map_err(anyhow::Error::from))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Output::default();
    let mut table = Table::new(&[
        "n",
        "p",
        "lower",
        "upper",
        "projection_norm",
        "dual_upper",
        "projection_bound",
        "seed",
    ]);
    for c in &results {
        let tag = format!("n={} p={}", c.n, c.p);
        if c.p == 2.0 {
            for (what, v) in [("lower", c.lower_embed), ("upper", c.upper_embed), ("projection", c.projection_norm)] {
                if (v - 1.0).abs() > KHINTCHINE_TOLERANCE {
                    out.failures.push(format!("{tag}: {what} constant {v} is not 1"));
                }
            }
        }
        if c.p == 4.0 {
            let predicted = fourth_moment_max(c.n);
            if (c.upper_embed - predicted).abs() > 0.05 * predicted {
                out.failures
                    .push(format!("{tag}: upper constant {} vs moment prediction {predicted}", c.upper_embed));
            }
        }
        if c.projection_norm < 1.0 - 1e-12 || c.projection_norm > c.projection_bound + 1e-9 {
            out.failures.push(format!(
                "{tag}: projection norm {} outside [1, {}]",
                c.projection_norm, c.projection_bound
            ));
        }
        table.push(vec![
            c.n.to_string(),
            num(c.p),
            num(c.lower_embed),
            num(c.upper_embed),
            num(c.projection_norm),
            num(c.dual_upper_embed),
            num(c.projection_bound),
            seed.to_string(),
        ]);
    }
    out.tables.push((String::new(), table));
    Ok(out)
}

/// `ρ^{|i−j|}`.
pub fn decay_matrix(n: usize, rho: f64) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| C64::new(rho.powi(i.abs_diff(j) as i32), 0.0))
}

/// Family members with display labels.
pub fn tridiag_family(params: &TridiagParams) -> Result<Vec<(String, CMatrix)>> {
    let mut family = Vec::new();
    if params.shifts {
        let (u, u_star) = shift_pair(params.n);
        family.push(("U".to_string(), u));
        family.push(("U*".to_string(), u_star));
    }
    for f in parse_symbols(&params.symbols)? {
        family.push((format!("T({f})"), f.toeplitz_matrix(params.n)));
    }
    if let Some(rho) = params.decay {
        family.push((format!("decay({rho})"), decay_matrix(params.n, rho)));
    }
    Ok(family)
}

pub fn tridiag_matrices(labels: &[String], family: &[CMatrix], n: usize, seed: u64) -> Result<Output> {
    let report = tridiagonalize(family, n, &Schedule::Halving)?;
    let mut out = Output::default();
    if report.plan.exhausted() {
        out.failures.push("cut plan exhausted before the truncation".into());
    }
    for b in report.plan.tail_bounds().iter().filter(|b| !b.satisfied()) {
        out.failures.push(format!(
            "step {} member {}: tails {:.3e}/{:.3e} exceed {:.3e}",
            b.step, b.member, b.forward, b.adjoint, b.epsilon
        ));
    }
    let checks = family
        .par_iter()
        .enumerate()
        .map(|(i, t)| verify_tridiag_error(t, i + 1, &report.plan))
        .collect::<std::result::Result<Vec<_>, Error>>()?;
    let mut table = Table::new(&["seed", "member", "label", "k", "residual", "bound", "checked", "pass"]);
    for r in &report.residuals {
        let check = checks[r.member - 1].iter().find(|c| c.k == r.k);
        if let Some(c) = check.filter(|c| !c.pass) {
            out.failures.push(format!(
                "member {} block {}: residual {:.3e} ≥ {:.3e}",
                r.member, r.k, c.value, c.bound
            ));
        }
        table.push(vec![
            seed.to_string(),
            r.member.to_string(),
            labels[r.member - 1].clone(),
            r.k.to_string(),
            num(r.residual),
            num(0.5f64.powi(r.k as i32)),
            check.is_some().to_string(),
            check.map_or(String::new(), |c| c.pass.to_string()),
        ]);
    }
    out.tables.push((String::new(), table));
    out.documents.push((".plan.json".into(), serde_json::to_string_pretty(&report.plan)?));
    Ok(out)
}

pub fn tridiag(params: &TridiagParams, seed: u64) -> Result<Output> {
    let family = tridiag_family(params)?;
    let (labels, mats): (Vec<String>, Vec<CMatrix>) = family.into_iter().unzip();
    tridiag_matrices(&labels, &mats, params.n, seed)
}

/// Random paths between symbols of equal winding, plus `w → w^{−1}`,
/// which must be rejected.
pub fn paths(params: &PathParams, seed: u64) -> Result<Output> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut list: Vec<SymbolPath> = (0..params.count)
        .map(|_| {
            let k = rng.gen_range(-params.max_winding..=params.max_winding);
            let a = random_with_winding(&mut rng, k, 2);
            let b = random_with_winding(&mut rng, k, 2);
            SymbolPath::new(a, b, params.steps)
        })
        .collect();
    list.push(SymbolPath::new(LaurentPolynomial::monomial(1), LaurentPolynomial::monomial(-1), params.steps));
    let results: Vec<_> = list.par_iter().map(path_index_constancy).collect();
    let mut out = Output::default();
    let mut table = Table::new(&["seed", "path", "start", "end", "accepted", "constant", "windings", "vanishing_step"]);
    let last = list.len() - 1;
    for (i, (path, r)) in list.iter().zip(results).enumerate() {
        let (accepted, constant, windings, step) = match r {
            Ok((c, w)) => (true, Some(c), w.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "), None),
            Err(Error::VanishingPath { step, .. }) => (false, None, String::new(), Some(step)),
            Err(e) => return Err(e.into()),
        };
        if constant == Some(false) {
            out.failures.push(format!("path {i}: accepted but windings vary ({windings})"));
        }
        if i == last && accepted {
            out.failures.push("path w → w^{-1} was accepted".into());
        }
        table.push(vec![
            seed.to_string(),
            i.to_string(),
            path.start.to_string(),
            path.end.to_string(),
            accepted.to_string(),
            opt(constant),
            windings,
            opt(step),
        ]);
    }
    out.tables.push((String::new(), table));
    Ok(out)
}
