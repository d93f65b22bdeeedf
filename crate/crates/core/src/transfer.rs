//! Moving block operators from `ℓ²` to `X_p`, and the experiments built on it.
//!
//! [`psi`] keeps the block data of an operator and only swaps the exponent
//! of its space, so it is exactly unital and multiplicative. Norms change by
//! at most the factor `2m+1` for band `m`. Boundary effects of finite
//! sections are suppressed by measuring tails `(I − P_w) T (I − P_w)` past
//! a leading window of `w` blocks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockop::BlockBandedOperator;
use crate::error::{Error, Result};
use crate::fredholm::{truncation_index, winding, LaurentPolynomial, CIRCLE_GRID, DEFAULT_THRESHOLD};
use crate::linalg::{spectral_norm, CMatrix};
use crate::pnorm::{estimate_norm_with_seeds, Budget, NormEstimate};
use crate::space::SpaceSpec;
use crate::tridiag::{choose_cuts, compress, CutPlan, Schedule};
use crate::C64;

/// Leading window, as a fraction of the truncation, used when none is given.
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.25;

/// Same blocks, read on `X_p` with exponent `p`.
pub fn psi(t: &BlockBandedOperator, p: f64) -> Result<BlockBandedOperator> {
    t.with_space(t.space().with_exponent(p)?)
}

/// Number of whole leading blocks inside the first `fraction · dim` entries.
pub fn window_blocks(space: &SpaceSpec, fraction: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidBudget(format!(
            "window fraction must lie in [0, 1), got {fraction}"
        )));
    }
    let entries = (fraction * space.dim() as f64).floor() as usize;
    Ok(space.blocks_within(entries).min(space.num_blocks() - 1))
}

/// Norm estimate of `(I − P_w) T (I − P_w)`, where `P_w` covers the first
/// `window` blocks.
pub fn essential_norm_proxy(
    t: &BlockBandedOperator,
    window: usize,
    budget: &Budget,
    seeds: &[Vec<C64>],
) -> Result<NormEstimate> {
    let tail = t.tail(window)?;
    let start = t.space().cuts()[window];
    let masked: Vec<Vec<C64>> = seeds.iter().map(|s| mask_head(s, start)).collect();
    estimate_norm_with_seeds(&tail, budget, &masked)
}

fn mask_head(x: &[C64], start: usize) -> Vec<C64> {
    let mut y = x.to_vec();
    y[..start.min(x.len())].fill(C64::new(0.0, 0.0));
    y
}

/// Tail estimates for every window in `windows`.
///
/// Windows are processed from largest to smallest and each run is seeded
/// with the previous witness, so lower estimates never increase with the
/// window.
pub fn tail_profile(
    t: &BlockBandedOperator,
    windows: &[usize],
    budget: &Budget,
    seeds: &[Vec<C64>],
) -> Result<Vec<(usize, NormEstimate)>> {
    let mut order: Vec<usize> = windows.to_vec();
    order.sort_unstable_by(|a, b| b.cmp(a));
    order.dedup();
    let mut out: Vec<(usize, NormEstimate)> = Vec::with_capacity(order.len());
    for w in order {
        let mut all = seeds.to_vec();
        if let Some((_, prev)) = out.last() {
            all.push(prev.witness.entries().to_vec());
        }
        out.push((w, essential_norm_proxy(t, w, budget, &all)?));
    }
    out.reverse();
    Ok(out)
}

/// Plane waves at the peak of `|f|` under smooth envelopes, supported past
/// entry `start`. For Toeplitz-like operators these nearly attain `sup |f|`.
pub fn modulated_seeds(f: &LaurentPolynomial, dim: usize, start: usize) -> Vec<Vec<C64>> {
    let (theta, _) = f.argmax_circle(CIRCLE_GRID);
    let len = dim.saturating_sub(start);
    let hann = |j: usize, from: usize, width: usize| {
        if j < from || j >= from + width {
            0.0
        } else {
            let s = (std::f64::consts::PI * (j - from + 1) as f64 / (width + 1) as f64).sin();
            s * s
        }
    };
    let wave = |env: &dyn Fn(usize) -> f64| -> Vec<C64> {
        (0..dim)
            .map(|j| C64::from_polar(env(j), -theta * j as f64))
            .collect()
    };
    let mut seeds = vec![wave(&|j| hann(j, start, len))];
    if len >= 8 {
        seeds.push(wave(&|j| hann(j, start + len / 4, len / 2)));
    }
    seeds
}

/// Norm estimate of the Toeplitz section of `f` on plain `ℓ^p(n)`.
pub fn plain_shift_norm(f: &LaurentPolynomial, n: usize, p: f64, budget: &Budget) -> Result<NormEstimate> {
    let t = BlockBandedOperator::toeplitz(f, SpaceSpec::unit(p, n)?, None)?;
    estimate_norm_with_seeds(&t, budget, &modulated_seeds(f, n, 0))
}

/// `U` (forward shift) and `U*` as dense `n × n` sections.
pub fn shift_pair(n: usize) -> (CMatrix, CMatrix) {
    let u = LaurentPolynomial::monomial(1).toeplitz_matrix(n);
    let u_star = u.adjoint();
    (u, u_star)
}

fn shared_plan(symbols: &[LaurentPolynomial], n: usize) -> Result<(CutPlan, Vec<CMatrix>)> {
    let (u, u_star) = shift_pair(n);
    let dense: Vec<CMatrix> = symbols.iter().map(|f| f.toeplitz_matrix(n)).collect();
    let mut family = vec![u, u_star];
    family.extend(dense.iter().cloned());
    let plan = choose_cuts(&family, n, &Schedule::Halving)?;
    if plan.exhausted() {
        return Err(Error::Exhausted(Box::new(plan)));
    }
    Ok((plan, dense))
}

/// Sizes and exponent of a functional-calculus run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalculusSettings {
    pub n: usize,
    pub p: f64,
    pub window_fraction: f64,
    /// Truncation for the plain `ℓ^p` contrast; defaults to `n`.
    pub plain_n: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CalculusExperiment {
    pub f: LaurentPolynomial,
    pub n: usize,
    pub p: f64,
    /// Leading blocks excluded from the tail estimate.
    pub window: usize,
    pub sup_circle: f64,
    pub plan: CutPlan,
    /// ℓ² norm of `T_f − Γ(T_f)`.
    pub compression_residual: f64,
    pub transferred_norm: NormEstimate,
    pub plain_n: usize,
    pub plain_shift_norm: NormEstimate,
    /// `−wind f`; absent when `f` vanishes on the circle.
    pub index_expected: Option<i64>,
    pub index_observed: Option<i64>,
}

/// Functional-calculus experiment for one symbol.
///
/// Cuts are chosen for `{U, U*, T_f}`; the band-1 compression of `T_f` is
/// moved to `X_p` and its tail norm estimated past `window_fraction · n`
/// entries. The same Toeplitz section on plain `ℓ^p` is estimated for
/// contrast.
pub fn run_calculus_experiment(
    f: &LaurentPolynomial,
    n: usize,
    p: f64,
    window_fraction: f64,
    budget: &Budget,
) -> Result<CalculusExperiment> {
    let settings = CalculusSettings {
        n,
        p,
        window_fraction,
        plain_n: None,
    };
    run_calculus_with(f, &settings, budget)
}

pub fn run_calculus_with(
    f: &LaurentPolynomial,
    settings: &CalculusSettings,
    budget: &Budget,
) -> Result<CalculusExperiment> {
    if f.is_zero() {
        return Err(Error::InvalidOperator("symbol must be nonzero".into()));
    }
    budget.validate()?;
    let CalculusSettings { n, p, window_fraction, plain_n } = *settings;
    let plain_n = plain_n.unwrap_or(n);
    let (plan, dense) = shared_plan(std::slice::from_ref(f), n)?;
    let (gamma, compression_residual) = compress(&dense[0], &plan)?;
    let transferred = psi(&gamma, p)?;
    let window = window_blocks(transferred.space(), window_fraction)?;
    let seeds = modulated_seeds(f, n, transferred.space().cuts()[window]);
    let transferred_norm = essential_norm_proxy(&transferred, window, budget, &seeds)?;
    let plain = plain_shift_norm(f, plain_n, p, budget)?;
    Ok(CalculusExperiment {
        f: f.clone(),
        n,
        p,
        window,
        sup_circle: f.sup_circle(CIRCLE_GRID),
        plan,
        compression_residual,
        transferred_norm,
        plain_n,
        plain_shift_norm: plain,
        index_expected: winding(f, CIRCLE_GRID).ok().map(|w| -w),
        index_observed: truncation_index(&transferred, DEFAULT_THRESHOLD).index,
    })
}

/// Source (`ℓ²`) and target (`X_p`) tail norms of one transferred operator.
#[derive(Clone, Debug, Serialize)]
pub struct TransferResult {
    pub f: LaurentPolynomial,
    pub band: usize,
    pub window: usize,
    pub compression_residual: f64,
    pub source_norm2: NormEstimate,
    pub target_norm_p: NormEstimate,
    /// `target.lower / source.upper`.
    pub ratio_lower: f64,
    /// `target.upper / source.lower`.
    pub ratio_upper: f64,
}

impl TransferResult {
    /// Both ratios inside `[1/(2m+1) − tol, 2m+1 + tol]`.
    pub fn within_bounds(&self, tol: f64) -> bool {
        let c = (2 * self.band + 1) as f64;
        self.ratio_lower >= 1.0 / c - tol && self.ratio_upper <= c + tol
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        1.0
    } else {
        a / b
    }
}

/// One shared cut plan for the whole family, then per symbol: compression,
/// transfer to `X_p`, and tail norms on both sides.
pub fn run_phi_pipeline(
    family: &[LaurentPolynomial],
    n: usize,
    p: f64,
    window_fraction: f64,
    budget: &Budget,
) -> Result<Vec<TransferResult>> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    budget.validate()?;
    let (plan, dense) = shared_plan(family, n)?;
    family
        .par_iter()
        .zip(dense.par_iter())
        .map(|(f, t)| {
            let (gamma, compression_residual) = compress(t, &plan)?;
            let window = window_blocks(gamma.space(), window_fraction)?;
            let seeds = modulated_seeds(f, n, gamma.space().cuts()[window]);
            let source_norm2 = essential_norm_proxy(&gamma, window, budget, &seeds)?;
            let mut target_seeds = seeds;
            target_seeds.push(source_norm2.witness.entries().to_vec());
            let target_norm_p = essential_norm_proxy(&psi(&gamma, p)?, window, budget, &target_seeds)?;
            Ok(TransferResult {
                f: f.clone(),
                band: gamma.band(),
                window,
                compression_residual,
                ratio_lower: ratio(target_norm_p.lower, source_norm2.upper),
                ratio_upper: ratio(target_norm_p.upper, source_norm2.lower),
                source_norm2,
                target_norm_p,
            })
        })
        .collect()
}

/// Observed defect of a compression identity against its residual budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DefectCheck {
    pub defect: f64,
    pub budget: f64,
    pub holds: bool,
}

const DEFECT_SLACK: f64 = 1e-10;

fn gamma_dense(t: &CMatrix, plan: &CutPlan) -> Result<(CMatrix, f64)> {
    let (g, r) = compress(t, plan)?;
    Ok((g.assemble(), r))
}

/// `‖Γ(A) + Γ(B) − Γ(A+B)‖` against
/// `‖A − Γ(A)‖ + ‖B − Γ(B)‖ + ‖(A+B) − Γ(A+B)‖`.
pub fn additivity_check(a: &CMatrix, b: &CMatrix, plan: &CutPlan) -> Result<DefectCheck> {
    let (ga, ra) = gamma_dense(a, plan)?;
    let (gb, rb) = gamma_dense(b, plan)?;
    let (gs, rs) = gamma_dense(&(a + b), plan)?;
    let defect = spectral_norm(&(ga + gb - gs));
    let budget = ra + rb + rs;
    Ok(DefectCheck {
        defect,
        budget,
        holds: defect <= budget + DEFECT_SLACK,
    })
}

/// `‖Γ(A)Γ(B) − Γ(AB)‖` against the budget from
/// `Γ(A)Γ(B) − Γ(AB) = Γ(A)(Γ(B) − B) + (Γ(A) − A)B + (AB − Γ(AB))`.
pub fn multiplicativity_check(a: &CMatrix, b: &CMatrix, plan: &CutPlan) -> Result<DefectCheck> {
    let (ga, ra) = gamma_dense(a, plan)?;
    let (gb, rb) = gamma_dense(b, plan)?;
    let (gp, rp) = gamma_dense(&(a * b), plan)?;
    let defect = spectral_norm(&(&ga * &gb - gp));
    let budget = spectral_norm(&ga) * rb + ra * spectral_norm(b) + rp;
    Ok(DefectCheck {
        defect,
        budget,
        holds: defect <= budget + DEFECT_SLACK,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> C64 {
        C64::new(1.0, 0.0)
    }

    fn budget() -> Budget {
        Budget {
            max_iterations: 200,
            ascent_iterations: 60,
            restarts: 3,
            ..Budget::default()
        }
    }

    fn w(n: i64) -> LaurentPolynomial {
        LaurentPolynomial::monomial(n)
    }

    #[test]
    fn psi_is_a_reinterpretation() {
        let s = SpaceSpec::from_widths(2.0, &[1, 2, 3, 2]).unwrap();
        let id = BlockBandedOperator::identity(s.clone());
        assert_eq!(psi(&id, 3.0).unwrap(), BlockBandedOperator::identity(s.with_exponent(3.0).unwrap()));

        let (u, u_star) = shift_pair(8);
        let sp = SpaceSpec::from_widths(2.0, &[1, 2, 2, 3]).unwrap();
        let (a, _) = BlockBandedOperator::from_dense(&u, sp.clone(), 1).unwrap();
        let (b, _) = BlockBandedOperator::from_dense(&u_star, sp, 1).unwrap();
        let lhs = psi(&a.compose(&b).unwrap(), 4.0).unwrap();
        let rhs = psi(&a, 4.0).unwrap().compose(&psi(&b, 4.0).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
        assert_eq!(psi(&b, 4.0).unwrap().assemble(), u_star);
        let est = estimate_norm_with_seeds(&psi(&b, 4.0).unwrap(), &budget(), &[]).unwrap();
        assert!(est.lower >= 1.0 - 1e-9 && est.upper <= 3.0 + 1e-9);
    }

    #[test]
    fn proxy_examples() {
        let s = SpaceSpec::uniform(3.0, 2, 12).unwrap();
        let id = BlockBandedOperator::identity(s.clone());
        for wdw in 0..6 {
            let e = essential_norm_proxy(&id, wdw, &budget(), &[]).unwrap();
            assert!((e.lower - 1.0).abs() < 1e-9, "window {wdw}: {}", e.lower);
        }
        let block = CMatrix::from_element(2, 2, C64::new(0.5, -0.25));
        let finite = BlockBandedOperator::new(s.clone(), 0, [((0, 0), block)]).unwrap();
        assert_eq!(essential_norm_proxy(&finite, 1, &budget(), &[]).unwrap().lower, 0.0);
        assert!(matches!(
            essential_norm_proxy(&id, 6, &budget(), &[]),
            Err(Error::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn tail_profile_is_monotone() {
        let f = w(-1).add(&w(2).scale(C64::new(0.0, 0.7))).add(&LaurentPolynomial::constant(one()));
        let s = SpaceSpec::uniform(4.0, 3, 60).unwrap();
        let t = BlockBandedOperator::toeplitz(&f, s, None).unwrap();
        let prof = tail_profile(&t, &[0, 2, 5, 9, 14], &budget(), &modulated_seeds(&f, 60, 0)).unwrap();
        for pair in prof.windows(2) {
            assert!(pair[0].0 < pair[1].0);
            assert!(pair[0].1.lower >= pair[1].1.lower - 1e-12);
        }
        for (wdw, e) in &prof {
            assert!((e.replay(&t.tail(*wdw).unwrap()) - e.lower).abs() < 1e-9);
        }
    }

    #[test]
    fn toeplitz_tail_approaches_circle_sup() {
        let f = w(1).add(&w(-1)).add(&w(2).scale(C64::new(0.3, 0.2)));
        let sup = f.sup_circle(CIRCLE_GRID);
        let mut prev = f64::NAN;
        for n in [128, 256] {
            let t = BlockBandedOperator::toeplitz(&f, SpaceSpec::unit(2.0, n).unwrap(), None).unwrap();
            let e = essential_norm_proxy(&t, n / 2, &budget(), &[]).unwrap();
            assert!(e.lower <= sup + 1e-9);
            assert!(e.lower > sup * 0.99, "n={n}: {} vs {sup}", e.lower);
            if prev.is_finite() {
                assert!((e.lower - prev).abs() / prev < 0.02);
            }
            prev = e.lower;
        }
    }

    #[test]
    fn calculus_examples() {
        let b = budget();
        let c = run_calculus_experiment(&LaurentPolynomial::constant(one()), 64, 4.0, 0.25, &b).unwrap();
        assert!((c.transferred_norm.lower - 1.0).abs() < 1e-9);
        assert!((c.sup_circle - 1.0).abs() < 1e-12);
        assert_eq!((c.index_expected, c.index_observed), (Some(0), Some(0)));

        let c = run_calculus_experiment(&w(-1), 64, 4.0, 0.25, &b).unwrap();
        assert!((c.sup_circle - 1.0).abs() < 1e-12);
        assert!(c.transferred_norm.lower <= 3.0 + 1e-9);
        assert_eq!((c.index_expected, c.index_observed), (Some(1), Some(1)));

        let f = w(1).add(&w(-1));
        let c = run_calculus_experiment(&f, 128, 4.0, 0.25, &b).unwrap();
        assert!((c.sup_circle - 2.0).abs() < 1e-12);
        assert!(c.transferred_norm.lower <= 6.0 + 1e-9);
        assert!(c.transferred_norm.upper <= 6.0 + 1e-9);
        assert!(c.plain_shift_norm.lower >= 2.0 - 0.05);
        assert!(!c.plan.exhausted());

        assert!(run_calculus_experiment(&LaurentPolynomial::zero(), 32, 4.0, 0.25, &b).is_err());
    }

    #[test]
    fn phi_pipeline_examples() {
        let b = budget();
        let r = run_phi_pipeline(&[LaurentPolynomial::constant(one())], 32, 4.0, 0.25, &b).unwrap();
        assert_eq!(r[0].ratio_lower, 1.0);
        assert_eq!(r[0].ratio_upper, 1.0);

        let family = [w(-1), w(1), w(1).add(&w(-1))];
        let results = run_phi_pipeline(&family, 128, 4.0, 0.25, &b).unwrap();
        for r in &results {
            assert_eq!(r.band, 1);
            assert!(r.within_bounds(1e-9), "{}: {} {}", r.f, r.ratio_lower, r.ratio_upper);
            assert!(r.target_norm_p.lower <= 3.0 * r.source_norm2.upper + 1e-6);
            assert!(r.target_norm_p.upper >= r.source_norm2.lower / 3.0 - 1e-6);
        }
        assert!(run_phi_pipeline(&[], 32, 4.0, 0.25, &b).is_err());
    }

    #[test]
    fn compression_identities_respect_budgets() {
        let n = 64;
        let (u, u_star) = shift_pair(n);
        let decay = CMatrix::from_fn(n, n, |i, j| C64::new(2f64.powi(-(i.abs_diff(j) as i32)), 0.0));
        let plan = choose_cuts(&[u.clone(), u_star.clone(), decay.clone()], n, &Schedule::Halving).unwrap();
        let add = additivity_check(&u, &u_star, &plan).unwrap();
        assert!(add.holds && add.defect < 1e-14);
        for (a, b) in [(&u, &u_star), (&u_star, &u), (&decay, &u), (&u, &decay)] {
            let m = multiplicativity_check(a, b, &plan).unwrap();
            assert!(m.holds, "{} > {}", m.defect, m.budget);
        }
    }

    #[test]
    fn window_blocks_converts_entries() {
        let s = SpaceSpec::new(2.0, vec![0, 1, 4, 8, 12, 16]).unwrap();
        assert_eq!(window_blocks(&s, 0.25).unwrap(), 2);
        assert_eq!(window_blocks(&s, 0.0).unwrap(), 0);
        assert!(window_blocks(&s, 1.0).is_err());
    }
}
