//! Greedy cut selection and block-tridiagonal compression.
//!
//! Given a finite family `T_1, …, T_M` of matrices, [`choose_cuts`] picks
//! `0 = r_1 < r_2 < …` so that at step `m`, for every member `i ≤ min(m, M)`,
//!
//! ```text
//! ‖(I − P_{r_m}) T_i P_{r_{m−1}}‖ ≤ ε_m   and   ‖(I − P_{r_m}) T_i* P_{r_{m−1}}‖ ≤ ε_m
//! ```
//!
//! where `P_r` projects onto the first `r` coordinates. Each `r_m` is the
//! smallest admissible value. [`compress`] then keeps the block tridiagonal
//! part of an operator relative to those cuts.
//!
//! Matrices may be larger than the truncation `n`. Extra rows act as
//! context: the final cut `n` is then checked against the rows beyond it,
//! which is the only way a finite run can fail to meet its schedule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockop::BlockBandedOperator;
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, spectral_norm_view, CMatrix};
use crate::space::SpaceSpec;
use crate::C64;

/// Tail tolerances `ε_m`, indexed by the 1-based cut step `m ≥ 2`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "values")]
pub enum Schedule {
    /// `ε_m = 2^{−(m+1)}`.
    #[default]
    Halving,
    Constant(f64),
    /// `ε_m = values[m − 2]`; the last value repeats past the end.
    Explicit(Vec<f64>),
}

impl Schedule {
    pub fn epsilon(&self, m: usize) -> f64 {
        match self {
            Schedule::Halving => 0.5f64.powi(m as i32 + 1),
            Schedule::Constant(e) => *e,
            Schedule::Explicit(v) => v[(m.saturating_sub(2)).min(v.len() - 1)],
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |e: f64| !(e.is_finite() && e >= 0.0);
        match self {
            Schedule::Halving => Ok(()),
            Schedule::Constant(e) if bad(*e) => Err(Error::InvalidBudget(format!(
                "schedule tolerance must be finite and non-negative, got {e}"
            ))),
            Schedule::Explicit(v) if v.is_empty() || v.iter().any(|&e| bad(e)) => Err(
                Error::InvalidBudget("explicit schedule needs finite non-negative values".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Achieved tail norms for member `member` (1-based) at cut step `step`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub step: usize,
    pub member: usize,
    pub forward: f64,
    pub adjoint: f64,
    pub epsilon: f64,
}

impl TailBound {
    pub fn satisfied(&self) -> bool {
        self.forward <= self.epsilon && self.adjoint <= self.epsilon
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCutPlan")]
pub struct CutPlan {
    cuts: Vec<usize>,
    family_size: usize,
    tail_bounds: Vec<TailBound>,
    exhausted: bool,
}

#[derive(Deserialize)]
struct RawCutPlan {
    cuts: Vec<usize>,
    family_size: usize,
    tail_bounds: Vec<TailBound>,
    exhausted: bool,
}

impl TryFrom<RawCutPlan> for CutPlan {
    type Error = Error;

    fn try_from(raw: RawCutPlan) -> Result<Self> {
        SpaceSpec::new(2.0, raw.cuts.clone())?;
        Ok(CutPlan {
            cuts: raw.cuts,
            family_size: raw.family_size,
            tail_bounds: raw.tail_bounds,
            exhausted: raw.exhausted,
        })
    }
}

impl CutPlan {
    /// `r_1 = 0, r_2, …`, ending at the truncation.
    pub fn cuts(&self) -> &[usize] {
        &self.cuts
    }

    pub fn family_size(&self) -> usize {
        self.family_size
    }

    pub fn tail_bounds(&self) -> &[TailBound] {
        &self.tail_bounds
    }

    /// The final cut could not meet its tolerance inside the truncation.
    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn dim(&self) -> usize {
        *self.cuts.last().expect("plans have at least two cuts")
    }

    pub fn num_blocks(&self) -> usize {
        self.cuts.len() - 1
    }

    /// Block structure of the plan with exponent `p`.
    pub fn space(&self, p: f64) -> Result<SpaceSpec> {
        SpaceSpec::new(p, self.cuts.clone())
    }

    /// Cut `r_k` with `r_0 = 0` and cuts past the end clamped to the
    /// truncation (1-based, as in the construction).
    fn r(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            self.cuts[(k - 1).min(self.cuts.len() - 1)]
        }
    }
}

/// How far nonzero entries reach below and to the right of each leading
/// section, so zero tails are recognized without touching the matrix.
struct Reach {
    /// `below[c]`: one past the last nonzero row among columns `< c`.
    below: Vec<usize>,
    /// `right[i]`: one past the last nonzero column among rows `< i`.
    right: Vec<usize>,
}

impl Reach {
    fn new(t: &CMatrix) -> Self {
        let zero = C64::new(0.0, 0.0);
        let d = t.nrows();
        let mut below = vec![0; d + 1];
        let mut right = vec![0; d + 1];
        for c in 0..d {
            let last = (0..d).rev().find(|&i| t[(i, c)] != zero).map_or(0, |i| i + 1);
            below[c + 1] = below[c].max(last);
        }
        for i in 0..d {
            let last = (0..d).rev().find(|&j| t[(i, j)] != zero).map_or(0, |j| j + 1);
            right[i + 1] = right[i].max(last);
        }
        Reach { below, right }
    }
}

/// `‖(I − P_r) T P_prev‖` and `‖(I − P_r) T* P_prev‖`.
fn tails(t: &CMatrix, reach: &Reach, r: usize, prev: usize) -> (f64, f64) {
    let rows_end = reach.below[prev];
    let forward = if rows_end <= r {
        0.0
    } else {
        spectral_norm_view(t.view((r, 0), (rows_end - r, prev)))
    };
    // rows r.. of T* restricted to columns ..prev is the adjoint of this block
    let cols_end = reach.right[prev];
    let adjoint = if cols_end <= r {
        0.0
    } else {
        spectral_norm_view(t.view((0, r), (prev, cols_end - r)))
    };
    (forward, adjoint)
}

fn check_family(family: &[CMatrix], n: usize) -> Result<usize> {
    let first = family.first().ok_or(Error::EmptyFamily)?;
    let d = first.nrows();
    if n == 0 {
        return Err(Error::InvalidSpace("truncation must be positive".into()));
    }
    for t in family {
        if !t.is_square() || t.nrows() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: if t.nrows() != d { t.nrows() } else { t.ncols() },
            });
        }
    }
    if d < n {
        return Err(Error::PlanMismatch { plan: n, matrix: d });
    }
    Ok(d)
}

/// Greedy cut points for `family` up to truncation `n`.
///
/// Every matrix must be square of the same size `D ≥ n`. Tail norms are
/// non-increasing in `r`, so each minimal cut is found by galloping from
/// the previous cut and then bisecting.
pub fn choose_cuts(family: &[CMatrix], n: usize, schedule: &Schedule) -> Result<CutPlan> {
    check_family(family, n)?;
    schedule.validate()?;
    let reach: Vec<Reach> = family.par_iter().map(Reach::new).collect();
    let mut cuts = vec![0usize];
    let mut tail_bounds = Vec::new();
    let mut exhausted = false;
    let mut m = 1;
    while *cuts.last().unwrap() < n {
        m += 1;
        let prev = *cuts.last().unwrap();
        let eps = schedule.epsilon(m);
        let members = m.min(family.len());
        let admissible = |r: usize| {
            (0..members).into_par_iter().all(|i| {
                let (f, a) = tails(&family[i], &reach[i], r, prev);
                f <= eps && a <= eps
            })
        };
        // gallop: find a failing lo and an admissible hi
        let mut lo = prev;
        let mut step = 1;
        let mut hi = loop {
            let r = (prev + step).min(n);
            if admissible(r) {
                break Some(r);
            }
            lo = r;
            if r == n {
                break None;
            }
            step *= 2;
        };
        let chosen = match hi.as_mut() {
            Some(hi) => {
                while *hi - lo > 1 {
                    let mid = lo + (*hi - lo) / 2;
                    if admissible(mid) {
                        *hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                *hi
            }
            None => {
                exhausted = true;
                n
            }
        };
        let achieved: Vec<TailBound> = (0..members)
            .into_par_iter()
            .map(|i| {
                let (forward, adjoint) = tails(&family[i], &reach[i], chosen, prev);
                TailBound {
                    step: m,
                    member: i + 1,
                    forward,
                    adjoint,
                    epsilon: eps,
                }
            })
            .collect();
        tail_bounds.extend(achieved);
        cuts.push(chosen);
    }
    Ok(CutPlan {
        cuts,
        family_size: family.len(),
        tail_bounds,
        exhausted,
    })
}

/// Block tridiagonal part of `t` relative to the plan, and the ℓ² norm of
/// what was dropped.
pub fn compress(t: &CMatrix, plan: &CutPlan) -> Result<(BlockBandedOperator, f64)> {
    if t.shape() != (plan.dim(), plan.dim()) {
        return Err(Error::PlanMismatch {
            plan: plan.dim(),
            matrix: t.nrows().max(t.ncols()),
        });
    }
    BlockBandedOperator::from_dense(t, plan.space(2.0)?, 1)
}

/// `‖(I − (Q_{k−1} + Q_k + Q_{k+1})) T Q_k‖` for column block `k` (1-based),
/// where `Q_k = P_{r_{k+1}} − P_{r_k}`.
fn column_residual(t: &CMatrix, plan: &CutPlan, k: usize) -> f64 {
    let (c0, c1) = (plan.r(k), plan.r(k + 1));
    let (keep0, keep1) = (plan.r(k - 1), plan.r(k + 2));
    let mut col = t.columns(c0, c1 - c0).into_owned();
    col.rows_mut(keep0, keep1 - keep0).fill(C64::new(0.0, 0.0));
    spectral_norm(&col)
}

/// One row of the tridiagonal error table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TridiagCheck {
    pub k: usize,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Checks `‖(I − (Q_{k−1}+Q_k+Q_{k+1})) T_i Q_k‖ < 2^{−k}` for every
/// `k ≥ i` whose cut `r_{k+2}` lies inside the plan.
///
/// `member` is the 1-based position of `t` in the family used to build the
/// plan; `t` may carry context rows beyond the truncation.
pub fn verify_tridiag_error(t: &CMatrix, member: usize, plan: &CutPlan) -> Result<Vec<TridiagCheck>> {
    if !t.is_square() || t.nrows() < plan.dim() {
        return Err(Error::PlanMismatch {
            plan: plan.dim(),
            matrix: t.nrows(),
        });
    }
    let last = plan.cuts.len();
    let ks: Vec<usize> = (member.max(1)..=last.saturating_sub(2)).collect();
    Ok(ks
        .par_iter()
        .map(|&k| {
            let value = column_residual(t, plan, k);
            let bound = 0.5f64.powi(k as i32);
            TridiagCheck {
                k,
                value,
                bound,
                pass: value < bound,
            }
        })
        .collect())
}

/// Residual of member `member` (1-based) on column block `k` (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnResidual {
    pub k: usize,
    pub member: usize,
    pub residual: f64,
}

/// Plan, residual profile and band-1 compressions for a whole family.
#[derive(Clone, Debug, Serialize)]
pub struct TridiagReport {
    pub plan: CutPlan,
    /// For every member and every column block.
    pub residuals: Vec<ColumnResidual>,
    /// ℓ² norm of `T_i − Γ(T_i)` on the truncation.
    pub compression_residuals: Vec<f64>,
    #[serde(skip)]
    pub gammas: Vec<BlockBandedOperator>,
}

impl TridiagReport {
    /// Whether every residual with `k ≥ member` and `r_{k+2}` inside the
    /// plan is below `2^{−k}`.
    pub fn bounds_hold(&self) -> bool {
        let last = self.plan.cuts.len();
        self.residuals
            .iter()
            .filter(|r| r.k >= r.member && r.k + 2 <= last)
            .all(|r| r.residual < 0.5f64.powi(r.k as i32))
    }
}

/// [`choose_cuts`] followed by [`compress`] of every member.
///
/// Compressions act on the leading `n × n` section.
pub fn tridiagonalize(family: &[CMatrix], n: usize, schedule: &Schedule) -> Result<TridiagReport> {
    let plan = choose_cuts(family, n, schedule)?;
    let blocks = plan.num_blocks();
    let residuals = family
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (1..=blocks).map(move |k| (i, t, k)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(i, t, k)| ColumnResidual {
            k,
            member: i + 1,
            residual: column_residual(t, &plan, k),
        })
        .collect();
    let compressed: Vec<(BlockBandedOperator, f64)> = family
        .par_iter()
        .map(|t| compress(&t.view((0, 0), (n, n)).into_owned(), &plan))
        .collect::<Result<_>>()?;
    let (gammas, compression_residuals) = compressed.into_iter().unzip();
    Ok(TridiagReport {
        plan,
        residuals,
        compression_residuals,
        gammas,
    })
}
