//! Fredholm index machinery for Laurent symbols.
//!
//! The winding number of a symbol that does not vanish on the unit circle
//! gives the index of its Toeplitz operator (`ind T_f = -wind f`). The
//! truncation estimate counts near-zero singular values of finite sections,
//! with extra rows of context so the artificial far boundary does not
//! create a spurious cokernel.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockop::BlockBandedOperator;
use crate::error::{Error, Result};
use crate::linalg::{singular_values_sorted, CMatrix};
use crate::space::SpaceSpec;
use crate::C64;

/// Symbols with `min |f| ≤` this on the circle are treated as vanishing.
pub const VANISHING_TOLERANCE: f64 = 1e-9;

/// Default circle grid for sup/min evaluations.
pub const CIRCLE_GRID: usize = 4096;

const MAX_GRID: usize = 1 << 22;

/// `f(w) = Σ_n a_n w^n` with finitely many nonzero coefficients.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<(i64, C64)>", into = "Vec<(i64, C64)>")]
pub struct LaurentPolynomial {
    coeffs: BTreeMap<i64, C64>,
}

impl From<Vec<(i64, C64)>> for LaurentPolynomial {
    fn from(v: Vec<(i64, C64)>) -> Self {
        Self::new(v)
    }
}

impl From<LaurentPolynomial> for Vec<(i64, C64)> {
    fn from(f: LaurentPolynomial) -> Self {
        f.coeffs.into_iter().collect()
    }
}

impl LaurentPolynomial {
    /// Repeated offsets are summed; zero coefficients are dropped.
    pub fn new(terms: impl IntoIterator<Item = (i64, C64)>) -> Self {
        let mut coeffs = BTreeMap::new();
        for (n, a) in terms {
            *coeffs.entry(n).or_insert(C64::new(0.0, 0.0)) += a;
        }
        coeffs.retain(|_, a| *a != C64::new(0.0, 0.0));
        LaurentPolynomial { coeffs }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: C64) -> Self {
        Self::new([(0, c)])
    }

    /// `w^n`.
    pub fn monomial(n: i64) -> Self {
        Self::new([(n, C64::new(1.0, 0.0))])
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, n: i64) -> C64 {
        self.coeffs.get(&n).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    /// Nonzero coefficients in increasing order of offset.
    pub fn support(&self) -> impl Iterator<Item = (i64, C64)> + '_ {
        self.coeffs.iter().map(|(&n, &a)| (n, a))
    }

    /// `max |n|` over the support.
    pub fn degree(&self) -> usize {
        self.coeffs.keys().map(|n| n.unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn eval(&self, w: C64) -> C64 {
        self.support().map(|(n, a)| a * w.powi(n as i32)).sum()
    }

    pub fn eval_angle(&self, theta: f64) -> C64 {
        self.support()
            .map(|(n, a)| a * C64::from_polar(1.0, n as f64 * theta))
            .sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(self.support().chain(other.support()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(self.support().chain(other.support().map(|(n, a)| (n, -a))))
    }

    pub fn scale(&self, c: C64) -> Self {
        Self::new(self.support().map(|(n, a)| (n, a * c)))
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::new(
            self.support()
                .flat_map(|(n, a)| other.support().map(move |(m, b)| (n + m, a * b))),
        )
    }

    /// `Σ |a_n|`, a bound for `sup |f|` on the circle.
    pub fn coefficient_l1(&self) -> f64 {
        self.support().map(|(_, a)| a.norm()).sum()
    }

    /// `Σ |n| |a_n|`, a Lipschitz constant of `θ ↦ f(e^{iθ})`.
    pub fn angular_lipschitz(&self) -> f64 {
        self.support().map(|(n, a)| n.unsigned_abs() as f64 * a.norm()).sum()
    }

    fn grid_values(&self, grid: usize) -> Vec<C64> {
        (0..grid)
            .map(|k| self.eval_angle(2.0 * PI * k as f64 / grid as f64))
            .collect()
    }

    /// Dense `n × n` section with entries `T[r][c] = a_{r−c}`.
    pub fn toeplitz_matrix(&self, n: usize) -> CMatrix {
        CMatrix::from_fn(n, n, |r, c| self.coeff(r as i64 - c as i64))
    }

    /// `max |f|` over a uniform grid of `grid` points.
    pub fn sup_circle(&self, grid: usize) -> f64 {
        self.argmax_circle(grid).1
    }

    /// Grid angle maximizing `|f|`, and the maximum.
    pub fn argmax_circle(&self, grid: usize) -> (f64, f64) {
        let grid = grid.max(1);
        self.grid_values(grid)
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(bt, bv), (k, v)| {
                let m = v.norm();
                if m > bv {
                    (2.0 * PI * k as f64 / grid as f64, m)
                } else {
                    (bt, bv)
                }
            })
    }

    /// `min |f|` over a uniform grid of `grid` points.
    pub fn min_circle(&self, grid: usize) -> f64 {
        self.grid_values(grid.max(1))
            .iter()
            .map(|v| v.norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// A rigorous lower bound on `min |f|` over the whole circle.
    ///
    /// Refines the grid until the Lipschitz margin is smaller than the grid
    /// minimum; returns `(bound, grid_min)`. The bound is `≤ 0` when the
    /// grid minimum itself is below [`VANISHING_TOLERANCE`] or the grid cap
    /// is reached.
    pub fn certified_min_modulus(&self) -> (f64, f64) {
        self.certified_min_modulus_up_to(MAX_GRID)
    }

    fn certified_min_modulus_up_to(&self, max_grid: usize) -> (f64, f64) {
        let lip = self.angular_lipschitz();
        let mut grid = CIRCLE_GRID;
        loop {
            let m = self.min_circle(grid);
            let bound = m - lip * PI / grid as f64;
            if bound > 0.0 || m <= VANISHING_TOLERANCE || grid >= max_grid {
                return (bound, m);
            }
            grid *= 2;
        }
    }
}

impl fmt::Display for LaurentPolynomial {
    /// Same `n:re,im;…` format accepted by [`FromStr`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .support()
            .map(|(n, a)| format!("{n}:{},{}", a.re, a.im))
            .collect();
        write!(f, "{}", parts.join(";"))
    }
}

impl FromStr for LaurentPolynomial {
    type Err = Error;

    /// Parses `"n:re,im;n:re,im"`; the imaginary part may be omitted.
    fn from_str(s: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for item in s.split([';', ' ']).map(str::trim).filter(|t| !t.is_empty()) {
            let (n, value) = item
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("expected n:re,im, got {item:?}")))?;
            let n: i64 = n
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad offset in {item:?}")))?;
            let mut parts = value.split(',');
            let re: f64 = parts
                .next()
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad real part in {item:?}")))?;
            let im: f64 = match parts.next() {
                Some(t) => t
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad imaginary part in {item:?}")))?,
                None => 0.0,
            };
            if parts.next().is_some() {
                return Err(Error::Parse(format!("too many fields in {item:?}")));
            }
            terms.push((n, C64::new(re, im)));
        }
        Ok(LaurentPolynomial::new(terms))
    }
}

/// Winding number of `f` around 0 along the unit circle.
///
/// Sums principal argument increments over a uniform grid, refining until
/// every increment is below `π/2`.
pub fn winding(f: &LaurentPolynomial, grid: usize) -> Result<i64> {
    let lip = f.angular_lipschitz();
    let mut grid = grid.max(8);
    loop {
        let values = f.grid_values(grid);
        let min_modulus = values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
        if !(min_modulus > VANISHING_TOLERANCE) {
            return Err(Error::SymbolNotInvertible { min_modulus });
        }
        // Each arc stays inside a disc around its left endpoint that
        // excludes zero, so the principal argument step is the true one.
        if lip * 2.0 * PI / (grid as f64) < min_modulus || grid >= MAX_GRID {
            let total: f64 = (0..grid)
                .map(|k| (values[(k + 1) % grid] / values[k]).arg())
                .sum();
            return Ok((total / (2.0 * PI)).round() as i64);
        }
        grid *= 2;
    }
}

/// Finest circle grid used while certifying a path.
pub const PATH_GRID_CAP: usize = 1 << 16;

/// Bisection depth below a path step before a segment is given up on.
pub const PATH_MAX_DEPTH: usize = 24;

/// Linear interpolation between two symbols in coefficient space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolPath {
    pub start: LaurentPolynomial,
    pub end: LaurentPolynomial,
    pub steps: usize,
}

impl SymbolPath {
    pub fn new(start: LaurentPolynomial, end: LaurentPolynomial, steps: usize) -> Self {
        SymbolPath {
            start,
            end,
            steps: steps.max(1),
        }
    }

    pub fn at(&self, t: f64) -> LaurentPolynomial {
        self.start
            .scale(C64::new(1.0 - t, 0.0))
            .add(&self.end.scale(C64::new(t, 0.0)))
    }

    pub fn step(&self, k: usize) -> LaurentPolynomial {
        self.at(k as f64 / self.steps as f64)
    }

    /// Check that no symbol on the continuous path vanishes on the circle.
    ///
    /// Each sampled step must have `min |f| > tolerance`; between steps the
    /// segment is certified with `|f_t| ≥ |f_s| - |t-s| Σ|b_n - a_n|`,
    /// bisecting where the margin is insufficient. A zero found between
    /// steps is reported at the nearest step, and so is any point that
    /// cannot be certified within [`PATH_GRID_CAP`] and [`PATH_MAX_DEPTH`].
    pub fn validate(&self) -> Result<()> {
        let drift = self.end.sub(&self.start).coefficient_l1();
        let mut mins = Vec::with_capacity(self.steps + 1);
        for k in 0..=self.steps {
            let (bound, grid_min) = self.step(k).certified_min_modulus_up_to(PATH_GRID_CAP);
            if grid_min <= VANISHING_TOLERANCE || bound <= 0.0 {
                return Err(self.vanishing(k, grid_min));
            }
            mins.push(bound);
        }
        for k in 0..self.steps {
            let t0 = k as f64 / self.steps as f64;
            let t1 = (k + 1) as f64 / self.steps as f64;
            if let Some((t, m)) = self.find_zero(t0, t1, mins[k], mins[k + 1], drift, 0) {
                let step = (t * self.steps as f64).round() as usize;
                return Err(self.vanishing(step, m));
            }
        }
        Ok(())
    }

    fn vanishing(&self, step: usize, min_modulus: f64) -> Error {
        Error::VanishingPath {
            step,
            steps: self.steps,
            min_modulus,
        }
    }

    fn find_zero(
        &self,
        t0: f64,
        t1: f64,
        m0: f64,
        m1: f64,
        drift: f64,
        depth: usize,
    ) -> Option<(f64, f64)> {
        // min over t of max(m0 - (t-t0)D, m1 - (t1-t)D) is (m0 + m1 - (t1-t0)D) / 2
        if m0 + m1 > (t1 - t0) * drift {
            return None;
        }
        let tm = 0.5 * (t0 + t1);
        let (bound, grid_min) = self.at(tm).certified_min_modulus_up_to(PATH_GRID_CAP);
        if grid_min <= VANISHING_TOLERANCE || bound <= 0.0 || depth >= PATH_MAX_DEPTH {
            return Some((tm, grid_min));
        }
        self.find_zero(t0, tm, m0, bound, drift, depth + 1)
            .or_else(|| self.find_zero(tm, t1, bound, m1, drift, depth + 1))
    }
}

/// Winding at every step of a validated path and whether it is constant.
pub fn path_index_constancy(path: &SymbolPath) -> Result<(bool, Vec<i64>)> {
    path.validate()?;
    let indices: Vec<i64> = (0..=path.steps)
        .into_par_iter()
        .map(|k| winding(&path.step(k), CIRCLE_GRID))
        .collect::<Result<_>>()?;
    let constant = indices.windows(2).all(|w| w[0] == w[1]);
    Ok((constant, indices))
}

/// Kernel and cokernel counts of a finite section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationIndex {
    /// `dim ker − dim coker`, when the singular spectrum shows a clear gap.
    pub index: Option<i64>,
    pub kernel_dim: usize,
    pub cokernel_dim: usize,
    /// Worst of the two gap ratios (smallest kept / largest discarded).
    pub gap_ratio: f64,
    pub converged: bool,
    /// Smallest singular values of the section and of its adjoint.
    pub kernel_spectrum: Vec<f64>,
    pub cokernel_spectrum: Vec<f64>,
}

/// Minimum ratio between the smallest nonzero and largest zero singular value.
pub const GAP_RATIO: f64 = 100.0;

pub const DEFAULT_THRESHOLD: f64 = 1e-6;

fn count_small(sv: &[f64], threshold: f64) -> (usize, f64) {
    let zeros = sv.iter().filter(|&&s| s < threshold).count();
    let largest_zero = if zeros > 0 { sv[zeros - 1] } else { threshold };
    let ratio = match sv.get(zeros) {
        Some(&s) => s / largest_zero.max(f64::MIN_POSITIVE),
        None => f64::INFINITY,
    };
    (zeros, ratio)
}

/// Index estimate `dim_ε ker T_N − dim_ε ker T_N*` of a banded operator.
///
/// Columns of the last `band` blocks are dropped so that every kept column
/// is mapped without loss inside the section (one band of context); the
/// counts are read from the singular values of the resulting tall matrices.
pub fn truncation_index(t: &BlockBandedOperator, threshold: f64) -> TruncationIndex {
    let space = t.space();
    let k = space.num_blocks();
    let kept_blocks = k.saturating_sub(t.band());
    if kept_blocks == 0 {
        return TruncationIndex {
            index: None,
            kernel_dim: 0,
            cokernel_dim: 0,
            gap_ratio: 0.0,
            converged: false,
            kernel_spectrum: Vec::new(),
            cokernel_spectrum: Vec::new(),
        };
    }
    let cols = space.cuts()[kept_blocks];
    let a = t.assemble();
    let forward = a.columns(0, cols).into_owned();
    let backward = a.adjoint().columns(0, cols).into_owned();
    let (sv_f, sv_b) = rayon::join(
        || singular_values_sorted(&forward),
        || singular_values_sorted(&backward),
    );
    let (kernel_dim, ratio_f) = count_small(&sv_f, threshold);
    let (cokernel_dim, ratio_b) = count_small(&sv_b, threshold);
    let gap_ratio = ratio_f.min(ratio_b);
    let converged = gap_ratio >= GAP_RATIO;
    let head = |sv: &[f64]| sv.iter().take(kernel_dim.max(cokernel_dim) + 3).copied().collect();
    TruncationIndex {
        index: converged.then_some(kernel_dim as i64 - cokernel_dim as i64),
        kernel_dim,
        cokernel_dim,
        gap_ratio,
        converged,
        kernel_spectrum: head(&sv_f),
        cokernel_spectrum: head(&sv_b),
    }
}

/// Winding oracle and truncation estimate for one symbol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub symbol: LaurentPolynomial,
    pub truncation: usize,
    /// `-wind f`, the Fredholm index of the Toeplitz operator.
    pub winding_index: i64,
    pub truncation_index: Option<i64>,
    pub agree: bool,
    pub singular_values_near_zero: Vec<f64>,
    pub details: TruncationIndex,
}

/// Compare the winding oracle with the truncation count at section size `n`.
pub fn index_report(f: &LaurentPolynomial, n: usize, threshold: f64) -> Result<IndexReport> {
    let winding_index = -winding(f, CIRCLE_GRID)?;
    let t = BlockBandedOperator::toeplitz(f, SpaceSpec::unit(2.0, n)?, None)?;
    let details = truncation_index(&t, threshold);
    let mut near: Vec<f64> = details
        .kernel_spectrum
        .iter()
        .chain(&details.cokernel_spectrum)
        .copied()
        .collect();
    near.sort_by(|a, b| a.total_cmp(b));
    near.truncate(6);
    Ok(IndexReport {
        symbol: f.clone(),
        truncation: n,
        winding_index,
        truncation_index: details.index,
        agree: details.index == Some(winding_index),
        singular_values_near_zero: near,
        details,
    })
}
