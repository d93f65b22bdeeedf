//! Banded block operators on a [`SpaceSpec`].
//!
//! A [`BlockBandedOperator`] stores the blocks `T_{i,j}` (block row `i`,
//! block column `j`, both 0-based) with `|i - j| ≤ band`. Absent blocks are
//! zero. The same block data can be read on any exponent `p`; only the norm
//! context changes, which is what the transfer map relies on.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fredholm::LaurentPolynomial;
use crate::linalg::{spectral_norm, top_singular, CMatrix};
use crate::space::{MixedVector, SpaceSpec};
use crate::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Operator in `W_m`: block matrix with blocks vanishing outside `|i-j| ≤ m`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockBandedOperator {
    space: SpaceSpec,
    band: usize,
    blocks: BTreeMap<(usize, usize), CMatrix>,
    block_norms: BTreeMap<(usize, usize), f64>,
    sup_block_norm: f64,
}

/// Certified two-sided bound `sup‖T_ij‖ ≤ ‖T‖ ≤ (2m+1) sup‖T_ij‖`.
#[derive(Clone, Debug)]
pub struct NormSandwich {
    pub lower: f64,
    pub upper: f64,
    /// Unit vector supported in the column block of the maximizing block.
    pub witness: MixedVector,
    /// The maximizing block `(i, j)`, if any block is nonzero.
    pub block: Option<(usize, usize)>,
}

fn is_zero(m: &CMatrix) -> bool {
    m.iter().all(|v| *v == ZERO)
}

impl BlockBandedOperator {
    /// Validated constructor. Exactly-zero blocks are dropped.
    pub fn new(
        space: SpaceSpec,
        band: usize,
        blocks: impl IntoIterator<Item = ((usize, usize), CMatrix)>,
    ) -> Result<Self> {
        let k = space.num_blocks();
        let mut map = BTreeMap::new();
        for ((i, j), m) in blocks {
            if i >= k || j >= k {
                return Err(Error::BlockOutOfRange {
                    index: i.max(j),
                    blocks: k,
                });
            }
            if i.abs_diff(j) > band {
                return Err(Error::InvalidOperator(format!(
                    "block ({i},{j}) lies outside band {band}"
                )));
            }
            let shape = (space.block_size(i), space.block_size(j));
            if m.shape() != shape {
                return Err(Error::InvalidOperator(format!(
                    "block ({i},{j}) has shape {:?}, expected {:?}",
                    m.shape(),
                    shape
                )));
            }
            if !is_zero(&m) {
                map.insert((i, j), m);
            }
        }
        Ok(Self::from_parts(space, band, map))
    }

    fn from_parts(space: SpaceSpec, band: usize, blocks: BTreeMap<(usize, usize), CMatrix>) -> Self {
        let entries: Vec<_> = blocks.iter().collect();
        let norms: Vec<f64> = entries.par_iter().map(|(_, m)| spectral_norm(m)).collect();
        let block_norms: BTreeMap<_, _> = entries
            .iter()
            .zip(norms)
            .map(|((&key, _), n)| (key, n))
            .collect();
        let sup_block_norm = block_norms.values().copied().fold(0.0, f64::max);
        BlockBandedOperator {
            space,
            band,
            blocks,
            block_norms,
            sup_block_norm,
        }
    }

    pub fn zero(space: SpaceSpec) -> Self {
        Self::from_parts(space, 0, BTreeMap::new())
    }

    pub fn identity(space: SpaceSpec) -> Self {
        let blocks = (0..space.num_blocks())
            .map(|k| {
                let w = space.block_size(k);
                ((k, k), CMatrix::identity(w, w))
            })
            .collect();
        Self::from_parts(space, 0, blocks)
    }

    /// Cut a dense `dim × dim` matrix into blocks, keeping `|i-j| ≤ band`.
    ///
    /// Returns the operator and the ℓ² operator norm of the discarded
    /// out-of-band part.
    pub fn from_dense(a: &CMatrix, space: SpaceSpec, band: usize) -> Result<(Self, f64)> {
        let n = space.dim();
        if a.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: if a.nrows() != n { a.nrows() } else { a.ncols() },
            });
        }
        let k = space.num_blocks();
        let mut blocks = BTreeMap::new();
        let mut residual = a.clone();
        for i in 0..k {
            let ri = space.block_range(i);
            for j in i.saturating_sub(band)..(i + band + 1).min(k) {
                let rj = space.block_range(j);
                let sub = a.view((ri.start, rj.start), (ri.len(), rj.len())).into_owned();
                residual
                    .view_mut((ri.start, rj.start), (ri.len(), rj.len()))
                    .fill(ZERO);
                if !is_zero(&sub) {
                    blocks.insert((i, j), sub);
                }
            }
        }
        let discarded = spectral_norm(&residual);
        Ok((Self::from_parts(space, band, blocks), discarded))
    }

    /// Smallest block band that holds every nonzero coefficient of `f`
    /// given the cuts of `space`.
    pub fn required_band(f: &LaurentPolynomial, space: &SpaceSpec) -> usize {
        let n = space.dim() as i64;
        let mut band = 0;
        for (offset, _) in f.support() {
            for c in 0..n {
                let r = c + offset;
                if (0..n).contains(&r) {
                    let bi = space.block_of(r as usize);
                    let bj = space.block_of(c as usize);
                    band = band.max(bi.abs_diff(bj));
                }
            }
        }
        band
    }

    /// Finite section of `f(U, U*) = Σ a_n U^n` (negative powers through `U*`),
    /// i.e. the Toeplitz matrix with entries `T[r][c] = a_{r-c}`.
    ///
    /// The block band is the minimal one for the cuts; `max_band` caps it.
    pub fn toeplitz(
        f: &LaurentPolynomial,
        space: SpaceSpec,
        max_band: Option<usize>,
    ) -> Result<Self> {
        let band = Self::required_band(f, &space);
        let allowed = max_band.unwrap_or(space.num_blocks().saturating_sub(1));
        if band > allowed {
            return Err(Error::BandTooLarge {
                required: band,
                allowed,
            });
        }
        let k = space.num_blocks();
        let mut blocks = BTreeMap::new();
        for i in 0..k {
            let ri = space.block_range(i);
            for j in i.saturating_sub(band)..(i + band + 1).min(k) {
                let rj = space.block_range(j);
                let m = CMatrix::from_fn(ri.len(), rj.len(), |r, c| {
                    f.coeff((ri.start + r) as i64 - (rj.start + c) as i64)
                });
                if !is_zero(&m) {
                    blocks.insert((i, j), m);
                }
            }
        }
        Ok(Self::from_parts(space, band, blocks))
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn sup_block_norm(&self) -> f64 {
        self.sup_block_norm
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&CMatrix> {
        self.blocks.get(&(i, j))
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&(usize, usize), &CMatrix)> {
        self.blocks.iter()
    }

    pub fn block_norm(&self, i: usize, j: usize) -> f64 {
        self.block_norms.get(&(i, j)).copied().unwrap_or(0.0)
    }

    /// Dense `dim × dim` matrix.
    pub fn assemble(&self) -> CMatrix {
        let n = self.dim();
        let mut a = CMatrix::zeros(n, n);
        for (&(i, j), m) in &self.blocks {
            let ri = self.space.block_range(i);
            let rj = self.space.block_range(j);
            a.view_mut((ri.start, rj.start), (ri.len(), rj.len()))
                .copy_from(m);
        }
        a
    }

    /// `y = T x` on raw coordinates.
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        y.iter_mut().for_each(|v| *v = ZERO);
        for (&(i, j), m) in &self.blocks {
            let ri = self.space.cuts()[i];
            let rj = self.space.cuts()[j];
            for c in 0..m.ncols() {
                let xc = x[rj + c];
                if xc == ZERO {
                    continue;
                }
                for (r, a) in m.column(c).iter().enumerate() {
                    y[ri + r] += a * xc;
                }
            }
        }
    }

    /// `y = T* x` on raw coordinates.
    pub fn apply_adjoint_into(&self, x: &[C64], y: &mut [C64]) {
        y.iter_mut().for_each(|v| *v = ZERO);
        for (&(i, j), m) in &self.blocks {
            let ri = self.space.cuts()[i];
            let rj = self.space.cuts()[j];
            let xi = &x[ri..ri + m.nrows()];
            for c in 0..m.ncols() {
                let s: C64 = m.column(c).iter().zip(xi).map(|(a, v)| a.conj() * v).sum();
                y[rj + c] += s;
            }
        }
    }

    pub fn apply(&self, x: &MixedVector) -> Result<MixedVector> {
        if !x.space().same_cuts(&self.space) {
            return Err(Error::SpaceMismatch);
        }
        let mut y = vec![ZERO; self.dim()];
        self.apply_into(x.entries(), &mut y);
        MixedVector::new(self.space.clone(), y)
    }

    /// Two-sided bound with a certifying witness for the lower end.
    pub fn norm_sandwich(&self) -> NormSandwich {
        let best = self
            .block_norms
            .iter()
            .fold(None::<((usize, usize), f64)>, |acc, (&k, &n)| match acc {
                Some((_, b)) if b >= n => acc,
                _ => Some((k, n)),
            });
        let lower = self.sup_block_norm;
        let upper = (2 * self.band + 1) as f64 * lower;
        let witness = match best {
            Some(((i, j), _)) => {
                let (_, v) = top_singular(&self.blocks[&(i, j)]);
                let mut e = vec![ZERO; self.dim()];
                let start = self.space.cuts()[j];
                for (k, c) in v.iter().enumerate() {
                    e[start + k] = *c;
                }
                MixedVector::new(self.space.clone(), e).expect("sized to dim")
            }
            None => MixedVector::basis(self.space.clone(), 0).expect("dim > 0"),
        };
        NormSandwich {
            lower,
            upper,
            witness,
            block: best.map(|(k, _)| k),
        }
    }

    /// `sup_j ‖T_{j+s,j}‖` for `s = -band..=band`, indexed by `s + band`.
    pub fn diagonal_sups(&self) -> Vec<f64> {
        let m = self.band as i64;
        let mut sups = vec![0.0; 2 * self.band + 1];
        for (&(i, j), &n) in &self.block_norms {
            let s = i as i64 - j as i64;
            let slot = &mut sups[(s + m) as usize];
            *slot = f64::max(*slot, n);
        }
        sups
    }

    /// `Σ_s sup_j ‖T_{j+s,j}‖`, never larger than `(2m+1) sup ‖T_ij‖`.
    pub fn diagonal_sum_bound(&self) -> f64 {
        self.diagonal_sups().iter().sum()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if !self.space.same_cuts(&other.space) {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }

    /// Block product `(AB)_{ij} = Σ_k A_{ik} B_{kj}`; band adds.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let k = self.space.num_blocks();
        let band = (self.band + other.band).min(k.saturating_sub(1));
        let keys: Vec<(usize, usize)> = (0..k)
            .flat_map(|i| (i.saturating_sub(band)..(i + band + 1).min(k)).map(move |j| (i, j)))
            .collect();
        let products: Vec<Option<((usize, usize), CMatrix)>> = keys
            .par_iter()
            .map(|&(i, j)| {
                let lo = i.saturating_sub(self.band).max(j.saturating_sub(other.band));
                let hi = (i + self.band).min(j + other.band).min(k - 1);
                let mut acc: Option<CMatrix> = None;
                for mid in lo..=hi {
                    if let (Some(a), Some(b)) = (self.blocks.get(&(i, mid)), other.blocks.get(&(mid, j))) {
                        let prod = a * b;
                        acc = Some(match acc {
                            Some(s) => s + prod,
                            None => prod,
                        });
                    }
                }
                acc.filter(|m| !is_zero(m)).map(|m| ((i, j), m))
            })
            .collect();
        let blocks = products.into_iter().flatten().collect();
        Ok(Self::from_parts(self.space.clone(), band, blocks))
    }

    pub fn adjoint(&self) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|(&(i, j), m)| ((j, i), m.adjoint()))
            .collect();
        Self::from_parts(self.space.clone(), self.band, blocks)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut blocks = self.blocks.clone();
        for (key, m) in &other.blocks {
            match blocks.get_mut(key) {
                Some(b) => *b += m,
                None => {
                    blocks.insert(*key, m.clone());
                }
            }
        }
        blocks.retain(|_, m| !is_zero(m));
        Ok(Self::from_parts(
            self.space.clone(),
            self.band.max(other.band),
            blocks,
        ))
    }

    pub fn scale(&self, c: C64) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|(&k, m)| (k, m * c))
            .filter(|(_, m)| !is_zero(m))
            .collect();
        Self::from_parts(self.space.clone(), self.band, blocks)
    }

    /// Rebind the same blocks to another space with identical cuts.
    pub fn with_space(&self, space: SpaceSpec) -> Result<Self> {
        if !space.same_cuts(&self.space) {
            return Err(Error::SpaceMismatch);
        }
        Ok(BlockBandedOperator {
            space,
            band: self.band,
            blocks: self.blocks.clone(),
            block_norms: self.block_norms.clone(),
            sup_block_norm: self.sup_block_norm,
        })
    }

    /// `(I - P_w) T (I - P_w)`: drop every block touching the first `window` blocks.
    pub fn tail(&self, window: usize) -> Result<Self> {
        let k = self.space.num_blocks();
        if window >= k {
            return Err(Error::WindowOutOfRange { window, blocks: k });
        }
        let blocks = self
            .blocks
            .iter()
            .filter(|(&(i, j), _)| i >= window && j >= window)
            .map(|(&key, m)| (key, m.clone()))
            .collect();
        Ok(Self::from_parts(self.space.clone(), self.band, blocks))
    }
}
