//! Finite sections of the mixed-norm space `X_p = (⊕_k ℓ²(B_k))_p`.
//!
//! A [`SpaceSpec`] fixes the exponent `p` and the cut points
//! `0 = r_1 < r_2 < … < r_K+1 = N`; block `k` (1-based) covers the
//! 0-based coordinate range `r_k .. r_{k+1}`. Inside a block the norm is
//! Euclidean; across blocks the block norms are combined in `ℓ^p`.

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

#[derive(Serialize, Deserialize)]
struct RawSpaceSpec {
    p: f64,
    cuts: Vec<usize>,
}

/// Exponent and cut points of a truncated mixed-norm space.
///
/// Cheap to clone; the cut list is shared.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpaceSpec", into = "RawSpaceSpec")]
pub struct SpaceSpec {
    p: f64,
    cuts: Arc<Vec<usize>>,
}

impl TryFrom<RawSpaceSpec> for SpaceSpec {
    type Error = Error;

    fn try_from(raw: RawSpaceSpec) -> Result<Self> {
        SpaceSpec::new(raw.p, raw.cuts)
    }
}

impl From<SpaceSpec> for RawSpaceSpec {
    fn from(s: SpaceSpec) -> Self {
        RawSpaceSpec {
            p: s.p,
            cuts: s.cuts.as_ref().clone(),
        }
    }
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::InvalidSpace(format!(
            "exponent must lie in (1, inf), got {p}"
        )));
    }
    Ok(())
}

impl SpaceSpec {
    pub fn new(p: f64, cuts: Vec<usize>) -> Result<Self> {
        check_exponent(p)?;
        if cuts.len() < 2 {
            return Err(Error::InvalidSpace(
                "need at least two cuts (one nonempty block)".into(),
            ));
        }
        if cuts[0] != 0 {
            return Err(Error::InvalidSpace(format!(
                "first cut must be 0, got {}",
                cuts[0]
            )));
        }
        if let Some(w) = cuts.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpace(format!(
                "cuts must be strictly increasing, found {} then {}",
                w[0], w[1]
            )));
        }
        Ok(SpaceSpec {
            p,
            cuts: Arc::new(cuts),
        })
    }

    /// Every block has width one: the plain `ℓ^p` section of length `dim`.
    pub fn unit(p: f64, dim: usize) -> Result<Self> {
        Self::new(p, (0..=dim).collect())
    }

    /// Blocks of width `width`, the last one possibly shorter.
    pub fn uniform(p: f64, width: usize, dim: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidSpace("block width must be positive".into()));
        }
        let mut cuts: Vec<usize> = (0..dim).step_by(width).collect();
        cuts.push(dim);
        Self::new(p, cuts)
    }

    /// Build cuts from a list of block widths.
    pub fn from_widths(p: f64, widths: &[usize]) -> Result<Self> {
        let mut cuts = Vec::with_capacity(widths.len() + 1);
        let mut acc = 0;
        cuts.push(0);
        for &w in widths {
            acc += w;
            cuts.push(acc);
        }
        Self::new(p, cuts)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Conjugate exponent `p' = p / (p - 1)`.
    pub fn dual_exponent(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    pub fn cuts(&self) -> &[usize] {
        &self.cuts
    }

    pub fn dim(&self) -> usize {
        *self.cuts.last().expect("validated non-empty")
    }

    pub fn num_blocks(&self) -> usize {
        self.cuts.len() - 1
    }

    /// Coordinate range of block `k` (0-based).
    pub fn block_range(&self, k: usize) -> Range<usize> {
        self.cuts[k]..self.cuts[k + 1]
    }

    pub fn block_size(&self, k: usize) -> usize {
        self.cuts[k + 1] - self.cuts[k]
    }

    pub fn max_block_size(&self) -> usize {
        (0..self.num_blocks())
            .map(|k| self.block_size(k))
            .max()
            .unwrap_or(0)
    }

    /// 0-based block containing coordinate `i`.
    pub fn block_of(&self, i: usize) -> usize {
        debug_assert!(i < self.dim());
        self.cuts.partition_point(|&c| c <= i) - 1
    }

    /// Same cuts, different exponent.
    pub fn with_exponent(&self, p: f64) -> Result<Self> {
        check_exponent(p)?;
        Ok(SpaceSpec {
            p,
            cuts: Arc::clone(&self.cuts),
        })
    }

    pub fn same_cuts(&self, other: &SpaceSpec) -> bool {
        Arc::ptr_eq(&self.cuts, &other.cuts) || self.cuts == other.cuts
    }

    /// Number of leading blocks lying entirely inside the first `entries` coordinates.
    pub fn blocks_within(&self, entries: usize) -> usize {
        self.cuts[1..].partition_point(|&c| c <= entries)
    }

    fn block_norms(&self, x: &[C64]) -> Vec<f64> {
        self.cuts.windows(2).map(|w| euclid(&x[w[0]..w[1]])).collect()
    }

    /// Mixed `ℓ^q(ℓ²)` norm of raw entries for an arbitrary exponent `q`.
    pub(crate) fn norm_with(&self, x: &[C64], q: f64) -> f64 {
        let norms = self.block_norms(x);
        lp_combine(&norms, q)
    }

    /// Mixed `ℓ^p(ℓ²)` norm of raw entries.
    pub fn norm_of(&self, x: &[C64]) -> f64 {
        self.norm_with(x, self.p)
    }

    /// Mixed `ℓ^{p'}(ℓ²)` norm, the dual norm.
    pub fn dual_norm_of(&self, x: &[C64]) -> f64 {
        self.norm_with(x, self.dual_exponent())
    }

    /// Norming functional of `x` in `ℓ^q(ℓ²)`, written into `out`.
    ///
    /// Returns the norm of `x`, or `None` when `x` is zero.
    pub(crate) fn duality_into(&self, x: &[C64], q: f64, out: &mut [C64]) -> Option<f64> {
        let norms = self.block_norms(x);
        let total = lp_combine(&norms, q);
        if !(total > 0.0) || !total.is_finite() {
            return None;
        }
        for (k, &nk) in norms.iter().enumerate() {
            let range = self.block_range(k);
            if nk == 0.0 {
                out[range].iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
                continue;
            }
            // relative weights avoid overflow for large q
            let scale = (nk / total).powf(q - 2.0) / total;
            for (o, v) in out[range.clone()].iter_mut().zip(&x[range]) {
                *o = v * scale;
            }
        }
        Some(total)
    }
}

pub(crate) fn euclid(x: &[C64]) -> f64 {
    let direct: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    if direct.is_normal() && direct < 1e300 && direct > 1e-300 {
        return direct.sqrt();
    }
    let scale = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = x.iter().map(|v| (v / scale).norm_sqr()).sum();
    scale * s.sqrt()
}

pub(crate) fn lp_combine(norms: &[f64], q: f64) -> f64 {
    let scale = norms.iter().copied().fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = norms.iter().map(|&n| (n / scale).powf(q)).sum();
    scale * s.powf(1.0 / q)
}

/// `Σ conj(a_i) b_i`.
pub(crate) fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[derive(Deserialize)]
struct RawMixedVector {
    space: SpaceSpec,
    entries: Vec<C64>,
}

impl TryFrom<RawMixedVector> for MixedVector {
    type Error = Error;

    fn try_from(raw: RawMixedVector) -> Result<Self> {
        MixedVector::new(raw.space, raw.entries)
    }
}

/// An element of a truncated `X_p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixedVector")]
pub struct MixedVector {
    space: SpaceSpec,
    entries: Vec<C64>,
}

impl MixedVector {
    pub fn new(space: SpaceSpec, entries: Vec<C64>) -> Result<Self> {
        if entries.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                actual: entries.len(),
            });
        }
        Ok(MixedVector { space, entries })
    }

    pub fn zeros(space: SpaceSpec) -> Self {
        let entries = vec![C64::new(0.0, 0.0); space.dim()];
        MixedVector { space, entries }
    }

    /// Canonical basis vector `z_s` (0-based `s`).
    pub fn basis(space: SpaceSpec, s: usize) -> Result<Self> {
        if s >= space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                actual: s + 1,
            });
        }
        let mut v = Self::zeros(space);
        v.entries[s] = C64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn from_real(space: SpaceSpec, entries: &[f64]) -> Result<Self> {
        Self::new(space, entries.iter().map(|&r| C64::new(r, 0.0)).collect())
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<C64> {
        self.entries
    }

    /// `(Σ_k ‖x_k‖₂^p)^{1/p}`.
    pub fn mixed_norm(&self) -> f64 {
        self.space.norm_of(&self.entries)
    }

    /// Norm in the dual space `ℓ^{p'}(ℓ²)`.
    pub fn dual_norm(&self) -> f64 {
        self.space.dual_norm_of(&self.entries)
    }

    /// Plain Euclidean norm of the entries.
    pub fn euclidean_norm(&self) -> f64 {
        euclid(&self.entries)
    }

    /// `Σ conj(self_i) other_i`.
    pub fn pairing(&self, other: &MixedVector) -> Result<C64> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::DimensionMismatch {
                expected: self.entries.len(),
                actual: other.entries.len(),
            });
        }
        Ok(inner(&self.entries, &other.entries))
    }

    /// The norming functional `x*` with `⟨x*, x⟩ = ‖x‖` and `‖x*‖_* = 1`.
    ///
    /// Blockwise `x*_k = ‖x_k‖^{p-2} x_k / ‖x‖^{p-1}`; zero blocks stay zero.
    pub fn duality_map(&self) -> Result<MixedVector> {
        let mut out = vec![C64::new(0.0, 0.0); self.entries.len()];
        self.space
            .duality_into(&self.entries, self.space.p, &mut out)
            .ok_or(Error::ZeroVector)?;
        Ok(MixedVector {
            space: self.space.clone(),
            entries: out,
        })
    }

    /// `Q_k x` for 1-based `k`; `k = 0` is the zero projection.
    pub fn block_project(&self, k: usize) -> Result<MixedVector> {
        let blocks = self.space.num_blocks();
        if k > blocks {
            return Err(Error::BlockOutOfRange { index: k, blocks });
        }
        let mut out = Self::zeros(self.space.clone());
        if k > 0 {
            let range = self.space.block_range(k - 1);
            out.entries[range.clone()].copy_from_slice(&self.entries[range]);
        }
        Ok(out)
    }

    pub fn scale(&self, c: C64) -> MixedVector {
        MixedVector {
            space: self.space.clone(),
            entries: self.entries.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &MixedVector) -> Result<MixedVector> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::DimensionMismatch {
                expected: self.entries.len(),
                actual: other.entries.len(),
            });
        }
        Ok(MixedVector {
            space: self.space.clone(),
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(SpaceSpec::new(1.0, vec![0, 1]).is_err());
        assert!(SpaceSpec::new(f64::INFINITY, vec![0, 1]).is_err());
        assert!(SpaceSpec::new(2.0, vec![1, 2]).is_err());
        assert!(SpaceSpec::new(2.0, vec![0, 2, 2]).is_err());
        assert!(SpaceSpec::new(2.0, vec![0]).is_err());
        let s = SpaceSpec::new(3.0, vec![0, 2, 5]).unwrap();
        assert_eq!(s.dim(), 5);
        assert_eq!(s.num_blocks(), 2);
        assert_eq!(s.block_of(4), 1);
        assert_eq!(s.block_of(1), 0);
    }

    #[test]
    fn json_shape() {
        let s = SpaceSpec::new(4.0, vec![0, 3, 4]).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"p":4.0,"cuts":[0,3,4]}"#);
        let back: SpaceSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<SpaceSpec>(r#"{"p":0.5,"cuts":[0,1]}"#).is_err());
    }

    #[test]
    fn unit_vector_has_norm_one() {
        for p in [1.5, 2.0, 3.0, 7.0] {
            let s = SpaceSpec::new(p, vec![0, 3, 4, 9]).unwrap();
            let e = MixedVector::basis(s, 0).unwrap();
            assert!((e.mixed_norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_block_p4() {
        let s = SpaceSpec::new(4.0, vec![0, 1, 3]).unwrap();
        // block norms 3 and sqrt(9+7)=4
        let x = MixedVector::new(s, vec![c(3.0), c(3.0), C64::new(0.0, 7f64.sqrt())]).unwrap();
        let expected = 337f64.powf(0.25);
        assert!((x.mixed_norm() - expected).abs() < 1e-13);
    }

    #[test]
    fn duality_map_p2_is_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = SpaceSpec::new(2.0, vec![0, 2, 3, 7]).unwrap();
        let x = MixedVector::new(s, random_vec(&mut rng, 7)).unwrap();
        let d = x.duality_map().unwrap();
        let n = x.mixed_norm();
        for (a, b) in d.entries().iter().zip(x.entries()) {
            assert!((a - b / n).norm() < 1e-14);
        }
    }

    #[test]
    fn duality_map_single_block_stays_in_block() {
        let s = SpaceSpec::new(3.0, vec![0, 2, 5, 6]).unwrap();
        let mut e = vec![C64::new(0.0, 0.0); 6];
        e[2] = C64::new(1.0, 2.0);
        e[4] = C64::new(-0.5, 0.0);
        let x = MixedVector::new(s, e.clone()).unwrap();
        let d = x.duality_map().unwrap();
        let ratio = d.entries()[2] / e[2];
        assert!(ratio.im.abs() < 1e-15 && ratio.re > 0.0);
        for i in [0, 1, 3, 5] {
            assert_eq!(d.entries()[i], C64::new(0.0, 0.0));
        }
        assert!((d.entries()[4] - e[4] * ratio).norm() < 1e-15);
    }

    #[test]
    fn duality_map_identities_p3() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let s = SpaceSpec::new(3.0, vec![0, 1, 4, 6, 10]).unwrap();
            let x = MixedVector::new(s, random_vec(&mut rng, 10)).unwrap();
            let d = x.duality_map().unwrap();
            let pairing = d.pairing(&x).unwrap();
            assert!((pairing.re - x.mixed_norm()).abs() < 1e-10);
            assert!(pairing.im.abs() < 1e-10);
            assert!((d.dual_norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn duality_map_zero_vector_errors() {
        let s = SpaceSpec::unit(3.0, 4).unwrap();
        assert!(matches!(
            MixedVector::zeros(s).duality_map(),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn block_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = SpaceSpec::new(2.5, vec![0, 2, 3, 7]).unwrap();
        let x = MixedVector::new(s.clone(), random_vec(&mut rng, 7)).unwrap();
        let zero = x.block_project(0).unwrap();
        assert!(zero.entries().iter().all(|v| *v == C64::new(0.0, 0.0)));
        assert!(x.block_project(4).is_err());

        let mut sum = MixedVector::zeros(s.clone());
        let mut sq = 0.0;
        for k in 1..=3 {
            let q = x.block_project(k).unwrap();
            assert_eq!(q.block_project(k).unwrap(), q);
            sq += q.euclidean_norm().powi(2);
            sum = sum.add(&q).unwrap();
        }
        assert_eq!(sum, x);
        assert!((sq - x.euclidean_norm().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn unit_blocks_norm_decreases_in_p() {
        let widths = [2usize, 3, 1, 4];
        let mut prev = f64::INFINITY;
        for p in [1.2, 1.5, 2.0, 3.0, 5.0, 9.0] {
            let s = SpaceSpec::from_widths(p, &widths).unwrap();
            let mut e = vec![C64::new(0.0, 0.0); s.dim()];
            for k in 0..s.num_blocks() {
                let r = s.block_range(k);
                let w = r.len() as f64;
                for i in r {
                    e[i] = C64::new(0.0, 1.0 / w.sqrt());
                }
            }
            let n = MixedVector::new(s, e).unwrap().mixed_norm();
            assert!((n - 4f64.powf(1.0 / p)).abs() < 1e-12);
            assert!(n < prev);
            prev = n;
        }
    }

    #[test]
    fn blocks_within_counts_whole_blocks() {
        let s = SpaceSpec::new(2.0, vec![0, 3, 5, 9, 12]).unwrap();
        assert_eq!(s.blocks_within(0), 0);
        assert_eq!(s.blocks_within(4), 1);
        assert_eq!(s.blocks_within(5), 2);
        assert_eq!(s.blocks_within(12), 4);
    }

    fn cuts_strategy() -> impl Strategy<Value = Vec<usize>> {
        proptest::collection::vec(1usize..5, 1..6).prop_map(|w| {
            let mut cuts = vec![0];
            for x in w {
                let last = *cuts.last().unwrap();
                cuts.push(last + x);
            }
            cuts
        })
    }

    proptest! {
        #[test]
        fn p2_matches_euclidean(cuts in cuts_strategy(), seed in any::<u64>()) {
            let s = SpaceSpec::new(2.0, cuts).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = MixedVector::new(s.clone(), random_vec(&mut rng, s.dim())).unwrap();
            prop_assert!((x.mixed_norm() - x.euclidean_norm()).abs() < 1e-12);
        }

        #[test]
        fn norm_axioms(cuts in cuts_strategy(), seed in any::<u64>(), pi in 0usize..4) {
            let p = [1.5, 2.0, 3.0, 4.0][pi];
            let s = SpaceSpec::new(p, cuts).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = s.dim();
            let x = MixedVector::new(s.clone(), random_vec(&mut rng, n)).unwrap();
            let y = MixedVector::new(s.clone(), random_vec(&mut rng, n)).unwrap();
            let z = MixedVector::new(s.clone(), random_vec(&mut rng, n)).unwrap();
            let c = C64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            prop_assert!(x.mixed_norm() > 0.0);
            prop_assert!((x.scale(c).mixed_norm() - c.norm() * x.mixed_norm()).abs() < 1e-12 * (1.0 + c.norm()));
            let xy = x.add(&y).unwrap();
            prop_assert!(xy.mixed_norm() <= x.mixed_norm() + y.mixed_norm() + 1e-12);
            let xyz = xy.add(&z).unwrap();
            prop_assert!(xyz.mixed_norm() <= x.mixed_norm() + y.mixed_norm() + z.mixed_norm() + 1e-12);
        }

        #[test]
        fn duality_identities(cuts in cuts_strategy(), seed in any::<u64>(), p in 1.1f64..8.0) {
            let s = SpaceSpec::new(p, cuts).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = MixedVector::new(s.clone(), random_vec(&mut rng, s.dim())).unwrap();
            let d = x.duality_map().unwrap();
            let pr = d.pairing(&x).unwrap();
            prop_assert!((pr.re - x.mixed_norm()).abs() < 1e-10 * (1.0 + x.mixed_norm()));
            prop_assert!(pr.im.abs() < 1e-10);
            prop_assert!((d.dual_norm() - 1.0).abs() < 1e-10);
        }
    }
}
