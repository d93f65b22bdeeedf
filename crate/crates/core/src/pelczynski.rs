//! Complemented embedding of `ℓ²(n)` into `ℓ^p(2^n)` by Rademacher functions.
//!
//! Atoms are the `2^n` sign patterns `t`, with `r_i(t) = 1 − 2·bit_i(t)`.
//! The embedding `J x = 2^{−n/p} Σ_i x_i r_i` satisfies
//! `‖J x‖_p^p = E|Σ x_i ε_i|^p`, so its constants are the Khintchine
//! constants. `project` is scaled so that `project ∘ J = I`, making
//! `J ∘ project` a projection onto the Rademacher span.
//!
//! All vectors are real; the Khintchine moments are those of real sums.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pnorm::Budget;

/// Largest `n` accepted when building a system.
pub const MAX_SYSTEM_N: usize = 20;
/// Largest `n` accepted by [`measure_constants`].
pub const MAX_MEASURE_N: usize = 14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RademacherSystem {
    n: usize,
    p: f64,
}

fn lp_norm(y: &[f64], p: f64) -> f64 {
    let m = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * y.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

fn l2_norm(x: &[f64]) -> f64 {
    lp_norm(x, 2.0)
}

impl RademacherSystem {
    pub fn new(n: usize, p: f64) -> Result<Self> {
        if n == 0 || n > MAX_SYSTEM_N {
            return Err(Error::TooLarge {
                dim: n,
                limit: MAX_SYSTEM_N,
            });
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidSpace(format!("exponent must lie in (1, ∞), got {p}")));
        }
        Ok(RademacherSystem { n, p })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn atoms(&self) -> usize {
        1 << self.n
    }

    /// `r_i(t) ∈ {±1}`.
    pub fn sign(&self, i: usize, t: usize) -> f64 {
        if (t >> i) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// The `n × 2^n` table of signs, row `i` being `r_i`.
    pub fn sign_matrix(&self) -> Vec<Vec<i8>> {
        (0..self.n)
            .map(|i| (0..self.atoms()).map(|t| self.sign(i, t) as i8).collect())
            .collect()
    }

    fn check_len(&self, len: usize, expected: usize) -> Result<()> {
        if len != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: len,
            });
        }
        Ok(())
    }

    /// `(J x)(t) = 2^{−n/p} Σ_i x_i r_i(t)`.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len(), self.n)?;
        let scale = 2f64.powf(-(self.n as f64) / self.p);
        Ok((0..self.atoms())
            .map(|t| scale * x.iter().enumerate().map(|(i, xi)| xi * self.sign(i, t)).sum::<f64>())
            .collect())
    }

    /// `c_i = 2^{n/p − n} Σ_t y(t) r_i(t)`.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_len(y.len(), self.atoms())?;
        let scale = 2f64.powf(self.n as f64 / self.p - self.n as f64);
        Ok((0..self.n)
            .map(|i| scale * y.iter().enumerate().map(|(t, v)| v * self.sign(i, t)).sum::<f64>())
            .collect())
    }

    /// `‖J x‖_p / ‖x‖_2`.
    pub fn embedding_ratio(&self, x: &[f64]) -> Result<f64> {
        let nx = l2_norm(x);
        if nx == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(lp_norm(&self.embed(x)?, self.p) / nx)
    }

    /// `J ∘ project`, the projection onto the Rademacher span.
    pub fn complementing_projection(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.embed(&self.project(y)?)
    }

    /// Riesz–Thorin bound `‖P‖_p ≤ ‖P‖_1^{|1 − 2/p|}` for `P = J ∘ project`,
    /// with `‖P‖_1 = 2^{−n} Σ_k C(n,k) |n − 2k|`.
    pub fn projection_bound(&self) -> f64 {
        let n = self.n;
        let mut binom = 1.0f64;
        let mut sum = 0.0;
        for k in 0..=n {
            sum += binom * (n as f64 - 2.0 * k as f64).abs();
            binom = binom * (n - k) as f64 / (k + 1) as f64;
        }
        let one_norm = sum / 2f64.powi(n as i32);
        one_norm.powf((1.0 - 2.0 / self.p).abs())
    }
}

/// Measured constants for one `(n, p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KhintchineConstants {
    pub n: usize,
    pub p: f64,
    /// Smallest observed `‖Jx‖_p / ‖x‖_2`.
    pub lower_embed: f64,
    /// Largest observed `‖Jx‖_p / ‖x‖_2`.
    pub upper_embed: f64,
    /// Largest observed ratio for the dual exponent, which equals the norm
    /// of `project: ℓ^p → ℓ²`.
    pub dual_upper_embed: f64,
    /// Largest observed `‖P y‖_p / ‖y‖_p` for `P = J ∘ project`.
    pub projection_norm: f64,
    /// Certified upper bound for the projection norm.
    pub projection_bound: f64,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(x: Vec<f64>) -> Option<Vec<f64>> {
    let n = l2_norm(&x);
    (n > 0.0).then(|| x.into_iter().map(|v| v / n).collect())
}

/// Projected gradient ascent (`sign = 1`) or descent (`sign = −1`) of
/// `‖Jx‖_p` on the unit sphere of `ℓ²(n)`, with backtracking.
fn sphere_search(sys: &RademacherSystem, start: Vec<f64>, sign: f64, iterations: usize, tol: f64) -> f64 {
    let Some(mut x) = unit(start) else {
        return f64::NAN;
    };
    let eval = |x: &[f64]| lp_norm(&sys.embed(x).expect("length checked"), sys.p);
    let mut value = eval(&x);
    let mut step = 0.5;
    let scale = 2f64.powf(-(sys.n as f64) / sys.p);
    for _ in 0..iterations {
        let y = sys.embed(&x).expect("length checked");
        // ∇ ‖Jx‖_p^p / p = J^T (|y|^{p−2} y)
        let w: Vec<f64> = y.iter().map(|v| v.abs().powf(sys.p - 2.0) * v).collect();
        let mut g: Vec<f64> = (0..sys.n)
            .map(|i| scale * w.iter().enumerate().map(|(t, wt)| wt * sys.sign(i, t)).sum::<f64>())
            .collect();
        let radial: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
        g.iter_mut().zip(&x).for_each(|(gi, xi)| *gi = sign * (*gi - radial * xi));
        let gn = l2_norm(&g);
        if !(gn > 1e-14) {
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + step * b / gn).collect();
            let trial = unit(trial).expect("nonzero step");
            let v = eval(&trial);
            if sign * (v - value) > 0.0 {
                let rel = (v - value).abs() / value;
                x = trial;
                value = v;
                step *= 1.5;
                improved = rel >= tol;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    value
}

fn sphere_extremes(sys: &RademacherSystem, budget: &Budget) -> (f64, f64) {
    let n = sys.n;
    let mut starts = vec![{
        let mut e = vec![0.0; n];
        e[0] = 1.0;
        e
    }];
    starts.push(vec![1.0; n]);
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    starts.extend((0..budget.restarts).map(|_| gaussian(&mut rng, n)));
    let runs: Vec<(f64, f64)> = starts
        .par_iter()
        .map(|s| {
            let hi = sphere_search(sys, s.clone(), 1.0, budget.ascent_iterations, budget.tolerance);
            let lo = sphere_search(sys, s.clone(), -1.0, budget.ascent_iterations, budget.tolerance);
            (lo, hi)
        })
        .collect();
    runs.into_iter()
        .fold((f64::INFINITY, 0.0), |(lo, hi), (a, b)| (lo.min(a), hi.max(b)))
}

/// Real duality map of `ℓ^q`, normalized to unit dual norm.
fn duality(y: &[f64], q: f64) -> Option<Vec<f64>> {
    let ny = lp_norm(y, q);
    (ny > 0.0).then(|| y.iter().map(|v| (v.abs() / ny).powf(q - 1.0) * v.signum()).collect())
}

/// Duality-map power iteration for the symmetric projection `P`.
fn projection_power(sys: &RademacherSystem, start: Vec<f64>, budget: &Budget) -> f64 {
    let p = sys.p;
    let pd = p / (p - 1.0);
    let apply = |x: &[f64]| sys.complementing_projection(x).expect("length checked");
    let nx = lp_norm(&start, p);
    if nx == 0.0 {
        return 0.0;
    }
    let mut x: Vec<f64> = start.iter().map(|v| v / nx).collect();
    let mut value = lp_norm(&apply(&x), p);
    for _ in 0..budget.max_iterations {
        let Some(g) = duality(&apply(&x), p) else { break };
        let Some(next) = duality(&apply(&g), pd) else { break };
        let nn = lp_norm(&next, p);
        let next: Vec<f64> = next.iter().map(|v| v / nn).collect();
        let v = lp_norm(&apply(&next), p);
        if !(v > value) {
            break;
        }
        let rel = (v - value) / value;
        x = next;
        value = v;
        if rel < budget.tolerance {
            break;
        }
    }
    value
}

fn projection_extreme(sys: &RademacherSystem, budget: &Budget) -> f64 {
    let atoms = sys.atoms();
    let mut starts = Vec::new();
    let mut delta = vec![0.0; atoms];
    delta[0] = 1.0;
    starts.push(delta);
    starts.push(sys.embed(&vec![1.0; sys.n]).expect("length n"));
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed ^ 0x9e37_79b9_7f4a_7c15);
    starts.extend((0..budget.restarts).map(|_| gaussian(&mut rng, atoms)));
    starts
        .par_iter()
        .map(|s| projection_power(sys, s.clone(), budget))
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// Embedding and complementation constants of the Rademacher system.
pub fn measure_constants(n: usize, p: f64, budget: &Budget) -> Result<KhintchineConstants> {
    budget.validate()?;
    if n > MAX_MEASURE_N {
        return Err(Error::TooLarge {
            dim: n,
            limit: MAX_MEASURE_N,
        });
    }
    let sys = RademacherSystem::new(n, p)?;
    let dual = RademacherSystem::new(n, p / (p - 1.0))?;
    let (lower_embed, upper_embed) = sphere_extremes(&sys, budget);
    let (_, dual_upper_embed) = sphere_extremes(&dual, budget);
    Ok(KhintchineConstants {
        n,
        p,
        lower_embed,
        upper_embed,
        dual_upper_embed,
        projection_norm: projection_extreme(&sys, budget),
        projection_bound: sys.projection_bound(),
    })
}

/// `(max_{‖x‖₂ = 1} E|Σ x_i ε_i|^4)^{1/4} = (3 − 2/n)^{1/4}`, attained at
/// `x_i = ±1/√n`.
pub fn fourth_moment_max(n: usize) -> f64 {
    (3.0 - 2.0 / n as f64).powf(0.25)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget() -> Budget {
        Budget {
            max_iterations: 200,
            ascent_iterations: 150,
            restarts: 4,
            ..Budget::default()
        }
    }

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn signs_are_orthogonal_and_distinct() {
        let sys = RademacherSystem::new(5, 3.0).unwrap();
        let m = sys.sign_matrix();
        for i in 0..5 {
            for j in 0..5 {
                let dot: i32 = (0..32).map(|t| (m[i][t] * m[j][t]) as i32).sum();
                assert_eq!(dot, if i == j { 32 } else { 0 });
            }
        }
        let mut cols: Vec<Vec<i8>> = (0..32).map(|t| (0..5).map(|i| m[i][t]).collect()).collect();
        cols.sort();
        cols.dedup();
        assert_eq!(cols.len(), 32);
        assert!(RademacherSystem::new(21, 2.0).is_err());
        assert!(RademacherSystem::new(3, 1.0).is_err());
    }

    #[test]
    fn embed_examples() {
        for p in [1.5, 3.0, 7.0] {
            let sys = RademacherSystem::new(1, p).unwrap();
            assert!((sys.embedding_ratio(&[-2.5]).unwrap() - 1.0).abs() < 1e-14);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=10 {
            let sys = RademacherSystem::new(n, 2.0).unwrap();
            let x = random(&mut rng, n);
            assert!((sys.embedding_ratio(&x).unwrap() - 1.0).abs() < 1e-12);
        }
        let sys = RademacherSystem::new(3, 3.0).unwrap();
        assert!(sys.embed(&[1.0, 2.0]).is_err());
        assert!(sys.project(&[1.0; 7]).is_err());
    }

    #[test]
    fn fourth_moment_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=10 {
            let sys = RademacherSystem::new(n, 4.0).unwrap();
            let x = random(&mut rng, n);
            let s2: f64 = x.iter().map(|v| v * v).sum();
            let s4: f64 = x.iter().map(|v| v.powi(4)).sum();
            let moment = 3.0 * s2 * s2 - 2.0 * s4;
            let measured = lp_norm(&sys.embed(&x).unwrap(), 4.0).powi(4);
            assert!((measured - moment).abs() < 1e-10 * moment.max(1.0));
        }
    }

    #[test]
    fn project_inverts_embed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 4, 9] {
            for p in [1.5, 2.0, 4.0] {
                let sys = RademacherSystem::new(n, p).unwrap();
                let x = random(&mut rng, n);
                let back = sys.project(&sys.embed(&x).unwrap()).unwrap();
                for (a, b) in back.iter().zip(&x) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
        // a vector orthogonal to every Rademacher row
        let sys = RademacherSystem::new(3, 3.0).unwrap();
        let y: Vec<f64> = (0..8).map(|t| sys.sign(0, t) * sys.sign(1, t)).collect();
        assert!(sys.project(&y).unwrap().iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn embed_is_linear_and_ratio_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sys = RademacherSystem::new(6, 3.0).unwrap();
        let (x, y) = (random(&mut rng, 6), random(&mut rng, 6));
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 2.0 * a - b).collect();
        let lhs = sys.embed(&sum).unwrap();
        let (ex, ey) = (sys.embed(&x).unwrap(), sys.embed(&y).unwrap());
        for t in 0..64 {
            assert!((lhs[t] - (2.0 * ex[t] - ey[t])).abs() < 1e-12);
        }
        let scaled: Vec<f64> = x.iter().map(|v| -7.5 * v).collect();
        assert!((sys.embedding_ratio(&scaled).unwrap() - sys.embedding_ratio(&x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn p2_constants_are_one() {
        for n in [1, 3, 6] {
            let c = measure_constants(n, 2.0, &budget()).unwrap();
            for v in [c.lower_embed, c.upper_embed, c.projection_norm] {
                assert!((v - 1.0).abs() < 1e-9, "n={n}: {c:?}");
            }
        }
    }

    #[test]
    fn p4_upper_constant_matches_moment_identity() {
        let mut prev = 0.0;
        for n in 2..=8 {
            let c = measure_constants(n, 4.0, &budget()).unwrap();
            assert!(c.upper_embed >= prev - 1e-9);
            assert!(c.upper_embed <= 3f64.powf(0.25) + 0.02);
            assert!((c.upper_embed - fourth_moment_max(n)).abs() < 1e-6, "n={n}: {}", c.upper_embed);
            assert!((c.lower_embed - 1.0).abs() < 1e-9);
            prev = c.upper_embed;
        }
    }

    #[test]
    fn projection_norm_between_one_and_bounds() {
        let c = measure_constants(6, 3.0, &budget()).unwrap();
        assert!(c.projection_norm >= 1.0 - 1e-12);
        assert!(c.projection_norm <= c.upper_embed * c.dual_upper_embed + 1e-9);
        assert!(c.projection_norm <= c.projection_bound + 1e-9);
        let c = measure_constants(8, 1.5, &budget()).unwrap();
        assert!(c.lower_embed > 0.5, "{c:?}");
        assert!(measure_constants(15, 3.0, &budget()).is_err());
    }
}
