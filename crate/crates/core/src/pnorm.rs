//! Operator-norm estimation on mixed `ℓ^p(ℓ²)` spaces.
//!
//! Computing `‖T‖_{X_p → X_p}` is intractable for general `p`, so we
//! return a certified lower bound (a witness vector realizing it) together
//! with the decomposition upper bound
//! `min((2m+1) sup‖T_ij‖, Σ_s sup_j ‖T_{j+s,j}‖)`.
//!
//! Lower bounds come from the duality-map power iteration
//! `x ← J_{p'}(T* J_p(T x))`, which never decreases `‖Tx‖` on the unit
//! sphere, and from multi-restart gradient ascent. For `p = 2` the largest
//! singular value is computed directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockop::BlockBandedOperator;
use crate::error::{Error, Result};
use crate::linalg::{matvec, top_singular};
use crate::space::{MixedVector, SpaceSpec};
use crate::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Largest dimension accepted by [`brute_force_norm`].
pub const BRUTE_FORCE_MAX_DIM: usize = 12;

/// Square linear map on `C^dim` with an adjoint.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[C64], y: &mut [C64]);
    fn apply_adjoint_into(&self, x: &[C64], y: &mut [C64]);
}

impl LinearOperator for BlockBandedOperator {
    fn dim(&self) -> usize {
        BlockBandedOperator::dim(self)
    }

    fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        BlockBandedOperator::apply_into(self, x, y)
    }

    fn apply_adjoint_into(&self, x: &[C64], y: &mut [C64]) {
        BlockBandedOperator::apply_adjoint_into(self, x, y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PowerIteration,
    MultiRestartAscent,
    SvdExact,
    BruteForceOracle,
}

/// Iteration and restart budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    /// Power iterations per restart.
    pub max_iterations: usize,
    /// Accepted ascent steps per restart.
    pub ascent_iterations: usize,
    /// Random starting points (on top of the structured seeds).
    pub restarts: usize,
    /// Cap on canonical basis seeds taken from the maximizing block.
    pub basis_seeds: usize,
    pub seed: u64,
    /// Relative-change stopping threshold.
    pub tolerance: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_iterations: 500,
            ascent_iterations: 200,
            restarts: 8,
            basis_seeds: 4,
            seed: 0,
            tolerance: 1e-10,
        }
    }
}

impl Budget {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidBudget("max_iterations must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidBudget("tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NormEstimate {
    pub p: f64,
    /// `‖T w‖ / ‖w‖` for the witness `w`.
    pub lower: f64,
    pub upper: f64,
    pub witness: MixedVector,
    pub method: Method,
    pub iterations: usize,
    pub converged: bool,
}

impl NormEstimate {
    /// Recompute `‖T w‖/‖w‖` from the witness.
    pub fn replay<O: LinearOperator>(&self, op: &O) -> f64 {
        ratio(op, self.witness.space(), self.witness.entries())
    }

    pub fn scaled(&self, factor: f64) -> NormEstimate {
        NormEstimate {
            lower: self.lower * factor,
            upper: self.upper * factor,
            ..self.clone()
        }
    }
}

struct Run {
    value: f64,
    x: Vec<C64>,
    iterations: usize,
    converged: bool,
    method: Method,
}

fn ratio<O: LinearOperator>(op: &O, space: &SpaceSpec, x: &[C64]) -> f64 {
    let nx = space.norm_of(x);
    if nx == 0.0 {
        return 0.0;
    }
    let mut y = vec![ZERO; op.dim()];
    op.apply_into(x, &mut y);
    space.norm_of(&y) / nx
}

fn normalized(space: &SpaceSpec, x: &[C64]) -> Option<Vec<C64>> {
    let n = space.norm_of(x);
    if !(n > 0.0 && n.is_finite()) {
        return None;
    }
    Some(x.iter().map(|v| v / n).collect())
}

/// Duality-map power iteration from `start`.
fn power_iteration<O: LinearOperator>(op: &O, space: &SpaceSpec, start: &[C64], budget: &Budget) -> Run {
    let p = space.p();
    let pd = space.dual_exponent();
    let n = op.dim();
    let mut run = Run {
        value: 0.0,
        x: start.to_vec(),
        iterations: 0,
        converged: false,
        method: Method::PowerIteration,
    };
    let Some(mut x) = normalized(space, start) else {
        return run;
    };
    let mut y = vec![ZERO; n];
    op.apply_into(&x, &mut y);
    let mut value = space.norm_of(&y);
    let mut g = vec![ZERO; n];
    let mut z = vec![ZERO; n];
    let mut next = vec![ZERO; n];
    let mut y_next = vec![ZERO; n];
    for it in 1..=budget.max_iterations {
        run.iterations = it;
        if space.duality_into(&y, p, &mut g).is_none() {
            run.converged = true;
            break;
        }
        op.apply_adjoint_into(&g, &mut z);
        if space.duality_into(&z, pd, &mut next).is_none() {
            run.converged = true;
            break;
        }
        let Some(xn) = normalized(space, &next) else {
            run.converged = true;
            break;
        };
        op.apply_into(&xn, &mut y_next);
        let v = space.norm_of(&y_next);
        if !(v > value) {
            run.converged = true;
            break;
        }
        let rel = (v - value) / value;
        x = xn;
        std::mem::swap(&mut y, &mut y_next);
        value = v;
        if rel < budget.tolerance {
            run.converged = true;
            break;
        }
    }
    run.value = ratio(op, space, &x);
    run.x = x;
    run
}

/// Gradient ascent of `‖Tx‖/‖x‖` over `2·dim` real coordinates, renormalized
/// to the unit sphere after every step.
fn gradient_ascent<O: LinearOperator>(op: &O, space: &SpaceSpec, start: &[C64], budget: &Budget) -> Run {
    let p = space.p();
    let n = op.dim();
    let mut run = Run {
        value: 0.0,
        x: start.to_vec(),
        iterations: 0,
        converged: false,
        method: Method::MultiRestartAscent,
    };
    let Some(mut x) = normalized(space, start) else {
        return run;
    };
    let mut value = ratio(op, space, &x);
    let mut step = 1.0;
    let mut y = vec![ZERO; n];
    let mut gy = vec![ZERO; n];
    let mut grad = vec![ZERO; n];
    let mut gx = vec![ZERO; n];
    let mut accepted = 0;
    while accepted < budget.ascent_iterations {
        run.iterations += 1;
        op.apply_into(&x, &mut y);
        if space.duality_into(&y, p, &mut gy).is_none() || space.duality_into(&x, p, &mut gx).is_none() {
            run.converged = true;
            break;
        }
        op.apply_adjoint_into(&gy, &mut grad);
        for (g, d) in grad.iter_mut().zip(&gx) {
            *g -= d * value;
        }
        let gnorm = space.norm_of(&grad);
        if !(gnorm > 1e-15 * value.max(1e-300)) {
            run.converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            let trial: Vec<C64> = x.iter().zip(&grad).map(|(a, g)| a + g * (step / gnorm)).collect();
            if let Some(trial) = normalized(space, &trial) {
                let v = ratio(op, space, &trial);
                if v > value {
                    let rel = (v - value) / value.max(f64::MIN_POSITIVE);
                    x = trial;
                    value = v;
                    improved = true;
                    step *= 1.5;
                    if rel < budget.tolerance {
                        run.converged = true;
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved || run.converged {
            run.converged = true;
            break;
        }
        accepted += 1;
    }
    run.value = value;
    run.x = x;
    run
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    // independent real and imaginary parts give an isotropic direction
    (0..n)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

/// Multi-restart lower bound for any operator on `space`.
///
/// Power iteration runs from every seed and from `budget.restarts` random
/// points; gradient ascent runs from the random points. Runs are independent
/// and reduced in a fixed order, so results do not depend on thread count.
pub fn estimate_operator_norm<O: LinearOperator>(
    op: &O,
    space: &SpaceSpec,
    budget: &Budget,
    seeds: &[Vec<C64>],
    upper: f64,
) -> Result<NormEstimate> {
    budget.validate()?;
    if op.dim() != space.dim() {
        return Err(Error::DimensionMismatch {
            expected: space.dim(),
            actual: op.dim(),
        });
    }
    if let Some(s) = seeds.iter().find(|s| s.len() != space.dim()) {
        return Err(Error::DimensionMismatch {
            expected: space.dim(),
            actual: s.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let random: Vec<Vec<C64>> = (0..budget.restarts)
        .map(|_| random_direction(&mut rng, space.dim()))
        .collect();

    let mut jobs: Vec<(&[C64], Method)> = seeds.iter().map(|s| (s.as_slice(), Method::PowerIteration)).collect();
    jobs.extend(random.iter().map(|s| (s.as_slice(), Method::PowerIteration)));
    jobs.extend(random.iter().map(|s| (s.as_slice(), Method::MultiRestartAscent)));

    let runs: Vec<Run> = jobs
        .par_iter()
        .map(|&(start, method)| match method {
            Method::MultiRestartAscent => gradient_ascent(op, space, start, budget),
            _ => power_iteration(op, space, start, budget),
        })
        .collect();

    // Rounding-level gains don't displace an earlier run; keeps the reported method stable.
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.value > a.value * (1.0 + 1e-12) { b } else { a });
    let best = match best {
        Some(b) if b.value > 0.0 => b,
        _ => {
            return Ok(NormEstimate {
                p: space.p(),
                lower: 0.0,
                upper,
                witness: MixedVector::basis(space.clone(), 0)?,
                method: Method::PowerIteration,
                iterations: 0,
                converged: true,
            })
        }
    };
    Ok(NormEstimate {
        p: space.p(),
        lower: best.value,
        upper,
        witness: MixedVector::new(space.clone(), best.x)?,
        method: best.method,
        iterations: best.iterations,
        converged: best.converged,
    })
}

/// `min((2m+1) sup‖T_ij‖, Σ_s sup_j ‖T_{j+s,j}‖)`.
pub fn decomposition_upper_bound(t: &BlockBandedOperator) -> f64 {
    let sandwich = (2 * t.band() + 1) as f64 * t.sup_block_norm();
    sandwich.min(t.diagonal_sum_bound())
}

/// Norm estimate of `T` on its own space.
pub fn estimate_norm(t: &BlockBandedOperator, budget: &Budget) -> Result<NormEstimate> {
    estimate_norm_with_seeds(t, budget, &[])
}

/// [`estimate_norm`] with caller-supplied starting vectors.
pub fn estimate_norm_with_seeds(
    t: &BlockBandedOperator,
    budget: &Budget,
    extra: &[Vec<C64>],
) -> Result<NormEstimate> {
    budget.validate()?;
    let space = t.space();
    if space.p() == 2.0 {
        let (sigma, v) = top_singular(&t.assemble());
        let witness = MixedVector::new(space.clone(), v.iter().copied().collect())?;
        let lower = if sigma > 0.0 { ratio(t, space, witness.entries()) } else { 0.0 };
        return Ok(NormEstimate {
            p: 2.0,
            lower,
            upper: sigma,
            witness,
            method: Method::SvdExact,
            iterations: 0,
            converged: true,
        });
    }
    let sandwich = t.norm_sandwich();
    let mut seeds = vec![sandwich.witness.entries().to_vec()];
    if let Some((_, j)) = sandwich.block {
        for s in space.block_range(j).take(budget.basis_seeds) {
            let mut e = vec![ZERO; space.dim()];
            e[s] = C64::new(1.0, 0.0);
            seeds.push(e);
        }
    }
    seeds.extend(extra.iter().cloned());
    estimate_operator_norm(t, space, budget, &seeds, decomposition_upper_bound(t))
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Halton point `index` mapped to a complex Gaussian direction in `C^dim`.
fn halton_direction(index: u64, dim: usize) -> Vec<C64> {
    (0..dim)
        .map(|k| {
            let u = radical_inverse(index, PRIMES[2 * k]).max(f64::EPSILON);
            let t = radical_inverse(index, PRIMES[2 * k + 1]);
            C64::from_polar((-2.0 * u.ln()).sqrt(), std::f64::consts::TAU * t)
        })
        .collect()
}

/// Derivative-free compass search over real and imaginary parts.
fn compass_polish(a: &crate::linalg::CMatrix, space: &SpaceSpec, start: Vec<C64>) -> f64 {
    let eval = |x: &[C64]| {
        let nx = space.norm_of(x);
        if nx == 0.0 {
            0.0
        } else {
            space.norm_of(&matvec(a, x)) / nx
        }
    };
    let nx = space.norm_of(&start);
    let mut x: Vec<C64> = start.iter().map(|v| v / nx).collect();
    let mut best = eval(&x);
    let mut h = 0.25;
    while h > 1e-10 {
        let mut improved = false;
        for k in 0..x.len() {
            for dir in [C64::new(h, 0.0), C64::new(-h, 0.0), C64::new(0.0, h), C64::new(0.0, -h)] {
                let old = x[k];
                x[k] = old + dir;
                let v = eval(&x);
                if v > best {
                    best = v;
                    improved = true;
                } else {
                    x[k] = old;
                }
            }
        }
        if improved {
            let n = space.norm_of(&x);
            x.iter_mut().for_each(|v| *v /= n);
        } else {
            h *= 0.5;
        }
    }
    best
}

/// Oracle lower bound for tiny instances: the best of `samples`
/// quasi-random sphere points, the top ones polished by compass search.
///
/// Works on the dense assembled matrix and touches none of the
/// duality-map machinery used by [`estimate_norm`].
pub fn brute_force_norm(t: &BlockBandedOperator, samples: usize) -> Result<f64> {
    let space = t.space();
    let dim = space.dim();
    if dim > BRUTE_FORCE_MAX_DIM {
        return Err(Error::TooLarge {
            dim,
            limit: BRUTE_FORCE_MAX_DIM,
        });
    }
    let samples = samples.max(1);
    let a = t.assemble();
    let mut scored: Vec<(f64, u64)> = (1..=samples as u64)
        .into_par_iter()
        .map(|i| {
            let x = halton_direction(i, dim);
            let nx = space.norm_of(&x);
            (space.norm_of(&matvec(&a, &x)) / nx, i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let polish = scored.len().min(16);
    let best = scored[..polish]
        .par_iter()
        .map(|&(_, i)| compass_polish(&a, space, halton_direction(i, dim)))
        .reduce(|| 0.0, f64::max);
    Ok(best.max(scored[0].0))
}
