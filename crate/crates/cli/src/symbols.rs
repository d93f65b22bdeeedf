//! Symbol generation and parsing for experiments.

use anyhow::{Context, Result};
use calkin_lab::fredholm::CIRCLE_GRID;
use calkin_lab::{LaurentPolynomial, C64};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Standard complex Gaussian, `E|z|² = 1`.
fn gaussian(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Complex Gaussian coefficients on offsets `−d..=d`, scaled so that
/// `max |f| = 1` on the circle grid.
pub fn random_normalized(rng: &mut ChaCha8Rng, degree: usize) -> LaurentPolynomial {
    let d = degree as i64;
    let f = LaurentPolynomial::new((-d..=d).map(|n| (n, gaussian(rng))));
    let sup = f.sup_circle(CIRCLE_GRID);
    f.scale(C64::new(1.0 / sup, 0.0))
}

/// `c · w^k · Π (1 − b_j w^{s_j})` with `|b_j| < 1/2`: nonvanishing on the
/// circle with winding exactly `k`.
pub fn random_with_winding(rng: &mut ChaCha8Rng, k: i64, factors: usize) -> LaurentPolynomial {
    let mut f = LaurentPolynomial::monomial(k).scale(C64::from_polar(rng.gen_range(0.5..2.0), rng.gen_range(0.0..std::f64::consts::TAU)));
    for _ in 0..factors {
        let s: i64 = if rng.gen_bool(0.5) { rng.gen_range(1..=3) } else { -rng.gen_range(1..=3) };
        let b = C64::from_polar(rng.gen_range(0.0..0.49), rng.gen_range(0.0..std::f64::consts::TAU));
        let factor = LaurentPolynomial::new([(0, C64::new(1.0, 0.0)), (s, -b)]);
        f = f.mul(&factor);
    }
    f
}

pub fn parse_symbols(items: &[String]) -> Result<Vec<LaurentPolynomial>> {
    items
        .iter()
        .map(|s| s.parse().with_context(|| format!("bad symbol {s:?} (expected \"n:re,im;…\")")))
        .collect()
}
