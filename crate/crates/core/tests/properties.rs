//! Randomized invariants across the public API.

use calkin_lab::fredholm::{winding, CIRCLE_GRID};
use calkin_lab::linalg::{spectral_norm, CMatrix};
use calkin_lab::pelczynski::RademacherSystem;
use calkin_lab::pnorm::{estimate_norm, Budget};
use calkin_lab::transfer::{psi, tail_profile};
use calkin_lab::tridiag::{choose_cuts, compress, Schedule};
use calkin_lab::{BlockBandedOperator, LaurentPolynomial, MixedVector, SpaceSpec, C64};
use proptest::prelude::*;

fn widths() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=4, 1..=5)
}

fn complex() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| C64::new(re, im))
}

/// Random banded operator on the given widths; entries drawn from `vals`
/// cyclically so the strategy stays shrinkable.
fn operator(widths: &[usize], p: f64, band: usize, vals: &[C64]) -> BlockBandedOperator {
    let space = SpaceSpec::from_widths(p, widths).unwrap();
    let k = space.num_blocks();
    let mut next = 0usize;
    let mut blocks = Vec::new();
    for i in 0..k {
        for j in i.saturating_sub(band)..(i + band + 1).min(k) {
            let m = CMatrix::from_fn(space.block_size(i), space.block_size(j), |_, _| {
                next += 1;
                vals[next % vals.len()] * (1.0 + (next % 7) as f64 * 0.1)
            });
            blocks.push(((i, j), m));
        }
    }
    BlockBandedOperator::new(space, band, blocks).unwrap()
}

fn relative_gap(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm() / a.norm().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mixed_norm_is_a_norm(
        w in widths(),
        p in prop::sample::select(vec![1.5, 2.0, 3.0, 4.0]),
        xs in prop::collection::vec(complex(), 20),
        ys in prop::collection::vec(complex(), 20),
        c in complex(),
    ) {
        let s = SpaceSpec::from_widths(p, &w).unwrap();
        let n = s.dim();
        let x = MixedVector::new(s.clone(), xs[..n].to_vec()).unwrap();
        let y = MixedVector::new(s.clone(), ys[..n].to_vec()).unwrap();
        let (nx, ny) = (x.mixed_norm(), y.mixed_norm());
        prop_assert!(x.add(&y).unwrap().mixed_norm() <= nx + ny + 1e-12);
        prop_assert!((x.scale(c).mixed_norm() - c.norm() * nx).abs() <= 1e-12 * (1.0 + nx));
        if p == 2.0 {
            prop_assert!((nx - x.euclidean_norm()).abs() <= 1e-12 * (1.0 + nx));
        }
        if nx > 1e-9 {
            let d = x.duality_map().unwrap();
            prop_assert!((d.pairing(&x).unwrap().re - nx).abs() <= 1e-10 * (1.0 + nx));
            prop_assert!((d.dual_norm() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn compose_is_the_matrix_product(
        w in widths(),
        ba in 0usize..=2,
        bb in 0usize..=2,
        va in prop::collection::vec(complex(), 5..12),
        vb in prop::collection::vec(complex(), 5..12),
    ) {
        let a = operator(&w, 3.0, ba, &va);
        let b = operator(&w, 3.0, bb, &vb);
        let ab = a.compose(&b).unwrap();
        prop_assert!(ab.band() <= ba + bb);
        prop_assert!(relative_gap(&(a.assemble() * b.assemble()), &ab.assemble()) <= 1e-10);
        prop_assert_eq!(a.adjoint().adjoint(), a.clone());
        prop_assert!((a.adjoint().sup_block_norm() - a.sup_block_norm()).abs() <= 1e-12 * (1.0 + a.sup_block_norm()));
        // psi changes the norm context and nothing else
        let (pa, pb) = (psi(&a, 1.5).unwrap(), psi(&b, 1.5).unwrap());
        prop_assert_eq!(pa.compose(&pb).unwrap(), psi(&ab, 1.5).unwrap());
    }

    #[test]
    fn estimates_respect_the_sandwich(
        w in widths(),
        band in 0usize..=2,
        p in prop::sample::select(vec![1.5, 3.0, 4.0]),
        vals in prop::collection::vec(complex(), 5..12),
    ) {
        let t = operator(&w, p, band, &vals);
        let budget = Budget { restarts: 2, ..Budget::default() };
        let e = estimate_norm(&t, &budget).unwrap();
        let s = t.norm_sandwich();
        prop_assert!(e.lower >= s.lower - 1e-9);
        prop_assert!(e.lower <= e.upper + 1e-9);
        prop_assert!(e.upper <= s.upper + 1e-9);
        prop_assert!(e.upper <= t.diagonal_sum_bound() + 1e-9);
        prop_assert!((e.replay(&t) - e.lower).abs() <= 1e-9 * (1.0 + e.lower));
        // Powers of two scale every floating-point step exactly.
        let e2 = estimate_norm(&t.scale(C64::new(4.0, 0.0)), &budget).unwrap();
        prop_assert!((e2.lower - 4.0 * e.lower).abs() <= 1e-10 * (1.0 + e2.lower));
        prop_assert!((e2.upper - 4.0 * e.upper).abs() <= 1e-10 * (1.0 + e2.upper));
    }

    #[test]
    fn winding_is_additive_and_scale_free(
        ka in -3i64..=3,
        kb in -3i64..=3,
        ba in complex(),
        bb in complex(),
        c in complex(),
    ) {
        prop_assume!(c.norm() > 1e-3);
        // w^k (1 − b w) with |b| < 1 has winding k.
        let f = |k: i64, b: C64| LaurentPolynomial::new([(k, C64::new(1.0, 0.0)), (k + 1, -b * 0.7)]);
        let (fa, fb) = (f(ka, ba), f(kb, bb));
        let wa = winding(&fa, CIRCLE_GRID).unwrap();
        let wb = winding(&fb, CIRCLE_GRID).unwrap();
        prop_assert_eq!(wa, ka);
        prop_assert_eq!(winding(&fa.mul(&fb), CIRCLE_GRID).unwrap(), wa + wb);
        prop_assert_eq!(winding(&fa.scale(c), CIRCLE_GRID).unwrap(), wa);
    }

    #[test]
    fn rademacher_projection_inverts_embedding(
        n in 1usize..=8,
        p in prop::sample::select(vec![1.5, 2.0, 3.0, 4.0]),
        xs in prop::collection::vec(-2.0f64..2.0, 8),
    ) {
        let sys = RademacherSystem::new(n, p).unwrap();
        let x = &xs[..n];
        let back = sys.project(&sys.embed(x).unwrap()).unwrap();
        for (a, b) in back.iter().zip(x) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        // E|Σ x_i ε_i|⁴ = 3‖x‖⁴ − 2Σ x_i⁴, read through the ℓ⁴ embedding.
        let sys4 = RademacherSystem::new(n, 4.0).unwrap();
        let m4: f64 = sys4.embed(x).unwrap().iter().map(|v| v.powi(4)).sum();
        let s2: f64 = x.iter().map(|v| v * v).sum();
        let s4: f64 = x.iter().map(|v| v.powi(4)).sum();
        prop_assert!((m4 - (3.0 * s2 * s2 - 2.0 * s4)).abs() <= 1e-10 * (1.0 + m4));
    }
}

fn decay(n: usize, rho: f64, shift: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| C64::new(rho.powi(i.abs_diff(j + shift) as i32), 0.0))
}

/// Tail norm `‖(I − P_r) A P_c‖` computed straight from the dense matrix.
fn corner(a: &CMatrix, r: usize, c: usize) -> f64 {
    if r >= a.nrows() || c == 0 {
        return 0.0;
    }
    spectral_norm(&a.view((r, 0), (a.nrows() - r, c)).into_owned())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn greedy_cuts_are_valid_and_minimal(
        rho in 0.2f64..0.6,
        shift in 0usize..3,
        n in 48usize..96,
    ) {
        let family = vec![decay(n, rho, 0), decay(n, rho, shift)];
        let plan = choose_cuts(&family, n, &Schedule::Halving).unwrap();
        let cuts = plan.cuts();
        prop_assert_eq!(cuts[0], 0);
        for m in 2..cuts.len() {
            let (prev, r) = (cuts[m - 2], cuts[m - 1]);
            let eps = 0.5f64.powi(m as i32 + 1);
            let members = m.min(family.len());
            let worst = |r: usize| {
                family[..members]
                    .iter()
                    .map(|t| corner(t, r, prev).max(corner(&t.adjoint(), r, prev)))
                    .fold(0.0, f64::max)
            };
            prop_assert!(worst(r) <= eps + 1e-12, "cut {} fails its own bound", m);
            if r > prev + 1 {
                prop_assert!(worst(r - 1) > eps, "cut {} is not minimal", m);
            }
        }
    }

    #[test]
    fn compression_is_idempotent_and_bounded(
        rho in 0.2f64..0.6,
        n in 32usize..80,
        seed in 0u64..1000,
    ) {
        let family = vec![decay(n, rho, 0)];
        let plan = choose_cuts(&family, n, &Schedule::Halving).unwrap();
        let t = CMatrix::from_fn(n, n, |i, j| {
            let h = (i as u64 * 31 + j as u64 * 17 + seed) % 97;
            C64::new(h as f64 / 97.0 - 0.5, ((h * 7) % 13) as f64 / 13.0 - 0.5)
        });
        let (gamma, _) = compress(&t, &plan).unwrap();
        let (again, residual) = compress(&gamma.assemble(), &plan).unwrap();
        prop_assert_eq!(residual, 0.0);
        prop_assert_eq!(again, gamma.clone());
        prop_assert!(spectral_norm(&gamma.assemble()) <= 3.0 * spectral_norm(&t) + 1e-9);
    }
}

#[test]
fn tail_profile_never_increases() {
    let f = LaurentPolynomial::new([(-2, C64::new(0.5, 0.0)), (1, C64::new(0.0, 1.0)), (0, C64::new(0.3, 0.0))]);
    let space = SpaceSpec::uniform(3.0, 4, 96).unwrap();
    let t = BlockBandedOperator::toeplitz(&f, space, None).unwrap();
    let profile = tail_profile(&t, &[0, 3, 6, 12, 18], &Budget::default(), &[]).unwrap();
    for pair in profile.windows(2) {
        assert!(pair[1].1.lower <= pair[0].1.lower + 1e-12, "{:?}", (pair[0].0, pair[1].0));
    }
}
