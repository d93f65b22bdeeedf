//! Finite-section laboratory for block operators on mixed `ℓ^p(ℓ²)` spaces.
//!
//! Block-banded operators are built once on a cut structure and then read
//! with any exponent `p`, which makes it possible to measure how operator
//! norms, essential-norm proxies and Fredholm indices move between `ℓ²` and
//! the mixed space `X_p = (⊕_k ℓ²(B_k))_p`.
//!
//! Modules:
//! - [`space`]: cut structures, mixed norms, norming functionals.
//! - [`blockop`]: banded block operators and their algebra.
//! - [`pnorm`]: operator-norm estimation with certified bounds.
//! - [`tridiag`]: greedy cut selection and block-tridiagonal compression.
//! - [`transfer`]: re-reading block operators on `X_p` and the experiments built on it.
//! - [`fredholm`]: Laurent symbols, winding numbers, truncation indices.
//! - [`pelczynski`]: Rademacher embedding of `ℓ²(n)` into `ℓ^p(2^n)`.
//! - [`io`]: CSV and JSON formats.

// `!(x > t)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blockop;
pub mod error;
pub mod fredholm;
pub mod io;
pub mod linalg;
pub mod pelczynski;
pub mod pnorm;
pub mod space;
pub mod transfer;
pub mod tridiag;

pub use num_complex::Complex64 as C64;

pub use blockop::{BlockBandedOperator, NormSandwich};
pub use error::{Error, Result};
pub use fredholm::{IndexReport, LaurentPolynomial, SymbolPath};
pub use pnorm::{Budget, Method, NormEstimate};
pub use space::{MixedVector, SpaceSpec};
pub use tridiag::{CutPlan, TridiagReport};
