//! Finite-system laboratory for multiple ergodic averages along sparse
//! sequences.
//!
//! Every Cesàro limit over a finite measure-preserving system is periodic, so
//! the seminorms, dual functions and cubic measures here are computed as exact
//! full-period averages. The grid (finitary) side works with finitely
//! supported functions on `[-N, N]^l`.
//!
//! Module map:
//! - [`sequences`]: integer polynomials, Hardy-type sequences, the factorial
//!   rescaling `p(k! n + n_k)`, intersectivity tooling.
//! - [`systems`]: finite systems with commuting permutations, observables and
//!   a 2-step skew-product surrogate.
//! - [`seminorms`]: box seminorms, dual functions, cubic measures, magic
//!   extensions, eigenfunction diagnostics.
//! - [`finitary`]: grid box norms, inverse witnesses, structured functions and
//!   the regularity decomposition.
//! - [`corners`]: triple intersections, corner counts, popular-difference scans.
//! - [`verify`]: averages along `a(n)` versus `n`, Weyl sums, nil-orbit averages.

pub mod corners;
pub mod error;
pub mod finitary;
pub mod numeric;
pub mod seminorms;
pub mod sequences;
pub mod systems;
pub mod verify;

pub use error::{LabError, Result};
