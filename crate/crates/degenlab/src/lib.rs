//! degenlab: a numerical and symbolic laboratory for hypoellipticity
//! criteria of infinitely degenerate Grushin-type operators.
//!
//! The library is organized around the objects the criteria are stated in:
//!
//! * [`expr`]: the expression mini-language (parse, differentiate, evaluate);
//! * [`grid`]: uniform sample grids on balls of R^1 and R^2;
//! * [`profiles`]: scalar degeneracy profiles, finite-difference
//!   derivatives, Hölder seminorms, radial envelopes, structure checks;
//! * [`koike`]: the Koike functional, aggregate degeneracies, the
//!   hypoellipticity criterion classifier, and the auxiliary `w`/`r`
//!   functions of the lower-bound machinery;
//! * [`matrixcheck`]: structural hypotheses on matrix functions:
//!   comparability, subordinaticity, quasiconformality, differential
//!   estimates, and verification of sum-of-squares decompositions;
//! * [`symcalc`]: desk-scale symbol calculus: order estimation, elliptic
//!   parametrix recursion, Poisson brackets, logarithmic weight symbols;
//! * [`spectral`]: the sharpness engine: degenerate generalized
//!   eigenproblems, eigenvalue growth scans, mass concentration and the
//!   Hoshiro-ratio contradiction;
//! * [`inequal`]: property tests for the sufficiency inequalities with
//!   seeded random bump functions;
//! * [`config`] / [`report`]: reproducible experiment plumbing.

// `!(x <= cap)`-style guards are deliberate: they treat NaN as a failed
// check instead of silently passing it
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod expr;
pub mod grid;
pub mod inequal;
pub mod koike;
pub mod linalg;
pub mod matrixcheck;
pub mod profiles;
pub mod report;
pub mod spectral;
pub mod symcalc;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
