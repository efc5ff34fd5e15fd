//! Super-coalescing Brownian motion (SCBM) with `(1+β)`-stable branching.
//!
//! The crate is organised bottom-up:
//!
//! * [`branching`] evaluates the cumulant semigroup `ψ_t(z)` and samples
//!   continuous-state branching transitions and entrance-law masses.
//! * [`lattice`] and [`oracle`] hold the discrete coalescing random walks
//!   (free, absorbed, reflected) and the exact finite-state duality checks.
//! * [`flow`] simulates coalescing Brownian motions on a time grid.
//! * [`scbm`] builds SCBM sample paths from branching excursions carried by
//!   the coalescing flow.
//! * [`harness`] turns duality identities into Monte Carlo comparisons.
//! * [`experiments`] hosts the integral-test machinery, survival ensembles
//!   and the configuration/CSV layer used by the `scbm` binary.
//!
//! Analytic code is generic over the [`Scalar`] type; the Monte Carlo
//! engines run in `f64`. The aliases below fix the common `f64` instances.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::excessive_precision)]

pub mod branching;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod harness;
pub mod lattice;
pub mod oracle;
pub mod quadrature;
pub mod scalar;
pub mod scbm;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` branching parameters.
pub type Params = branching::BranchingParams<f64>;
/// `f32` branching parameters.
pub type Params32 = branching::BranchingParams<f32>;
/// `f64` step function.
pub type Step = flow::StepFunction<f64>;
/// `f64` growth function.
pub type Growth = scbm::GrowthFunction<f64>;
/// `f64` sequence triple.
pub type Sequences = experiments::SequenceTriple<f64>;

/// The RNG used for every replica stream.
pub type Rng = rand_chacha::ChaCha8Rng;
