//! Numerical laboratory for the stochastic heat equation
//!
//! ```text
//! du = (1/2) u_xx dt + f(t, x, u) dt + phi(t, x, u-) dL(t, x),   u(t, 0) = u(t, L) = 0
//! ```
//!
//! on `[0, T] x [0, L]`, where `dL` is alpha-stable space-time white noise with
//! its jumps above a cutoff `K` removed. The crate samples the noise, evaluates
//! the Dirichlet heat kernel, solves the equation by Picard iteration on the
//! mild form and by spectral Galerkin projection, and runs seeded Monte Carlo
//! checks of the solution's qualitative properties.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod coefficients;
pub mod error;
pub mod experiments;
pub mod kernel;
pub mod noise;
pub mod seed;
pub mod solvers;

pub use coefficients::{CoefficientFamily, CoefficientSpec, InitialCondition};
pub use error::{Error, ErrorClass, Result};
pub use experiments::{positive_part_energy, ExperimentReport, PositivePartEnergy};
pub use kernel::{KernelEvaluator, KernelMethod};
pub use noise::{JumpRecord, NoiseRealization, SpaceTimeDomain, StableParams, TruncationSpec};
pub use solvers::{GridSolution, GridSpec, ProblemSpec, SolverTag, SpectralSolution};
