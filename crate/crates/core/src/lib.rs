//! Distribution functions of one-dimensional Poisson stochastic integrals
//! `I(g) = ∫_0^T g(s) N(ds)`.
//!
//! The CDF is obtained by stepping the forward Kolmogorov-Feller equation
//! `∂F/∂t = -n(t) (F(x, t) - F(x - g(t), t))` with an explicit finite-difference
//! scheme ([`solver`]). General piecewise-monotone kernels are reduced to
//! increasing positive pieces and recombined by convolution ([`transforms`]).
//! [`oracles`] holds independent ground truths (exact series, Monte Carlo,
//! characteristic-function inversion) and [`diagnostics`] the empirical
//! smoothness and convergence instruments.

// `!(x > 0.0)` is the NaN-rejecting form used by the input checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod expr;
pub mod io;
pub mod model;
pub mod oracles;
pub mod solver;
pub mod transforms;

pub use error::{Error, Result};
pub use expr::{DomainError, Expression, ParseError};
pub use model::{
    integrate_control, segment_kernel, sup_control, Atom, CdfGrid, ControlDensity, KernelClass,
    KernelSegment, Mesh, TimeGrid,
};
pub use config::{ConfigError, FieldError, Prepared, RunConfig};
pub use density::{central_difference_density, smooth_density, DensityGrid};
pub use diagnostics::{
    convergence_study, holder_estimate, l1_distance, ConvergenceProblem, ConvergenceTable,
    HolderReport,
};
pub use oracles::{cf_inversion_cdf, ecdf_distance, irwin_hall_cdf, mc_sample, ArrivalLaw, CfSpec};
pub use solver::{solve_segment, stability_check, InitialCondition, SolveConfig, StepStencil};
pub use transforms::{compose_piecewise, convolve, reflect, ComposeConfig, Composed};
