//! Numerical laboratory for semilinear heat equations
//!
//! ```text
//! ∂ₜu + Lu (+ u) = ±|u|^{p−1}u
//! ```
//!
//! with `L` a discretized self-adjoint operator. Every function of `L` is
//! evaluated through its full eigendecomposition ([`operators::SpectralOperator`]),
//! so semigroups, fractional powers and the exponential integrators in
//! [`evolution`] are exact up to the discretization of `L` itself.
//!
//! Module map:
//!
//! * [`discretization`]: grids, quadrature weights, fields and discrete Lᵖ norms.
//! * [`operators`]: Dirichlet/Schrödinger/Robin operators and their spectra.
//! * [`semigroup`]: heat semigroup, fractional powers, kernel and decay verifiers.
//! * [`variational`]: energy and Nehari functionals, ground states, Sobolev
//!   constants and the mountain-pass level.
//! * [`evolution`]: exponential integrators, adaptive trajectories, Picard iteration.
//! * [`diagnostics`]: dichotomy verdicts, concavity functionals and lemma monitors.

pub mod diagnostics;
pub mod discretization;
mod error;
pub mod evolution;
pub mod operators;
pub mod semigroup;
pub mod variational;

pub use error::{Error, Result};

pub use discretization::{build_grid, inner_product, lp_norm, DomainKind, DomainSpec, Field, Grid, Scalar};
pub use operators::{assemble, AssumptionClass, OperatorKind, OperatorSpec, PotentialSign, PotentialSpec, SpectralOperator};
pub use variational::{EquationMode, NonlinearitySign, Regime};
