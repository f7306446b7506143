//! Adapted metrics for Lyapunov exponents of torus maps.
//!
//! The crate computes the vector `s⃗(g)` of averaged log singular values of a
//! map's derivative measured in a Riemannian metric field `g`, minimizes it
//! over unit-determinant fields by geodesic descent, and compares the result
//! with Lyapunov exponents from the discrete QR method.
//!
//! Modules, bottom up:
//! - [`spd`]: symmetric positive definite matrices, the trace metric, barycenters,
//!   log singular values and majorization.
//! - [`dynamics`]: torus maps, grids and invariant-measure weights.
//! - [`oracle`]: reference Lyapunov vectors.
//! - [`field`]: metric fields on a grid, pullbacks, geodesics and JSON I/O.
//! - [`objective`]: `s⃗(g)` and its convexity, Lipschitz and scaling diagnostics.
//! - [`optimizer`]: gradients and Armijo descent.
//! - [`verify`]: property suites behind the `verify` command.
//! - [`cli`]: the `lyapmetric` command line.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod field;
pub(crate) mod linalg;
pub mod numfmt;
pub mod objective;
pub mod optimizer;
pub mod oracle;
pub mod sampling;
pub mod spd;
pub mod tolerance;
pub mod verify;

pub use dynamics::{Anchor, Grid, MeasureMode, MeasureWeights, SystemKind, TorusMap, TorusPoint, TorusSystem};
pub use error::{Error, Result};
pub use field::{MetricField, TangentField};
pub use objective::{evaluate_objective, ObjectiveReport};
pub use optimizer::{descend, DescentOutcome, DescentStatus, GradientField, OptimizationTrace, OptimizerConfig};
pub use oracle::{lyapunov_vector, LyapunovEstimate, OracleParams};
pub use spd::{InvertibleMatrix, LogSingularVector, SpdMatrix, SymMatrix};
pub use tolerance::ToleranceProfile;
