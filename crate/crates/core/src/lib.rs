//! Regularized parabolic `(1,p)`-Laplace systems on boxes.
//!
//! The evolution `∂_t u − div A_ε(Du) = f` is discretized with P1 simplices
//! and implicit Euler; each step is solved by Kačanov iteration with an
//! optional Newton finish. The [`diagnostics`] module measures gradient
//! bounds, facets and Hölder quotients of truncated gradients on computed
//! trajectories.

pub mod algebra;
pub mod checkpoint;
pub mod diagnostics;
pub mod error;
pub mod flux;
pub mod grid;
pub mod model;
pub mod scenarios;
pub mod solver;
pub mod sparse;

pub use algebra::{Jacobian, Metric};
pub use diagnostics::{Cylinder, DiagnosticsReport, Provenance, ReportEntry};
pub use error::{Error, Result};
pub use flux::TruncationLevel;
pub use grid::{build_mesh, BoxDomain, Mesh, MeshDescriptor, VectorField};
pub use model::{CoefficientModel, ExponentReport, ForcingTerm, Parameters};
pub use solver::{BoundaryData, InnerMode, Scenario, SolverConfig, StepRecord, Trajectory};
