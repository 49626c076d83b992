//! Porous-medium flow with drift: explicit solver, streamlines, estimate
//! verifiers, the inf-convolution construction and a gallery of examples.

pub mod drift;
pub mod error;
pub mod estimates;
pub mod exact;
pub mod gallery;
pub mod grid;
pub mod infconv;
pub mod initial;
pub mod io;
pub mod report;
pub mod sampling;
pub mod solver;
pub mod streamlines;

pub use drift::{Drift, DriftPreset, DriftSpec};
pub use error::{CoreError, Result};
pub use grid::{Contour, Field, GridSpec, Point, PositivitySet, Role, VectorField};
pub use initial::{InitialPreset, InitialSpec};
pub use report::{EstimateReport, Verdict, Witness};
pub use solver::{Boundary, FaceBc, SolverParams, Snapshot, Trajectory};
