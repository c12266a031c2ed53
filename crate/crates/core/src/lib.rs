//! Analysis and simulation of directed bearing-constrained formations.
//!
//! The crate computes bearing rigidity matrices and bearing Laplacians,
//! classifies formations as infinitesimally bearing rigid and/or bearing
//! persistent, probes Laplacian spectra, and integrates the linear
//! bearing-based control law `dp/dt = -L_B p`.

pub mod analysis;
pub mod formation;
pub mod graph;
pub mod linalg;
pub mod simulation;

pub use analysis::{AnalysisError, AnalysisReport, Tolerances};
pub use formation::{BearingConstraintSet, Formation, FormationError};
pub use graph::{DirectedGraph, GraphError};
