//! Parallel-in-time integration of 2-D nonlinear conservation laws.
//!
//! The crate implements the implicit BDF1 scheme with central differences in
//! space and a ladder of solvers for the resulting all-at-once Newton system:
//!
//! - sequential time marching ([`solvers::sequential_bdf1`]),
//! - ParaDIn, the parallel direct inverse that decouples the block-bidiagonal
//!   Newton system through prefix products ([`solvers::paradin_solve`]),
//! - block-Jacobi in time ([`solvers::block_jacobi_solve`]),
//! - a classical linear Parareal baseline ([`solvers::parareal_linear_baseline`]),
//! - the combined ParaDIn-Parareal method, optionally with a spatially
//!   coarsened coarse propagator ([`solvers::paradin_parareal_solve`]).
//!
//! Every parallel solver runs on the [`runtime`] worker/message substrate,
//! either emulated in a single thread or on a rayon pool, with bitwise
//! identical results.

pub mod bandlinalg;
pub mod discretize;
pub mod harness;
pub mod mesh;
pub mod model;
pub mod runtime;
pub mod solvers;

pub use bandlinalg::{BandedLu, BandedMatrix, LinalgError, RowBlock};
pub use mesh::{Field, GridSpec, MeshError, SpaceTimeSolution};
pub use model::{FaceViscosity, ModelError, ProblemKind, ProblemSpec};
pub use runtime::{Mode, Runtime, RuntimeError, WorkerTopology};
pub use solvers::{BlockLayout, Method, NewtonConfig, NormKind, SolveReport, SolverError};
