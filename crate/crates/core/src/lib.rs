//! Cucker-Smale alignment dynamics with short-range singular repulsion in an
//! infinitely long tube.
//!
//! The crate simulates finite restrictions of the infinite system, runs
//! ladders of partial dynamics over growing axial windows, and checks the
//! growth and convergence bounds that make the infinite dynamics well posed.

pub mod dynamics;
pub mod functionals;
pub mod initial_data;
pub mod partial;
pub mod exec;
pub mod flocking;
pub mod model;
pub mod neighbor;

pub use exec::Exec;
pub use model::{CommKernel, Configuration, KernelFamily, ModelError, ModelParams, PairPotential, ParticleState, TubeGeometry, Vec3};
