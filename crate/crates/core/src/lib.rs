//! Finite-element engine for shape optimization of obstacles in 2D
//! viscoplastic (Bingham) channel flow.
//!
//! The library solves the yield-stress flow state equation with a damped
//! Newton method, assembles approximate adjoints and volume-form shape
//! derivatives, converts the shape gradient into a mesh deformation through
//! a linear-elasticity metric, and drives an augmented Lagrangian outer loop
//! that enforces volume, barycenter and perimeter equality constraints on
//! the obstacle.

pub mod adjoint;
pub mod bingham;
pub mod config;
pub mod deformation;
pub mod error;
pub mod fem;
pub mod gradcheck;
pub mod mesh;
pub mod optimizer;
pub mod shape_gradient;
pub mod tensor;

pub use bingham::{FlowBcs, MaxKind, MixedField, NewtonOptions, NewtonReport, PhysicsParams};
pub use config::{RunConfig, RunMode};
pub use error::{Error, Result};
pub use mesh::{BoundaryTag, GeometricTargets, ShapeBoundary, TriangleMesh};
pub use optimizer::{AugLagState, OptTrace, RunHooks, RunOutcome, RunSettings, RunStatus};
