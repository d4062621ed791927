//! Topology optimization of pneumatically actuated multi-material compliant
//! mechanisms.
//!
//! The engine couples a Darcy-law pressure model with design-dependent
//! consistent nodal loads to a plane-stress finite element analysis,
//! interpolates multiple candidate materials with an extended SIMP scheme,
//! and maximizes the worst-case output displacement of eroded and blueprint
//! design realizations under volume and strain-energy constraints using
//! adjoint sensitivities and the method of moving asymptotes.

pub mod config;
pub mod elasticity;
pub mod error;
pub mod export;
pub mod fields;
pub mod material;
pub mod mesh;
pub mod mma;
pub mod optimizer;
pub mod pressure;
mod quad;
pub mod sensitivity;
pub mod solver;

pub use error::{Error, Result};
