//! Riccati-based feedback stabilization of parabolic equations on a
//! triangulated disk: meshing, P1 finite elements, actuators, Riccati
//! solvers, closed-loop simulation and post-processing.

pub mod actuators;
pub mod analysis;
pub mod config;
pub mod error;
pub mod estimates;
pub mod experiments;
pub mod fem;
pub mod mesh;
pub mod riccati;
pub mod sim_linear;
pub mod sim_nonlinear;

pub use error::{Error, Result};
pub use fem::{CoefficientField, FemOperators};
pub use mesh::Mesh;
