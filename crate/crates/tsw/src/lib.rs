//! Compatible mixed finite element solver for the rotating thermal shallow
//! water equations on a doubly periodic plane.
//!
//! The discretisation lives on the 2D discrete de Rham complex
//! V0 -> V1 -> V2 and provides two energy-conserving formulations of the
//! thermal shallow water system: a mixed material/flux form that transports
//! the buoyancy and the depth-weighted buoyancy together, and a coupled
//! flux-form system whose pressure-gradient and transport terms are arranged
//! so that both energy and entropy cancel exactly in the spatial
//! discretisation.

pub mod assembly;
pub mod cases;
pub mod config;
pub mod conservation;
pub mod driver;
pub mod dynamics;
pub mod error;
pub mod fespace;
pub mod linalg;
pub mod mesh;
pub mod output;
pub mod prng;
pub mod quadrature;
pub mod scalar;
pub mod timeint;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete f64 aliases for the main user-facing types.
pub type Mesh64 = mesh::Mesh<f64>;
pub type FunctionSpace64 = fespace::FunctionSpace<f64>;
pub type Field64 = fespace::Field<f64>;
pub type TswState64 = dynamics::TswState<f64>;
