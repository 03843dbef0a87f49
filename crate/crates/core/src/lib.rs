//! Finite element WENO stabilization with classical and residual-based
//! nonlinear weights for conservation laws and steady
//! convection-diffusion-reaction problems.

pub mod basis;
pub mod benchmarks;
pub mod cdr;
pub mod config;
pub mod error;
pub mod hyperbolic;
pub mod linalg;
pub mod mesh;
pub mod output;
pub mod physics;
pub mod projection;
pub mod quadrature;
pub mod scalar;
pub mod space;
pub mod stabilization;
pub mod weno;

pub use error::{Error, Result};
pub use mesh::{BoundaryTag, Mesh, Side};
pub use scalar::Real;
pub use space::{Continuity, FeSpace, StateField};

pub type Mesh64 = Mesh<f64>;
pub type Mesh32 = Mesh<f32>;
pub type FeSpace64 = FeSpace<f64>;
pub type FeSpace32 = FeSpace<f32>;
