//! Multiple orthogonal polynomials of two measures, the Jacobi matrices they
//! generate on finite and infinite rooted trees, and the spectral objects
//! attached to them.

pub mod angelesco;
pub mod error;
pub mod finite_spectral;
pub mod hp;
pub mod measures;
pub mod mop_engine;
pub mod nikishin;
pub mod periodic_surface;
pub mod systems;
pub mod tree_jacobi;
pub mod tree_topology;

pub use error::{MopError, Result};
pub use mop_engine::{MopSystem, MultiIndex};
