pub mod algebra;
pub mod error;
pub mod free_theory;
pub mod interacting;
pub mod functionals;
pub mod lattice;
pub mod one_particle;
pub mod products;
pub mod propagator;
pub mod spacetime;

pub use error::{Error, Result};
