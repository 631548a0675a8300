//! Dissipaton equations of motion for fermionic impurity models coupled to
//! Lorentzian reservoirs.

pub mod bath;
pub mod error;
pub mod hierarchy;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod solvers;

pub use error::{DeomError, Result};
pub use num_complex::Complex64 as C64;
