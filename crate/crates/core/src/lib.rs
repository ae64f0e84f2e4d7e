//! State-dependent motional squeezing of a trapped ion.

pub mod error;
pub mod fock;
pub mod lattice;
pub mod linalg;
pub mod phase_space;
pub mod protocol;
pub mod scenario;

pub use error::{Error, ErrorKind, Result};
pub use num_complex::Complex64 as C64;
