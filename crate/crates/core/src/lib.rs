pub mod certify;
pub mod cli;
pub mod design;
pub mod error;
pub mod factorization;
pub mod io;
pub mod linalg;
pub mod quantum;
pub mod random;
pub mod solver;
pub mod tolerance;

pub use error::{Error, Result};
pub use tolerance::Tolerances;
