pub mod bench;
pub mod error;
pub mod estimators;
pub mod io;
pub mod minimax;
pub mod model;
pub mod sensitivity;
pub mod solver;

pub use error::{Error, Result};
