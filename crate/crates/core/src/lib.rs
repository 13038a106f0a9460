pub mod backstepping;
pub mod checks;
pub mod closed_loop;
pub mod error;
pub mod io;
pub mod model;
pub mod quad;
pub mod solver;
pub mod trigger;

pub use error::{Error, Result};
