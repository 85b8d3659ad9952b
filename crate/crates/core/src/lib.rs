pub mod characteristics;
pub mod design;
pub mod distributions;
pub mod error;
pub mod estimation;
pub mod monitor;
pub mod reference;
pub mod simulation;

pub use error::{Error, Result};
