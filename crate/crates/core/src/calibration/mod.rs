//! Spectroscopy, parameter fitting, fault scanning and per-cell variance
//! calibration of the emulated board.

mod faultscan;
mod fit;
mod model;
mod scaling;
mod spectrum;

pub use faultscan::*;
pub use fit::*;
pub use model::*;
pub use scaling::*;
pub use spectrum::*;
