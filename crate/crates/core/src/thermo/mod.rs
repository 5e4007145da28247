//! Gaussian sampling and matrix inversion on the emulated device, and the
//! error metrics used to judge them.

mod metrics;
mod plan;
mod sampling;
mod study;

pub use metrics::*;
pub use plan::*;
pub use sampling::*;
pub use study::*;
