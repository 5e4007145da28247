//! Emulator for a thermodynamic sampling unit: eight noise-driven RLC cells
//! coupled through switched capacitors, together with the compilers,
//! samplers, calibration routines and applications built on top of it.

pub mod apps;
pub mod batch;
pub mod calibration;
pub mod circuit;
pub mod compiler;
pub mod error;
pub mod io;
pub mod langevin;
pub mod linalg;
pub mod noise;
pub mod perf;
pub mod stats;
pub mod thermo;

pub use batch::{Observable, SampleBatch};
pub use circuit::{CellParams, CircuitParams, DeviceTemplate, MaxwellCapacitance};
pub use error::{Result, SpuError};
