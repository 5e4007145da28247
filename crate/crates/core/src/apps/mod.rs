//! Gaussian process regression, least squares and patch-wise posterior
//! sampling on top of the device inverter and sampler.

mod gpr;
mod inverter;
mod lsq;
mod sngp;

pub use gpr::*;
pub use inverter::{
    DigitalInverter, DigitalSampler, GaussianSampler, Inverter, ThermodynamicInverter, ThermodynamicSampler,
};
pub use lsq::*;
pub use sngp::*;
