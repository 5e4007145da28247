//! Langevin and circuit SDE integration.

mod circuit;
mod exact;
mod generic;

pub use circuit::{
    analytic_energy_autocorrelation, correlation_time, empirical_correlation_time, energy_series, hamiltonian,
    hamiltonian_iv, integrate_circuit, inverse_transform_coords, stationary_reference, stationary_voltage_covariance,
    transform_coords, CircuitRecord, CircuitRun, Scheme, SdeState, StationaryReference,
};
pub use exact::{em_stationary_covariance, CircuitSystem, HeldInputStep, LinearGaussianStep};
pub use generic::{
    integrate_odl, integrate_odl_with, integrate_udl, integrate_udl_with, FreePotential, GenericLangevinSpec, Mass,
    Potential, QuadraticPotential, Trajectory, TrajectoryConfig,
};
