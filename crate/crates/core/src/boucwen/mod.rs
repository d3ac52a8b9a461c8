//! Bouc-Wen oscillator: physics, time integration and data acquisition.

mod acquire;
pub mod filter;
mod newmark;
mod params;

pub use acquire::{
    acquire, acquire_output, add_noise, simulate_periodic, steady_state_record, Acquired,
    AcquisitionConfig, PeriodicSimulation, TimeRecord,
};
pub use newmark::{newmark_simulate, simulate_displacement, NewmarkConfig, SimState, Stepper, Trajectory};
pub use params::{linearized_modal, restoring_force, BoucWenParameters, LinearizedModal};
