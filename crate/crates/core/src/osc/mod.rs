//! Coupled-oscillator model of signal phasing.

mod green;
mod integrator;
mod layout;
mod network;
mod sync;

pub use green::{extract_green_times, green_times_from_oscillator_times, DeltaScale, GreenExtraction};
pub use integrator::{
    integrate, integrate_system, IntegratorConfig, OdeSystem, Rk45Stepper, StepStats, Trajectory,
};
pub use layout::{LayoutParams, OscillatorLayout, SignalGroup};
pub use network::{oscillator_rhs, ControlLaw, OscillatorNetwork, ZeroControl};
pub(crate) use sync::csv_err;
pub use sync::{
    order_parameter, per_oscillator_sync_times, sync_matrix, time_to_sync, write_trajectory_csv,
    PairSync, PairSyncTimes, SyncMatrix,
};
