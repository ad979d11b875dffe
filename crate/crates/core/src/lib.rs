//! Coupled-oscillator traffic signal control.
//!
//! The crate is organised bottom-up:
//!
//! * [`osc`] oscillator network, RK45 integration, synchronization detection
//!   and green-time extraction.
//! * [`smc`] second-order sliding-mode laws and the surplus-energy gain dynamics.
//! * [`signal`] signal plans and their constraints.
//! * [`controllers`] the four signal controllers compared by the harness.
//! * [`mesosim`] the store-and-forward simulator that closes the loop.
//! * [`mfd`] macroscopic fundamental diagram analysis and convexity labels.
//! * [`scenarios`] demand profiles, disruptions and flow CSV ingestion.
//! * [`stats`] one-way ANOVA and Welch's t-test.
//! * [`harness`] configuration, sweeps, ranking and reports.

pub mod controllers;
pub mod error;
pub mod harness;
pub mod mesosim;
pub mod mfd;
pub mod osc;
pub mod scenarios;
pub mod signal;
pub mod smc;
pub mod stats;

pub use error::{Error, Result};
