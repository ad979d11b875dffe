//! Second-order sliding-mode regularizer for the oscillator network.

mod controller;
mod gain_dynamics;
mod gains;
mod laws;
pub mod plant;
mod trace;

pub use controller::{antifragile_controller_step, consensus_error, StepInput, ThetaDdotMode, TrajSample};
pub use gain_dynamics::gain_dynamics_step;
pub use gains::{BoundaryLayer, LawOrientation, SmcGains, SmcParams};
pub use laws::{
    homogeneous_law, reaching_term, sat, sign, sliding_surface, twisting_law, udot_sat_law, udot_sign_law,
};
pub use trace::{write_trace_csv, TraceRow};

/// Per-oscillator sliding-mode state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlidingState {
    pub sigma: Vec<f64>,
    pub sigma_dot: Vec<f64>,
    pub u: Vec<f64>,
    /// Surplus energy.
    pub s: Vec<f64>,
    /// Estimated surplus energy.
    pub s_hat: Vec<f64>,
    /// Control gain, δ1 times the running integral of `s_hat`.
    pub b: Vec<f64>,
    /// Last extremal value of σ.
    pub sigma_m: Vec<f64>,
    /// Boundary-layer width, evolves only with a dynamic layer.
    pub phi: f64,
}

impl SlidingState {
    pub fn new(n: usize, phi: f64) -> Self {
        Self {
            sigma: vec![0.0; n],
            sigma_dot: vec![0.0; n],
            u: vec![0.0; n],
            s: vec![0.0; n],
            s_hat: vec![0.0; n],
            b: vec![0.0; n],
            sigma_m: vec![0.0; n],
            phi,
        }
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    /// Records σ and σ̇, moving σ_M to the current σ where σ̇ changes sign.
    pub fn observe(&mut self, sigma: &[f64], sigma_dot: &[f64]) {
        for i in 0..self.n() {
            if self.sigma_dot[i] * sigma_dot[i] < 0.0 {
                self.sigma_m[i] = sigma[i];
            }
            self.sigma[i] = sigma[i];
            self.sigma_dot[i] = sigma_dot[i];
        }
    }
}
