//! Double-integrator test plant σ̈ = c(t) + k·v used to exercise the laws in
//! isolation, where v is u̇ for the rate laws and u for the twisting law.

use super::gains::SmcGains;
use super::laws::{twisting_law, udot_sat_law};
use super::SlidingState;
use crate::error::Result;

/// Bounded disturbance c(t) = amplitude·cos(freq·t + phase).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbance {
    pub amplitude: f64,
    pub freq: f64,
    pub phase: f64,
}

impl Disturbance {
    pub fn at(&self, t: f64) -> f64 {
        self.amplitude * (self.freq * t + self.phase).cos()
    }
}

#[derive(Debug, Clone)]
pub struct PlantRun {
    pub t: Vec<f64>,
    pub sigma: Vec<f64>,
    pub sigma_dot: Vec<f64>,
    /// Extremal values of σ in the order they were recorded; the twisting
    /// run keeps only the peaks of |σ|.
    pub extrema: Vec<f64>,
}

impl PlantRun {
    /// First time |σ| drops below `eps`.
    pub fn reaching_time(&self, eps: f64) -> Option<f64> {
        self.sigma.iter().position(|s| s.abs() < eps).map(|i| self.t[i])
    }

    /// First time |σ| is below `eps` and never again leaves `band`.
    pub fn settling_time(&self, eps: f64, band: f64) -> Option<f64> {
        let mut tail = 0.0f64;
        let mut found = None;
        for i in (0..self.sigma.len()).rev() {
            tail = tail.max(self.sigma[i].abs());
            if tail >= band {
                break;
            }
            if self.sigma[i].abs() < eps {
                found = Some(self.t[i]);
            }
        }
        found
    }

    /// Largest |σ| from `t0` on.
    pub fn max_after(&self, t0: f64) -> f64 {
        self.t
            .iter()
            .zip(&self.sigma)
            .filter(|(t, _)| **t >= t0)
            .map(|(_, s)| s.abs())
            .fold(0.0, f64::max)
    }
}

/// Sat law closed around the plant; semi-implicit Euler with step `dt`.
pub fn run_sat_law(
    gains: &SmcGains,
    k: f64,
    c: Disturbance,
    sigma0: f64,
    sigma_dot0: f64,
    dt: f64,
    t_end: f64,
) -> PlantRun {
    let mut state = SlidingState::new(1, gains.phi);
    state.sigma[0] = sigma0;
    state.sigma_dot[0] = sigma_dot0;
    let mut run = PlantRun { t: vec![0.0], sigma: vec![sigma0], sigma_dot: vec![sigma_dot0], extrema: Vec::new() };
    let steps = (t_end / dt).round() as usize;
    for step in 0..steps {
        let t = step as f64 * dt;
        let before_u = state.u[0];
        state.u[0] = (before_u + dt * udot_sat_law(&state, gains)[0]).clamp(-1.0, 1.0);
        let du = (state.u[0] - before_u) / dt;
        let accel = c.at(t) + k * du;
        let sd = state.sigma_dot[0] + dt * accel;
        let s = state.sigma[0] + dt * sd;
        let before = state.sigma_m[0];
        state.observe(&[s], &[sd]);
        if state.sigma_m[0] != before {
            run.extrema.push(state.sigma_m[0]);
        }
        run.t.push(t + dt);
        run.sigma.push(s);
        run.sigma_dot.push(sd);
    }
    run
}

/// Twisting law closed around the plant.
pub fn run_twisting(
    gains: &SmcGains,
    magnitude: f64,
    k: f64,
    c: Disturbance,
    sigma0: f64,
    dt: f64,
    t_end: f64,
) -> Result<PlantRun> {
    let mut state = SlidingState::new(1, gains.phi);
    state.sigma[0] = sigma0;
    let mut run = PlantRun { t: vec![0.0], sigma: vec![sigma0], sigma_dot: vec![0.0], extrema: Vec::new() };
    let steps = (t_end / dt).round() as usize;
    for step in 0..steps {
        let t = step as f64 * dt;
        let u = twisting_law(&state, gains, magnitude)?[0];
        let sd = state.sigma_dot[0] + dt * (c.at(t) + k * u);
        let s = state.sigma[0] + dt * sd;
        let prev_dot = state.sigma_dot[0];
        state.observe(&[s], &[sd]);
        // peaks of |σ|: σ̇ reverses and σ heads back toward zero
        if prev_dot * sd < 0.0 && s * sd < 0.0 {
            run.extrema.push(s);
        }
        run.t.push(t + dt);
        run.sigma.push(s);
        run.sigma_dot.push(sd);
    }
    Ok(run)
}
