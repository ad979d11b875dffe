use serde::{Deserialize, Serialize};

use super::gain_dynamics::gain_dynamics_step;
use super::gains::{BoundaryLayer, SmcGains};
use super::laws::{sliding_surface, udot_sat_law};
use super::SlidingState;
use crate::error::{Error, Result};
use crate::osc::OscillatorNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThetaDdotMode {
    /// Differentiate the model along the trajectory.
    #[default]
    Analytic,
    /// Central difference of θ̇ over the last three samples.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajSample {
    pub t: f64,
    pub theta: Vec<f64>,
    pub theta_dot: Vec<f64>,
}

pub struct StepInput<'a> {
    pub net: &'a OscillatorNetwork,
    /// Adjacency as rows, shared with the gain dynamics.
    pub adjacency: &'a [Vec<f64>],
    /// Recent samples, oldest first.
    pub window: &'a [TrajSample],
    pub mode: ThetaDdotMode,
}

/// φ_i = x_i − Σ_j A_ij x_j / Σ_j A_ij; zero for isolated oscillators.
pub fn consensus_error(net: &OscillatorNetwork, x: &[f64]) -> Vec<f64> {
    (0..net.n())
        .map(|i| {
            let nb = net.neighbors(i);
            let w: f64 = nb.iter().map(|&(_, a)| a).sum();
            if w > 0.0 {
                x[i] - nb.iter().map(|&(j, a)| a * x[j]).sum::<f64>() / w
            } else {
                0.0
            }
        })
        .collect()
}

/// One sampled-data controller step. Returns the additive term b_i·u_i for
/// the oscillator right-hand side together with the advanced state.
pub fn antifragile_controller_step(
    input: &StepInput<'_>,
    state: &SlidingState,
    gains: &SmcGains,
    dt: f64,
) -> Result<(Vec<f64>, SlidingState)> {
    let n = input.net.n();
    if state.n() != n {
        return Err(Error::Dimension(format!("sliding state has {} oscillators, network {n}", state.n())));
    }
    let needed = match input.mode {
        ThetaDdotMode::Analytic => 1,
        ThetaDdotMode::FiniteDifference => 3,
    };
    if input.window.len() < needed {
        return Ok((vec![0.0; n], state.clone()));
    }
    let last = input.window.last().unwrap();
    let theta_ddot = match input.mode {
        ThetaDdotMode::Analytic => {
            let mut out = vec![0.0; n];
            input.net.theta_ddot_into(last.t, &last.theta, &last.theta_dot, &mut out);
            out
        }
        ThetaDdotMode::FiniteDifference => {
            let w = &input.window[input.window.len() - 3..];
            let span = w[2].t - w[0].t;
            (0..n).map(|i| (w[2].theta_dot[i] - w[0].theta_dot[i]) / span).collect()
        }
    };
    let phi = consensus_error(input.net, &last.theta);
    let phi_dot = consensus_error(input.net, &last.theta_dot);
    let phi_ddot = consensus_error(input.net, &theta_ddot);
    let sigma = sliding_surface(&phi, &phi_dot, gains.lambda_surface)?;
    let sigma_dot = sliding_surface(&phi_dot, &phi_ddot, gains.lambda_surface)?;

    let mut next = state.clone();
    next.observe(&sigma, &sigma_dot);
    let u_dot = udot_sat_law(&next, gains);
    for (u, du) in next.u.iter_mut().zip(&u_dot) {
        *u = (*u + dt * du).clamp(-1.0, 1.0);
    }
    if let BoundaryLayer::Dynamic { .. } = gains.boundary_layer {
        next.phi += dt * gains.phi_rate(next.phi);
    }
    let advanced = gain_dynamics_step(&next, &theta_ddot, input.adjacency, gains, dt)?;
    next.s = advanced.s;
    next.s_hat = advanced.s_hat;
    next.b = advanced.b;
    let control = next.b.iter().zip(&next.u).map(|(b, u)| b * u).collect();
    Ok((control, next))
}
