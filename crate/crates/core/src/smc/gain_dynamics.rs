use super::gains::SmcGains;
use super::laws::sign;
use super::SlidingState;
use crate::error::{Error, Result};

/// One explicit Euler step of the surplus-energy dynamics
///
/// ```text
/// dŝ_i = δ2 (Σ_j (ŝ_j − ŝ_i) + s_i)
/// ds_i = δ3 Σ_j (s_j − dŝ_i) − sign(ŝ_i) θ̈_i
/// b_i  += δ1 ∫ ŝ_i   (trapezoid over the step)
/// ```
///
/// with sums over the coupled neighbours j of i (unweighted).
pub fn gain_dynamics_step(
    state: &SlidingState,
    theta_ddot: &[f64],
    adjacency: &[Vec<f64>],
    gains: &SmcGains,
    dt: f64,
) -> Result<SlidingState> {
    let n = state.n();
    if theta_ddot.len() != n || adjacency.len() != n || adjacency.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("gain dynamics over {n} oscillators got mismatched inputs")));
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("gain dynamics step {dt} must be positive")));
    }
    let (d1, d2, d3) = (gains.delta1, gains.delta2, gains.delta3);
    let mut next = state.clone();
    for i in 0..n {
        let mut hat_diff = 0.0;
        let mut s_sum = 0.0;
        let mut degree = 0.0;
        for j in 0..n {
            if adjacency[i][j] > 0.0 {
                hat_diff += state.s_hat[j] - state.s_hat[i];
                s_sum += state.s[j];
                degree += 1.0;
            }
        }
        let s_hat_rate = d2 * (hat_diff + state.s[i]);
        let s_rate = d3 * (s_sum - degree * s_hat_rate) - sign(state.s_hat[i]) * theta_ddot[i];
        next.s[i] = state.s[i] + dt * s_rate;
        next.s_hat[i] = state.s_hat[i] + dt * s_hat_rate;
        next.b[i] = state.b[i] + d1 * dt * 0.5 * (state.s_hat[i] + next.s_hat[i]);
    }
    Ok(next)
}
