use super::gains::{LawOrientation, SmcGains};
use super::SlidingState;
use crate::error::{Error, Result};

/// sign with sign(0) = 0.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sat(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// σ = φ̇ + λφ.
pub fn sliding_surface(phase_error: &[f64], phase_error_rate: &[f64], lambda_surface: f64) -> Result<Vec<f64>> {
    if phase_error.len() != phase_error_rate.len() {
        return Err(Error::Dimension(format!(
            "{} errors and {} rates",
            phase_error.len(),
            phase_error_rate.len()
        )));
    }
    if !(lambda_surface > 0.0) {
        return Err(Error::Config(format!("surface slope {lambda_surface} must be positive")));
    }
    Ok(phase_error.iter().zip(phase_error_rate).map(|(p, d)| d + lambda_surface * p).collect())
}

/// Reaching function g(σ) = −β|σ|^γ sign(σ).
pub fn reaching_term(sigma: f64, beta: f64, gamma: f64) -> f64 {
    -beta * sigma.abs().powf(gamma) * sign(sigma)
}

pub fn udot_sign_law(state: &SlidingState, gains: &SmcGains) -> Vec<f64> {
    (0..state.n())
        .map(|i| {
            if state.u[i].abs() > 1.0 {
                -state.u[i]
            } else {
                -gains.alpha * sign(state.sigma_dot[i] - reaching_term(state.sigma[i], gains.beta, gains.gamma))
            }
        })
        .collect()
}

// Shared argument of the sat and homogeneous laws.
fn boundary_argument(sigma: f64, sigma_dot: f64, exponent: f64, phi: f64, phi_rate: f64, g: &SmcGains) -> f64 {
    let shaped = g.beta * sigma * sigma.abs().powf(exponent) / (phi * phi);
    match g.orientation {
        LawOrientation::AsPublished => {
            let rate = if phi_rate == 0.0 { sigma_dot / phi } else { sigma_dot / phi_rate };
            rate - shaped
        }
        LawOrientation::Corrected => {
            let rate = if phi_rate == 0.0 { sigma_dot / phi } else { sigma_dot / phi_rate.abs() };
            rate + shaped
        }
    }
}

pub fn udot_sat_law(state: &SlidingState, gains: &SmcGains) -> Vec<f64> {
    let phi = state.phi;
    let rate = gains.phi_rate(phi);
    (0..state.n())
        .map(|i| {
            if state.u[i].abs() > 1.0 {
                -state.u[i]
            } else {
                -gains.alpha * sat(boundary_argument(state.sigma[i], state.sigma_dot[i], gains.gamma, phi, rate, gains))
            }
        })
        .collect()
}

/// Direct control with the σ|σ|^{1/2} shaping.
pub fn homogeneous_law(state: &SlidingState, gains: &SmcGains) -> Vec<f64> {
    let phi = state.phi;
    let rate = gains.phi_rate(phi);
    (0..state.n())
        .map(|i| -gains.alpha * sat(boundary_argument(state.sigma[i], state.sigma_dot[i], 0.5, phi, rate, gains)))
        .collect()
}

/// u = −α(t)·U·sign(σ − βσ_M). As published α(t) = 1 while
/// (σ − βσ_M)σ_M ≥ 0 and α* otherwise; the corrected orientation swaps the
/// two gains so each half-turn brakes harder than it approaches.
pub fn twisting_law(state: &SlidingState, gains: &SmcGains, magnitude: f64) -> Result<Vec<f64>> {
    if !(magnitude > 0.0) {
        return Err(Error::Config(format!("twisting magnitude {magnitude} must be positive")));
    }
    Ok((0..state.n())
        .map(|i| {
            let shifted = state.sigma[i] - gains.beta * state.sigma_m[i];
            let same_side = shifted * state.sigma_m[i] >= 0.0;
            let strong = match gains.orientation {
                LawOrientation::AsPublished => same_side,
                LawOrientation::Corrected => !same_side,
            };
            let a = if strong { 1.0 } else { gains.alpha_star };
            -a * magnitude * sign(shifted)
        })
        .collect())
}
