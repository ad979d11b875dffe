use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign convention of the reaching term in the sat and homogeneous laws and
/// of the α switch in the twisting law. `AsPublished` keeps the printed
/// signs, which drive σ away from zero; `Corrected` flips them so the laws
/// converge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LawOrientation {
    AsPublished,
    #[default]
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BoundaryLayer {
    /// Φ fixed; the configured Φ̇ is used as is (zero falls back to σ̇/Φ).
    #[default]
    Static,
    /// Φ̇ = −κ(Φ − target).
    Dynamic { kappa: f64, target: f64 },
}

/// Raw gain values as they appear in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmcParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub phi: f64,
    pub phi_dot: f64,
    pub lambda_surface: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub c_bound: f64,
    pub k_min: f64,
    pub k_max: f64,
    /// Reduced gain of the twisting law, in [0, β/10).
    pub alpha_star: f64,
    pub orientation: LawOrientation,
    pub boundary_layer: BoundaryLayer,
}

impl Default for SmcParams {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            beta: 0.5,
            gamma: 0.5,
            phi: 0.1,
            phi_dot: 0.0,
            lambda_surface: 1.0,
            delta1: 0.1,
            delta2: 0.3,
            delta3: 0.6,
            c_bound: 0.1,
            k_min: 1.0,
            k_max: 2.0,
            alpha_star: 0.04,
            orientation: LawOrientation::Corrected,
            boundary_layer: BoundaryLayer::Static,
        }
    }
}

/// Validated gains. The only way to obtain one is `SmcGains::new`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmcGains(SmcParams);

impl SmcGains {
    pub fn new(p: SmcParams) -> Result<Self> {
        let bad = |m: String| Err(Error::Config(m));
        if !(p.alpha > 0.0 && p.alpha <= 1.0) {
            return bad(format!("alpha {} must lie in (0, 1]", p.alpha));
        }
        if !(p.beta > 0.0 && p.beta < 1.0) {
            return bad(format!("beta {} must lie in (0, 1)", p.beta));
        }
        if !(0.5..=1.0).contains(&p.gamma) {
            return bad(format!("gamma {} must lie in [0.5, 1]", p.gamma));
        }
        if !(p.phi > 0.0) {
            return bad(format!("boundary layer phi {} must be positive", p.phi));
        }
        if !(p.lambda_surface > 0.0) {
            return bad(format!("surface slope {} must be positive", p.lambda_surface));
        }
        if !(0.0 < p.delta1 && p.delta1 < p.delta2 && p.delta2 < p.delta3 && p.delta3 < 1.0) {
            return bad(format!(
                "gain rates must satisfy 0 < delta1 < delta2 < delta3 < 1 (got {}, {}, {})",
                p.delta1, p.delta2, p.delta3
            ));
        }
        if !(p.k_min > 0.0 && p.k_min <= p.k_max && p.c_bound >= 0.0) {
            return bad("need 0 < k_min <= k_max and c_bound >= 0".into());
        }
        if !(p.alpha * p.k_min - p.c_bound > p.beta * p.beta / 2.0) {
            return bad(format!(
                "convergence condition alpha*k_min - c_bound > beta^2/2 fails ({} <= {})",
                p.alpha * p.k_min - p.c_bound,
                p.beta * p.beta / 2.0
            ));
        }
        if !(p.alpha_star >= 0.0 && p.alpha_star < p.beta / 10.0) {
            return bad(format!("alpha_star {} must lie in [0, beta/10)", p.alpha_star));
        }
        if let BoundaryLayer::Dynamic { kappa, target } = p.boundary_layer {
            if !(kappa > 0.0 && target > 0.0) {
                return bad("dynamic boundary layer needs positive kappa and target".into());
            }
        }
        Ok(Self(p))
    }

    pub fn params(&self) -> &SmcParams {
        &self.0
    }

    /// Φ̇ at the current width.
    pub fn phi_rate(&self, phi: f64) -> f64 {
        match self.0.boundary_layer {
            BoundaryLayer::Static => self.0.phi_dot,
            BoundaryLayer::Dynamic { kappa, target } => -kappa * (phi - target),
        }
    }
}

impl std::ops::Deref for SmcGains {
    type Target = SmcParams;
    fn deref(&self) -> &SmcParams {
        &self.0
    }
}
