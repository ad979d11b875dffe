use serde::{Deserialize, Serialize};

use super::{FlowScenario, SpeedEvent};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DisruptionMode {
    #[default]
    DemandScale,
    SpeedScale,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisruptionSpec {
    pub level: f64,
    pub mode: DisruptionMode,
    /// `None` means the whole day.
    pub window: Option<(f64, f64)>,
    /// Approaches whose demand is scaled; empty means all.
    pub approaches: Vec<String>,
    /// Links whose speed is scaled; empty means all.
    pub links: Vec<String>,
}

impl Default for DisruptionSpec {
    fn default() -> Self {
        Self { level: 1.0, mode: DisruptionMode::DemandScale, window: None, approaches: Vec::new(), links: Vec::new() }
    }
}

impl DisruptionSpec {
    pub fn demand(level: f64) -> Self {
        Self { level, ..Self::default() }
    }
}

/// Returns a disrupted copy. Demand is multiplied by `level` inside the
/// window and scope; speeds are divided by it.
pub fn apply_disruption(scenario: &FlowScenario, spec: &DisruptionSpec) -> Result<FlowScenario> {
    if !(spec.level >= 1.0) || !spec.level.is_finite() {
        return Err(Error::Config(format!("disruption level {} must be at least 1", spec.level)));
    }
    let (w0, w1) = spec.window.unwrap_or((0.0, scenario.day_s));
    if !(0.0 <= w0 && w0 < w1 && w1 <= scenario.day_s) {
        return Err(Error::Config(format!("disruption window [{w0}, {w1}) is not inside the day")));
    }
    if let Some(a) = spec.approaches.iter().find(|a| !scenario.demand.contains_key(*a)) {
        return Err(Error::Config(format!("disruption scope names unknown approach {a}")));
    }
    if spec.level == 1.0 {
        return Ok(scenario.clone());
    }
    let mut out = scenario.clone();
    if matches!(spec.mode, DisruptionMode::DemandScale | DisruptionMode::Both) {
        for (id, series) in out.demand.iter_mut() {
            if !spec.approaches.is_empty() && !spec.approaches.contains(id) {
                continue;
            }
            for (i, v) in series.iter_mut().enumerate() {
                // a sample is affected when its start lies in the window
                let t = i as f64 * scenario.sample_s;
                if t >= w0 && t < w1 {
                    *v *= spec.level;
                }
            }
        }
    }
    if matches!(spec.mode, DisruptionMode::SpeedScale | DisruptionMode::Both) {
        out.speed_events.push(SpeedEvent { links: spec.links.clone(), factor: 1.0 / spec.level, window: (w0, w1) });
    }
    out.disruptions.push(spec.clone());
    Ok(out)
}
