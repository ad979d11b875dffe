//! Demand profiles, disruptions and flow data ingestion.

mod disruption;
mod ingest;
mod profile;

pub use disruption::{apply_disruption, DisruptionMode, DisruptionSpec};
pub use ingest::{export_flow_csv, ingest_flow_csv, read_flow_csv, IngestReport, IngestedDay};
pub use profile::{grid_demand, synth_daily_profile, ApproachProfile, DemandPattern, Peak, ProfileParams};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DAY_S: f64 = 86_400.0;

/// Speed multiplier on some links over a time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedEvent {
    /// Empty means every link.
    pub links: Vec<String>,
    pub factor: f64,
    pub window: (f64, f64),
}

/// Demand time series per entry approach at a fixed sample resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowScenario {
    pub sample_s: f64,
    pub day_s: f64,
    pub seed: u64,
    /// veh/s per sample, keyed by entry approach (link) id.
    pub demand: BTreeMap<String, Vec<f64>>,
    pub speed_events: Vec<SpeedEvent>,
    /// Disruptions applied so far, in order.
    pub disruptions: Vec<DisruptionSpec>,
}

impl FlowScenario {
    pub fn new(sample_s: f64, day_s: f64, seed: u64, demand: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let s = Self { sample_s, day_s, seed, demand, speed_events: Vec::new(), disruptions: Vec::new() };
        s.validate()?;
        Ok(s)
    }

    pub fn samples(&self) -> usize {
        (self.day_s / self.sample_s).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_s > 0.0 && self.day_s >= self.sample_s) {
            return Err(Error::Config("scenario needs a positive sample period within the day".into()));
        }
        let n = self.samples();
        for (id, series) in &self.demand {
            if series.len() != n {
                return Err(Error::Config(format!("demand series {id} has {} samples, expected {n}", series.len())));
            }
            if let Some(v) = series.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return Err(Error::Config(format!("demand series {id} has invalid value {v}")));
            }
        }
        Ok(())
    }

    /// Demand (veh/s) at time `t`; zero outside the day or for unknown ids.
    pub fn demand_at(&self, id: &str, t: f64) -> f64 {
        if t < 0.0 || t >= self.day_s {
            return 0.0;
        }
        let idx = (t / self.sample_s).floor() as usize;
        self.demand.get(id).and_then(|s| s.get(idx)).copied().unwrap_or(0.0)
    }

    pub fn speed_factor(&self, link: &str, t: f64) -> f64 {
        self.speed_events
            .iter()
            .filter(|e| t >= e.window.0 && t < e.window.1)
            .filter(|e| e.links.is_empty() || e.links.iter().any(|l| l == link))
            .map(|e| e.factor)
            .product()
    }
}
