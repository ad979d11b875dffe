use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{FlowScenario, DAY_S};
use crate::error::{Error, Result};
use crate::mesosim::RoadNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub time_s: f64,
    pub width_s: f64,
    /// veh/s added at the peak.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachProfile {
    pub id: String,
    pub base: f64,
    pub morning: Peak,
    pub evening: Peak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub sample_s: f64,
    pub day_s: f64,
    /// Relative standard deviation of the per-sample multiplicative noise.
    pub noise: f64,
    pub seed: u64,
    pub approaches: Vec<ApproachProfile>,
}

/// Base flow plus two Gaussian peaks per approach, with seeded noise.
pub fn synth_daily_profile(params: &ProfileParams) -> Result<FlowScenario> {
    if !(params.sample_s > 0.0 && params.day_s >= params.sample_s && params.noise >= 0.0) {
        return Err(Error::Config("profile needs positive sample period, a day of at least one sample and noise >= 0".into()));
    }
    let n = (params.day_s / params.sample_s).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut demand = BTreeMap::new();
    for a in &params.approaches {
        for p in [&a.morning, &a.evening] {
            if !(p.time_s >= 0.0 && p.time_s < params.day_s && p.width_s > 0.0) {
                return Err(Error::Config(format!("{}: peak at {} s is outside the day or has no width", a.id, p.time_s)));
            }
        }
        let series = (0..n)
            .map(|i| {
                let t = i as f64 * params.sample_s;
                let bump = |p: &Peak| p.magnitude * (-(t - p.time_s).powi(2) / (2.0 * p.width_s.powi(2))).exp();
                let clean = a.base + bump(&a.morning) + bump(&a.evening);
                if params.noise > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    (clean * (1.0 + params.noise * z)).max(0.0)
                } else {
                    clean
                }
            })
            .collect();
        if demand.insert(a.id.clone(), series).is_some() {
            return Err(Error::Config(format!("approach {} appears twice in the profile", a.id)));
        }
    }
    FlowScenario::new(params.sample_s, params.day_s, params.seed, demand)
}

/// Demand pattern applied to every entry of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandPattern {
    pub sample_s: f64,
    pub base_vps: f64,
    pub morning_vps: f64,
    pub evening_vps: f64,
    pub morning_time_s: f64,
    pub evening_time_s: f64,
    pub morning_width_s: f64,
    pub evening_width_s: f64,
    /// Share shifted toward inbound (west/north) entries in the morning and
    /// outbound (east/south) entries in the evening.
    pub tidal: f64,
    /// Log-normal sigma of the per-day, per-entry peak magnitude.
    pub magnitude_jitter: f64,
    /// Uniform half-range of the per-day, per-entry peak time shift.
    pub time_jitter_s: f64,
    pub noise: f64,
}

impl Default for DemandPattern {
    fn default() -> Self {
        Self {
            sample_s: 300.0,
            base_vps: 0.018,
            morning_vps: 0.072,
            evening_vps: 0.072,
            morning_time_s: 9.0 * 3600.0,
            evening_time_s: 18.0 * 3600.0,
            morning_width_s: 3600.0,
            evening_width_s: 4320.0,
            tidal: 0.5,
            magnitude_jitter: 0.25,
            time_jitter_s: 1800.0,
            noise: 0.05,
        }
    }
}

impl DemandPattern {
    /// Same pattern without day-to-day variation: the "historic average".
    pub fn expected(&self) -> Self {
        Self { magnitude_jitter: 0.0, time_jitter_s: 0.0, noise: 0.0, ..self.clone() }
    }
}

fn inbound(id: &str) -> Option<bool> {
    match id.rsplit('_').next() {
        Some("w") | Some("n") => Some(true),
        Some("e") | Some("s") => Some(false),
        _ => None,
    }
}

/// Profile parameters for every entry of `net`, with per-day variation drawn
/// from `seed`.
pub fn grid_demand(net: &RoadNetwork, pattern: &DemandPattern, seed: u64) -> ProfileParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_da7a);
    let mut ids: Vec<&str> = net.entries.iter().map(|&l| net.links[l].id.as_str()).collect();
    ids.sort_unstable();
    let approaches = ids
        .into_iter()
        .map(|id| {
            let (m, e) = match inbound(id) {
                Some(true) => (1.0 + pattern.tidal, 1.0 - pattern.tidal),
                Some(false) => (1.0 - pattern.tidal, 1.0 + pattern.tidal),
                None => (1.0, 1.0),
            };
            let mut jitter = || {
                let z: f64 = rng.sample(StandardNormal);
                let shift = if pattern.time_jitter_s > 0.0 {
                    rng.gen_range(-pattern.time_jitter_s..pattern.time_jitter_s)
                } else {
                    0.0
                };
                ((pattern.magnitude_jitter * z).exp(), shift)
            };
            let (mf, ms) = jitter();
            let (ef, es) = jitter();
            ApproachProfile {
                id: id.to_string(),
                base: pattern.base_vps,
                morning: Peak {
                    time_s: pattern.morning_time_s + ms,
                    width_s: pattern.morning_width_s,
                    magnitude: pattern.morning_vps * m * mf,
                },
                evening: Peak {
                    time_s: pattern.evening_time_s + es,
                    width_s: pattern.evening_width_s,
                    magnitude: pattern.evening_vps * e * ef,
                },
            }
        })
        .collect();
    ProfileParams { sample_s: pattern.sample_s, day_s: DAY_S, noise: pattern.noise, seed, approaches }
}
