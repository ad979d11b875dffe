use serde::{Deserialize, Serialize};

use super::layout::SignalGroup;
use super::network::OscillatorNetwork;
use super::sync::{per_oscillator_sync_times, PairSyncTimes};
use crate::error::{Error, Result};
use crate::signal::{fit_greens, IntersectionPlan, SignalConstraints, SignalPlan};

/// How seconds of synchronization lag turn into seconds of green.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum DeltaScale {
    /// cycle / (analysed trajectory span)
    CyclePerHorizon,
    /// cycle / (time until every coupled pair settled); falls back to the
    /// horizon when some pair never settled
    CyclePerConsensus,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenExtraction {
    pub scale: DeltaScale,
    /// Lower bound on the span used by the cycle-relative scales, so a network
    /// that starts synchronized does not blow deltas up.
    pub min_span_s: f64,
    /// Multiplies the scale; 1 keeps the cycle-relative scales as named.
    pub gain: f64,
}

impl Default for GreenExtraction {
    fn default() -> Self {
        Self { scale: DeltaScale::CyclePerHorizon, min_span_s: 1e-3, gain: 1.0 }
    }
}

impl GreenExtraction {
    fn factor(&self, cycle: f64, sync: &PairSyncTimes) -> f64 {
        let horizon = sync.t_end - sync.t_start;
        self.gain * match self.scale {
            DeltaScale::Fixed(s) => s,
            DeltaScale::CyclePerHorizon => cycle / horizon.max(self.min_span_s),
            DeltaScale::CyclePerConsensus => {
                let span = sync.consensus_time().map_or(horizon, |t| t - sync.t_start);
                cycle / span.max(self.min_span_s)
            }
        }
    }
}

/// Plan from pairwise settling times.
pub fn extract_green_times(
    sync: &PairSyncTimes,
    net: &OscillatorNetwork,
    groups: &[SignalGroup],
    constraints: &SignalConstraints,
    extraction: &GreenExtraction,
) -> Result<SignalPlan> {
    let times = per_oscillator_sync_times(sync);
    let scales: Vec<f64> = constraints
        .intersections
        .iter()
        .map(|c| extraction.factor(c.cycle_s, sync))
        .collect();
    plan_from_times(&times, net, groups, constraints, |x| scales[x])
}

/// Plan from per-oscillator settling times with a single scale factor.
pub fn green_times_from_oscillator_times(
    times: &[f64],
    net: &OscillatorNetwork,
    groups: &[SignalGroup],
    constraints: &SignalConstraints,
    scale: f64,
) -> Result<SignalPlan> {
    plan_from_times(times, net, groups, constraints, |_| scale)
}

fn plan_from_times(
    times: &[f64],
    net: &OscillatorNetwork,
    groups: &[SignalGroup],
    constraints: &SignalConstraints,
    scale: impl Fn(usize) -> f64,
) -> Result<SignalPlan> {
    constraints.validate()?;
    if times.len() != net.n() || groups.len() != net.n() {
        return Err(Error::Dimension(format!(
            "{} sync times and {} signal groups for {} oscillators",
            times.len(),
            groups.len(),
            net.n()
        )));
    }
    let mut raw: Vec<Vec<f64>> = constraints.intersections.iter().map(|c| c.nominal()).collect();
    let mut seen: Vec<Vec<bool>> = constraints.intersections.iter().map(|c| vec![false; c.phases]).collect();
    for (i, g) in groups.iter().enumerate() {
        let slot = seen
            .get_mut(g.intersection)
            .and_then(|s| s.get_mut(g.phase))
            .ok_or_else(|| Error::Config(format!("oscillator {i} maps to a missing signal group {g:?}")))?;
        if *slot {
            return Err(Error::Config(format!("signal group {g:?} has more than one oscillator")));
        }
        *slot = true;
        let nb = net.neighbors(i);
        let delta = if nb.is_empty() {
            0.0
        } else {
            times[i] - nb.iter().map(|&(j, _)| times[j]).sum::<f64>() / nb.len() as f64
        };
        raw[g.intersection][g.phase] += scale(g.intersection) * delta;
    }
    let intersections = constraints
        .intersections
        .iter()
        .zip(raw)
        .map(|(c, r)| IntersectionPlan {
            id: c.id.clone(),
            cycle_s: c.cycle_s,
            offset_s: c.offset_s,
            greens: fit_greens(&r, c.effective_green(), c.g_min_s, c.g_max_s),
        })
        .collect();
    Ok(SignalPlan { intersections, stale: false })
}
