use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, MetricsReport};
use super::network::RoadNetwork;
use super::sim::{Production, SimConfig, SimState};
use crate::controllers::{DecisionInput, SignalController};
use crate::error::{Error, Result};
use crate::scenarios::{FlowScenario, DAY_S};
use crate::signal::SignalPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClosedLoopConfig {
    pub sim: SimConfig,
    /// Seconds between controller decisions.
    pub sample_s: f64,
    /// Longest zero-demand run after the day so trips can finish.
    pub drain_s: f64,
}

impl Default for ClosedLoopConfig {
    fn default() -> Self {
        Self { sim: SimConfig::default(), sample_s: 300.0, drain_s: 3600.0 }
    }
}

/// Wall-clock seconds per controller decision.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub samples_s: Vec<f64>,
}

impl LatencyStats {
    pub fn median(&self) -> Option<f64> {
        if self.samples_s.is_empty() {
            return None;
        }
        let mut v = self.samples_s.clone();
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.samples_s.is_empty()).then(|| self.samples_s.iter().sum::<f64>() / self.samples_s.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct ClosedLoopResult {
    pub metrics: MetricsReport,
    /// Plan in force from each decision time on.
    pub plans: Vec<(f64, SignalPlan)>,
    pub latency: LatencyStats,
    /// Decisions that errored or returned an invalid plan.
    pub failures: usize,
    /// Decisions that returned a stale plan.
    pub stale: usize,
    /// Flows handed to each decision, per approach.
    pub flow_samples: Vec<Vec<f64>>,
    pub production: Vec<Production>,
    pub final_state: SimState,
}

/// Runs one day of `scenario` on `net` with `controller` deciding every
/// `cfg.sample_s` seconds from the flows measured over the previous sample.
/// A failing decision keeps the previous plan.
pub fn run_closed_loop(
    net: &RoadNetwork,
    controller: &mut dyn SignalController,
    scenario: &FlowScenario,
    cfg: &ClosedLoopConfig,
) -> Result<ClosedLoopResult> {
    scenario.validate()?;
    let dt = cfg.sim.dt_s;
    let per_sample = (cfg.sample_s / dt).round() as u64;
    if per_sample == 0 || (per_sample as f64 * dt - cfg.sample_s).abs() > 1e-9 || !(cfg.drain_s >= 0.0) {
        return Err(Error::Config(format!("decision period {} s must be a whole number of {dt} s steps", cfg.sample_s)));
    }
    let entry_ids: Vec<&str> = net.entries.iter().map(|&l| net.links[l].id.as_str()).collect();
    if let Some(id) = entry_ids.iter().find(|id| !scenario.demand.contains_key(**id)) {
        return Err(Error::Config(format!("scenario has no demand for entry {id}")));
    }
    let constraints = net.constraints();
    let mut state = SimState::new(net, cfg.sim.clone())?;
    let mut plan = SignalPlan::nominal(&constraints);
    let mut flows = vec![0.0; net.approaches.len()];
    let mut speed = vec![1.0; net.links.len()];
    let mut out_plans = Vec::new();
    let mut latency = LatencyStats::default();
    let mut flow_samples = Vec::new();
    let (mut failures, mut stale) = (0, 0);
    let day = scenario.day_s;
    let end = day + cfg.drain_s;
    let mut demand = vec![0.0; net.entries.len()];
    let mut tick: u64 = 0;
    loop {
        let t = state.time();
        if t >= end - 1e-9 || (t >= day && state.is_empty()) {
            break;
        }
        if t < day && tick % per_sample == 0 {
            if tick > 0 {
                flows = state.take_measured_flows(cfg.sample_s);
            }
            let next_speed: Vec<f64> = net.links.iter().map(|l| scenario.speed_factor(&l.id, t)).collect();
            if next_speed != speed {
                state.set_speed_factors(&next_speed)?;
                speed = next_speed;
            }
            let input = DecisionInput { t_s: t, time_of_day_s: t.rem_euclid(DAY_S), flows: &flows };
            let started = Instant::now();
            let decided = controller.decide(&input);
            latency.samples_s.push(started.elapsed().as_secs_f64());
            match decided.and_then(|p| p.check(&constraints).map(|_| p)) {
                Ok(p) => {
                    stale += p.stale as usize;
                    plan = p;
                }
                Err(e) => {
                    log::warn!("{} failed at t={t}: {e}; keeping the previous plan", controller.name());
                    failures += 1;
                }
            }
            flow_samples.push(flows.clone());
            out_plans.push((t, plan.clone()));
        }
        for (d, id) in demand.iter_mut().zip(&entry_ids) {
            *d = if t < day { scenario.demand_at(id, t) } else { 0.0 };
        }
        state.step(net, &plan, &demand, dt)?;
        debug_assert_eq!(state.conservation_residual(), 0);
        tick += 1;
    }
    let metrics = compute_metrics(&state, net, (0.0, day))?;
    Ok(ClosedLoopResult {
        metrics,
        plans: out_plans,
        latency,
        failures,
        stale,
        flow_samples,
        production: state.production().to_vec(),
        final_state: state,
    })
}
