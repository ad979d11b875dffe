//! Pre-stored time-of-day plans.

use serde::{Deserialize, Serialize};

use super::optimal::{optimal_plan, OptimalConfig};
use super::{DecisionInput, SignalController};
use crate::error::{Error, Result};
use crate::mesosim::RoadNetwork;
use crate::scenarios::{FlowScenario, DAY_S};
use crate::signal::{SignalConstraints, SignalPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeOfDayBin {
    pub start_s: f64,
    pub end_s: f64,
    pub plan: SignalPlan,
}

/// Plans indexed by half-open time-of-day bins covering the whole day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticPlanTable {
    bins: Vec<TimeOfDayBin>,
}

impl StaticPlanTable {
    pub fn new(bins: Vec<TimeOfDayBin>, constraints: &SignalConstraints) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::Config("plan table has no bins".into()));
        }
        let mut edge = 0.0;
        for b in &bins {
            if (b.start_s - edge).abs() > 1e-9 || !(b.end_s > b.start_s) {
                return Err(Error::Config(format!("plan table bin [{}, {}) leaves a gap or overlaps at {edge}", b.start_s, b.end_s)));
            }
            b.plan.check(constraints)?;
            edge = b.end_s;
        }
        if (edge - DAY_S).abs() > 1e-9 {
            return Err(Error::Config(format!("plan table ends at {edge} s, not at the end of the day")));
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[TimeOfDayBin] {
        &self.bins
    }

    /// Plan in force at `time_of_day` (seconds since midnight).
    pub fn lookup(&self, time_of_day: f64) -> Result<&SignalPlan> {
        self.bins
            .iter()
            .find(|b| time_of_day >= b.start_s && time_of_day < b.end_s)
            .map(|b| &b.plan)
            .ok_or_else(|| Error::Config(format!("no plan covers time of day {time_of_day} s")))
    }

    /// One OPTIMAL plan per bin, designed for the bin's peak demand of the
    /// historic profile `history`, propagated through the turning ratios.
    pub fn from_history(
        net: &RoadNetwork,
        history: &FlowScenario,
        edges_h: &[f64],
        cfg: &OptimalConfig,
    ) -> Result<Self> {
        if edges_h.len() < 2 || edges_h[0] != 0.0 || (edges_h[edges_h.len() - 1] * 3600.0 - DAY_S).abs() > 1e-9 {
            return Err(Error::Config("time-of-day edges must run from 0 h to 24 h".into()));
        }
        let mut bins = Vec::new();
        for w in edges_h.windows(2) {
            let (start, end) = (w[0] * 3600.0, w[1] * 3600.0);
            let peak: Vec<f64> = net
                .entries
                .iter()
                .map(|&l| {
                    let id = &net.links[l].id;
                    let mut t = start;
                    let mut m: f64 = 0.0;
                    while t < end {
                        m = m.max(history.demand_at(id, t));
                        t += history.sample_s;
                    }
                    m
                })
                .collect();
            let flows = net.propagate_flows(&peak)?;
            bins.push(TimeOfDayBin { start_s: start, end_s: end, plan: optimal_plan(net, &flows, cfg)? });
        }
        Self::new(bins, &net.constraints())
    }
}

pub struct BaselineController {
    table: StaticPlanTable,
}

impl BaselineController {
    pub fn new(table: StaticPlanTable) -> Self {
        Self { table }
    }
    pub fn table(&self) -> &StaticPlanTable {
        &self.table
    }
}

impl SignalController for BaselineController {
    fn name(&self) -> &str {
        "BASELINE"
    }

    fn decide(&mut self, input: &DecisionInput<'_>) -> Result<SignalPlan> {
        self.table.lookup(input.time_of_day_s.rem_euclid(DAY_S)).cloned()
    }
}
