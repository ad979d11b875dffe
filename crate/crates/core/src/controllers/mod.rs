//! The four signal controllers compared by the harness.
//!
//! * `BASELINE` looks up pre-stored time-of-day plans.
//! * `OPTIMAL` minimises predicted delay by branch-and-bound.
//! * `ROBUST` reads greens off the uncontrolled oscillator network.
//! * `ANTIFRAGILE` does the same with the sliding-mode regularizer active.

mod baseline;
pub mod lp;
mod optimal;
mod oscillator;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use baseline::{BaselineController, StaticPlanTable, TimeOfDayBin};
pub use optimal::{
    enumerate_intersection, optimal_plan, optimize_intersection, phase_movements, predicted_delay, Movement,
    OptimalConfig, OptimalController, SearchStats,
};
pub use oscillator::{AntifragileConfig, AntifragileController, RegularizedRun, RobustConfig, RobustController};

use crate::error::{Error, Result};
use crate::mesosim::RoadNetwork;
use crate::scenarios::FlowScenario;
use crate::signal::SignalPlan;

/// What a controller sees at a decision instant.
#[derive(Debug, Clone, Copy)]
pub struct DecisionInput<'a> {
    /// Simulation time.
    pub t_s: f64,
    pub time_of_day_s: f64,
    /// Measured arrival rate per approach (veh/s) over the last sample.
    pub flows: &'a [f64],
}

pub trait SignalController {
    fn name(&self) -> &str;
    fn decide(&mut self, input: &DecisionInput<'_>) -> Result<SignalPlan>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ControllerKind {
    Baseline,
    Optimal,
    Robust,
    Antifragile,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [Self::Baseline, Self::Optimal, Self::Robust, Self::Antifragile];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Baseline => "BASELINE",
            Self::Optimal => "OPTIMAL",
            Self::Robust => "ROBUST",
            Self::Antifragile => "ANTIFRAGILE",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown controller {s}; expected BASELINE, OPTIMAL, ROBUST or ANTIFRAGILE")))
    }
}

/// Settings for every controller kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSettings {
    /// Time-of-day bin edges (hours) of the static plans.
    pub baseline_edges_h: Vec<f64>,
    pub optimal: OptimalConfig,
    pub robust: RobustConfig,
    pub antifragile: AntifragileConfig,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        Self {
            baseline_edges_h: vec![0.0, 6.0, 10.0, 16.0, 20.0, 24.0],
            optimal: OptimalConfig::default(),
            robust: RobustConfig::default(),
            antifragile: AntifragileConfig::default(),
        }
    }
}

/// Builds a controller. `history` is the undisrupted average profile the
/// static plans are designed from; only BASELINE uses it.
pub fn build_controller(
    kind: ControllerKind,
    net: &RoadNetwork,
    history: &FlowScenario,
    settings: &ControllerSettings,
) -> Result<Box<dyn SignalController + Send>> {
    Ok(match kind {
        ControllerKind::Baseline => Box::new(BaselineController::new(StaticPlanTable::from_history(
            net,
            history,
            &settings.baseline_edges_h,
            &settings.optimal,
        )?)),
        ControllerKind::Optimal => Box::new(OptimalController::new(net, settings.optimal)?),
        ControllerKind::Robust => Box::new(RobustController::new(net, settings.robust.clone())?),
        ControllerKind::Antifragile => Box::new(AntifragileController::new(net, settings.antifragile.clone())?),
    })
}
