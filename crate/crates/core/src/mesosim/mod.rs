//! Store-and-forward mesoscopic simulator.
//!
//! Vehicles move in cohorts. Amounts are integer micro-vehicles so the
//! conservation identity holds exactly. Each tick runs three phases in
//! order: link arrivals join stop-line queues (or leave the network),
//! boundary demand enters, green approaches discharge downstream. All events
//! of a tick are stamped at its midpoint.

mod closed_loop;
mod metrics;
mod network;
mod sim;

pub use closed_loop::{run_closed_loop, ClosedLoopConfig, ClosedLoopResult, LatencyStats};
pub use metrics::{compute_metrics, write_metrics_csv, IntervalMetrics, MetricsReport};
pub use network::{
    grid_network, Approach, GridSpec, Intersection, IntersectionSpec, Link, LinkSpec, NetworkFile, Node,
    RoadNetwork, TimingDefaults, BOUNDARY_PREFIX,
};
pub use sim::{green_overlap, ArrivalMode, Production, SimConfig, SimState, TripTotals, UNITS_PER_VEH};
