use std::io::Write;

use serde::{Deserialize, Serialize};

use super::network::RoadNetwork;
use super::sim::{SimState, TripTotals};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalMetrics {
    pub window_start: f64,
    pub window_end: f64,
    pub trips: f64,
    /// `None` when no trip entered in this interval.
    pub time_loss_s: Option<f64>,
    pub avg_speed_mps: Option<f64>,
    pub waiting_s: Option<f64>,
}

/// Trip metrics for trips that entered the network within a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub window_start: f64,
    pub window_end: f64,
    pub trips: f64,
    pub time_loss_s: f64,
    pub avg_speed_mps: f64,
    pub waiting_s: f64,
    /// No completed trip in the window; the averages are meaningless.
    pub empty: bool,
    /// Vehicles still in the network when the report was taken.
    pub unfinished_veh: f64,
    pub intervals: Vec<IntervalMetrics>,
}

fn averages(t: &TripTotals) -> Option<(f64, f64, f64)> {
    (t.vehicles > 1e-9).then(|| {
        (
            ((t.travel_s - t.free_flow_s) / t.vehicles).max(0.0),
            if t.travel_s > 0.0 { t.dist_m / t.travel_s } else { 0.0 },
            t.wait_s / t.vehicles,
        )
    })
}

/// Aggregates completed trips whose entry interval starts in `[start, end)`.
pub fn compute_metrics(state: &SimState, net: &RoadNetwork, window: (f64, f64)) -> Result<MetricsReport> {
    let _ = net;
    let (start, end) = window;
    if !(end > start && start >= 0.0) {
        return Err(Error::Config(format!("invalid metrics window [{start}, {end})")));
    }
    let width = state.config().metrics_interval_s;
    let first = (start / width).ceil() as usize;
    let mut total = TripTotals::default();
    let mut intervals = Vec::new();
    let mut bin = first;
    while (bin as f64) * width < end - 1e-9 {
        let t = state.completed().get(bin).copied().unwrap_or_default();
        total.add(&t);
        let a = averages(&t);
        intervals.push(IntervalMetrics {
            window_start: bin as f64 * width,
            window_end: ((bin + 1) as f64 * width).min(end),
            trips: t.vehicles,
            time_loss_s: a.map(|x| x.0),
            avg_speed_mps: a.map(|x| x.1),
            waiting_s: a.map(|x| x.2),
        });
        bin += 1;
    }
    let a = averages(&total);
    Ok(MetricsReport {
        window_start: start,
        window_end: end,
        trips: total.vehicles,
        time_loss_s: a.map_or(0.0, |x| x.0),
        avg_speed_mps: a.map_or(0.0, |x| x.1),
        waiting_s: a.map_or(0.0, |x| x.2),
        empty: a.is_none(),
        unfinished_veh: (state.queued_units() + state.transit_units()) as f64 / super::UNITS_PER_VEH as f64,
        intervals,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.6}"))
}

/// CSV `window_start,window_end,time_loss_s,avg_speed_mps,waiting_s`, one row
/// per interval; empty intervals leave the metric fields blank.
pub fn write_metrics_csv<W: Write>(report: &MetricsReport, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["window_start", "window_end", "time_loss_s", "avg_speed_mps", "waiting_s"])
        .map_err(crate::osc::csv_err)?;
    for r in &report.intervals {
        wr.write_record([
            format!("{}", r.window_start),
            format!("{}", r.window_end),
            opt(r.time_loss_s),
            opt(r.avg_speed_mps),
            opt(r.waiting_s),
        ])
        .map_err(crate::osc::csv_err)?;
    }
    wr.flush().map_err(|e| Error::io("<metrics>", e))
}
