//! Macroscopic fundamental diagrams, traffic regime labels and the
//! second-difference convexity probe.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::controllers::{build_controller, ControllerKind, ControllerSettings};
use crate::error::{Error, Result};
use crate::mesosim::{run_closed_loop, ClosedLoopConfig, Production, RoadNetwork};
use crate::scenarios::{apply_disruption, DisruptionSpec, FlowScenario};

const CONSISTENCY_TOL: f64 = 1e-6;

/// One aggregated observation. `flow = density * speed` holds to 1e-6
/// relative for every constructed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfdPoint {
    pub timestamp: f64,
    /// veh/km
    pub density: f64,
    /// veh/h
    pub flow: f64,
    /// km/h
    pub speed: f64,
}

fn consistent(density: f64, flow: f64, speed: f64) -> bool {
    let q = density * speed;
    (flow - q).abs() <= CONSISTENCY_TOL * flow.abs().max(q.abs()) + 1e-12
}

impl MfdPoint {
    /// Point with flow derived from density and speed.
    pub fn new(timestamp: f64, density: f64, speed: f64) -> Result<Self> {
        Self::with_flow(timestamp, density, density * speed, speed)
    }

    /// Point from three measured quantities; rejects inconsistent triples.
    pub fn with_flow(timestamp: f64, density: f64, flow: f64, speed: f64) -> Result<Self> {
        let vals = [timestamp, density, flow, speed];
        if vals.iter().any(|v| !v.is_finite()) || density < 0.0 || flow < 0.0 || speed < 0.0 {
            return Err(Error::Config(format!("MFD point ({density}, {flow}, {speed}) must be finite and non-negative")));
        }
        if !consistent(density, flow, speed) {
            return Err(Error::Config(format!(
                "MFD point flow {flow} differs from density·speed {}",
                density * speed
            )));
        }
        Ok(Self { timestamp, density, flow, speed })
    }
}

/// Network-wide points from simulator production, one per interval with
/// traffic. Density and flow are per lane-km.
pub fn points_from_production(production: &[Production], lane_km: f64) -> Result<Vec<MfdPoint>> {
    if !(lane_km > 0.0) {
        return Err(Error::Config("network has no lane length".into()));
    }
    let mut t = 0.0;
    let mut out = Vec::new();
    for p in production {
        let hours = p.duration_s / 3600.0;
        if p.veh_h > 0.0 && hours > 0.0 {
            let density = p.veh_h / (hours * lane_km);
            let speed = p.veh_km / p.veh_h;
            out.push(MfdPoint::new(t, density, speed)?);
        }
        t += p.duration_s;
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct DetectorRow {
    t: f64,
    #[allow(dead_code)]
    detector_id: String,
    flow_vph: f64,
    density_vpkm: f64,
    speed_kmh: f64,
}

/// Reads detector CSV `t,detector_id,flow_vph,density_vpkm,speed_kmh`.
/// Row numbers in errors count the header as row 1.
pub fn read_detector_csv<R: Read>(r: R) -> Result<Vec<MfdPoint>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rd.headers().map_err(|e| Error::Parse { row: 1, msg: e.to_string() })?.clone();
    let expected = ["t", "detector_id", "flow_vph", "density_vpkm", "speed_kmh"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse { row: 1, msg: format!("expected header {}", expected.join(",")) });
    }
    let mut out = Vec::new();
    for (i, rec) in rd.deserialize::<DetectorRow>().enumerate() {
        let row = i + 2;
        let d = rec.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        let p = MfdPoint::with_flow(d.t, d.density_vpkm, d.flow_vph, d.speed_kmh)
            .map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        out.push(p);
    }
    if out.is_empty() {
        return Err(Error::Parse { row: 1, msg: "no detector rows".into() });
    }
    Ok(out)
}

/// Mean flow and speed over one density bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfdBin {
    pub bin: i64,
    pub density_lo: f64,
    pub density_hi: f64,
    pub mean_density: f64,
    pub mean_flow: f64,
    pub mean_speed: f64,
    pub count: usize,
}

/// Bins points by density; empty bins are omitted.
pub fn compute_mfd(points: &[MfdPoint], bin_width: f64) -> Result<Vec<MfdBin>> {
    if points.is_empty() {
        return Err(Error::Config("MFD needs at least one point".into()));
    }
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::Config(format!("bin width {bin_width} must be positive")));
    }
    let mut acc: BTreeMap<i64, (f64, f64, f64, usize)> = BTreeMap::new();
    for p in points {
        let e = acc.entry((p.density / bin_width).floor() as i64).or_default();
        e.0 += p.density;
        e.1 += p.flow;
        e.2 += p.speed;
        e.3 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(bin, (d, q, v, c))| {
            let n = c as f64;
            MfdBin {
                bin,
                density_lo: bin as f64 * bin_width,
                density_hi: (bin + 1) as f64 * bin_width,
                mean_density: d / n,
                mean_flow: q / n,
                mean_speed: v / n,
                count: c,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficRegime {
    FreeFlow,
    BoundFlow,
    Congestion,
}

/// Place on the fragile, robust, antifragile spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Fragile,
    Robust,
    Antifragile,
}

impl TrafficRegime {
    /// Free flow has room to absorb stress, bound flow holds capacity,
    /// congestion degrades further under stress.
    pub fn response(self) -> Response {
        match self {
            TrafficRegime::FreeFlow => Response::Antifragile,
            TrafficRegime::BoundFlow => Response::Robust,
            TrafficRegime::Congestion => Response::Fragile,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub traffic: TrafficRegime,
    pub response: Response,
}

impl RegimeLabel {
    fn of(traffic: TrafficRegime) -> Self {
        Self { traffic, response: traffic.response() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeThresholds {
    /// Free flow needs speed above this share of the free-flow speed.
    pub free_speed_ratio: f64,
    /// Bound flow is flow above this share of the maximum.
    pub bound_flow_ratio: f64,
    /// Free-flow speed; the fastest bin when unset.
    pub free_speed: Option<f64>,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self { free_speed_ratio: 0.8, bound_flow_ratio: 0.9, free_speed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeClassification {
    pub labels: Vec<RegimeLabel>,
    /// Index of the flow maximum.
    pub critical_bin: usize,
    pub critical_density: f64,
    /// The flow curve is not unimodal around the maximum.
    pub noisy: bool,
}

/// Labels each bin from its position relative to the flow maximum.
pub fn classify_regimes(bins: &[MfdBin], th: &RegimeThresholds) -> Result<RegimeClassification> {
    if bins.len() < 3 {
        return Err(Error::Config(format!("regime classification needs at least 3 bins, got {}", bins.len())));
    }
    let mut c = 0;
    for (i, b) in bins.iter().enumerate() {
        if b.mean_flow > bins[c].mean_flow {
            c = i;
        }
    }
    let q_max = bins[c].mean_flow;
    if q_max <= 0.0 {
        let labels = vec![RegimeLabel::of(TrafficRegime::Congestion); bins.len()];
        return Ok(RegimeClassification { labels, critical_bin: c, critical_density: bins[c].mean_density, noisy: true });
    }
    let slack = 1e-9 * q_max;
    let rising = bins[..=c].windows(2).all(|w| w[1].mean_flow >= w[0].mean_flow - slack);
    let falling = bins[c..].windows(2).all(|w| w[1].mean_flow <= w[0].mean_flow + slack);
    let v_f = th.free_speed.unwrap_or_else(|| bins.iter().map(|b| b.mean_speed).fold(0.0, f64::max));
    let labels = bins
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let regime = if b.mean_flow > th.bound_flow_ratio * q_max {
                TrafficRegime::BoundFlow
            } else if i < c {
                if b.mean_speed > th.free_speed_ratio * v_f {
                    TrafficRegime::FreeFlow
                } else {
                    TrafficRegime::BoundFlow
                }
            } else {
                TrafficRegime::Congestion
            };
            RegimeLabel::of(regime)
        })
        .collect();
    Ok(RegimeClassification { labels, critical_bin: c, critical_density: bins[c].mean_density, noisy: !(rising && falling) })
}

/// Second-order response shape at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convexity {
    Convex,
    Linear,
    Concave,
}

impl Convexity {
    pub fn response(self) -> Response {
        match self {
            Convexity::Convex => Response::Antifragile,
            Convexity::Linear => Response::Robust,
            Convexity::Concave => Response::Fragile,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityProbe {
    pub x: f64,
    /// `None` where x ± delta leaves the sampled range.
    pub h: Option<f64>,
    pub label: Option<Convexity>,
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let eps = 1e-12 * (xs[xs.len() - 1] - xs[0]).abs().max(1.0);
    if x < xs[0] - eps || x > xs[xs.len() - 1] + eps {
        return None;
    }
    let k = xs.partition_point(|&v| v <= x);
    if k == 0 {
        return Some(ys[0]);
    }
    if k == xs.len() {
        return Some(ys[xs.len() - 1]);
    }
    let (x0, x1) = (xs[k - 1], xs[k]);
    if (x - x0).abs() <= eps {
        return Some(ys[k - 1]);
    }
    Some(ys[k - 1] + (ys[k] - ys[k - 1]) * (x - x0) / (x1 - x0))
}

/// H(x) = [f(x+Δ) + f(x−Δ)]/2 − f(x) at every sample, with linear
/// interpolation between samples. |H| ≤ tol is linear; the default tol is
/// 1e-3 of the range of f.
pub fn convexity_heuristic(xs: &[f64], ys: &[f64], delta: f64, tol: Option<f64>) -> Result<Vec<ConvexityProbe>> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::Dimension(format!("{} abscissae for {} values", xs.len(), ys.len())));
    }
    if !(delta > 0.0) || xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Config("convexity probe needs a positive step and finite samples".into()));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("convexity probe needs strictly increasing abscissae".into()));
    }
    let (lo, hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    let tol = tol.unwrap_or(1e-3 * (hi - lo));
    Ok(xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let h = match (interp(xs, ys, x + delta), interp(xs, ys, x - delta)) {
                (Some(a), Some(b)) => Some(0.5 * (a + b) - y),
                _ => None,
            };
            let label = h.map(|h| {
                if h > tol {
                    Convexity::Convex
                } else if h < -tol {
                    Convexity::Concave
                } else {
                    Convexity::Linear
                }
            });
            ConvexityProbe { x, h, label }
        })
        .collect())
}

/// Metrics of one controller over a ladder of disruption levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCurve {
    pub controller: ControllerKind,
    pub levels: Vec<f64>,
    pub time_loss_s: Vec<f64>,
    pub waiting_s: Vec<f64>,
    pub avg_speed_mps: Vec<f64>,
}

impl ResponseCurve {
    /// Convexity of time loss over the level ladder, probed one level apart.
    pub fn time_loss_shape(&self) -> Result<Vec<ConvexityProbe>> {
        let step = self.levels.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        convexity_heuristic(&self.levels, &self.time_loss_s, step, None)
    }
}

/// Runs `kind` on `day` disrupted by every level (demand scaling, whole day).
pub fn response_curve(
    net: &RoadNetwork,
    kind: ControllerKind,
    history: &FlowScenario,
    settings: &ControllerSettings,
    day: &FlowScenario,
    levels: &[f64],
    cfg: &ClosedLoopConfig,
) -> Result<ResponseCurve> {
    if levels.len() < 3 {
        return Err(Error::Config("a response curve needs at least 3 disruption levels".into()));
    }
    let mut curve = ResponseCurve {
        controller: kind,
        levels: levels.to_vec(),
        time_loss_s: Vec::new(),
        waiting_s: Vec::new(),
        avg_speed_mps: Vec::new(),
    };
    for &level in levels {
        let scenario = apply_disruption(day, &DisruptionSpec::demand(level))?;
        let mut controller = build_controller(kind, net, history, settings)?;
        let r = run_closed_loop(net, controller.as_mut(), &scenario, cfg)?;
        curve.time_loss_s.push(r.metrics.time_loss_s);
        curve.waiting_s.push(r.metrics.waiting_s);
        curve.avg_speed_mps.push(r.metrics.avg_speed_mps);
    }
    Ok(curve)
}

/// CSV `bin,density_lo,density_hi,mean_density,mean_flow,mean_speed,count,regime,response`.
pub fn write_mfd_csv<W: Write>(bins: &[MfdBin], labels: Option<&RegimeClassification>, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Run(format!("writing MFD CSV: {e}"));
    wr.write_record(["bin", "density_lo", "density_hi", "mean_density", "mean_flow", "mean_speed", "count", "regime", "response"])
        .map_err(err)?;
    for (i, b) in bins.iter().enumerate() {
        let (regime, response) = labels
            .and_then(|l| l.labels.get(i))
            .map(|l| (snake(&l.traffic), snake(&l.response)))
            .unwrap_or_default();
        wr.write_record([
            b.bin.to_string(),
            format!("{:.6}", b.density_lo),
            format!("{:.6}", b.density_hi),
            format!("{:.6}", b.mean_density),
            format!("{:.6}", b.mean_flow),
            format!("{:.6}", b.mean_speed),
            b.count.to_string(),
            regime,
            response,
        ])
        .map_err(err)?;
    }
    wr.flush().map_err(|e| Error::io("<mfd>", e))
}

fn snake<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}
