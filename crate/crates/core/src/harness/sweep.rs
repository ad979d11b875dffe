use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Resolved;
use crate::controllers::{build_controller, ControllerKind, DecisionInput};
use crate::error::{Error, Result};
use crate::mesosim::{run_closed_loop, ClosedLoopConfig, RoadNetwork};
use crate::mfd::{points_from_production, MfdPoint};
use crate::scenarios::{apply_disruption, FlowScenario};

/// One cell of the cross product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub controller: ControllerKind,
    /// Disruption level in thousandths, so keys order and compare exactly.
    pub level_milli: u32,
    pub seed: u64,
    pub day: u32,
}

impl CellKey {
    pub fn new(controller: ControllerKind, level: f64, seed: u64, day: u32) -> Self {
        Self { controller, level_milli: (level * 1000.0).round() as u32, seed, day }
    }

    pub fn level(&self) -> f64 {
        self.level_milli as f64 / 1000.0
    }

    fn file_name(&self) -> String {
        format!("{}_{}_{}_{}.json", self.controller, self.level_milli, self.seed, self.day)
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} level {} seed {} day {}", self.controller, self.level(), self.seed, self.day)
    }
}

/// Deterministic outputs of a successful run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub time_loss_s: f64,
    pub waiting_s: f64,
    pub avg_speed_mps: f64,
    pub trips: f64,
    pub unfinished_veh: f64,
    pub decisions: usize,
    pub failures: usize,
    pub stale: usize,
    pub mfd: Vec<MfdPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Ok(CellMetrics),
    Failed { error: String },
}

/// Wall-clock measurements; they vary between runs and are kept apart from
/// the deterministic outcome.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub region_latency_median_s: Option<f64>,
    pub region_latency_mean_s: Option<f64>,
    pub single_cross_latency_median_s: Option<f64>,
    pub single_cross_latency_mean_s: Option<f64>,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub config_hash: String,
    pub key: CellKey,
    pub outcome: CellOutcome,
    pub timing: CellTiming,
}

impl CellRecord {
    pub fn metrics(&self) -> Option<&CellMetrics> {
        match &self.outcome {
            CellOutcome::Ok(m) => Some(m),
            CellOutcome::Failed { .. } => None,
        }
    }
}

/// Results keyed by cell, in key order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResults {
    pub config_hash: String,
    pub cells: BTreeMap<CellKey, CellRecord>,
}

impl SweepResults {
    pub fn failed(&self) -> impl Iterator<Item = &CellRecord> {
        self.cells.values().filter(|c| c.metrics().is_none())
    }

    /// Reads every cell record in `dir/cells`.
    pub fn load(dir: &Path) -> Result<Self> {
        let cells_dir = dir.join("cells");
        let mut out = SweepResults::default();
        let entries = std::fs::read_dir(&cells_dir).map_err(|e| Error::io(&cells_dir, e))?;
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for p in paths.into_iter().filter(|p| p.extension().is_some_and(|x| x == "json")) {
            let rec = read_record(&p)?;
            if out.config_hash.is_empty() {
                out.config_hash = rec.config_hash.clone();
            } else if out.config_hash != rec.config_hash {
                return Err(Error::Config(format!("{} belongs to a different configuration", p.display())));
            }
            out.cells.insert(rec.key, rec);
        }
        Ok(out)
    }
}

fn read_record(p: &Path) -> Result<CellRecord> {
    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
}

fn write_record(dir: &Path, rec: &CellRecord) -> Result<()> {
    let path = dir.join(rec.key.file_name());
    let tmp = path.with_extension("json.tmp");
    let text = serde_json::to_string_pretty(rec).map_err(|e| Error::Run(e.to_string()))?;
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Where cell records are persisted; nothing is written when unset.
    pub store: Option<PathBuf>,
    /// Stop after this many newly computed cells (for interrupt tests).
    pub limit: Option<usize>,
}

/// Every (controller, level, seed, day) cell of the configuration.
pub fn sweep_keys(r: &Resolved) -> Vec<CellKey> {
    let mut keys = BTreeSet::new();
    for &c in &r.config.controllers {
        for &l in &r.scenario.levels {
            for (s, d) in r.seed_days() {
                keys.insert(CellKey::new(c, l, s, d));
            }
        }
    }
    keys.into_iter().collect()
}

/// Runs the cross product on a bounded pool. Records already in the store
/// with the same config hash are reused; a failing cell is recorded and the
/// sweep continues.
pub fn run_sweep(r: &Resolved, opts: &SweepOptions) -> Result<SweepResults> {
    let cells_dir = opts.store.as_ref().map(|d| d.join("cells"));
    let mut done = BTreeMap::new();
    if let Some(dir) = &cells_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for key in sweep_keys(r) {
            let p = dir.join(key.file_name());
            if p.is_file() {
                match read_record(&p) {
                    Ok(rec) if rec.config_hash == r.hash && rec.key == key => {
                        done.insert(key, rec);
                    }
                    _ => log::warn!("ignoring stale record {}", p.display()),
                }
            }
        }
    }
    let mut todo: Vec<CellKey> = sweep_keys(r).into_iter().filter(|k| !done.contains_key(k)).collect();
    if let Some(n) = opts.limit {
        todo.truncate(n);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(r.config.workers)
        .build()
        .map_err(|e| Error::Run(format!("worker pool: {e}")))?;
    let fresh: Vec<Result<CellRecord>> = pool.install(|| {
        todo.par_iter()
            .map(|&key| {
                let rec = run_cell(r, key);
                if let Some(dir) = &cells_dir {
                    write_record(dir, &rec)?;
                }
                Ok(rec)
            })
            .collect()
    });
    for rec in fresh {
        let rec = rec?;
        done.insert(rec.key, rec);
    }
    Ok(SweepResults { config_hash: r.hash.clone(), cells: done })
}

/// Runs one cell, turning any error into a failed record.
pub fn run_cell(r: &Resolved, key: CellKey) -> CellRecord {
    let start = Instant::now();
    let (outcome, mut timing) = match run_cell_inner(r, key) {
        Ok((m, t)) => (CellOutcome::Ok(m), t),
        Err(e) => {
            log::warn!("cell {key} failed: {e}");
            (CellOutcome::Failed { error: e.to_string() }, CellTiming::default())
        }
    };
    timing.wall_s = start.elapsed().as_secs_f64();
    CellRecord { config_hash: r.hash.clone(), key, outcome, timing }
}

fn run_cell_inner(r: &Resolved, key: CellKey) -> Result<(CellMetrics, CellTiming)> {
    let day = r
        .days
        .get(&key.day)
        .ok_or_else(|| Error::Config(format!("no demand for day {}", key.day)))?;
    let scenario = apply_disruption(day, &r.scenario.disruption.at(key.level()))?;
    let mut cfg: ClosedLoopConfig = r.config.closed_loop.clone();
    cfg.sim.seed = key.seed;
    let mut controller = build_controller(key.controller, &r.net, &r.history, &r.config.controller)?;
    let res = run_closed_loop(&r.net, controller.as_mut(), &scenario, &cfg)?;
    let mfd = points_from_production(&res.production, r.net.total_lane_km())?;
    let single = single_cross_latency(r, key.controller, &res.flow_samples, cfg.sample_s)?;
    let m = &res.metrics;
    let metrics = CellMetrics {
        time_loss_s: m.time_loss_s,
        waiting_s: m.waiting_s,
        avg_speed_mps: m.avg_speed_mps,
        trips: m.trips,
        unfinished_veh: m.unfinished_veh,
        decisions: res.latency.samples_s.len(),
        failures: res.failures,
        stale: res.stale,
        mfd,
    };
    let timing = CellTiming {
        region_latency_median_s: res.latency.median(),
        region_latency_mean_s: res.latency.mean(),
        single_cross_latency_median_s: single.0,
        single_cross_latency_mean_s: single.1,
        wall_s: 0.0,
    };
    Ok((metrics, timing))
}

/// Demand of `sub` (a cut-out of `net`) derived from the full-network
/// history: every sample is pushed through the turning ratios and read off
/// at the cut-out's entry links.
pub fn restrict_history(net: &RoadNetwork, sub: &RoadNetwork, history: &FlowScenario) -> Result<FlowScenario> {
    let n = history.samples();
    let ids: Vec<&str> = sub.entries.iter().map(|&l| sub.links[l].id.as_str()).collect();
    let mut demand: BTreeMap<String, Vec<f64>> = ids.iter().map(|id| (id.to_string(), vec![0.0; n])).collect();
    for k in 0..n {
        let t = k as f64 * history.sample_s;
        let entry: Vec<f64> = net.entries.iter().map(|&l| history.demand_at(&net.links[l].id, t)).collect();
        let flows = net.propagate_flows(&entry)?;
        for id in &ids {
            let a = net
                .link_id(id)
                .and_then(|l| net.links[l].approach)
                .ok_or_else(|| Error::Config(format!("cut-out entry {id} is not an approach of the network")))?;
            demand.get_mut(*id).expect("inserted above")[k] = flows[a];
        }
    }
    FlowScenario::new(history.sample_s, history.day_s, history.seed, demand)
}

/// Replays the region's measured flows through a controller for one
/// intersection and times every decision.
fn single_cross_latency(
    r: &Resolved,
    kind: ControllerKind,
    flow_samples: &[Vec<f64>],
    sample_s: f64,
) -> Result<(Option<f64>, Option<f64>)> {
    let sub = r.net.restrict_to(&r.single_cross())?;
    let history = restrict_history(&r.net, &sub, &r.history)?;
    let map: Vec<usize> = sub
        .approaches
        .iter()
        .map(|a| {
            let id = &sub.links[a.link].id;
            r.net
                .link_id(id)
                .and_then(|l| r.net.links[l].approach)
                .ok_or_else(|| Error::Config(format!("approach {id} missing from the region")))
        })
        .collect::<Result<_>>()?;
    let mut controller = build_controller(kind, &sub, &history, &r.config.controller)?;
    let mut lat = crate::mesosim::LatencyStats::default();
    for (i, full) in flow_samples.iter().enumerate() {
        let flows: Vec<f64> = map.iter().map(|&a| full[a]).collect();
        let t = i as f64 * sample_s;
        let start = Instant::now();
        let _ = controller.decide(&DecisionInput { t_s: t, time_of_day_s: t, flows: &flows });
        lat.samples_s.push(start.elapsed().as_secs_f64());
    }
    Ok((lat.median(), lat.mean()))
}
