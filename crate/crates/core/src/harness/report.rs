use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Resolved;
use super::ranking::{Metric, RankingTable};
use super::sweep::SweepResults;
use crate::controllers::ControllerKind;
use crate::error::{Error, Result};
use crate::mfd::{classify_regimes, compute_mfd, convexity_heuristic, RegimeThresholds};

/// What the bundle describes, independent of where results came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportContext {
    pub config_hash: String,
    pub controllers: Vec<ControllerKind>,
    pub levels: Vec<f64>,
    pub seeds: Vec<u64>,
    pub alpha: f64,
    pub mfd_bin_width: f64,
    pub single_cross: String,
    pub network: String,
}

impl ReportContext {
    pub fn from_resolved(r: &Resolved) -> Self {
        Self {
            config_hash: r.hash.clone(),
            controllers: r.config.controllers.clone(),
            levels: r.scenario.levels.clone(),
            seeds: r.scenario.seeds.clone(),
            alpha: r.config.alpha,
            mfd_bin_width: r.config.mfd_bin_width,
            single_cross: r.single_cross(),
            network: r.net.name.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    #[serde(flatten)]
    context: &'a ReportContext,
    crate_version: &'static str,
    cells: usize,
    failed_cells: usize,
    files: Vec<&'static str>,
    /// Wall-clock latencies differ between reruns; every other file is
    /// reproducible from the config hash.
    nondeterministic: Vec<&'static str>,
}

const FILES: [&str; 9] = [
    "metrics_table.csv",
    "metrics_long.csv",
    "runtime_table.csv",
    "ranking.csv",
    "ranking_pairs.csv",
    "mfd_points.csv",
    "mfd_bins.csv",
    "response_shape.csv",
    "failed_cells.csv",
];

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn opt6(v: Option<f64>) -> String {
    v.map_or_else(String::new, f6)
}

struct Csv {
    path: PathBuf,
    w: csv::Writer<std::fs::File>,
}

impl Csv {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut c = Self { path, w: csv::Writer::from_writer(file) };
        c.row(header.iter().map(|s| s.to_string()))?;
        Ok(c)
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, r: I) -> Result<()> {
        let path = &self.path;
        self.w
            .write_record(r)
            .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e)))
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Writes the report bundle into `outdir`.
pub fn emit_reports(results: &SweepResults, ranking: &RankingTable, ctx: &ReportContext, outdir: &Path) -> Result<()> {
    std::fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let level_s: Vec<String> = ctx.levels.iter().map(|l| format!("{l:.3}")).collect();
    let milli = |l: f64| (l * 1000.0).round() as u32;

    // per metric, controller and level, the successful runs in key order
    let mut values: BTreeMap<(Metric, ControllerKind, u32), Vec<f64>> = BTreeMap::new();
    for (k, rec) in &results.cells {
        if let Some(m) = rec.metrics() {
            for metric in Metric::ALL {
                values.entry((metric, k.controller, k.level_milli)).or_default().push(metric.of(m));
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let mut header = vec!["metric", "controller"];
    header.extend(level_s.iter().map(String::as_str));
    let mut table = Csv::create(outdir, "metrics_table.csv", &header)?;
    for metric in Metric::ALL {
        for &c in &ctx.controllers {
            let mut row = vec![metric.as_str().to_string(), c.to_string()];
            for &l in &ctx.levels {
                row.push(values.get(&(metric, c, milli(l))).map_or_else(String::new, |v| f6(mean(v))));
            }
            table.row(row)?;
        }
    }
    table.finish()?;

    let mut long = Csv::create(outdir, "metrics_long.csv", &["metric", "controller", "level", "seed", "day", "value"])?;
    for metric in Metric::ALL {
        for (k, rec) in &results.cells {
            if let Some(m) = rec.metrics() {
                long.row([
                    metric.as_str().to_string(),
                    k.controller.to_string(),
                    format!("{:.3}", k.level()),
                    k.seed.to_string(),
                    k.day.to_string(),
                    f6(metric.of(m)),
                ])?;
            }
        }
    }
    long.finish()?;

    let mut rt = Csv::create(
        outdir,
        "runtime_table.csv",
        &["controller", "single_cross_median_s", "region_median_s", "single_cross_mean_s", "region_mean_s", "decisions"],
    )?;
    for &c in &ctx.controllers {
        let recs: Vec<_> = results.cells.iter().filter(|(k, r)| k.controller == c && r.metrics().is_some()).collect();
        let med = |f: &dyn Fn(&super::sweep::CellTiming) -> Option<f64>| {
            let mut v: Vec<f64> = recs.iter().filter_map(|(_, r)| f(&r.timing)).collect();
            if v.is_empty() {
                return None;
            }
            v.sort_by(f64::total_cmp);
            let m = v.len() / 2;
            Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
        };
        let decisions: usize = recs.iter().filter_map(|(_, r)| r.metrics()).map(|m| m.decisions).sum();
        rt.row([
            c.to_string(),
            opt6(med(&|t| t.single_cross_latency_median_s)),
            opt6(med(&|t| t.region_latency_median_s)),
            opt6(med(&|t| t.single_cross_latency_mean_s)),
            opt6(med(&|t| t.region_latency_mean_s)),
            decisions.to_string(),
        ])?;
    }
    rt.finish()?;

    let mut rk = Csv::create(
        outdir,
        "ranking.csv",
        &["metric", "level", "controller", "mean", "std", "n", "rank", "normalized_rank", "anova_f", "anova_p", "complete"],
    )?;
    let mut pairs = Csv::create(outdir, "ranking_pairs.csv", &["metric", "level", "a", "b", "t", "p"])?;
    for cell in &ranking.cells {
        for e in &cell.entries {
            rk.row([
                cell.metric.as_str().to_string(),
                format!("{:.3}", cell.level()),
                e.controller.to_string(),
                f6(e.mean),
                f6(e.std),
                e.n.to_string(),
                e.rank.to_string(),
                f6(e.normalized),
                opt6(cell.anova.map(|a| a.f)),
                opt6(cell.anova.map(|a| a.p)),
                cell.complete.to_string(),
            ])?;
        }
        for t in &cell.pairs {
            pairs.row([
                cell.metric.as_str().to_string(),
                format!("{:.3}", cell.level()),
                t.a.to_string(),
                t.b.to_string(),
                f6(t.t),
                format!("{:.6e}", t.p),
            ])?;
        }
    }
    rk.finish()?;
    pairs.finish()?;

    let mut pts = Csv::create(
        outdir,
        "mfd_points.csv",
        &["controller", "level", "seed", "day", "timestamp", "density_vpkm", "flow_vph", "speed_kmh"],
    )?;
    let mut bins_csv = Csv::create(
        outdir,
        "mfd_bins.csv",
        &["controller", "level", "bin", "mean_density", "mean_flow", "mean_speed", "count", "regime", "response", "noisy"],
    )?;
    let mut pooled: BTreeMap<(ControllerKind, u32), Vec<crate::mfd::MfdPoint>> = BTreeMap::new();
    for (k, rec) in &results.cells {
        if let Some(m) = rec.metrics() {
            for p in &m.mfd {
                pts.row([
                    k.controller.to_string(),
                    format!("{:.3}", k.level()),
                    k.seed.to_string(),
                    k.day.to_string(),
                    format!("{:.1}", p.timestamp),
                    f6(p.density),
                    f6(p.flow),
                    f6(p.speed),
                ])?;
            }
            pooled.entry((k.controller, k.level_milli)).or_default().extend(m.mfd.iter().copied());
        }
    }
    for ((c, lm), points) in &pooled {
        if points.is_empty() {
            continue;
        }
        let bins = compute_mfd(points, ctx.mfd_bin_width)?;
        let labels = (bins.len() >= 3).then(|| classify_regimes(&bins, &RegimeThresholds::default())).transpose()?;
        for (i, b) in bins.iter().enumerate() {
            let (regime, response, noisy) = match &labels {
                Some(l) => (
                    json_name(&l.labels[i].traffic),
                    json_name(&l.labels[i].response),
                    l.noisy.to_string(),
                ),
                None => Default::default(),
            };
            bins_csv.row([
                c.to_string(),
                format!("{:.3}", *lm as f64 / 1000.0),
                b.bin.to_string(),
                f6(b.mean_density),
                f6(b.mean_flow),
                f6(b.mean_speed),
                b.count.to_string(),
                regime,
                response,
                noisy,
            ])?;
        }
    }
    pts.finish()?;
    bins_csv.finish()?;

    let mut shape = Csv::create(outdir, "response_shape.csv", &["controller", "metric", "level", "mean", "h", "shape", "response"])?;
    let step = ctx.levels.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    for &c in &ctx.controllers {
        for metric in Metric::ALL {
            let xs: Vec<f64> = ctx.levels.iter().copied().filter(|&l| values.contains_key(&(metric, c, milli(l)))).collect();
            let ys: Vec<f64> = xs.iter().map(|&l| mean(&values[&(metric, c, milli(l))])).collect();
            if xs.len() < 3 || !step.is_finite() {
                continue;
            }
            for p in convexity_heuristic(&xs, &ys, step, None)? {
                shape.row([
                    c.to_string(),
                    metric.as_str().to_string(),
                    format!("{:.3}", p.x),
                    f6(ys[xs.iter().position(|&x| x == p.x).unwrap_or(0)]),
                    opt6(p.h),
                    p.label.map(|l| json_name(&l)).unwrap_or_default(),
                    p.label.map(|l| json_name(&l.response())).unwrap_or_default(),
                ])?;
            }
        }
    }
    shape.finish()?;

    let mut failed = Csv::create(outdir, "failed_cells.csv", &["controller", "level", "seed", "day", "error"])?;
    for rec in results.failed() {
        let error = match &rec.outcome {
            super::sweep::CellOutcome::Failed { error } => error.clone(),
            _ => String::new(),
        };
        failed.row([
            rec.key.controller.to_string(),
            format!("{:.3}", rec.key.level()),
            rec.key.seed.to_string(),
            rec.key.day.to_string(),
            error,
        ])?;
    }
    failed.finish()?;

    let manifest = Manifest {
        context: ctx,
        crate_version: env!("CARGO_PKG_VERSION"),
        cells: results.cells.len(),
        failed_cells: results.failed().count(),
        files: FILES.to_vec(),
        nondeterministic: vec!["runtime_table.csv"],
    };
    let path = outdir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Run(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

fn json_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}
