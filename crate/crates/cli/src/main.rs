use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sigsync::controllers::{build_controller, ControllerKind};
use sigsync::harness::{
    emit_reports, rank_controllers, run_sweep, ExperimentConfig, RankingTable, ReportContext, SweepOptions, SweepResults,
};
use sigsync::mesosim::{run_closed_loop, write_metrics_csv, RoadNetwork};
use sigsync::mfd::{classify_regimes, compute_mfd, points_from_production, read_detector_csv, write_mfd_csv, MfdPoint, RegimeThresholds};
use sigsync::scenarios::apply_disruption;
use sigsync::{Error, Result};

const OUTPUT_ROOT_ENV: &str = "SIGSYNC_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "sigsync", version, about = "Oscillator-based signal control experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one controller on one disrupted day.
    Simulate(SimulateArgs),
    /// Run the controller x level x seed grid, persisting every cell.
    Sweep(SweepArgs),
    /// Bin an MFD and label traffic regimes.
    Mfd(MfdArgs),
    /// Significance-adjusted ranking of persisted sweep results.
    Rank(ResultsArgs),
    /// Write the report bundle for persisted sweep results.
    Report(ReportArgs),
    /// Check a config and the files it references, or a network file.
    Validate(ValidateArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment config (TOML); built-in defaults when absent.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output folder; overrides the config and the output root variable.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated controllers.
    #[arg(long, value_delimiter = ',')]
    controllers: Option<Vec<ControllerKind>>,
    /// Comma-separated disruption levels.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Network file replacing the configured one.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Ok(root) = std::env::var(OUTPUT_ROOT_ENV) {
            cfg.output_dir = PathBuf::from(root);
        }
        if let Some(o) = &self.output {
            cfg.output_dir = o.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(c) = &self.controllers {
            cfg.controllers = c.clone();
        }
        let overrides_scenario = self.levels.is_some() || self.seeds.is_some() || self.network.is_some();
        if overrides_scenario {
            // flags act on the effective scenario, manifest included
            cfg.scenario = cfg.effective_scenario()?;
            cfg.manifest = None;
        }
        if let Some(l) = &self.levels {
            cfg.scenario.levels = l.clone();
        }
        if let Some(s) = &self.seeds {
            cfg.scenario.seeds = s.clone();
        }
        if let Some(n) = &self.network {
            cfg.scenario.network = Some(n.clone());
        }
        Ok(cfg)
    }

    /// Prints the config when asked; true means the caller should stop.
    fn maybe_print(&self, cfg: &ExperimentConfig) -> Result<bool> {
        if self.print_config {
            print!("{}", cfg.to_toml_string()?);
        }
        Ok(self.print_config)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, default_value = "ANTIFRAGILE")]
    controller: ControllerKind,
    #[arg(long, default_value_t = 1.0)]
    level: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Also rank and write the report bundle.
    #[arg(long)]
    report: bool,
}

#[derive(Args)]
struct MfdArgs {
    /// Detector CSV `t,detector_id,flow_vph,density_vpkm,speed_kmh`.
    #[arg(long, conflicts_with = "results")]
    detectors: Option<PathBuf>,
    /// Sweep output folder; pools the simulated points of every cell.
    #[arg(long)]
    results: Option<PathBuf>,
    /// Density bin width (veh/km).
    #[arg(long, default_value_t = 2.0)]
    bin_width: f64,
    /// Output CSV; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ResultsArgs {
    /// Sweep output folder.
    #[arg(long, short)]
    results: PathBuf,
    /// Significance level; the sweep's when absent.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    results: ResultsArgs,
    /// Bundle folder; `<results>/report` when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Mfd(a) => mfd(a),
        Command::Rank(a) => rank(a).map(|_| ()),
        Command::Report(a) => report(a),
        Command::Validate(a) => validate(a),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = a.cfg.load()?;
    cfg.controllers = vec![a.controller];
    cfg.scenario = cfg.effective_scenario()?;
    cfg.manifest = None;
    cfg.scenario.levels = vec![a.level];
    if cfg.scenario.flow_csv.is_none() {
        cfg.scenario.seeds = vec![a.seed];
    }
    if a.cfg.maybe_print(&cfg)? {
        return Ok(());
    }
    let r = cfg.resolve()?;
    let (seed, day) = r.seed_days().into_iter().find(|&(s, _)| s == a.seed).unwrap_or((a.seed, *r.days.keys().next().unwrap()));
    let scenario = apply_disruption(&r.days[&day], &r.scenario.disruption.at(a.level))?;
    let mut loop_cfg = cfg.closed_loop.clone();
    loop_cfg.sim.seed = seed;
    let mut controller = build_controller(a.controller, &r.net, &r.history, &cfg.controller)?;
    let res = run_closed_loop(&r.net, controller.as_mut(), &scenario, &loop_cfg)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let stem = format!("{}_{}_{}", a.controller, (a.level * 1000.0).round() as u32, seed);
    let path = cfg.output_dir.join(format!("{stem}_metrics.csv"));
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_metrics_csv(&res.metrics, f)?;
    let points = points_from_production(&res.production, r.net.total_lane_km())?;
    let mfd_path = cfg.output_dir.join(format!("{stem}_mfd.csv"));
    write_points(&points, &mfd_path)?;
    let m = &res.metrics;
    println!(
        "{} level {} seed {}: time loss {:.3} s, waiting {:.3} s, speed {:.3} m/s, trips {:.1}, unfinished {:.1}, decisions {}, failures {}, stale {}, median latency {:.6} s",
        a.controller,
        a.level,
        seed,
        m.time_loss_s,
        m.waiting_s,
        m.avg_speed_mps,
        m.trips,
        m.unfinished_veh,
        res.latency.samples_s.len(),
        res.failures,
        res.stale,
        res.latency.median().unwrap_or(0.0)
    );
    println!("wrote {} and {}", path.display(), mfd_path.display());
    Ok(())
}

fn write_points(points: &[MfdPoint], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    let err = |e: csv::Error| Error::Run(format!("writing {}: {e}", path.display()));
    w.write_record(["timestamp", "density_vpkm", "flow_vph", "speed_kmh"]).map_err(err)?;
    for p in points {
        w.write_record([format!("{:.1}", p.timestamp), format!("{:.6}", p.density), format!("{:.6}", p.flow), format!("{:.6}", p.speed)])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn context_path(dir: &Path) -> PathBuf {
    dir.join("context.json")
}

fn sweep(a: SweepArgs) -> Result<()> {
    let cfg = a.cfg.load()?;
    if a.cfg.maybe_print(&cfg)? {
        return Ok(());
    }
    let r = cfg.resolve()?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let ctx = ReportContext::from_resolved(&r);
    let cpath = context_path(out);
    if let Ok(text) = std::fs::read_to_string(&cpath) {
        let old: ReportContext = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", cpath.display())))?;
        if old.config_hash != ctx.config_hash {
            return Err(Error::Config(format!(
                "{} holds results of a different configuration; choose another output folder",
                out.display()
            )));
        }
    }
    let text = serde_json::to_string_pretty(&ctx).map_err(|e| Error::Run(e.to_string()))?;
    std::fs::write(&cpath, text + "\n").map_err(|e| Error::io(&cpath, e))?;
    let res = run_sweep(&r, &SweepOptions { store: Some(out.clone()), limit: None })?;
    let failed = res.failed().count();
    println!("{} cells, {} failed, results in {}", res.cells.len(), failed, out.join("cells").display());
    if a.report {
        let ranking = rank_controllers(&res, &ctx.controllers, ctx.alpha)?;
        emit_reports(&res, &ranking, &ctx, &out.join("report"))?;
        println!("report in {}", out.join("report").display());
    }
    if failed > 0 {
        return Err(Error::Run(format!("{failed} cells failed; see failed records in {}", out.join("cells").display())));
    }
    Ok(())
}

fn load_results(a: &ResultsArgs) -> Result<(SweepResults, ReportContext)> {
    let cpath = context_path(&a.results);
    let text = std::fs::read_to_string(&cpath).map_err(|e| Error::io(&cpath, e))?;
    let mut ctx: ReportContext = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", cpath.display())))?;
    if let Some(alpha) = a.alpha {
        ctx.alpha = alpha;
    }
    let res = SweepResults::load(&a.results)?;
    if !res.cells.is_empty() && res.config_hash != ctx.config_hash {
        return Err(Error::Config("cell records and context.json disagree on the config hash".into()));
    }
    Ok((res, ctx))
}

fn rank(a: ResultsArgs) -> Result<RankingTable> {
    let (res, ctx) = load_results(&a)?;
    let ranking = rank_controllers(&res, &ctx.controllers, ctx.alpha)?;
    let path = a.results.join("ranking.json");
    let text = serde_json::to_string_pretty(&ranking).map_err(|e| Error::Run(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    for cell in &ranking.cells {
        let order: Vec<String> =
            cell.entries.iter().map(|e| format!("{}={} ({:.3})", e.controller, e.rank, e.mean)).collect();
        let flag = if cell.complete { "" } else { " [incomplete]" };
        println!("{} @ {:.1}: {}{flag}", cell.metric.as_str(), cell.level(), order.join(", "));
    }
    Ok(ranking)
}

fn report(a: ReportArgs) -> Result<()> {
    let (res, ctx) = load_results(&a.results)?;
    let ranking = rank_controllers(&res, &ctx.controllers, ctx.alpha)?;
    let out = a.output.unwrap_or_else(|| a.results.results.join("report"));
    emit_reports(&res, &ranking, &ctx, &out)?;
    println!("report in {}", out.display());
    Ok(())
}

fn mfd(a: MfdArgs) -> Result<()> {
    let points = match (&a.detectors, &a.results) {
        (Some(p), None) => {
            let f = std::fs::File::open(p).map_err(|e| Error::io(p, e))?;
            read_detector_csv(std::io::BufReader::new(f))?
        }
        (None, Some(dir)) => {
            let res = SweepResults::load(dir)?;
            res.cells.values().filter_map(|c| c.metrics()).flat_map(|m| m.mfd.iter().copied()).collect()
        }
        _ => return Err(Error::Config("give either --detectors or --results".into())),
    };
    let bins = compute_mfd(&points, a.bin_width)?;
    let labels = if bins.len() >= 3 { Some(classify_regimes(&bins, &RegimeThresholds::default())?) } else { None };
    if let Some(l) = &labels {
        eprintln!(
            "{} points, {} bins, critical density {:.3} veh/km{}",
            points.len(),
            bins.len(),
            l.critical_density,
            if l.noisy { " (noisy curve)" } else { "" }
        );
    }
    match &a.output {
        Some(p) => {
            let f = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
            write_mfd_csv(&bins, labels.as_ref(), f)
        }
        None => write_mfd_csv(&bins, labels.as_ref(), std::io::stdout().lock()),
    }
}

fn validate(a: ValidateArgs) -> Result<()> {
    let cfg = a.cfg.load()?;
    if a.cfg.maybe_print(&cfg)? {
        return Ok(());
    }
    let r = cfg.resolve()?;
    let net: &RoadNetwork = &r.net;
    println!(
        "ok: network {} ({} intersections, {} signal groups, {} links), {} controllers x {} levels x {} seed-days, config hash {}",
        net.name,
        net.intersections.len(),
        net.intersections.iter().map(|x| x.phases.len()).sum::<usize>(),
        net.links.len(),
        cfg.controllers.len(),
        r.scenario.levels.len(),
        r.seed_days().len(),
        r.hash
    );
    Ok(())
}
