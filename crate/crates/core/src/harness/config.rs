use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controllers::{ControllerKind, ControllerSettings};
use crate::error::{Error, Result};
use crate::mesosim::{grid_network, ClosedLoopConfig, GridSpec, RoadNetwork};
use crate::scenarios::{
    grid_demand, ingest_flow_csv, synth_daily_profile, DemandPattern, DisruptionMode, DisruptionSpec, FlowScenario, DAY_S,
};

/// Disruption shape shared by every level of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisruptionTemplate {
    pub mode: DisruptionMode,
    pub window: Option<(f64, f64)>,
    pub approaches: Vec<String>,
    pub links: Vec<String>,
}

impl Default for DisruptionTemplate {
    fn default() -> Self {
        Self { mode: DisruptionMode::DemandScale, window: None, approaches: Vec::new(), links: Vec::new() }
    }
}

impl DisruptionTemplate {
    pub fn at(&self, level: f64) -> DisruptionSpec {
        DisruptionSpec {
            level,
            mode: self.mode,
            window: self.window,
            approaches: self.approaches.clone(),
            links: self.links.clone(),
        }
    }
}

/// Scenario manifest: which network, which demand, which disruptions and
/// which seeds. Relative paths are resolved against the manifest's folder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioManifest {
    /// Network file; the built-in 8-cross grid when absent.
    pub network: Option<PathBuf>,
    /// Measured days in the flow CSV schema; synthetic days when absent.
    pub flow_csv: Option<PathBuf>,
    pub demand: DemandPattern,
    /// Seed of the averaged profile the static plans are designed from.
    pub history_seed: u64,
    pub levels: Vec<f64>,
    pub disruption: DisruptionTemplate,
    pub seeds: Vec<u64>,
}

impl Default for ScenarioManifest {
    fn default() -> Self {
        Self {
            network: None,
            flow_csv: None,
            demand: DemandPattern::default(),
            history_seed: 0,
            levels: vec![1.0, 1.1, 1.2, 1.3, 1.4, 1.5],
            disruption: DisruptionTemplate::default(),
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl ScenarioManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Self =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.network = m.network.map(|p| rebase(base, p));
        m.flow_csv = m.flow_csv.map(|p| rebase(base, p));
        Ok(m)
    }
}

fn rebase(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Everything a sweep needs. The scenario part lives in `scenario` or, when
/// `manifest` is set, in that file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifest: Option<PathBuf>,
    pub scenario: ScenarioManifest,
    pub controllers: Vec<ControllerKind>,
    pub controller: ControllerSettings,
    pub closed_loop: ClosedLoopConfig,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Significance level of the ranking tests.
    pub alpha: f64,
    /// Density bin width (veh/km) of the MFD outputs.
    pub mfd_bin_width: f64,
    /// Intersection whose single-cross decision latency is reported.
    pub single_cross: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            scenario: ScenarioManifest::default(),
            controllers: ControllerKind::ALL.to_vec(),
            controller: ControllerSettings::default(),
            closed_loop: ClosedLoopConfig::default(),
            output_dir: PathBuf::from("out"),
            workers: 0,
            alpha: 0.05,
            mfd_bin_width: 2.0,
            single_cross: None,
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file; relative paths in it are taken from its folder.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.manifest = cfg.manifest.map(|p| rebase(base, p));
        cfg.scenario.network = cfg.scenario.network.map(|p| rebase(base, p));
        cfg.scenario.flow_csv = cfg.scenario.flow_csv.map(|p| rebase(base, p));
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("config does not serialize: {e}")))
    }

    /// Scenario section after applying the manifest, if any.
    pub fn effective_scenario(&self) -> Result<ScenarioManifest> {
        match &self.manifest {
            Some(p) => ScenarioManifest::load(p),
            None => Ok(self.scenario.clone()),
        }
    }

    /// Checks values and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        let sc = self.effective_scenario()?;
        for p in sc.network.iter().chain(&sc.flow_csv) {
            if !p.is_file() {
                return Err(Error::Config(format!("referenced file {} does not exist", p.display())));
            }
        }
        if self.controllers.is_empty() {
            return Err(Error::Config("no controllers selected".into()));
        }
        let mut seen = self.controllers.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.controllers.len() {
            return Err(Error::Config("a controller is listed twice".into()));
        }
        if sc.levels.is_empty() || sc.seeds.is_empty() {
            return Err(Error::Config("the disruption grid and the seed list must not be empty".into()));
        }
        if let Some(l) = sc.levels.iter().find(|l| !(**l >= 1.0 && l.is_finite())) {
            return Err(Error::Config(format!("disruption level {l} must be at least 1")));
        }
        let mut levels = sc.levels.clone();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        if levels.len() != sc.levels.len() {
            return Err(Error::Config("a disruption level is listed twice".into()));
        }
        let mut seeds = sc.seeds.clone();
        seeds.sort();
        seeds.dedup();
        if seeds.len() != sc.seeds.len() {
            return Err(Error::Config("a seed is listed twice".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        if !(self.mfd_bin_width > 0.0) {
            return Err(Error::Config("MFD bin width must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 over the effective configuration without the output folder
    /// and the worker count, neither of which changes results.
    pub fn hash(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Hashed<'a> {
            scenario: &'a ScenarioManifest,
            controllers: &'a [ControllerKind],
            controller: &'a ControllerSettings,
            closed_loop: &'a ClosedLoopConfig,
            alpha: f64,
            mfd_bin_width: f64,
            single_cross: &'a Option<String>,
        }
        let sc = self.effective_scenario()?;
        let h = Hashed {
            scenario: &sc,
            controllers: &self.controllers,
            controller: &self.controller,
            closed_loop: &self.closed_loop,
            alpha: self.alpha,
            mfd_bin_width: self.mfd_bin_width,
            single_cross: &self.single_cross,
        };
        let text = serde_json::to_string(&h).map_err(|e| Error::Config(e.to_string()))?;
        // file contents matter, not just their paths
        let mut digest = Sha256::new();
        digest.update(text.as_bytes());
        for p in sc.network.iter().chain(&sc.flow_csv) {
            digest.update(std::fs::read(p).map_err(|e| Error::io(p, e))?);
        }
        Ok(format!("{:x}", digest.finalize()))
    }

    /// Loads the network and builds every day and the design history.
    pub fn resolve(&self) -> Result<Resolved> {
        self.validate()?;
        let sc = self.effective_scenario()?;
        let net = match &sc.network {
            Some(p) => RoadNetwork::load(p)?,
            None => grid_network(&GridSpec::default())?,
        };
        let (days, history) = match &sc.flow_csv {
            Some(p) => {
                let (days, _) = ingest_flow_csv(p, sc.demand.sample_s, DAY_S)?;
                let history = average_days(days.iter().map(|d| &d.scenario), sc.history_seed)?;
                (days.into_iter().map(|d| (d.day, d.scenario)).collect(), history)
            }
            None => {
                let history = synth_daily_profile(&grid_demand(&net, &sc.demand.expected(), sc.history_seed))?;
                let mut days = BTreeMap::new();
                for &seed in &sc.seeds {
                    days.insert(seed as u32, synth_daily_profile(&grid_demand(&net, &sc.demand, seed))?);
                }
                (days, history)
            }
        };
        if let Some(x) = &self.single_cross {
            if net.intersection_index(x).is_none() {
                return Err(Error::Config(format!("single_cross names unknown intersection {x}")));
            }
        }
        Ok(Resolved { hash: self.hash()?, config: self.clone(), scenario: sc, net, history, days })
    }
}

/// Mean over days, sample by sample.
fn average_days<'a>(days: impl Iterator<Item = &'a FlowScenario>, seed: u64) -> Result<FlowScenario> {
    let days: Vec<&FlowScenario> = days.collect();
    let first = days.first().ok_or_else(|| Error::Config("flow file has no days".into()))?;
    let mut demand: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for d in &days {
        for (id, s) in &d.demand {
            let acc = demand.entry(id.clone()).or_insert_with(|| vec![0.0; s.len()]);
            acc.iter_mut().zip(s).for_each(|(a, v)| *a += v / days.len() as f64);
        }
    }
    FlowScenario::new(first.sample_s, first.day_s, seed, demand)
}

/// A validated configuration with its inputs loaded.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub hash: String,
    pub config: ExperimentConfig,
    pub scenario: ScenarioManifest,
    pub net: RoadNetwork,
    pub history: FlowScenario,
    /// Synthetic runs key days by seed and run every seed on its own day.
    /// Measured days run under every seed.
    pub days: BTreeMap<u32, FlowScenario>,
}

impl Resolved {
    pub fn synthetic(&self) -> bool {
        self.scenario.flow_csv.is_none()
    }

    /// (seed, day) pairs of the cross product.
    pub fn seed_days(&self) -> Vec<(u64, u32)> {
        if self.synthetic() {
            self.scenario.seeds.iter().map(|&s| (s, s as u32)).collect()
        } else {
            self.scenario.seeds.iter().flat_map(|&s| self.days.keys().map(move |&d| (s, d))).collect()
        }
    }

    pub fn single_cross(&self) -> String {
        self.config.single_cross.clone().unwrap_or_else(|| self.net.intersections[0].id.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("controllers = [\"FASTEST\"]").is_err());
    }

    #[test]
    fn hash_ignores_workers_and_output() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { workers: 8, output_dir: "elsewhere".into(), ..a.clone() };
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        let c = ExperimentConfig { alpha: 0.01, ..a.clone() };
        assert_ne!(a.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn bad_values_fail_validation() {
        let mut c = ExperimentConfig::default();
        c.scenario.levels = vec![0.5];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.controllers = vec![ControllerKind::Robust, ControllerKind::Robust];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.scenario.network = Some("/does/not/exist.toml".into());
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
