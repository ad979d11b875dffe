use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::sweep::{CellMetrics, SweepResults};
use crate::controllers::ControllerKind;
use crate::error::{Error, Result};
use crate::stats::{anova_oneway, ttest_pairwise, AnovaResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    TimeLoss,
    Waiting,
    Speed,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::TimeLoss, Metric::Waiting, Metric::Speed];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::TimeLoss => "time_loss_s",
            Metric::Waiting => "waiting_s",
            Metric::Speed => "avg_speed_mps",
        }
    }

    pub fn lower_is_better(self) -> bool {
        !matches!(self, Metric::Speed)
    }

    pub fn of(self, m: &CellMetrics) -> f64 {
        match self {
            Metric::TimeLoss => m.time_loss_s,
            Metric::Waiting => m.waiting_s,
            Metric::Speed => m.avg_speed_mps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub controller: ControllerKind,
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub n: usize,
    /// Competition rank (1, 1, 3, ...) after merging insignificant neighbours.
    pub rank: usize,
    /// rank / number of ranked controllers.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: ControllerKind,
    pub b: ControllerKind,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCell {
    pub metric: Metric,
    pub level_milli: u32,
    /// Best first.
    pub entries: Vec<RankEntry>,
    pub anova: Option<AnovaResult>,
    pub pairs: Vec<PairTest>,
    /// False when a controller of the sweep has no successful run here.
    pub complete: bool,
}

impl RankCell {
    pub fn level(&self) -> f64 {
        self.level_milli as f64 / 1000.0
    }

    pub fn entry(&self, c: ControllerKind) -> Option<&RankEntry> {
        self.entries.iter().find(|e| e.controller == c)
    }

    /// p of the pairwise test; 1 when either side had too few values.
    pub fn p(&self, a: ControllerKind, b: ControllerKind) -> f64 {
        self.pairs
            .iter()
            .find(|t| (t.a == a && t.b == b) || (t.a == b && t.b == a))
            .map_or(1.0, |t| t.p)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    pub alpha: f64,
    pub cells: Vec<RankCell>,
}

impl RankingTable {
    pub fn cell(&self, metric: Metric, level: f64) -> Option<&RankCell> {
        let milli = (level * 1000.0).round() as u32;
        self.cells.iter().find(|c| c.metric == metric && c.level_milli == milli)
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = if v.len() > 1 { (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (m, s)
}

/// Orders controllers per metric and level by their mean over runs. When the
/// omnibus ANOVA is significant at `alpha`, neighbours in that order share a
/// rank unless their Welch test is significant; otherwise every controller
/// shares rank 1. With fewer than two runs per controller no test is
/// possible and only equal means tie.
pub fn rank_controllers(results: &SweepResults, controllers: &[ControllerKind], alpha: f64) -> Result<RankingTable> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} must lie in (0, 1)")));
    }
    // metric values per (level, controller), in key order
    let mut by_level: BTreeMap<u32, BTreeMap<ControllerKind, Vec<&CellMetrics>>> = BTreeMap::new();
    for (k, rec) in &results.cells {
        let slot = by_level.entry(k.level_milli).or_default();
        let runs = slot.entry(k.controller).or_default();
        if let Some(m) = rec.metrics() {
            runs.push(m);
        }
    }
    let mut cells = Vec::new();
    for metric in Metric::ALL {
        for (&level_milli, per) in &by_level {
            let complete = controllers.iter().all(|c| per.get(c).is_some_and(|v| !v.is_empty()));
            let mut samples: Vec<(ControllerKind, Vec<f64>)> = per
                .iter()
                .filter(|(_, v)| !v.is_empty())
                .map(|(&c, v)| (c, v.iter().map(|m| metric.of(m)).collect()))
                .collect();
            let sign = if metric.lower_is_better() { 1.0 } else { -1.0 };
            samples.sort_by(|a, b| {
                let (ma, mb) = (mean_std(&a.1).0, mean_std(&b.1).0);
                (sign * ma).total_cmp(&(sign * mb)).then(a.0.cmp(&b.0))
            });
            let testable = samples.len() >= 2 && samples.iter().all(|(_, v)| v.len() >= 2);
            let anova = if testable {
                Some(anova_oneway(&samples.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>())?)
            } else {
                None
            };
            let mut pairs = Vec::new();
            if testable {
                for i in 0..samples.len() {
                    for j in i + 1..samples.len() {
                        let t = ttest_pairwise(&samples[i].1, &samples[j].1)?;
                        pairs.push(PairTest { a: samples[i].0, b: samples[j].0, t: t.t, p: t.p });
                    }
                }
            }
            let count = samples.len();
            let mut entries: Vec<RankEntry> = Vec::with_capacity(count);
            for (i, (c, v)) in samples.iter().enumerate() {
                let (mean, std) = mean_std(v);
                let rank = if i == 0 {
                    1
                } else {
                    let prev = &entries[i - 1];
                    let tie = match &anova {
                        Some(a) if a.p >= alpha => true,
                        Some(_) => {
                            let p = pairs
                                .iter()
                                .find(|t| t.a == samples[i - 1].0 && t.b == *c)
                                .map_or(1.0, |t| t.p);
                            p >= alpha
                        }
                        None => mean == prev.mean,
                    };
                    if tie {
                        prev.rank
                    } else {
                        i + 1
                    }
                };
                entries.push(RankEntry { controller: *c, mean, std, n: v.len(), rank, normalized: rank as f64 / count as f64 });
            }
            cells.push(RankCell { metric, level_milli, entries, anova, pairs, complete });
        }
    }
    Ok(RankingTable { alpha, cells })
}
