//! Signal plans and the constraints every controller must respect.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sum tolerance used when checking emitted plans.
pub const SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionTiming {
    pub id: String,
    pub phases: usize,
    pub cycle_s: f64,
    pub lost_time_s: f64,
    pub g_min_s: f64,
    pub g_max_s: f64,
    pub offset_s: f64,
}

impl IntersectionTiming {
    pub fn effective_green(&self) -> f64 {
        self.cycle_s - self.lost_time_s
    }

    pub fn lost_per_phase(&self) -> f64 {
        self.lost_time_s / self.phases as f64
    }

    pub fn nominal(&self) -> Vec<f64> {
        vec![self.effective_green() / self.phases as f64; self.phases]
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.effective_green();
        if self.phases == 0 {
            return Err(Error::Config(format!("intersection {} has no phases", self.id)));
        }
        if !(self.cycle_s > 0.0 && self.lost_time_s >= 0.0 && g > 0.0) {
            return Err(Error::Config(format!(
                "intersection {}: cycle {} s with lost time {} s leaves no green",
                self.id, self.cycle_s, self.lost_time_s
            )));
        }
        if !(self.g_min_s >= 0.0 && self.g_min_s <= self.g_max_s) {
            return Err(Error::Config(format!(
                "intersection {}: green bounds [{}, {}] are inverted",
                self.id, self.g_min_s, self.g_max_s
            )));
        }
        let p = self.phases as f64;
        if self.g_min_s * p > g + SUM_TOL || self.g_max_s * p < g - SUM_TOL {
            return Err(Error::Config(format!(
                "intersection {}: {} phases cannot share {g} s of green within [{}, {}]",
                self.id, self.phases, self.g_min_s, self.g_max_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalConstraints {
    pub intersections: Vec<IntersectionTiming>,
}

impl SignalConstraints {
    pub fn validate(&self) -> Result<()> {
        self.intersections.iter().try_for_each(|i| i.validate())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionPlan {
    pub id: String,
    pub cycle_s: f64,
    pub offset_s: f64,
    pub greens: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalPlan {
    pub intersections: Vec<IntersectionPlan>,
    /// Set when a controller could not refresh the plan and repeated an old one.
    #[serde(default)]
    pub stale: bool,
}

impl SignalPlan {
    pub fn nominal(constraints: &SignalConstraints) -> Self {
        Self {
            intersections: constraints
                .intersections
                .iter()
                .map(|t| IntersectionPlan {
                    id: t.id.clone(),
                    cycle_s: t.cycle_s,
                    offset_s: t.offset_s,
                    greens: t.nominal(),
                })
                .collect(),
            stale: false,
        }
    }

    /// Checks bounds and per-intersection green sums.
    pub fn check(&self, constraints: &SignalConstraints) -> Result<()> {
        if self.intersections.len() != constraints.intersections.len() {
            return Err(Error::Dimension(format!(
                "plan covers {} intersections, constraints {}",
                self.intersections.len(),
                constraints.intersections.len()
            )));
        }
        for (p, c) in self.intersections.iter().zip(&constraints.intersections) {
            if p.id != c.id || p.greens.len() != c.phases {
                return Err(Error::Dimension(format!("plan for {} does not match intersection {}", p.id, c.id)));
            }
            for g in &p.greens {
                if *g < c.g_min_s - SUM_TOL || *g > c.g_max_s + SUM_TOL || !g.is_finite() {
                    return Err(Error::Run(format!("{}: green {g} outside [{}, {}]", c.id, c.g_min_s, c.g_max_s)));
                }
            }
            let sum: f64 = p.greens.iter().sum();
            if (sum - c.effective_green()).abs() > SUM_TOL {
                return Err(Error::Run(format!("{}: greens sum to {sum}, expected {}", c.id, c.effective_green())));
            }
        }
        Ok(())
    }
}

/// Clamps `raw` into `[lo, hi]` and rescales the phases that still have room
/// so the greens sum to `total`. Each pass moves the free phases in
/// proportion to their current green; at most one phase pins per pass.
pub fn fit_greens(raw: &[f64], total: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut g: Vec<f64> = raw.iter().map(|x| if x.is_finite() { x.clamp(lo, hi) } else { lo }).collect();
    for _ in 0..=2 * g.len() {
        let excess: f64 = g.iter().sum::<f64>() - total;
        if excess.abs() <= 1e-12 * total.max(1.0) {
            break;
        }
        let free: Vec<usize> = (0..g.len())
            .filter(|&i| if excess > 0.0 { g[i] > lo } else { g[i] < hi })
            .collect();
        let weight: f64 = free.iter().map(|&i| g[i]).sum();
        if free.is_empty() {
            break;
        }
        for &i in &free {
            let share = if weight > 0.0 { g[i] / weight } else { 1.0 / free.len() as f64 };
            g[i] = (g[i] - excess * share).clamp(lo, hi);
        }
    }
    // absorb the rounding residue in the phase with the most slack
    let residue = total - g.iter().sum::<f64>();
    if residue != 0.0 {
        if let Some(i) = (0..g.len()).max_by(|&a, &b| {
            let room = |x: f64| if residue > 0.0 { hi - x } else { x - lo };
            room(g[a]).total_cmp(&room(g[b]))
        }) {
            g[i] += residue;
        }
    }
    g
}

/// CSV `intersection,phase,green_s,cycle_s,offset_s`.
pub fn write_plan_csv<W: Write>(plan: &SignalPlan, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["intersection", "phase", "green_s", "cycle_s", "offset_s"])
        .map_err(crate::osc::csv_err)?;
    for ip in &plan.intersections {
        for (phase, g) in ip.greens.iter().enumerate() {
            wr.write_record([
                ip.id.clone(),
                phase.to_string(),
                format!("{g}"),
                format!("{}", ip.cycle_s),
                format!("{}", ip.offset_s),
            ])
            .map_err(crate::osc::csv_err)?;
        }
    }
    wr.flush().map_err(|e| Error::io("<plan>", e))
}

#[derive(Deserialize)]
struct PlanRow {
    intersection: String,
    phase: usize,
    green_s: f64,
    cycle_s: f64,
    offset_s: f64,
}

pub fn read_plan_csv<R: Read>(r: R) -> Result<SignalPlan> {
    let mut rd = csv::Reader::from_reader(r);
    let mut plan = SignalPlan { intersections: Vec::new(), stale: false };
    for (idx, rec) in rd.deserialize::<PlanRow>().enumerate() {
        let row = idx + 2;
        let rec = rec.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        if plan.intersections.last().map_or(true, |p| p.id != rec.intersection) {
            plan.intersections.push(IntersectionPlan {
                id: rec.intersection.clone(),
                cycle_s: rec.cycle_s,
                offset_s: rec.offset_s,
                greens: Vec::new(),
            });
        }
        let ip = plan.intersections.last_mut().unwrap();
        if rec.phase != ip.greens.len() {
            return Err(Error::Parse { row, msg: format!("phase {} out of order for {}", rec.phase, ip.id) });
        }
        ip.greens.push(rec.green_s);
    }
    Ok(plan)
}
