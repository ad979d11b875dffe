//! Delay-minimising integer green splits by LP-based branch-and-bound.

use serde::{Deserialize, Serialize};

use super::lp::{Cmp, LinearProgram, LpOutcome};
use super::{DecisionInput, SignalController};
use crate::error::{Error, Result};
use crate::mesosim::RoadNetwork;
use crate::signal::{IntersectionPlan, IntersectionTiming, SignalConstraints, SignalPlan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimalConfig {
    /// Cycles over which queue carry-over is predicted.
    pub horizon_cycles: u32,
    /// Flow ratio cap inside the uniform-delay term.
    pub max_flow_ratio: f64,
    /// Cost per second of distance from the nominal split; breaks ties.
    pub tie_weight: f64,
    pub max_nodes: usize,
}

impl Default for OptimalConfig {
    fn default() -> Self {
        Self { horizon_cycles: 3, max_flow_ratio: 0.95, tie_weight: 1e-7, max_nodes: 20_000 }
    }
}

/// Arrival rate and saturation flow (veh/s) of one movement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Movement {
    pub flow: f64,
    pub saturation: f64,
}

/// Predicted vehicle-seconds of delay over the horizon when the phase
/// serving `movements` gets `green` seconds of a `cycle`: the uniform delay
/// of each cycle plus the overflow queue carried into later cycles.
pub fn predicted_delay(movements: &[Movement], green: f64, cycle: f64, cfg: &OptimalConfig) -> f64 {
    let h = cfg.horizon_cycles as f64;
    let red = (cycle - green).max(0.0);
    movements
        .iter()
        .map(|m| {
            let y = (m.flow / m.saturation).min(cfg.max_flow_ratio);
            let uniform = m.flow * red * red / (2.0 * (1.0 - y));
            let overflow = (m.flow * cycle - m.saturation * green).max(0.0);
            h * uniform + cycle * h * (h - 1.0) / 2.0 * overflow
        })
        .sum()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes: usize,
    pub lp_solves: usize,
}

struct Problem {
    lo: Vec<i64>,
    hi: Vec<i64>,
    total: i64,
    // cost[p][g - lo[p]]
    cost: Vec<Vec<f64>>,
}

impl Problem {
    fn f(&self, p: usize, g: i64) -> f64 {
        self.cost[p][(g - self.lo[p]) as usize]
    }
    fn chord(&self, p: usize, a: i64) -> (f64, f64) {
        let slope = self.f(p, a + 1) - self.f(p, a);
        (slope, self.f(p, a) - slope * a as f64)
    }
    fn interp(&self, p: usize, g: f64) -> f64 {
        let a = (g.floor() as i64).clamp(self.lo[p], (self.hi[p] - 1).max(self.lo[p]));
        if a == self.hi[p] {
            return self.f(p, a);
        }
        let (slope, icpt) = self.chord(p, a);
        icpt + slope * g
    }
}

/// Relaxation of one node over the chords in `cuts`, refined until no chord
/// of the convex interpolant is violated.
fn relax(pb: &Problem, lo: &[i64], hi: &[i64], cuts: &mut [Vec<i64>], stats: &mut SearchStats) -> Option<(Vec<f64>, f64)> {
    let np = lo.len();
    loop {
        let mut lp = LinearProgram::new(2 * np);
        for p in 0..np {
            lp.c[np + p] = 1.0;
        }
        let base: i64 = lo.iter().sum();
        let mut row = vec![0.0; 2 * np];
        row[..np].iter_mut().for_each(|v| *v = 1.0);
        lp.add(row, Cmp::Eq, (pb.total - base) as f64);
        for p in 0..np {
            let mut row = vec![0.0; 2 * np];
            row[p] = 1.0;
            lp.add(row, Cmp::Le, (hi[p] - lo[p]) as f64);
            if pb.lo[p] == pb.hi[p] {
                let mut row = vec![0.0; 2 * np];
                row[np + p] = 1.0;
                lp.add(row, Cmp::Ge, pb.f(p, pb.lo[p]));
                continue;
            }
            for &a in &cuts[p] {
                // z ≥ slope·(lo + g') + icpt
                let (slope, icpt) = pb.chord(p, a);
                let mut row = vec![0.0; 2 * np];
                row[p] = -slope;
                row[np + p] = 1.0;
                lp.add(row, Cmp::Ge, icpt + slope * lo[p] as f64);
            }
        }
        stats.lp_solves += 1;
        let LpOutcome::Optimal { x, objective } = lp.solve() else { return None };
        let g: Vec<f64> = (0..np).map(|p| lo[p] as f64 + x[p]).collect();
        let mut added = false;
        for p in 0..np {
            if pb.lo[p] == pb.hi[p] {
                continue;
            }
            let need = pb.interp(p, g[p]);
            if need - x[np + p] > 1e-9 * need.abs().max(1.0) {
                let a = (g[p].floor() as i64).clamp(pb.lo[p], pb.hi[p] - 1);
                if !cuts[p].contains(&a) {
                    cuts[p].push(a);
                    added = true;
                }
            }
        }
        if !added {
            return Some((g, objective));
        }
    }
}

/// Integer greens for one intersection. `phases` lists the movements each
/// phase serves.
pub fn optimize_intersection(
    timing: &IntersectionTiming,
    phases: &[Vec<Movement>],
    cfg: &OptimalConfig,
) -> Result<(Vec<f64>, SearchStats)> {
    timing.validate()?;
    if phases.len() != timing.phases {
        return Err(Error::Dimension(format!("{} phase demands for {} phases at {}", phases.len(), timing.phases, timing.id)));
    }
    let total_f = timing.effective_green();
    let total = total_f.round() as i64;
    if (total_f - total as f64).abs() > 1e-9 {
        return Err(Error::Config(format!("{}: green total {total_f} is not a whole number of seconds", timing.id)));
    }
    let (glo, ghi) = (timing.g_min_s.ceil() as i64, timing.g_max_s.floor() as i64);
    let np = phases.len();
    if glo > ghi || glo * np as i64 > total || ghi * (np as i64) < total {
        return Err(Error::Config(format!("{}: no integer split satisfies the green bounds", timing.id)));
    }
    // a phase can never exceed what the others leave over
    let lo_p = glo.max(total - ghi * (np as i64 - 1));
    let hi_p = ghi.min(total - glo * (np as i64 - 1));
    let nominal = timing.nominal();
    let cost = (0..np)
        .map(|p| {
            (lo_p..=hi_p)
                .map(|g| {
                    predicted_delay(&phases[p], g as f64, timing.cycle_s, cfg) + cfg.tie_weight * (g as f64 - nominal[p]).abs()
                })
                .collect()
        })
        .collect();
    let pb = Problem { lo: vec![lo_p; np], hi: vec![hi_p; np], total, cost };

    let mut stats = SearchStats::default();
    let mut cuts: Vec<Vec<i64>> = (0..np)
        .map(|p| {
            let mut c = vec![pb.lo[p]];
            let mid = (nominal[p].floor() as i64).clamp(pb.lo[p], (pb.hi[p] - 1).max(pb.lo[p]));
            let top = (pb.hi[p] - 1).max(pb.lo[p]);
            for a in [mid, top] {
                if !c.contains(&a) {
                    c.push(a);
                }
            }
            c
        })
        .collect();
    let mut best: Option<(f64, Vec<i64>)> = None;
    let mut stack = vec![(pb.lo.clone(), pb.hi.clone())];
    while let Some((lo, hi)) = stack.pop() {
        stats.nodes += 1;
        if stats.nodes > cfg.max_nodes {
            log::warn!("{}: branch-and-bound node limit reached", timing.id);
            break;
        }
        let Some((g, bound)) = relax(&pb, &lo, &hi, &mut cuts, &mut stats) else { continue };
        if let Some((b, _)) = &best {
            if bound >= *b - 1e-12 * b.abs().max(1.0) {
                continue;
            }
        }
        let frac = g
            .iter()
            .enumerate()
            .map(|(p, v)| (p, (v - v.round()).abs()))
            .filter(|(_, d)| *d > 1e-7)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match frac {
            None => {
                let gi: Vec<i64> = g.iter().map(|v| v.round() as i64).collect();
                let obj: f64 = gi.iter().enumerate().map(|(p, &v)| pb.f(p, v)).sum();
                if best.as_ref().map_or(true, |(b, _)| obj < *b) {
                    best = Some((obj, gi));
                }
            }
            Some((p, _)) => {
                let down = g[p].floor() as i64;
                let mut left = (lo.clone(), hi.clone());
                left.1[p] = down;
                let mut right = (lo, hi);
                right.0[p] = down + 1;
                // explore the nearer side first
                if g[p] - down as f64 > 0.5 {
                    stack.push(left);
                    stack.push(right);
                } else {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
    }
    let (_, g) = best.ok_or_else(|| Error::Run(format!("{}: branch-and-bound found no split", timing.id)))?;
    Ok((g.into_iter().map(|v| v as f64).collect(), stats))
}

/// Exhaustive search over every integer split; reference for small cases.
pub fn enumerate_intersection(timing: &IntersectionTiming, phases: &[Vec<Movement>], cfg: &OptimalConfig) -> Result<Vec<f64>> {
    timing.validate()?;
    let total = timing.effective_green().round() as i64;
    let (lo, hi) = (timing.g_min_s.ceil() as i64, timing.g_max_s.floor() as i64);
    let nominal = timing.nominal();
    let np = phases.len();
    let mut best: Option<(f64, f64, Vec<i64>)> = None;
    let mut g = vec![lo; np];
    loop {
        if g.iter().sum::<i64>() == total {
            let delay: f64 = (0..np).map(|p| predicted_delay(&phases[p], g[p] as f64, timing.cycle_s, cfg)).sum();
            let dist: f64 = (0..np).map(|p| (g[p] as f64 - nominal[p]).abs()).sum();
            let better = match &best {
                None => true,
                Some((d, n, _)) => {
                    let tol = 1e-9 * d.abs().max(1.0);
                    delay < d - tol || (delay <= d + tol && dist < *n)
                }
            };
            if better {
                best = Some((delay, dist, g.clone()));
            }
        }
        let mut p = 0;
        loop {
            if p == np {
                return best
                    .map(|(_, _, g)| g.into_iter().map(|v| v as f64).collect())
                    .ok_or_else(|| Error::Config(format!("{}: no integer split satisfies the green bounds", timing.id)));
            }
            g[p] += 1;
            if g[p] <= hi {
                break;
            }
            g[p] = lo;
            p += 1;
        }
    }
}

/// Movements per phase of every intersection, from per-approach flows.
pub fn phase_movements(net: &RoadNetwork, flows: &[f64]) -> Result<Vec<Vec<Vec<Movement>>>> {
    if flows.len() != net.approaches.len() {
        return Err(Error::Dimension(format!("{} flows for {} approaches", flows.len(), net.approaches.len())));
    }
    Ok(net
        .intersections
        .iter()
        .map(|x| {
            x.phases
                .iter()
                .map(|members| {
                    members
                        .iter()
                        .map(|&a| Movement { flow: flows[a].max(0.0), saturation: net.approach_saturation(a) })
                        .collect()
                })
                .collect()
        })
        .collect())
}

/// Plan minimising predicted delay at every intersection independently.
pub fn optimal_plan(net: &RoadNetwork, flows: &[f64], cfg: &OptimalConfig) -> Result<SignalPlan> {
    let demand = phase_movements(net, flows)?;
    let mut plan = SignalPlan::nominal(&net.constraints());
    for ((x, d), out) in net.intersections.iter().zip(&demand).zip(plan.intersections.iter_mut()) {
        let (greens, _) = optimize_intersection(&x.timing, d, cfg)?;
        *out = IntersectionPlan { greens, ..out.clone() };
    }
    Ok(plan)
}

pub struct OptimalController {
    net: RoadNetwork,
    constraints: SignalConstraints,
    cfg: OptimalConfig,
}

impl OptimalController {
    pub fn new(net: &RoadNetwork, cfg: OptimalConfig) -> Result<Self> {
        let constraints = net.constraints();
        constraints.validate()?;
        // reject infeasible timing up front
        optimal_plan(net, &vec![0.0; net.approaches.len()], &cfg)?;
        Ok(Self { net: net.clone(), constraints, cfg })
    }
}

impl SignalController for OptimalController {
    fn name(&self) -> &str {
        "OPTIMAL"
    }

    fn decide(&mut self, input: &DecisionInput<'_>) -> Result<SignalPlan> {
        let plan = optimal_plan(&self.net, input.flows, &self.cfg)?;
        plan.check(&self.constraints)?;
        Ok(plan)
    }
}
