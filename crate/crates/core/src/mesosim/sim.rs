use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::network::{Node, RoadNetwork};
use crate::error::{Error, Result};
use crate::signal::SignalPlan;

/// Micro-vehicles per vehicle.
pub const UNITS_PER_VEH: i64 = 1_000_000;
const UNIT: f64 = UNITS_PER_VEH as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalMode {
    #[default]
    Fluid,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt_s: f64,
    pub arrival_mode: ArrivalMode,
    pub seed: u64,
    /// Block discharge into links that are full (only for links with storage).
    pub spillback: bool,
    /// Trips are binned by entry time at this resolution.
    pub metrics_interval_s: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt_s: 1.0, arrival_mode: ArrivalMode::Fluid, seed: 0, spillback: true, metrics_interval_s: 300.0 }
    }
}

#[derive(Debug, Clone, Default)]
struct Cohort {
    units: i64,
    bin: u32,
    arrive_tick: u64,
    // vehicle-weighted sums (seconds or metres times vehicles)
    entry: f64,
    free_flow: f64,
    dist: f64,
    wait: f64,
    join: f64,
}

impl Cohort {
    /// Splits `take` units off the front, sharing the sums pro rata.
    fn split(&mut self, take: i64) -> Cohort {
        if take >= self.units {
            return std::mem::take(self);
        }
        let f = take as f64 / self.units as f64;
        let part = Cohort {
            units: take,
            bin: self.bin,
            arrive_tick: self.arrive_tick,
            entry: self.entry * f,
            free_flow: self.free_flow * f,
            dist: self.dist * f,
            wait: self.wait * f,
            join: self.join * f,
        };
        self.units -= take;
        self.entry -= part.entry;
        self.free_flow -= part.free_flow;
        self.dist -= part.dist;
        self.wait -= part.wait;
        self.join -= part.join;
        part
    }

    fn absorb(&mut self, o: Cohort) {
        self.units += o.units;
        self.entry += o.entry;
        self.free_flow += o.free_flow;
        self.dist += o.dist;
        self.wait += o.wait;
        self.join += o.join;
    }

    fn veh(&self) -> f64 {
        self.units as f64 / UNIT
    }
}

fn push_merge(q: &mut VecDeque<Cohort>, c: Cohort) {
    if c.units == 0 {
        return;
    }
    if let Some(last) = q.back_mut() {
        if last.bin == c.bin && last.arrive_tick == c.arrive_tick {
            last.absorb(c);
            return;
        }
    }
    q.push_back(c);
}

/// Totals over completed trips.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TripTotals {
    pub vehicles: f64,
    pub travel_s: f64,
    pub free_flow_s: f64,
    pub dist_m: f64,
    pub wait_s: f64,
}

impl TripTotals {
    pub fn add(&mut self, o: &TripTotals) {
        self.vehicles += o.vehicles;
        self.travel_s += o.travel_s;
        self.free_flow_s += o.free_flow_s;
        self.dist_m += o.dist_m;
        self.wait_s += o.wait_s;
    }
}

/// Network production over one metrics interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Production {
    pub veh_km: f64,
    pub veh_h: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone)]
pub struct SimState {
    tick: u64,
    dt: f64,
    cfg: SimConfig,
    transit: Vec<VecDeque<Cohort>>,
    transit_units: Vec<i64>,
    queues: Vec<VecDeque<Cohort>>,
    queue_units: Vec<i64>,
    backlog: Vec<VecDeque<Cohort>>,
    backlog_units: Vec<i64>,
    demand_carry: Vec<f64>,
    capacity_carry: Vec<f64>,
    speed_factor: Vec<f64>,
    inflow: i64,
    outflow: i64,
    arrivals_measured: Vec<i64>,
    completed: Vec<TripTotals>,
    production: Vec<Production>,
    wait_total: f64,
    rng: ChaCha8Rng,
}

fn ticks_for(length: f64, speed: f64, dt: f64) -> u64 {
    ((length / (speed * dt)) - 1e-9).ceil().max(1.0) as u64
}

/// Seconds of [a, b] during which a periodic window [start + mC, start + mC + len] is open.
pub fn green_overlap(a: f64, b: f64, start: f64, len: f64, cycle: f64) -> f64 {
    if len <= 0.0 || b <= a {
        return 0.0;
    }
    if len >= cycle {
        return b - a;
    }
    let first = ((a - start - len) / cycle).floor() as i64;
    let last = ((b - start) / cycle).floor() as i64;
    (first..=last)
        .map(|m| {
            let s = start + m as f64 * cycle;
            (b.min(s + len) - a.max(s)).max(0.0)
        })
        .sum()
}

impl SimState {
    pub fn new(net: &RoadNetwork, cfg: SimConfig) -> Result<Self> {
        if !(cfg.dt_s > 0.0 && cfg.metrics_interval_s >= cfg.dt_s) {
            return Err(Error::Config("simulation step must be positive and not exceed the metrics interval".into()));
        }
        let (nl, na, ne) = (net.links.len(), net.approaches.len(), net.entries.len());
        Ok(Self {
            tick: 0,
            dt: cfg.dt_s,
            transit: vec![VecDeque::new(); nl],
            transit_units: vec![0; nl],
            queues: vec![VecDeque::new(); na],
            queue_units: vec![0; na],
            backlog: vec![VecDeque::new(); ne],
            backlog_units: vec![0; ne],
            demand_carry: vec![0.0; ne],
            capacity_carry: vec![0.0; na],
            speed_factor: vec![1.0; nl],
            inflow: 0,
            outflow: 0,
            arrivals_measured: vec![0; na],
            completed: Vec::new(),
            production: Vec::new(),
            wait_total: 0.0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
        })
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Multiplies each link's free-flow speed for trips entering it from now on.
    pub fn set_speed_factors(&mut self, factors: &[f64]) -> Result<()> {
        if factors.len() != self.speed_factor.len() || factors.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::Config("speed factors must be positive, one per link".into()));
        }
        self.speed_factor.copy_from_slice(factors);
        Ok(())
    }

    pub fn queue_veh(&self, approach: usize) -> f64 {
        self.queue_units[approach] as f64 / UNIT
    }
    pub fn queued_units(&self) -> i64 {
        self.queue_units.iter().sum::<i64>() + self.backlog_units.iter().sum::<i64>()
    }
    pub fn transit_units(&self) -> i64 {
        self.transit_units.iter().sum()
    }
    pub fn inflow_units(&self) -> i64 {
        self.inflow
    }
    pub fn outflow_units(&self) -> i64 {
        self.outflow
    }
    /// inflow − outflow − queued − in transit; zero at all times.
    pub fn conservation_residual(&self) -> i64 {
        self.inflow - self.outflow - self.queued_units() - self.transit_units()
    }
    /// Recount from the cohort lists rather than the running totals.
    pub fn recount_units(&self) -> i64 {
        let sum = |qs: &Vec<VecDeque<Cohort>>| qs.iter().flatten().map(|c| c.units).sum::<i64>();
        sum(&self.transit) + sum(&self.queues) + sum(&self.backlog)
    }
    pub fn is_empty(&self) -> bool {
        self.queued_units() == 0 && self.transit_units() == 0
    }
    pub fn completed(&self) -> &[TripTotals] {
        &self.completed
    }
    pub fn production(&self) -> &[Production] {
        &self.production
    }
    /// Vehicle-seconds spent queued so far, finished trips or not.
    pub fn wait_total(&self) -> f64 {
        self.wait_total
    }

    /// Mean arrival rate (veh/s) at each approach since the last call.
    pub fn take_measured_flows(&mut self, period_s: f64) -> Vec<f64> {
        let out = self.arrivals_measured.iter().map(|&u| u as f64 / UNIT / period_s).collect();
        self.arrivals_measured.iter_mut().for_each(|u| *u = 0);
        out
    }

    fn bin_of(&self, t: f64) -> u32 {
        (t / self.cfg.metrics_interval_s).floor() as u32
    }

    fn complete(&mut self, c: Cohort, t: f64) {
        let v = c.veh();
        let bin = c.bin as usize;
        if self.completed.len() <= bin {
            self.completed.resize(bin + 1, TripTotals::default());
        }
        let tot = &mut self.completed[bin];
        tot.vehicles += v;
        tot.travel_s += v * t - c.entry;
        tot.free_flow_s += c.free_flow;
        tot.dist_m += c.dist;
        tot.wait_s += c.wait;
        self.outflow += c.units;
    }

    fn storage_units(&self, net: &RoadNetwork, link: usize) -> Option<i64> {
        if !self.cfg.spillback {
            return None;
        }
        net.links[link].storage_veh.map(|s| (s * UNIT) as i64)
    }

    fn occupancy(&self, net: &RoadNetwork, link: usize) -> i64 {
        self.transit_units[link] + net.links[link].approach.map_or(0, |a| self.queue_units[a])
    }

    fn space(&self, net: &RoadNetwork, link: usize) -> i64 {
        self.storage_units(net, link).map_or(i64::MAX, |cap| (cap - self.occupancy(net, link)).max(0))
    }

    /// Puts a cohort onto `link` in the current tick.
    fn enter_link(&mut self, net: &RoadNetwork, link: usize, mut c: Cohort) {
        let l = &net.links[link];
        let v = c.veh();
        c.free_flow += v * ticks_for(l.length_m, l.free_speed_mps, self.dt) as f64 * self.dt;
        c.dist += v * l.length_m;
        c.arrive_tick = self.tick + ticks_for(l.length_m, l.free_speed_mps * self.speed_factor[link], self.dt);
        self.transit_units[link] += c.units;
        push_merge(&mut self.transit[link], c);
    }

    /// Advances one tick. `demand` holds arrival rates (veh/s) per entry link
    /// in `net.entries` order.
    pub fn step(&mut self, net: &RoadNetwork, plan: &SignalPlan, demand: &[f64], dt: f64) -> Result<()> {
        if (dt - self.dt).abs() > 1e-12 {
            return Err(Error::Config(format!("step {dt} differs from the configured step {}", self.dt)));
        }
        if demand.len() != net.entries.len() || plan.intersections.len() != net.intersections.len() {
            return Err(Error::Dimension("demand or plan does not match the network".into()));
        }
        let t0 = self.time();
        let mid = t0 + 0.5 * self.dt;

        // 1. arrivals at the end of links
        for li in 0..net.links.len() {
            while self.transit[li].front().map_or(false, |c| c.arrive_tick <= self.tick) {
                let mut c = self.transit[li].pop_front().unwrap();
                self.transit_units[li] -= c.units;
                match (&net.links[li].to, net.links[li].approach) {
                    (Node::Boundary(_), _) => self.complete(c, mid),
                    (Node::Intersection(_), Some(a)) => {
                        c.join += c.veh() * mid;
                        self.arrivals_measured[a] += c.units;
                        self.queue_units[a] += c.units;
                        let q = &mut self.queues[a];
                        match q.back_mut() {
                            Some(last) if last.bin == c.bin => last.absorb(c),
                            _ => q.push_back(c),
                        }
                    }
                    (Node::Intersection(_), None) => unreachable!("validated network"),
                }
            }
        }

        // 2. boundary demand, held in a backlog while the entry link is full
        let bin = self.bin_of(mid);
        for (e, &li) in net.entries.iter().enumerate() {
            let rate = demand[e].max(0.0);
            let units = match self.cfg.arrival_mode {
                ArrivalMode::Fluid => {
                    let exact = rate * self.dt * UNIT + self.demand_carry[e];
                    let whole = exact.floor();
                    self.demand_carry[e] = exact - whole;
                    whole as i64
                }
                ArrivalMode::Poisson => {
                    let mean = rate * self.dt;
                    if mean > 0.0 {
                        let k: f64 = Poisson::new(mean).expect("positive mean").sample(&mut self.rng);
                        k as i64 * UNITS_PER_VEH
                    } else {
                        0
                    }
                }
            };
            if units > 0 {
                self.inflow += units;
                let v = units as f64 / UNIT;
                let c = Cohort { units, bin, entry: v * mid, join: v * mid, ..Cohort::default() };
                self.backlog_units[e] += units;
                let q = &mut self.backlog[e];
                match q.back_mut() {
                    Some(last) if last.bin == c.bin => last.absorb(c),
                    _ => q.push_back(c),
                }
            }
            let mut room = self.space(net, li);
            while room > 0 && self.backlog_units[e] > 0 {
                let front = self.backlog[e].front_mut().unwrap();
                let mut part = front.split(room.min(front.units));
                if front.units == 0 {
                    self.backlog[e].pop_front();
                }
                let waited = part.veh() * mid - part.join;
                part.wait += waited;
                self.wait_total += waited;
                part.join = 0.0;
                room -= part.units;
                self.backlog_units[e] -= part.units;
                self.enter_link(net, li, part);
            }
        }

        // 3. discharge
        for a in 0..net.approaches.len() {
            let ap = &net.approaches[a];
            let x = &net.intersections[ap.intersection];
            let p = &plan.intersections[ap.intersection];
            let lost = x.timing.lost_per_phase();
            let start = p.offset_s + p.greens[..ap.phase].iter().map(|g| g + lost).sum::<f64>();
            let open = green_overlap(t0, t0 + self.dt, start, p.greens[ap.phase], p.cycle_s);
            if self.queue_units[a] == 0 || open <= 0.0 {
                self.capacity_carry[a] = 0.0;
                continue;
            }
            let exact = net.links[ap.link].saturation_vps() * open * UNIT + self.capacity_carry[a];
            let mut cap = exact.floor() as i64;
            let carry = exact - cap as f64;
            // downstream room, shared by turning ratio
            for &(out, r) in &ap.turns {
                let room = self.space(net, out);
                if room != i64::MAX {
                    cap = cap.min((room as f64 / r).floor() as i64);
                }
            }
            let take = cap.min(self.queue_units[a]);
            self.capacity_carry[a] = if take == self.queue_units[a] { 0.0 } else { carry };
            let mut left = take;
            while left > 0 {
                let front = self.queues[a].front_mut().unwrap();
                let mut part = front.split(left.min(front.units));
                if front.units == 0 {
                    self.queues[a].pop_front();
                }
                left -= part.units;
                self.queue_units[a] -= part.units;
                let waited = part.veh() * mid - part.join;
                part.wait += waited;
                self.wait_total += waited;
                part.join = 0.0;
                for (out, share) in split_units(part.units, &ap.turns) {
                    if share > 0 {
                        let piece = part.split(share);
                        self.enter_link(net, out, piece);
                    }
                }
            }
        }

        // production for the MFD
        let interval = self.bin_of(mid) as usize;
        if self.production.len() <= interval {
            self.production.resize(interval + 1, Production::default());
        }
        let mut veh_m = 0.0;
        for (li, l) in net.links.iter().enumerate() {
            if self.transit_units[li] > 0 {
                let ticks = ticks_for(l.length_m, l.free_speed_mps * self.speed_factor[li], self.dt) as f64;
                veh_m += self.transit_units[li] as f64 / UNIT * l.length_m / ticks;
            }
        }
        let present = (self.queued_units() + self.transit_units()) as f64 / UNIT;
        let prod = &mut self.production[interval];
        prod.veh_km += veh_m / 1000.0;
        prod.veh_h += present * self.dt / 3600.0;
        prod.duration_s += self.dt;

        self.tick += 1;
        Ok(())
    }
}

/// Largest-remainder split of `units` by ratios.
fn split_units(units: i64, turns: &[(usize, f64)]) -> Vec<(usize, i64)> {
    let mut out: Vec<(usize, i64, f64)> = turns
        .iter()
        .map(|&(l, r)| {
            let exact = units as f64 * r;
            (l, exact.floor() as i64, exact - exact.floor())
        })
        .collect();
    let mut rest = units - out.iter().map(|o| o.1).sum::<i64>();
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&x, &y| out[y].2.total_cmp(&out[x].2).then(x.cmp(&y)));
    for &i in order.iter().cycle().take(out.len() * 2) {
        if rest <= 0 {
            break;
        }
        out[i].1 += 1;
        rest -= 1;
    }
    out.into_iter().map(|(l, u, _)| (l, u)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_units_is_exact() {
        let turns = [(0, 0.7), (1, 0.15), (2, 0.15)];
        for units in [0, 1, 2, 7, 999_999, 1_000_001] {
            let s = split_units(units, &turns);
            assert_eq!(s.iter().map(|x| x.1).sum::<i64>(), units);
        }
    }

    #[test]
    fn overlap_of_periodic_window() {
        // green [10, 40) in a 60 s cycle
        assert_eq!(green_overlap(0.0, 10.0, 10.0, 30.0, 60.0), 0.0);
        assert_eq!(green_overlap(9.5, 10.5, 10.0, 30.0, 60.0), 0.5);
        assert_eq!(green_overlap(70.0, 71.0, 10.0, 30.0, 60.0), 1.0);
        assert_eq!(green_overlap(0.0, 120.0, 10.0, 30.0, 60.0), 60.0);
        assert_eq!(green_overlap(-40.0, -39.0, 10.0, 30.0, 60.0), 1.0);
        assert_eq!(green_overlap(-20.0, -19.0, 10.0, 30.0, 60.0), 0.0);
    }
}
