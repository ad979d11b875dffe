use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{IntersectionTiming, SignalConstraints};

/// Node ids starting with this prefix are network boundaries.
pub const BOUNDARY_PREFIX: char = '@';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingDefaults {
    pub cycle_s: f64,
    pub lost_time_per_phase_s: f64,
    pub g_min_s: f64,
    pub g_max_s: f64,
    pub offset_s: f64,
}

impl Default for TimingDefaults {
    fn default() -> Self {
        Self { cycle_s: 90.0, lost_time_per_phase_s: 4.0, g_min_s: 5.0, g_max_s: 60.0, offset_s: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectionSpec {
    pub id: String,
    /// Approach (incoming link) ids served by each phase, in phase order.
    pub phases: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lost_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_min_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_max_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length_m: f64,
    pub free_speed_mps: f64,
    pub lanes: u32,
    pub sat_flow_vps_per_lane: f64,
    /// Vehicle storage; unlimited when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage_veh: Option<f64>,
    /// Turning ratios onto outgoing links, for links that end at an intersection.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub turns: BTreeMap<String, f64>,
}

/// On-disk schema of a network file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub name: String,
    #[serde(default)]
    pub timing: TimingDefaults,
    #[serde(default)]
    pub intersection: Vec<IntersectionSpec>,
    #[serde(default)]
    pub link: Vec<LinkSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Intersection(usize),
    Boundary(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: String,
    pub from: Node,
    pub to: Node,
    pub length_m: f64,
    pub free_speed_mps: f64,
    pub lanes: u32,
    pub sat_flow_vps_per_lane: f64,
    pub storage_veh: Option<f64>,
    /// Approach index when the link ends at an intersection.
    pub approach: Option<usize>,
}

impl Link {
    pub fn saturation_vps(&self) -> f64 {
        self.sat_flow_vps_per_lane * self.lanes as f64
    }
    pub fn lane_km(&self) -> f64 {
        self.length_m * self.lanes as f64 / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Approach {
    pub link: usize,
    pub intersection: usize,
    pub phase: usize,
    /// (outgoing link, ratio), ratios sum to one.
    pub turns: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub id: String,
    pub timing: IntersectionTiming,
    /// Approach indices per phase.
    pub phases: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    pub name: String,
    pub intersections: Vec<Intersection>,
    pub links: Vec<Link>,
    pub approaches: Vec<Approach>,
    /// Links that start at a boundary node; demand enters here.
    pub entries: Vec<usize>,
    link_index: BTreeMap<String, usize>,
    source: NetworkFile,
}

impl RoadNetwork {
    pub fn from_file_spec(spec: NetworkFile) -> Result<Self> {
        let cfg = |m: String| Error::Config(format!("network {}: {m}", spec.name));
        let mut node_index = BTreeMap::new();
        for (i, x) in spec.intersection.iter().enumerate() {
            if x.id.starts_with(BOUNDARY_PREFIX) {
                return Err(cfg(format!("intersection id {} uses the boundary prefix", x.id)));
            }
            if node_index.insert(x.id.clone(), i).is_some() {
                return Err(cfg(format!("duplicate intersection {}", x.id)));
            }
        }
        let node = |id: &str| -> Result<Node> {
            if let Some(b) = id.strip_prefix(BOUNDARY_PREFIX) {
                Ok(Node::Boundary(b.to_string()))
            } else {
                node_index
                    .get(id)
                    .map(|&i| Node::Intersection(i))
                    .ok_or_else(|| cfg(format!("link endpoint {id} is neither an intersection nor a boundary")))
            }
        };

        let mut links = Vec::with_capacity(spec.link.len());
        let mut link_index = BTreeMap::new();
        for l in &spec.link {
            if link_index.insert(l.id.clone(), links.len()).is_some() {
                return Err(cfg(format!("duplicate link {}", l.id)));
            }
            if !(l.length_m > 0.0 && l.free_speed_mps > 0.0 && l.sat_flow_vps_per_lane > 0.0 && l.lanes >= 1) {
                return Err(cfg(format!(
                    "link {} needs positive length, speed, saturation flow and at least one lane",
                    l.id
                )));
            }
            if let Some(s) = l.storage_veh {
                if !(s > 0.0) {
                    return Err(cfg(format!("link {} storage must be positive", l.id)));
                }
            }
            let (from, to) = (node(&l.from)?, node(&l.to)?);
            if matches!((&from, &to), (Node::Boundary(_), Node::Boundary(_))) {
                return Err(cfg(format!("link {} joins two boundaries", l.id)));
            }
            links.push(Link {
                id: l.id.clone(),
                from,
                to,
                length_m: l.length_m,
                free_speed_mps: l.free_speed_mps,
                lanes: l.lanes,
                sat_flow_vps_per_lane: l.sat_flow_vps_per_lane,
                storage_veh: l.storage_veh,
                approach: None,
            });
        }

        let mut intersections = Vec::new();
        let mut approaches: Vec<Approach> = Vec::new();
        for (xi, x) in spec.intersection.iter().enumerate() {
            let mut phases = Vec::new();
            for (p, ids) in x.phases.iter().enumerate() {
                let mut members = Vec::new();
                for id in ids {
                    let li = *link_index.get(id).ok_or_else(|| cfg(format!("{}: unknown approach {id}", x.id)))?;
                    if links[li].to != Node::Intersection(xi) {
                        return Err(cfg(format!("{}: approach {id} does not end there", x.id)));
                    }
                    if links[li].approach.is_some() {
                        return Err(cfg(format!("approach {id} is listed in more than one phase")));
                    }
                    links[li].approach = Some(approaches.len());
                    members.push(approaches.len());
                    approaches.push(Approach { link: li, intersection: xi, phase: p, turns: Vec::new() });
                }
                phases.push(members);
            }
            let n = phases.len();
            let d = &spec.timing;
            let timing = IntersectionTiming {
                id: x.id.clone(),
                phases: n,
                cycle_s: x.cycle_s.unwrap_or(d.cycle_s),
                lost_time_s: x.lost_time_s.unwrap_or(d.lost_time_per_phase_s * n as f64),
                g_min_s: x.g_min_s.unwrap_or(d.g_min_s),
                g_max_s: x.g_max_s.unwrap_or(d.g_max_s),
                offset_s: x.offset_s.unwrap_or(d.offset_s),
            };
            timing.validate()?;
            intersections.push(Intersection { id: x.id.clone(), timing, phases });
        }

        for (li, l) in spec.link.iter().enumerate() {
            match (&links[li].to, links[li].approach) {
                (Node::Intersection(x), None) => {
                    return Err(cfg(format!("link {} ends at {} but no phase serves it", l.id, spec.intersection[*x].id)));
                }
                (Node::Boundary(_), _) => {
                    if !l.turns.is_empty() {
                        return Err(cfg(format!("link {} leaves the network and cannot have turns", l.id)));
                    }
                }
                (Node::Intersection(x), Some(a)) => {
                    let mut turns = Vec::new();
                    for (to, r) in &l.turns {
                        let out = *link_index.get(to).ok_or_else(|| cfg(format!("{}: unknown turn target {to}", l.id)))?;
                        if links[out].from != Node::Intersection(*x) {
                            return Err(cfg(format!("{}: turn target {to} does not leave the same intersection", l.id)));
                        }
                        if !(*r >= 0.0) {
                            return Err(cfg(format!("{}: negative turning ratio toward {to}", l.id)));
                        }
                        if *r > 0.0 {
                            turns.push((out, *r));
                        }
                    }
                    let sum: f64 = turns.iter().map(|t| t.1).sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(cfg(format!("{}: turning ratios sum to {sum}, expected 1", l.id)));
                    }
                    approaches[a].turns = turns;
                }
            }
        }
        let entries = (0..links.len()).filter(|&i| matches!(links[i].from, Node::Boundary(_))).collect();
        Ok(Self { name: spec.name.clone(), intersections, links, approaches, entries, link_index, source: spec })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: NetworkFile = toml::from_str(text).map_err(|e| Error::Config(format!("network file: {e}")))?;
        Self::from_file_spec(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.source).expect("network schema serializes")
    }

    pub fn file_spec(&self) -> &NetworkFile {
        &self.source
    }

    pub fn link_id(&self, id: &str) -> Option<usize> {
        self.link_index.get(id).copied()
    }

    pub fn intersection_index(&self, id: &str) -> Option<usize> {
        self.intersections.iter().position(|x| x.id == id)
    }

    pub fn constraints(&self) -> SignalConstraints {
        SignalConstraints { intersections: self.intersections.iter().map(|x| x.timing.clone()).collect() }
    }

    pub fn approach_saturation(&self, a: usize) -> f64 {
        self.links[self.approaches[a].link].saturation_vps()
    }

    pub fn total_lane_km(&self) -> f64 {
        self.links.iter().map(|l| l.lane_km()).sum()
    }

    pub fn max_free_speed(&self) -> f64 {
        self.links.iter().map(|l| l.free_speed_mps).fold(0.0, f64::max)
    }

    /// Steady-state arrival rate at every approach when `entry_demand`
    /// (veh/s, `entries` order) is pushed through the turning ratios with
    /// unlimited capacity.
    pub fn propagate_flows(&self, entry_demand: &[f64]) -> Result<Vec<f64>> {
        if entry_demand.len() != self.entries.len() {
            return Err(Error::Dimension(format!(
                "{} entry demands for {} entries",
                entry_demand.len(),
                self.entries.len()
            )));
        }
        let mut inject = vec![0.0; self.links.len()];
        for (&l, &d) in self.entries.iter().zip(entry_demand) {
            inject[l] += d;
        }
        let mut link_flow = inject.clone();
        for _ in 0..10_000 {
            let mut next = inject.clone();
            for a in &self.approaches {
                for &(out, r) in &a.turns {
                    next[out] += r * link_flow[a.link];
                }
            }
            let change = next.iter().zip(&link_flow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            link_flow = next;
            if change < 1e-12 {
                break;
            }
        }
        Ok(self.approaches.iter().map(|a| link_flow[a.link]).collect())
    }

    /// One intersection cut out of the network: its approaches become entry
    /// links and its outgoing links become exits.
    pub fn restrict_to(&self, intersection: &str) -> Result<Self> {
        let xi = self
            .intersection_index(intersection)
            .ok_or_else(|| Error::Config(format!("unknown intersection {intersection}")))?;
        let x = &self.source.intersection[xi];
        let boundary = |id: &str| format!("{BOUNDARY_PREFIX}{id}");
        let mut link = Vec::new();
        for (li, l) in self.links.iter().enumerate() {
            let spec = &self.source.link[li];
            if l.to == Node::Intersection(xi) {
                link.push(LinkSpec { from: boundary(&spec.from), ..spec.clone() });
            } else if l.from == Node::Intersection(xi) {
                link.push(LinkSpec { to: boundary(&spec.to), turns: BTreeMap::new(), ..spec.clone() });
            }
        }
        Self::from_file_spec(NetworkFile {
            name: format!("{}:{intersection}", self.name),
            timing: self.source.timing.clone(),
            intersection: vec![x.clone()],
            link,
        })
    }
}

/// Parameters of the synthetic grid used by the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
    pub feeder_m: f64,
    pub free_speed_mps: f64,
    pub lanes: u32,
    pub sat_flow_vps_per_lane: f64,
    pub through_ratio: f64,
    /// Intersections (row, col) that lose their outer arm and become T-junctions.
    pub tees: Vec<(usize, usize)>,
    pub timing: TimingDefaults,
    pub storage: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rows: 2,
            cols: 4,
            spacing_m: 300.0,
            feeder_m: 200.0,
            free_speed_mps: 13.9,
            lanes: 2,
            sat_flow_vps_per_lane: 0.5,
            through_ratio: 0.7,
            tees: vec![(0, 1), (0, 2), (1, 2)],
            timing: TimingDefaults::default(),
            storage: false,
        }
    }
}

const DIRS: [(&str, i64, i64); 4] = [("n", -1, 0), ("e", 0, 1), ("s", 1, 0), ("w", 0, -1)];

/// Rectangular grid with split phasing (one phase per approach). The default
/// is the 8-cross study network: 2 x 4 crosses, three of them T-junctions,
/// 29 signal groups in total.
pub fn grid_network(spec: &GridSpec) -> Result<RoadNetwork> {
    let name = |r: usize, c: usize| format!("c{r}{c}");
    let inside = |r: i64, c: i64| r >= 0 && c >= 0 && (r as usize) < spec.rows && (c as usize) < spec.cols;
    // an arm toward `d` exists unless this is a tee whose missing arm is on the grid edge
    let arm = |r: usize, c: usize, d: usize| -> bool {
        let (_, dr, dc) = DIRS[d];
        let outer = !inside(r as i64 + dr, c as i64 + dc);
        !(outer && spec.tees.contains(&(r, c)))
    };
    let storage = |len: f64| spec.storage.then(|| len * spec.lanes as f64 / 7.5);
    let mut links: Vec<LinkSpec> = Vec::new();
    let mut mk = |id: String, from: String, to: String, len: f64| {
        links.push(LinkSpec {
            id,
            from,
            to,
            length_m: len,
            free_speed_mps: spec.free_speed_mps,
            lanes: spec.lanes,
            sat_flow_vps_per_lane: spec.sat_flow_vps_per_lane,
            storage_veh: storage(len),
            turns: BTreeMap::new(),
        });
    };
    // incoming link of (r, c) from direction d, and outgoing link toward d
    let in_id = |r: usize, c: usize, d: usize| format!("{}_from_{}", name(r, c), DIRS[d].0);
    let out_id = |r: usize, c: usize, d: usize| {
        let (_, dr, dc) = DIRS[d];
        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
        if inside(nr, nc) {
            in_id(nr as usize, nc as usize, (d + 2) % 4)
        } else {
            format!("{}_exit_{}", name(r, c), DIRS[d].0)
        }
    };
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            for d in 0..4 {
                if !arm(r, c, d) {
                    continue;
                }
                let (_, dr, dc) = DIRS[d];
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if inside(nr, nc) {
                    mk(in_id(r, c, d), name(nr as usize, nc as usize), name(r, c), spec.spacing_m);
                } else {
                    let b = format!("{BOUNDARY_PREFIX}{}_{}", name(r, c), DIRS[d].0);
                    mk(in_id(r, c, d), b.clone(), name(r, c), spec.feeder_m);
                    mk(out_id(r, c, d), name(r, c), b, spec.feeder_m);
                }
            }
        }
    }
    let mut intersection = Vec::new();
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let arms: Vec<usize> = (0..4).filter(|&d| arm(r, c, d)).collect();
            intersection.push(IntersectionSpec {
                id: name(r, c),
                phases: arms.iter().map(|&d| vec![in_id(r, c, d)]).collect(),
                cycle_s: None,
                lost_time_s: None,
                g_min_s: None,
                g_max_s: None,
                offset_s: None,
            });
            for &d in &arms {
                // through = opposite arm, turns = the two side arms; missing arms fold into the rest
                let through = (d + 2) % 4;
                let mut turns: Vec<(usize, f64)> = Vec::new();
                let side = (1.0 - spec.through_ratio) / 2.0;
                for (to, w) in [(through, spec.through_ratio), ((d + 1) % 4, side), ((d + 3) % 4, side)] {
                    if arms.contains(&to) {
                        turns.push((to, w));
                    }
                }
                let total: f64 = turns.iter().map(|t| t.1).sum();
                let li = links.iter().position(|l| l.id == in_id(r, c, d)).unwrap();
                let mut acc = 0.0;
                for (k, (to, w)) in turns.iter().enumerate() {
                    let ratio = if k + 1 == turns.len() { 1.0 - acc } else { w / total };
                    acc += ratio;
                    links[li].turns.insert(out_id(r, c, *to), ratio);
                }
            }
        }
    }
    RoadNetwork::from_file_spec(NetworkFile {
        name: format!("grid{}x{}", spec.rows, spec.cols),
        timing: spec.timing.clone(),
        intersection,
        link: links,
    })
}
