use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::OscillatorNetwork;
use crate::error::{Error, Result};
use crate::mesosim::{Node, RoadNetwork};

/// Intersection and phase driven by one oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalGroup {
    pub intersection: usize,
    pub phase: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutParams {
    /// Coupling between phases of the same intersection.
    pub intra_weight: f64,
    /// Coupling between a phase and the upstream phase feeding its approach.
    pub inter_weight: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub forcing_gain: f64,
    pub forcing_phase: f64,
    /// Rotation rate of the forcing reference (rad/s).
    pub forcing_rate: f64,
    /// Flow ratio that maps onto the largest initial phase lag.
    pub flow_ratio_ref: f64,
    /// Largest initial lag behind the reference (rad).
    pub max_lag: f64,
    /// Seed for the natural frequencies.
    pub seed: u64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            intra_weight: 4.0,
            inter_weight: 1.0,
            omega_min: 0.95,
            omega_max: 1.05,
            forcing_gain: 0.5,
            forcing_phase: 0.0,
            forcing_rate: 1.0,
            flow_ratio_ref: 0.3,
            max_lag: 0.9 * std::f64::consts::PI,
            seed: 7,
        }
    }
}

impl LayoutParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.intra_weight >= 0.0 && self.inter_weight >= 0.0) {
            return Err(Error::Config("coupling weights must be nonnegative".into()));
        }
        if !(0.0 < self.omega_min && self.omega_min <= self.omega_max) {
            return Err(Error::Config("natural frequency range must be positive and ordered".into()));
        }
        if !(self.forcing_gain >= 0.0 && self.flow_ratio_ref > 0.0 && self.max_lag >= 0.0) {
            return Err(Error::Config("forcing gain, reference flow ratio and lag must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Static mapping from a road network to an oscillator network. Built once
/// per controller; `build` turns a flow sample into a fresh network.
#[derive(Debug, Clone)]
pub struct OscillatorLayout {
    groups: Vec<SignalGroup>,
    group_approaches: Vec<Vec<usize>>,
    saturation: Vec<f64>,
    adjacency: Vec<Vec<f64>>,
    omega: Vec<f64>,
    params: LayoutParams,
}

impl OscillatorLayout {
    pub fn new(net: &RoadNetwork, params: LayoutParams) -> Result<Self> {
        params.validate()?;
        let mut groups = Vec::new();
        let mut group_approaches = Vec::new();
        let mut index = vec![Vec::new(); net.intersections.len()];
        for (xi, x) in net.intersections.iter().enumerate() {
            for (p, members) in x.phases.iter().enumerate() {
                index[xi].push(groups.len());
                groups.push(SignalGroup { intersection: xi, phase: p });
                group_approaches.push(members.clone());
            }
        }
        let n = groups.len();
        let mut adjacency = vec![vec![0.0; n]; n];
        for ids in &index {
            for &a in ids {
                for &b in ids {
                    if a != b {
                        adjacency[a][b] = params.intra_weight;
                    }
                }
            }
        }
        if params.inter_weight > 0.0 {
            for (g, members) in group_approaches.iter().enumerate() {
                for &a in members {
                    let link = net.approaches[a].link;
                    let Node::Intersection(up) = net.links[link].from else { continue };
                    // upstream approach sending the most traffic into this link
                    let feeder = net
                        .approaches
                        .iter()
                        .filter(|ap| ap.intersection == up)
                        .filter_map(|ap| ap.turns.iter().find(|t| t.0 == link).map(|t| (ap.phase, t.1)))
                        .max_by(|x, y| x.1.total_cmp(&y.1));
                    if let Some((phase, _)) = feeder {
                        let h = index[up][phase];
                        adjacency[g][h] = adjacency[g][h].max(params.inter_weight);
                        adjacency[h][g] = adjacency[g][h];
                    }
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let omega = (0..n)
            .map(|_| {
                if params.omega_max > params.omega_min {
                    rng.gen_range(params.omega_min..params.omega_max)
                } else {
                    params.omega_min
                }
            })
            .collect();
        let saturation = (0..net.approaches.len()).map(|a| net.approach_saturation(a)).collect();
        Ok(Self { groups, group_approaches, saturation, adjacency, omega, params })
    }

    pub fn n(&self) -> usize {
        self.groups.len()
    }
    pub fn groups(&self) -> &[SignalGroup] {
        &self.groups
    }
    pub fn params(&self) -> &LayoutParams {
        &self.params
    }
    pub fn adjacency(&self) -> &[Vec<f64>] {
        &self.adjacency
    }
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Flow coupling per oscillator: the critical flow ratio of its phase,
    /// measured flow over saturation flow, clamped to [0, 1].
    pub fn couplings(&self, flows: &[f64]) -> Result<Vec<f64>> {
        if flows.len() != self.saturation.len() {
            return Err(Error::Dimension(format!(
                "{} flows for {} approaches",
                flows.len(),
                self.saturation.len()
            )));
        }
        Ok(self
            .group_approaches
            .iter()
            .map(|members| {
                members
                    .iter()
                    .map(|&a| (flows[a] / self.saturation[a]).clamp(0.0, 1.0))
                    .fold(0.0, f64::max)
            })
            .collect())
    }

    /// Oscillator network for one flow sample. Heavier phases start further
    /// behind the rotating reference, so they settle later.
    pub fn build(&self, flows: &[f64]) -> Result<OscillatorNetwork> {
        let k = self.couplings(flows)?;
        let p = &self.params;
        let theta = k
            .iter()
            .map(|&ki| p.forcing_phase - p.max_lag * (ki / p.flow_ratio_ref).min(1.0))
            .collect();
        Ok(OscillatorNetwork::new(
            theta,
            self.omega.clone(),
            k,
            self.adjacency.clone(),
            vec![p.forcing_gain; self.n()],
            p.forcing_phase,
        )?
        .with_forcing_rate(p.forcing_rate))
    }
}
