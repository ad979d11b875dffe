#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigsync::osc::{OdeSystem, OscillatorNetwork};

/// Square lattice with unit nearest-neighbour weights, unit gains and
/// frequencies, no forcing, and phases drawn from an open half circle.
pub fn lattice(side: usize, seed: u64) -> OscillatorNetwork {
    let n = side * side;
    let mut a = vec![vec![0.0; n]; n];
    for r in 0..side {
        for c in 0..side {
            let i = r * side + c;
            if c + 1 < side {
                a[i][i + 1] = 1.0;
                a[i + 1][i] = 1.0;
            }
            if r + 1 < side {
                a[i][i + side] = 1.0;
                a[i + side][i] = 1.0;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = (0..n).map(|_| rng.gen_range(0.0..0.9 * PI)).collect();
    OscillatorNetwork::new(theta, vec![1.0; n], vec![1.0; n], a, vec![0.0; n], 0.0).unwrap()
}

/// Classic fixed-step RK4, sampled at the requested times (multiples of `h`).
pub fn rk4_reference<S: OdeSystem + ?Sized>(sys: &S, y0: &[f64], t_end: f64, h: f64, samples: &[f64]) -> Vec<Vec<f64>> {
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut out = Vec::new();
    let mut next = 0;
    let steps = (t_end / h).round() as usize;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for s in 0..=steps {
        let t = s as f64 * h;
        while next < samples.len() && (samples[next] - t).abs() < h / 2.0 {
            out.push(y.clone());
            next += 1;
        }
        if s == steps {
            break;
        }
        sys.rhs(t, &y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        sys.rhs(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        sys.rhs(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        sys.rhs(t + h, &tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    out
}

use sigsync::controllers::{DecisionInput, SignalController};
use sigsync::mesosim::RoadNetwork;
use sigsync::signal::SignalPlan;

/// One cross fed from the west and the north, one lane each, both turning
/// straight through. `phases` is the phase list in TOML form.
pub fn cross_toml(phases: &str, cycle: f64, g_max: f64) -> String {
    format!(
        r#"name = "cross"

[timing]
cycle_s = {cycle}
lost_time_per_phase_s = 0.0
g_min_s = 5.0
g_max_s = {g_max}
offset_s = 0.0

[[intersection]]
id = "x"
phases = {phases}

[[link]]
id = "in_w"
from = "@w"
to = "x"
length_m = 139.0
free_speed_mps = 13.9
lanes = 1
sat_flow_vps_per_lane = 0.5
turns = {{ out_e = 1.0 }}

[[link]]
id = "in_n"
from = "@n"
to = "x"
length_m = 139.0
free_speed_mps = 13.9
lanes = 1
sat_flow_vps_per_lane = 0.5
turns = {{ out_s = 1.0 }}

[[link]]
id = "out_e"
from = "x"
to = "@e"
length_m = 139.0
free_speed_mps = 13.9
lanes = 1
sat_flow_vps_per_lane = 0.5

[[link]]
id = "out_s"
from = "x"
to = "@s"
length_m = 139.0
free_speed_mps = 13.9
lanes = 1
sat_flow_vps_per_lane = 0.5
"#
    )
}

/// Two phases of 30 s in a 60 s cycle, no lost time.
pub fn two_phase_cross() -> RoadNetwork {
    RoadNetwork::from_toml_str(&cross_toml(r#"[["in_w"], ["in_n"]]"#, 60.0, 55.0)).unwrap()
}

/// A single phase holding the whole cycle: both approaches always green.
pub fn always_green_cross() -> RoadNetwork {
    RoadNetwork::from_toml_str(&cross_toml(r#"[["in_w", "in_n"]]"#, 60.0, 60.0)).unwrap()
}

/// Always returns the same plan.
pub struct FixedPlan(pub SignalPlan);

impl SignalController for FixedPlan {
    fn name(&self) -> &str {
        "FIXED"
    }
    fn decide(&mut self, _: &DecisionInput<'_>) -> sigsync::Result<SignalPlan> {
        Ok(self.0.clone())
    }
}
