use std::io::Write;

use super::integrator::Trajectory;
use super::network::OscillatorNetwork;
use crate::error::{Error, Result};

/// Pairwise phase coherence ρ_ij = cos(θ_i − θ_j).
#[derive(Debug, Clone, PartialEq)]
pub struct SyncMatrix {
    n: usize,
    rho: Vec<f64>,
    pub time: f64,
}

impl SyncMatrix {
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rho[i * self.n + j]
    }
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rho.chunks(self.n.max(1))
    }
}

pub fn sync_matrix(theta: &[f64], time: f64) -> SyncMatrix {
    let n = theta.len();
    let mut rho = vec![0.0; n * n];
    for i in 0..n {
        rho[i * n + i] = 1.0;
        for j in i + 1..n {
            let c = (theta[i] - theta[j]).cos().clamp(-1.0, 1.0);
            rho[i * n + j] = c;
            rho[j * n + i] = c;
        }
    }
    SyncMatrix { n, rho, time }
}

/// Kuramoto order parameter r = |Σ e^{iθ}| / n.
pub fn order_parameter(theta: &[f64]) -> f64 {
    if theta.is_empty() {
        return 1.0;
    }
    let (c, s) = theta.iter().fold((0.0, 0.0), |(c, s), t| (c + t.cos(), s + t.sin()));
    (c * c + s * s).sqrt() / theta.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSync {
    pub i: usize,
    pub j: usize,
    /// `None` when the pair never stays above the threshold until the end.
    pub time: Option<f64>,
    /// θ_j − θ_i at the first sample, wrapped to (−π, π]. Positive when i
    /// started behind j.
    pub initial_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSyncTimes {
    pub n: usize,
    pub pairs: Vec<PairSync>,
    pub t_start: f64,
    pub t_end: f64,
}

impl PairSyncTimes {
    pub fn all_synchronized(&self) -> bool {
        self.pairs.iter().all(|p| p.time.is_some())
    }

    /// Time at which every coupled pair has settled, if all have.
    pub fn consensus_time(&self) -> Option<f64> {
        self.pairs.iter().try_fold(self.t_start, |acc, p| p.time.map(|t| acc.max(t)))
    }
}

/// Earliest sample from which `coherent` holds through the end.
fn sustained(traj: &Trajectory, coherent: impl Fn(usize) -> bool) -> Option<f64> {
    let mut first = None;
    for idx in (0..traj.len()).rev() {
        if !coherent(idx) {
            break;
        }
        first = Some(traj.times[idx]);
    }
    first
}

/// Sustained synchronization time for every coupled pair: the earliest sample
/// after which ρ_ij stays above `tau` through the end of the trajectory.
pub fn time_to_sync(traj: &Trajectory, net: &OscillatorNetwork, tau: f64) -> Result<PairSyncTimes> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Config(format!("sync threshold {tau} must lie in (0, 1)")));
    }
    if traj.is_empty() {
        return Err(Error::Config("empty trajectory".into()));
    }
    let n = net.n();
    if traj.states[0].len() != n {
        return Err(Error::Dimension(format!(
            "trajectory has {} oscillators, network has {n}",
            traj.states[0].len()
        )));
    }
    let mut pairs = Vec::new();
    for i in 0..n {
        for &(j, _) in net.neighbors(i) {
            if j <= i {
                continue;
            }
            let time = sustained(traj, |idx| {
                let s = &traj.states[idx];
                (s[i] - s[j]).cos() > tau
            });
            let d = traj.states[0][j] - traj.states[0][i];
            let initial_gap = d - std::f64::consts::TAU * ((d + std::f64::consts::PI) / std::f64::consts::TAU).ceil() + std::f64::consts::TAU;
            pairs.push(PairSync { i, j, time, initial_gap });
        }
    }

    Ok(PairSyncTimes {
        n,
        pairs,
        t_start: traj.times[0],
        t_end: *traj.times.last().unwrap(),
    })
}

/// Per-oscillator catch-up time: over its coupled pairs, the mean of the
/// pair's settling time (relative to `t_start`, end of trajectory if it never
/// settled), counted positive when the oscillator started behind its partner
/// and negative when it started ahead. Isolated oscillators get zero.
pub fn per_oscillator_sync_times(sync: &PairSyncTimes) -> Vec<f64> {
    let mut sum = vec![0.0; sync.n];
    let mut count = vec![0usize; sync.n];
    for p in &sync.pairs {
        let t = p.time.unwrap_or(sync.t_end) - sync.t_start;
        let dir = if p.initial_gap.abs() < 1e-12 { 0.0 } else { p.initial_gap.signum() };
        sum[p.i] += dir * t;
        sum[p.j] -= dir * t;
        count[p.i] += 1;
        count[p.j] += 1;
    }
    sum.iter().zip(&count).map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 }).collect()
}

/// CSV with header `t,theta_0,...`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let n = traj.states.first().map_or(0, |s| s.len());
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("theta_{i}")));
    wr.write_record(&header).map_err(csv_err)?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![format!("{t}")];
        row.extend(s.iter().map(|v| format!("{v}")));
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::io("<trajectory>", e))?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Run(format!("csv write failed: {e}"))
}
