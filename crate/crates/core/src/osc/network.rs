use crate::error::{Error, Result};

/// Phase-oscillator network. Immutable after construction apart from the
/// phase vector, so it can be shared read-only across workers.
#[derive(Debug, Clone)]
pub struct OscillatorNetwork {
    theta: Vec<f64>,
    omega: Vec<f64>,
    k: Vec<f64>,
    adjacency: Vec<f64>,
    forcing_gain: Vec<f64>,
    forcing_phase: f64,
    forcing_rate: f64,
    // sparse copy of `adjacency`, rebuilt on construction
    neighbors: Vec<Vec<(usize, f64)>>,
}

/// Feedback evaluated inside the right-hand side. Writes the additive
/// regularizing term for every oscillator into `out`.
pub trait ControlLaw {
    fn control(&self, t: f64, theta: &[f64], out: &mut [f64]);
}

/// The uncontrolled model.
pub struct ZeroControl;

impl ControlLaw for ZeroControl {
    fn control(&self, _t: f64, _theta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|u| *u = 0.0);
    }
}

/// Control held constant over an interval (sampled-data feedback).
impl ControlLaw for [f64] {
    fn control(&self, _t: f64, _theta: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self);
    }
}

impl ControlLaw for Vec<f64> {
    fn control(&self, t: f64, theta: &[f64], out: &mut [f64]) {
        self.as_slice().control(t, theta, out)
    }
}

impl OscillatorNetwork {
    pub fn new(
        theta: Vec<f64>,
        omega: Vec<f64>,
        k: Vec<f64>,
        adjacency: Vec<Vec<f64>>,
        forcing_gain: Vec<f64>,
        forcing_phase: f64,
    ) -> Result<Self> {
        let n = theta.len();
        if omega.len() != n || k.len() != n || forcing_gain.len() != n || adjacency.len() != n {
            return Err(Error::Dimension(format!(
                "theta {n}, omega {}, k {}, forcing {}, adjacency rows {}",
                omega.len(),
                k.len(),
                forcing_gain.len(),
                adjacency.len()
            )));
        }
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in adjacency.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!("adjacency row {i} has {} entries, expected {n}", row.len())));
            }
            flat.extend_from_slice(row);
        }
        for i in 0..n {
            if flat[i * n + i] != 0.0 {
                return Err(Error::Config(format!("adjacency diagonal entry {i} is nonzero")));
            }
            for j in 0..n {
                let a = flat[i * n + j];
                if !(a >= 0.0) || !a.is_finite() {
                    return Err(Error::Config(format!("adjacency[{i}][{j}] = {a} is not a finite nonnegative weight")));
                }
                if a != flat[j * n + i] {
                    return Err(Error::Config(format!("adjacency is not symmetric at ({i}, {j})")));
                }
            }
        }
        if let Some(w) = omega.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::Config(format!("natural frequency {w} must be positive")));
        }
        if let Some(c) = k.iter().find(|c| !(**c >= 0.0)) {
            return Err(Error::Config(format!("flow coupling {c} must be nonnegative")));
        }
        if let Some(f) = forcing_gain.iter().find(|f| !(**f >= 0.0)) {
            return Err(Error::Config(format!("forcing gain {f} must be nonnegative")));
        }
        let neighbors = (0..n)
            .map(|i| (0..n).filter_map(|j| (flat[i * n + j] > 0.0).then(|| (j, flat[i * n + j]))).collect())
            .collect();
        Ok(Self {
            theta,
            omega,
            k,
            adjacency: flat,
            forcing_gain,
            forcing_phase,
            forcing_rate: 0.0,
            neighbors,
        })
    }

    /// Lets the forcing reference rotate: θ*(t) = θ*₀ + rate·t.
    pub fn with_forcing_rate(mut self, rate: f64) -> Self {
        self.forcing_rate = rate;
        self
    }

    pub fn with_theta(mut self, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != self.n() {
            return Err(Error::Dimension(format!("theta has {} entries, network has {}", theta.len(), self.n())));
        }
        self.theta = theta;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }
    pub fn k(&self) -> &[f64] {
        &self.k
    }
    pub fn forcing_gain(&self) -> &[f64] {
        &self.forcing_gain
    }
    pub fn forcing_phase(&self) -> f64 {
        self.forcing_phase
    }
    pub fn forcing_rate(&self) -> f64 {
        self.forcing_rate
    }
    pub fn adjacency(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i * self.n() + j]
    }
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }
    pub fn is_coupled(&self, i: usize, j: usize) -> bool {
        self.adjacency(i, j) > 0.0
    }

    pub fn reference(&self, t: f64) -> f64 {
        self.forcing_phase + self.forcing_rate * t
    }

    /// dθ/dt at an arbitrary state; `control` is the additive term per oscillator.
    pub fn rhs_into(&self, t: f64, theta: &[f64], control: &[f64], out: &mut [f64]) {
        let reference = self.reference(t);
        for i in 0..self.n() {
            let ti = theta[i];
            let coupling: f64 = self.neighbors[i].iter().map(|&(j, a)| a * (theta[j] - ti).sin()).sum();
            out[i] = self.omega[i]
                + self.k[i] * coupling
                + self.forcing_gain[i] * (reference - ti).sin()
                + control[i];
        }
    }

    /// d²θ/dt² along the trajectory, with the control held constant.
    pub fn theta_ddot_into(&self, t: f64, theta: &[f64], theta_dot: &[f64], out: &mut [f64]) {
        let reference = self.reference(t);
        for i in 0..self.n() {
            let (ti, di) = (theta[i], theta_dot[i]);
            let coupling: f64 = self.neighbors[i]
                .iter()
                .map(|&(j, a)| a * (theta[j] - ti).cos() * (theta_dot[j] - di))
                .sum();
            out[i] = self.k[i] * coupling
                + self.forcing_gain[i] * (reference - ti).cos() * (self.forcing_rate - di);
        }
    }
}

/// Phase velocities at the network's stored state.
pub fn oscillator_rhs(net: &OscillatorNetwork, control: &[f64], t: f64) -> Result<Vec<f64>> {
    if control.len() != net.n() {
        return Err(Error::Dimension(format!("control has {} entries, network has {}", control.len(), net.n())));
    }
    let mut out = vec![0.0; net.n()];
    net.rhs_into(t, net.theta(), control, &mut out);
    Ok(out)
}
