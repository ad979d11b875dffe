use serde::{Deserialize, Serialize};

use super::network::{ControlLaw, OscillatorNetwork};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-6, abs_tol: 1e-9, h_init: 1e-3, h_min: 1e-12, h_max: 1.0 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::Config("integrator tolerances must be positive".into()));
        }
        if !(0.0 < self.h_min && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return Err(Error::Config(format!(
                "integrator steps must satisfy 0 < h_min <= h_init <= h_max (got {}, {}, {})",
                self.h_min, self.h_init, self.h_max
            )));
        }
        Ok(())
    }
}

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(|s| s.as_slice())
    }
    pub fn push(&mut self, t: f64, y: Vec<f64>) {
        self.times.push(t);
        self.states.push(y);
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0];
const A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const E: [f64; 7] = [
    -71.0 / 57600.0,
    0.0,
    71.0 / 16695.0,
    -71.0 / 1920.0,
    17253.0 / 339200.0,
    -22.0 / 525.0,
    1.0 / 40.0,
];
// Dense output: y(t + xh) = y + h * sum_s K_s * (P[s] . [x, x^2, x^3, x^4]).
const P: [[f64; 4]; 7] = [
    [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0],
    [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0],
    [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0],
    [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0],
    [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0],
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Adaptive Dormand-Prince stepper. Keeps its step size between calls to
/// `advance`, which matters for sampled-data loops that restart often.
#[derive(Debug, Clone)]
pub struct Rk45Stepper {
    cfg: IntegratorConfig,
    h: f64,
    stats: StepStats,
    k: [Vec<f64>; 7],
    y_stage: Vec<f64>,
    y_new: Vec<f64>,
}

impl Rk45Stepper {
    pub fn new(cfg: IntegratorConfig, dim: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            h: cfg.h_init,
            stats: StepStats::default(),
            k: std::array::from_fn(|_| vec![0.0; dim]),
            y_stage: vec![0.0; dim],
            y_new: vec![0.0; dim],
        })
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    /// Advances `y` from `t0` to `t1`. Every time in `samples` that falls in
    /// `(t0, t1]` is appended to `out` via the dense interpolant; the caller
    /// passes them sorted. With `record_steps` every accepted step is stored
    /// instead.
    pub fn advance<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t0: f64,
        y: &mut [f64],
        t1: f64,
        samples: &[f64],
        record_steps: bool,
        out: &mut Trajectory,
    ) -> Result<()> {
        let n = y.len();
        if sys.dim() != n {
            return Err(Error::Dimension(format!("state has {n} entries, system expects {}", sys.dim())));
        }
        if !(t1 > t0) {
            return Ok(());
        }
        let mut next_sample = samples.partition_point(|&s| s <= t0);
        let mut t = t0;
        sys.rhs(t, y, &mut self.k[0]);
        self.stats.rhs_evals += 1;

        while t < t1 {
            let remaining = t1 - t;
            let mut h = self.h.clamp(self.cfg.h_min, self.cfg.h_max).min(remaining);
            loop {
                // stages 2..6
                for s in 1..6 {
                    for i in 0..n {
                        let mut acc = 0.0;
                        for (j, a) in A[s][..s].iter().enumerate() {
                            acc += a * self.k[j][i];
                        }
                        self.y_stage[i] = y[i] + h * acc;
                    }
                    let (done, rest) = self.k.split_at_mut(s);
                    let _ = done;
                    sys.rhs(t + C[s] * h, &self.y_stage, &mut rest[0]);
                }
                for i in 0..n {
                    let mut acc = 0.0;
                    for (s, b) in B.iter().enumerate() {
                        acc += b * self.k[s][i];
                    }
                    self.y_new[i] = y[i] + h * acc;
                }
                let (head, tail) = self.k.split_at_mut(6);
                let _ = head;
                sys.rhs(t + h, &self.y_new, &mut tail[0]);
                self.stats.rhs_evals += 6;

                let mut sq = 0.0;
                for i in 0..n {
                    let mut e = 0.0;
                    for (s, c) in E.iter().enumerate() {
                        e += c * self.k[s][i];
                    }
                    let scale = self.cfg.abs_tol + self.cfg.rel_tol * y[i].abs().max(self.y_new[i].abs());
                    let r = h * e / scale;
                    sq += r * r;
                }
                let err = if n == 0 { 0.0 } else { (sq / n as f64).sqrt() };

                if err <= 1.0 {
                    let factor = if err == 0.0 { MAX_FACTOR } else { (SAFETY * err.powf(-0.2)).min(MAX_FACTOR) };
                    // only grow the stored step when this one was not cut short by t1
                    if h < remaining || factor < 1.0 {
                        self.h = (h * factor).clamp(self.cfg.h_min, self.cfg.h_max);
                    }
                    break;
                }
                self.stats.rejected += 1;
                let factor = if err.is_finite() { (SAFETY * err.powf(-0.2)).max(MIN_FACTOR) } else { MIN_FACTOR };
                let shrunk = h * factor;
                if shrunk < self.cfg.h_min {
                    return Err(Error::Integration {
                        t,
                        reason: format!("step size {shrunk:e} fell below h_min {:e}", self.cfg.h_min),
                        last_state: y.to_vec(),
                    });
                }
                h = shrunk;
            }
            self.stats.accepted += 1;
            let t_new = if h >= remaining { t1 } else { t + h };

            while next_sample < samples.len() && samples[next_sample] <= t_new {
                let ts = samples[next_sample];
                let x = (ts - t) / h;
                out.push(ts, self.interpolate(y, h, x));
                next_sample += 1;
            }
            y.copy_from_slice(&self.y_new);
            if record_steps {
                out.push(t_new, y.to_vec());
            }
            let (first, rest) = self.k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
            t = t_new;
        }
        out.stats = self.stats;
        Ok(())
    }

    fn interpolate(&self, y: &[f64], h: f64, x: f64) -> Vec<f64> {
        let powers = [x, x * x, x * x * x, x * x * x * x];
        let weights: [f64; 7] = std::array::from_fn(|s| P[s].iter().zip(powers).map(|(p, q)| p * q).sum());
        (0..y.len())
            .map(|i| y[i] + h * (0..7).map(|s| weights[s] * self.k[s][i]).sum::<f64>())
            .collect()
    }
}

/// Integrates any system over `t_span`. With `sample_times` the trajectory
/// holds `t_span.0` plus the requested samples; without, every accepted step.
pub fn integrate_system<S: OdeSystem + ?Sized>(
    sys: &S,
    y0: &[f64],
    t_span: (f64, f64),
    sample_times: Option<&[f64]>,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::Config(format!("empty integration interval [{t0}, {t1}]")));
    }
    let mut stepper = Rk45Stepper::new(*cfg, y0.len())?;
    let mut traj = Trajectory::default();
    let include_start = sample_times.map_or(true, |s| s.first().map_or(false, |&f| f <= t0));
    if include_start {
        traj.push(t0, y0.to_vec());
    }
    let mut y = y0.to_vec();
    let samples = sample_times.unwrap_or(&[]);
    stepper.advance(sys, t0, &mut y, t1, samples, sample_times.is_none(), &mut traj)?;
    Ok(traj)
}

struct Closed<'a, L: ControlLaw + ?Sized> {
    net: &'a OscillatorNetwork,
    law: &'a L,
    scratch: std::cell::RefCell<Vec<f64>>,
}

impl<L: ControlLaw + ?Sized> OdeSystem for Closed<'_, L> {
    fn dim(&self) -> usize {
        self.net.n()
    }
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let mut u = self.scratch.borrow_mut();
        self.law.control(t, y, &mut u);
        self.net.rhs_into(t, y, &u, dy);
    }
}

impl OscillatorNetwork {
    /// Wraps the network and a control law as an ODE system.
    pub fn system<'a, L: ControlLaw + ?Sized>(&'a self, law: &'a L) -> impl OdeSystem + 'a {
        Closed { net: self, law, scratch: std::cell::RefCell::new(vec![0.0; self.n()]) }
    }
}

/// Integrates the network from its stored phases.
pub fn integrate<L: ControlLaw + ?Sized>(
    net: &OscillatorNetwork,
    law: &L,
    cfg: &IntegratorConfig,
    t_span: (f64, f64),
    sample_times: Option<&[f64]>,
) -> Result<Trajectory> {
    let sys = net.system(law);
    integrate_system(&sys, net.theta(), t_span, sample_times, cfg)
}
