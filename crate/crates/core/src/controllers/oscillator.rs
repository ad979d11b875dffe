//! Oscillator-based planners: the uncontrolled network (ROBUST) and the
//! sliding-mode regularized network (ANTIFRAGILE).

use serde::{Deserialize, Serialize};

use super::{DecisionInput, SignalController};
use crate::error::{Error, Result};
use crate::mesosim::RoadNetwork;
use crate::osc::{
    extract_green_times, time_to_sync, DeltaScale, GreenExtraction, IntegratorConfig, LayoutParams,
    OscillatorLayout, OscillatorNetwork, PairSyncTimes, Rk45Stepper, Trajectory, ZeroControl,
};
use crate::signal::{SignalConstraints, SignalPlan};
use crate::smc::{antifragile_controller_step, SlidingState, SmcGains, SmcParams, StepInput, ThetaDdotMode, TrajSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustConfig {
    pub layout: LayoutParams,
    pub integrator: IntegratorConfig,
    pub sync_threshold: f64,
    /// Shortest span simulated; also the span the cycle-relative green scale
    /// refers to.
    pub horizon_s: f64,
    /// Past the horizon, integration continues until every coupled pair
    /// rotates at the same rate within this tolerance (rad/s).
    pub steady_tol: f64,
    /// Hard stop when steady state is not reached.
    pub max_horizon_s: f64,
    pub sample_dt_s: f64,
    pub extraction: GreenExtraction,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            layout: LayoutParams::default(),
            integrator: IntegratorConfig::default(),
            sync_threshold: 0.95,
            horizon_s: 20.0,
            steady_tol: 1e-4,
            max_horizon_s: 120.0,
            sample_dt_s: 0.1,
            extraction: GreenExtraction::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AntifragileConfig {
    pub layout: LayoutParams,
    pub integrator: IntegratorConfig,
    pub smc: SmcParams,
    pub sync_threshold: f64,
    /// Longest span simulated per decision.
    pub horizon_s: f64,
    /// Controller updates per horizon.
    pub controller_steps: usize,
    /// The run stops once every |σ| is below this and all coupled pairs are
    /// synchronized.
    pub sigma_tol: f64,
    /// Bound on |b·u|; zero disables it.
    pub control_cap: f64,
    pub theta_ddot: ThetaDdotMode,
    pub extraction: GreenExtraction,
}

impl Default for AntifragileConfig {
    fn default() -> Self {
        Self {
            layout: LayoutParams::default(),
            integrator: IntegratorConfig::default(),
            smc: SmcParams::default(),
            sync_threshold: 0.95,
            horizon_s: 20.0,
            controller_steps: 100,
            sigma_tol: 0.03,
            control_cap: 0.5,
            theta_ddot: ThetaDdotMode::Analytic,
            extraction: GreenExtraction { scale: DeltaScale::CyclePerConsensus, gain: 0.3, ..GreenExtraction::default() },
        }
    }
}

fn check_span(horizon: f64, dt: f64) -> Result<()> {
    if !(horizon > 0.0 && dt > 0.0 && dt <= horizon) {
        return Err(Error::Config(format!("planner horizon {horizon} s and step {dt} s must be positive with step ≤ horizon")));
    }
    Ok(())
}

/// Last plan marked stale, or the nominal plan when there is none yet.
fn stale(last: &Option<SignalPlan>, constraints: &SignalConstraints) -> SignalPlan {
    let mut p = last.clone().unwrap_or_else(|| SignalPlan::nominal(constraints));
    p.stale = true;
    p
}

pub struct RobustController {
    layout: OscillatorLayout,
    constraints: SignalConstraints,
    cfg: RobustConfig,
    last: Option<SignalPlan>,
}

impl RobustController {
    pub fn new(net: &RoadNetwork, cfg: RobustConfig) -> Result<Self> {
        check_span(cfg.horizon_s, cfg.sample_dt_s)?;
        if !(cfg.steady_tol > 0.0 && cfg.max_horizon_s >= cfg.horizon_s) {
            return Err(Error::Config("steady-state tolerance must be positive and the hard stop at least the horizon".into()));
        }
        cfg.integrator.validate()?;
        Ok(Self { layout: OscillatorLayout::new(net, cfg.layout.clone())?, constraints: net.constraints(), cfg, last: None })
    }

    /// Trajectory of the uncontrolled network for one flow sample, sampled
    /// every `sample_dt_s` until steady state.
    pub fn run(&self, flows: &[f64]) -> Result<(OscillatorNetwork, Trajectory)> {
        let net = self.layout.build(flows)?;
        let n = net.n();
        let cfg = &self.cfg;
        let mut stepper = Rk45Stepper::new(cfg.integrator, n)?;
        let mut theta = net.theta().to_vec();
        let mut rate = vec![0.0; n];
        let zero = vec![0.0; n];
        let mut traj = Trajectory::default();
        traj.push(0.0, theta.clone());
        let sys = net.system(&ZeroControl);
        let mut samples = Vec::new();
        let mut t0 = 0.0;
        let mut k = 0usize;
        loop {
            // steady state is checked once per second of model time
            let t1 = (t0 + 1.0f64).min(cfg.max_horizon_s);
            samples.clear();
            while (k as f64 + 1.0) * cfg.sample_dt_s <= t1 + 1e-9 {
                k += 1;
                samples.push((k as f64 * cfg.sample_dt_s).min(t1));
            }
            stepper.advance(&sys, t0, &mut theta, t1, &samples, false, &mut traj)?;
            t0 = t1;
            if t1 >= cfg.max_horizon_s {
                break;
            }
            if t1 + 1e-9 >= cfg.horizon_s {
                net.rhs_into(t1, &theta, &zero, &mut rate);
                let steady = (0..n).all(|i| net.neighbors(i).iter().all(|&(j, _)| (rate[i] - rate[j]).abs() < cfg.steady_tol));
                if steady {
                    break;
                }
            }
        }
        drop(sys);
        Ok((net, traj))
    }
}

impl SignalController for RobustController {
    fn name(&self) -> &str {
        "ROBUST"
    }

    fn decide(&mut self, input: &DecisionInput<'_>) -> Result<SignalPlan> {
        let (net, traj) = self.run(input.flows)?;
        let mut sync = time_to_sync(&traj, &net, self.cfg.sync_threshold)?;
        if !sync.all_synchronized() {
            return Ok(stale(&self.last, &self.constraints));
        }
        // greens scale with the nominal horizon, not the steady-state tail
        sync.t_end = sync.t_end.min(sync.t_start + self.cfg.horizon_s);
        let plan = extract_green_times(&sync, &net, self.layout.groups(), &self.constraints, &self.cfg.extraction)?;
        plan.check(&self.constraints)?;
        self.last = Some(plan.clone());
        Ok(plan)
    }
}

/// Outcome of one regularized run.
#[derive(Debug, Clone)]
pub struct RegularizedRun {
    pub net: OscillatorNetwork,
    pub trajectory: Trajectory,
    pub sync: PairSyncTimes,
    /// Sliding state after every controller step.
    pub states: Vec<(f64, SlidingState)>,
    pub converged: bool,
}

pub struct AntifragileController {
    layout: OscillatorLayout,
    constraints: SignalConstraints,
    gains: SmcGains,
    cfg: AntifragileConfig,
    last: Option<SignalPlan>,
}

impl AntifragileController {
    pub fn new(net: &RoadNetwork, cfg: AntifragileConfig) -> Result<Self> {
        check_span(cfg.horizon_s, cfg.horizon_s / cfg.controller_steps.max(1) as f64)?;
        if cfg.controller_steps == 0 || !(cfg.sigma_tol > 0.0) || !(cfg.control_cap >= 0.0) {
            return Err(Error::Config("controller steps and sigma tolerance must be positive, the control cap non-negative".into()));
        }
        cfg.integrator.validate()?;
        Ok(Self {
            layout: OscillatorLayout::new(net, cfg.layout.clone())?,
            constraints: net.constraints(),
            gains: SmcGains::new(cfg.smc)?,
            cfg,
            last: None,
        })
    }

    /// Sampled-data loop: the sliding-mode step sets a control held constant
    /// while RK45 advances the network to the next controller instant.
    pub fn run(&self, flows: &[f64], keep_states: bool) -> Result<RegularizedRun> {
        let net = self.layout.build(flows)?;
        let n = net.n();
        let cfg = &self.cfg;
        let dt = cfg.horizon_s / cfg.controller_steps as f64;
        let adjacency = self.layout.adjacency();
        let mut stepper = Rk45Stepper::new(cfg.integrator, n)?;
        let mut theta = net.theta().to_vec();
        let mut traj = Trajectory::default();
        traj.push(0.0, theta.clone());
        let mut control = vec![0.0; n];
        let mut theta_dot = vec![0.0; n];
        let mut window: Vec<TrajSample> = Vec::with_capacity(4);
        let mut state = SlidingState::new(n, self.gains.phi);
        let mut states = Vec::new();
        let mut converged = false;
        for m in 0..cfg.controller_steps {
            let t = m as f64 * dt;
            net.rhs_into(t, &theta, &control, &mut theta_dot);
            if window.len() == 3 {
                window.remove(0);
            }
            window.push(TrajSample { t, theta: theta.clone(), theta_dot: theta_dot.clone() });
            let input = StepInput { net: &net, adjacency, window: &window, mode: cfg.theta_ddot };
            let first = m == 0;
            let (mut u, mut next) = antifragile_controller_step(&input, &state, &self.gains, dt)?;
            if first {
                // surplus energy starts at the initial distance from the manifold
                next.s = next.sigma.iter().map(|v| v.abs()).collect();
            }
            if cfg.control_cap > 0.0 {
                u.iter_mut().for_each(|v| *v = v.clamp(-cfg.control_cap, cfg.control_cap));
            }
            state = next;
            control = u;
            if keep_states {
                states.push((t, state.clone()));
            }
            let sys = net.system(&control);
            stepper.advance(&sys, t, &mut theta, t + dt, &[t + dt], false, &mut traj)?;
            let settled = state.sigma.iter().all(|s| s.abs() < cfg.sigma_tol)
                && (0..n).all(|i| net.neighbors(i).iter().all(|&(j, _)| (theta[i] - theta[j]).cos() > cfg.sync_threshold));
            if settled {
                converged = true;
                break;
            }
        }
        let sync = time_to_sync(&traj, &net, cfg.sync_threshold)?;
        converged &= sync.all_synchronized();
        Ok(RegularizedRun { net, trajectory: traj, sync, states, converged })
    }
}

impl SignalController for AntifragileController {
    fn name(&self) -> &str {
        "ANTIFRAGILE"
    }

    fn decide(&mut self, input: &DecisionInput<'_>) -> Result<SignalPlan> {
        let run = self.run(input.flows, false)?;
        if !run.sync.all_synchronized() {
            return Ok(stale(&self.last, &self.constraints));
        }
        let plan = extract_green_times(&run.sync, &run.net, self.layout.groups(), &self.constraints, &self.cfg.extraction)?;
        plan.check(&self.constraints)?;
        self.last = Some(plan.clone());
        Ok(plan)
    }
}
