use std::f64::consts::PI;

use proptest::prelude::*;
use sigsync::osc::*;
use sigsync::signal::{IntersectionTiming, SignalConstraints};

mod common;
use common::{lattice, rk4_reference};

fn uncoupled(theta: Vec<f64>, omega: Vec<f64>) -> OscillatorNetwork {
    let n = theta.len();
    OscillatorNetwork::new(theta, omega, vec![0.0; n], vec![vec![0.0; n]; n], vec![0.0; n], 0.0).unwrap()
}

fn ring3() -> OscillatorNetwork {
    let a = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
    OscillatorNetwork::new(vec![0.0, 2.0, 4.0], vec![0.95, 1.0, 1.05], vec![0.8, 0.5, 0.3], a, vec![0.5; 3], 0.0).unwrap()
}

#[test]
fn rhs_without_coupling_is_natural_frequency() {
    let net = uncoupled(vec![0.3, -1.0], vec![1.0, 2.0]);
    assert_eq!(oscillator_rhs(&net, &[0.0, 0.0], 0.0).unwrap(), vec![1.0, 2.0]);
}

#[test]
fn rhs_of_equal_phases_has_no_coupling_term() {
    let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let net = OscillatorNetwork::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0], a, vec![0.0, 0.0], 0.0).unwrap();
    assert_eq!(oscillator_rhs(&net, &[0.0, 0.0], 0.0).unwrap(), vec![1.0, 1.0]);
}

#[test]
fn rhs_rejects_wrong_control_length() {
    let net = uncoupled(vec![0.0, 0.0], vec![1.0, 1.0]);
    assert!(matches!(oscillator_rhs(&net, &[0.0], 0.0), Err(sigsync::Error::Dimension(_))));
}

#[test]
fn network_rejects_asymmetric_or_negative_inputs() {
    let bad = vec![vec![0.0, 1.0], vec![0.5, 0.0]];
    assert!(OscillatorNetwork::new(vec![0.0; 2], vec![1.0; 2], vec![0.0; 2], bad, vec![0.0; 2], 0.0).is_err());
    let diag = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
    assert!(OscillatorNetwork::new(vec![0.0; 2], vec![1.0; 2], vec![0.0; 2], diag, vec![0.0; 2], 0.0).is_err());
    let zero = vec![vec![0.0; 2]; 2];
    assert!(OscillatorNetwork::new(vec![0.0; 2], vec![0.0, 1.0], vec![0.0; 2], zero.clone(), vec![0.0; 2], 0.0).is_err());
    assert!(OscillatorNetwork::new(vec![0.0; 2], vec![1.0; 2], vec![-0.1, 0.0], zero.clone(), vec![0.0; 2], 0.0).is_err());
    assert!(OscillatorNetwork::new(vec![0.0; 3], vec![1.0; 2], vec![0.0; 2], zero, vec![0.0; 2], 0.0).is_err());
}

#[test]
fn single_oscillator_grows_linearly() {
    let net = uncoupled(vec![0.4], vec![1.0]);
    let traj = integrate(&net, &ZeroControl, &IntegratorConfig::default(), (0.0, 1.0), Some(&[0.0, 1.0])).unwrap();
    assert_eq!(traj.len(), 2);
    assert!((traj.states[1][0] - 1.4).abs() < 1e-6);
}

#[test]
fn ring_matches_fixed_step_reference() {
    let net = ring3();
    let samples: Vec<f64> = (0..=10).map(|k| k as f64).collect();
    let traj = integrate(&net, &ZeroControl, &IntegratorConfig::default(), (0.0, 10.0), Some(&samples)).unwrap();
    let sys = net.system(&ZeroControl);
    let reference = rk4_reference(&sys, net.theta(), 10.0, 1e-4, &samples);
    for (got, want) in traj.states.iter().zip(&reference) {
        let err = got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4, "max-norm error {err}");
    }
}

#[test]
fn stiffer_coupling_takes_more_steps() {
    let base = ring3();
    let stiff = OscillatorNetwork::new(
        base.theta().to_vec(),
        base.omega().to_vec(),
        base.k().iter().map(|k| k * 100.0).collect(),
        (0..3).map(|i| (0..3).map(|j| base.adjacency(i, j)).collect()).collect(),
        base.forcing_gain().to_vec(),
        0.0,
    )
    .unwrap();
    let cfg = IntegratorConfig::default();
    let a = integrate(&base, &ZeroControl, &cfg, (0.0, 5.0), None).unwrap();
    let b = integrate(&stiff, &ZeroControl, &cfg, (0.0, 5.0), None).unwrap();
    assert!(b.stats.accepted > a.stats.accepted, "{:?} vs {:?}", b.stats, a.stats);
    let sys = stiff.system(&ZeroControl);
    let reference = rk4_reference(&sys, stiff.theta(), 5.0, 1e-4, &[5.0]);
    let err = b.last_state().unwrap().iter().zip(&reference[0]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(err < 1e-4, "stiff run off the reference by {err}");
}

#[test]
fn integrator_config_is_validated() {
    let cfg = IntegratorConfig { h_min: 1.0, h_init: 0.1, ..IntegratorConfig::default() };
    assert!(cfg.validate().is_err());
    let net = uncoupled(vec![0.0], vec![1.0]);
    assert!(integrate(&net, &ZeroControl, &cfg, (0.0, 1.0), None).is_err());
    assert!(integrate(&net, &ZeroControl, &IntegratorConfig::default(), (1.0, 1.0), None).is_err());
}

#[test]
fn sync_matrix_examples() {
    let m = sync_matrix(&[0.7, 0.7], 0.0);
    assert_eq!((m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1)), (1.0, 1.0, 1.0, 1.0));
    assert!((sync_matrix(&[0.0, PI], 0.0).get(0, 1) + 1.0).abs() < 1e-15);
    let m = sync_matrix(&[0.0, PI / 3.0, PI / 2.0], 2.5);
    assert!((m.get(0, 1) - 0.5).abs() < 1e-12);
    assert!(m.get(0, 2).abs() < 1e-12);
    assert!((m.get(1, 2) - 0.8660254037844387).abs() < 1e-12);
    assert_eq!(m.time, 2.5);
}

#[test]
fn identical_start_is_synchronized_at_once() {
    let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let net = OscillatorNetwork::new(vec![0.2, 0.2], vec![1.0, 1.0], vec![1.0, 1.0], a, vec![0.0, 0.0], 0.0).unwrap();
    let samples: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
    let traj = integrate(&net, &ZeroControl, &IntegratorConfig::default(), (0.0, 1.0), Some(&samples)).unwrap();
    let sync = time_to_sync(&traj, &net, 0.95).unwrap();
    assert!(sync.pairs.iter().all(|p| p.time == Some(0.0)));
}

#[test]
fn drifting_pair_never_synchronizes() {
    // coupled only for the pair bookkeeping; the weight is negligible
    let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let net = OscillatorNetwork::new(vec![0.0, 0.0], vec![1.0, 1.5], vec![0.0, 0.0], a, vec![0.0, 0.0], 0.0).unwrap();
    let samples: Vec<f64> = (0..=100).map(|k| k as f64 * 0.01).collect();
    let traj = integrate(&net, &ZeroControl, &IntegratorConfig::default(), (0.0, 1.0), Some(&samples)).unwrap();
    let sync = time_to_sync(&traj, &net, 0.999).unwrap();
    assert_eq!(sync.pairs.len(), 1);
    assert_eq!(sync.pairs[0].time, None);
    assert!(!sync.all_synchronized());
}

#[test]
fn time_to_sync_validates_threshold() {
    let net = uncoupled(vec![0.0], vec![1.0]);
    let traj = integrate(&net, &ZeroControl, &IntegratorConfig::default(), (0.0, 1.0), None).unwrap();
    assert!(time_to_sync(&traj, &net, 1.0).is_err());
    assert!(time_to_sync(&traj, &net, 0.0).is_err());
}

#[test]
fn lattice_reaches_consensus() {
    for seed in 0..5 {
        let net = lattice(5, seed);
        let samples: Vec<f64> = (0..=300).map(|k| k as f64 * 0.1).collect();
        let traj = integrate(&net, &ZeroControl, &IntegratorConfig::default(), (0.0, 30.0), Some(&samples)).unwrap();
        let r0 = order_parameter(&traj.states[0]);
        let r1 = order_parameter(traj.last_state().unwrap());
        assert!(r1 > 0.99 && r1 >= r0, "seed {seed}: r {r0} -> {r1}");
        let t = time_to_sync(&traj, &net, 0.95).unwrap().consensus_time().unwrap();
        assert!((0.2..=20.0).contains(&t), "seed {seed}: consensus at {t}");
    }
}

#[test]
fn trajectory_csv_has_header_and_rows() {
    let net = uncoupled(vec![0.0, 1.0], vec![1.0, 1.0]);
    let traj = integrate(&net, &ZeroControl, &IntegratorConfig::default(), (0.0, 1.0), Some(&[0.0, 0.5, 1.0])).unwrap();
    let mut buf = Vec::new();
    write_trajectory_csv(&traj, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,theta_0,theta_1");
    assert_eq!(lines.len(), 4);
}

fn two_phase(g_min: f64) -> SignalConstraints {
    SignalConstraints {
        intersections: vec![IntersectionTiming {
            id: "x".into(),
            phases: 2,
            cycle_s: 60.0,
            lost_time_s: 0.0,
            g_min_s: g_min,
            g_max_s: 55.0,
            offset_s: 0.0,
        }],
    }
}

fn two_phase_net() -> (OscillatorNetwork, Vec<SignalGroup>) {
    let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let net = OscillatorNetwork::new(vec![0.0; 2], vec![1.0; 2], vec![1.0; 2], a, vec![0.0; 2], 0.0).unwrap();
    let groups = vec![SignalGroup { intersection: 0, phase: 0 }, SignalGroup { intersection: 0, phase: 1 }];
    (net, groups)
}

#[test]
fn equal_times_give_nominal_plan() {
    let (net, groups) = two_phase_net();
    let plan = green_times_from_oscillator_times(&[3.0, 3.0], &net, &groups, &two_phase(5.0), 1.0).unwrap();
    assert_eq!(plan.intersections[0].greens, vec![30.0, 30.0]);
}

#[test]
fn slower_oscillator_gains_green() {
    let (net, groups) = two_phase_net();
    // delta of oscillator 0 is +2, of oscillator 1 is -2: 32 and 28 before renormalization
    let plan = green_times_from_oscillator_times(&[4.0, 2.0], &net, &groups, &two_phase(5.0), 1.0).unwrap();
    let g = &plan.intersections[0].greens;
    assert!((g[0] - 32.0).abs() < 1e-12 && (g[1] - 28.0).abs() < 1e-12, "{g:?}");
}

#[test]
fn green_below_minimum_clamps() {
    let (net, groups) = two_phase_net();
    let plan = green_times_from_oscillator_times(&[40.0, 0.0], &net, &groups, &two_phase(5.0), 1.0).unwrap();
    let g = &plan.intersections[0].greens;
    assert_eq!(g[1], 5.0);
    assert!((g[0] - 55.0).abs() < 1e-12);
}

#[test]
fn infeasible_constraints_are_rejected() {
    let (net, groups) = two_phase_net();
    let r = green_times_from_oscillator_times(&[0.0, 0.0], &net, &groups, &two_phase(31.0), 1.0);
    assert!(matches!(r, Err(sigsync::Error::Config(_))));
}

#[test]
fn extraction_from_sync_times_respects_constraints() {
    let net = lattice(2, 3);
    let groups: Vec<SignalGroup> = (0..4).map(|p| SignalGroup { intersection: 0, phase: p }).collect();
    let c = SignalConstraints {
        intersections: vec![IntersectionTiming {
            id: "x".into(),
            phases: 4,
            cycle_s: 90.0,
            lost_time_s: 16.0,
            g_min_s: 5.0,
            g_max_s: 60.0,
            offset_s: 0.0,
        }],
    };
    let samples: Vec<f64> = (0..=200).map(|k| k as f64 * 0.1).collect();
    let traj = integrate(&net, &ZeroControl, &IntegratorConfig::default(), (0.0, 20.0), Some(&samples)).unwrap();
    let sync = time_to_sync(&traj, &net, 0.95).unwrap();
    for scale in [DeltaScale::CyclePerHorizon, DeltaScale::CyclePerConsensus, DeltaScale::Fixed(3.0)] {
        let ex = GreenExtraction { scale, ..GreenExtraction::default() };
        let plan = extract_green_times(&sync, &net, &groups, &c, &ex).unwrap();
        plan.check(&c).unwrap();
        let sum: f64 = plan.intersections[0].greens.iter().sum();
        assert!((sum - 74.0).abs() < 1e-9, "{sum}");
    }
}

proptest! {
    #[test]
    fn sync_matrix_is_bounded_symmetric_unit_diagonal(theta in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let m = sync_matrix(&theta, 0.0);
        for i in 0..theta.len() {
            prop_assert_eq!(m.get(i, i), 1.0);
            for j in 0..theta.len() {
                prop_assert_eq!(m.get(i, j), m.get(j, i));
                prop_assert!((-1.0..=1.0).contains(&m.get(i, j)));
            }
        }
    }

    #[test]
    fn zero_coupling_rotates_freely(
        theta in prop::collection::vec(-3.0f64..3.0, 1..6),
        t_end in 0.5f64..20.0,
    ) {
        let omega: Vec<f64> = (0..theta.len()).map(|i| 0.5 + 0.3 * i as f64).collect();
        let net = uncoupled(theta.clone(), omega.clone());
        let traj = integrate(&net, &ZeroControl, &IntegratorConfig::default(), (0.0, t_end), Some(&[t_end])).unwrap();
        for i in 0..theta.len() {
            let want = theta[i] + omega[i] * t_end;
            prop_assert!((traj.states[0][i] - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn phase_shift_is_equivariant(shift in -10.0f64..10.0, seed in 0u64..50) {
        let net = lattice(3, seed);
        let shifted = net.clone().with_theta(net.theta().iter().map(|t| t + shift).collect()).unwrap();
        let cfg = IntegratorConfig { rel_tol: 1e-12, abs_tol: 1e-12, ..IntegratorConfig::default() };
        let a = integrate(&net, &ZeroControl, &cfg, (0.0, 3.0), Some(&[3.0])).unwrap();
        let b = integrate(&shifted, &ZeroControl, &cfg, (0.0, 3.0), Some(&[3.0])).unwrap();
        for (x, y) in a.states[0].iter().zip(&b.states[0]) {
            prop_assert!((y - x - shift).abs() < 1e-8, "{} vs {}", y - x, shift);
        }
    }

    #[test]
    fn extracted_plans_always_fit(
        times in prop::collection::vec(-40.0f64..40.0, 4),
        scale in 0.0f64..20.0,
    ) {
        let net = lattice(2, 0);
        let groups: Vec<SignalGroup> = (0..4).map(|p| SignalGroup { intersection: 0, phase: p }).collect();
        let c = SignalConstraints {
            intersections: vec![IntersectionTiming {
                id: "x".into(),
                phases: 4,
                cycle_s: 90.0,
                lost_time_s: 16.0,
                g_min_s: 5.0,
                g_max_s: 40.0,
                offset_s: 0.0,
            }],
        };
        let plan = green_times_from_oscillator_times(&times, &net, &groups, &c, scale).unwrap();
        let g = &plan.intersections[0].greens;
        prop_assert!(g.iter().all(|&x| (5.0..=40.0).contains(&x)));
        prop_assert!((g.iter().sum::<f64>() - 74.0).abs() < 1e-9);
    }
}
