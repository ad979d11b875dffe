use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigsync::osc::OscillatorNetwork;
use sigsync::smc::plant::{run_sat_law, run_twisting, Disturbance};
use sigsync::smc::*;

fn gains(p: SmcParams) -> SmcGains {
    SmcGains::new(p).unwrap()
}

fn published() -> SmcParams {
    SmcParams { orientation: LawOrientation::AsPublished, ..SmcParams::default() }
}

fn single(sigma: f64, sigma_dot: f64, u: f64, phi: f64) -> SlidingState {
    let mut s = SlidingState::new(1, phi);
    s.sigma[0] = sigma;
    s.sigma_dot[0] = sigma_dot;
    s.u[0] = u;
    s
}

#[test]
fn surface_examples() {
    assert_eq!(sliding_surface(&[0.0], &[0.0], 1.0).unwrap(), vec![0.0]);
    assert_eq!(sliding_surface(&[1.0], &[-2.0], 2.0).unwrap(), vec![0.0]);
    let s = sliding_surface(&[0.3, -0.1], &[0.05, 0.2], 1.5).unwrap();
    assert!((s[0] - 0.5).abs() < 1e-12 && (s[1] - 0.05).abs() < 1e-12);
    assert!(sliding_surface(&[0.0], &[0.0, 1.0], 1.0).is_err());
    assert!(sliding_surface(&[0.0], &[0.0], 0.0).is_err());
}

#[test]
fn sign_law_examples() {
    let g = gains(SmcParams::default());
    assert_eq!(udot_sign_law(&single(0.0, 0.0, 1.5, 0.1), &g), vec![-1.5]);
    assert_eq!(udot_sign_law(&single(0.0, 0.0, 0.2, 0.1), &g), vec![0.0]);
    assert!((reaching_term(0.25, 0.5, 0.5) + 0.25).abs() < 1e-15);
    assert_eq!(udot_sign_law(&single(0.25, 0.1, 0.0, 0.1), &g), vec![-0.8]);
}

#[test]
fn sat_law_examples() {
    let g = gains(published());
    assert_eq!(udot_sat_law(&single(0.0, 0.0, 0.0, 0.1), &g), vec![0.0]);
    assert_eq!(udot_sat_law(&single(0.0, 0.0, -1.5, 0.1), &g), vec![1.5]);
    let big = udot_sat_law(&single(50.0, 0.0, 0.0, 0.1), &g)[0];
    assert_eq!(big.abs(), 0.8);
    let g = gains(SmcParams { phi: 0.2, phi_dot: 0.1, ..published() });
    let du = udot_sat_law(&single(0.04, 0.01, 0.0, 0.2), &g)[0];
    assert!(du.abs() < 1e-15, "{du}");
}

#[test]
fn homogeneous_law_examples() {
    let g = gains(SmcParams { phi: 1.0, ..published() });
    assert_eq!(homogeneous_law(&single(0.0, 0.0, 0.0, 1.0), &g), vec![0.0]);
    assert_eq!(homogeneous_law(&single(0.0, 5.0, 0.0, 1.0), &g), vec![-0.8]);
    let u = homogeneous_law(&single(0.16, 0.0, 0.0, 1.0), &g)[0];
    assert!((u - 0.8 * 0.032).abs() < 1e-12, "{u}");
}

#[test]
fn twisting_law_examples() {
    let g = gains(published());
    let u = twisting_law(&single(0.3, 0.0, 0.0, 0.1), &g, 2.0).unwrap();
    assert_eq!(u, vec![-2.0]);
    let mut s = single(0.2, 0.0, 0.0, 0.1);
    s.sigma_m[0] = 1.0;
    let u = twisting_law(&s, &g, 1.0).unwrap()[0];
    assert!((u - 0.04).abs() < 1e-15);
    s.sigma[0] = 0.8;
    assert_eq!(twisting_law(&s, &g, 1.0).unwrap(), vec![-1.0]);
    assert!(twisting_law(&s, &g, 0.0).is_err());
}

#[test]
fn gains_are_validated() {
    let bad = [
        SmcParams { delta1: 0.3, delta2: 0.2, ..SmcParams::default() },
        SmcParams { delta3: 1.0, ..SmcParams::default() },
        SmcParams { delta1: 0.0, ..SmcParams::default() },
        SmcParams { gamma: 0.4, ..SmcParams::default() },
        SmcParams { phi: 0.0, ..SmcParams::default() },
        SmcParams { alpha: 0.2, ..SmcParams::default() },
        SmcParams { alpha_star: 0.05, ..SmcParams::default() },
        SmcParams { boundary_layer: BoundaryLayer::Dynamic { kappa: 0.0, target: 0.1 }, ..SmcParams::default() },
    ];
    for p in bad {
        assert!(matches!(SmcGains::new(p), Err(sigsync::Error::Config(_))), "{p:?}");
    }
    SmcGains::new(SmcParams::default()).unwrap();
}

#[test]
fn gain_dynamics_at_rest_stays_at_rest() {
    let g = gains(SmcParams::default());
    let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let s = SlidingState::new(2, 0.1);
    let next = gain_dynamics_step(&s, &[0.0, 0.0], &a, &g, 0.1).unwrap();
    assert_eq!(next, s);
}

#[test]
fn gain_dynamics_hand_step() {
    let g = gains(SmcParams { delta1: 0.1, delta2: 0.2, delta3: 0.3, ..SmcParams::default() });
    let mut s = SlidingState::new(1, 0.1);
    s.s_hat[0] = 1.0;
    let next = gain_dynamics_step(&s, &[0.5], &[vec![0.0]], &g, 0.1).unwrap();
    assert!((next.s[0] + 0.05).abs() < 1e-15);
    assert_eq!(next.s_hat[0], 1.0);
    assert!((next.b[0] - 0.1 * 0.1).abs() < 1e-15);
}

#[test]
fn gain_dynamics_rejects_bad_inputs() {
    let g = gains(SmcParams::default());
    let s = SlidingState::new(2, 0.1);
    assert!(gain_dynamics_step(&s, &[0.0], &vec![vec![0.0; 2]; 2], &g, 0.1).is_err());
    assert!(gain_dynamics_step(&s, &[0.0; 2], &vec![vec![0.0; 2]; 2], &g, 0.0).is_err());
}

// sign(ŝ)·θ̈ is odd in ŝ only, so the mirror needs a shared θ̈
#[test]
fn mirrored_states_stay_mirrored() {
    let g = gains(SmcParams::default());
    let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let mut s = SlidingState::new(2, 0.1);
    s.s = vec![0.4, -0.4];
    s.s_hat = vec![-0.7, 0.7];
    for k in 0..10_000 {
        let tdd = (k as f64 * 0.01).sin();
        s = gain_dynamics_step(&s, &[tdd, tdd], &a, &g, 1e-3).unwrap();
        assert!((s.s[0] + s.s[1]).abs() < 1e-9);
        assert!((s.s_hat[0] + s.s_hat[1]).abs() < 1e-9);
        assert!((s.b[0] + s.b[1]).abs() < 1e-9);
    }
    assert!(s.s.iter().chain(&s.s_hat).chain(&s.b).all(|v| v.is_finite()));
}

fn locked_net() -> (OscillatorNetwork, Vec<Vec<f64>>) {
    let a = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]];
    let net = OscillatorNetwork::new(vec![0.5; 3], vec![1.0; 3], vec![1.0; 3], a.clone(), vec![0.0; 3], 0.0).unwrap();
    (net, a)
}

#[test]
fn controller_at_consensus_outputs_zero() {
    let (net, a) = locked_net();
    let g = gains(SmcParams::default());
    let window = vec![TrajSample { t: 0.0, theta: vec![0.5; 3], theta_dot: vec![1.0; 3] }];
    let input = StepInput { net: &net, adjacency: &a, window: &window, mode: ThetaDdotMode::Analytic };
    let state = SlidingState::new(3, 0.1);
    let (u, next) = antifragile_controller_step(&input, &state, &g, 0.01).unwrap();
    assert_eq!(u, vec![0.0; 3]);
    assert_eq!(next.b, vec![0.0; 3]);
    assert_eq!(next.u, vec![0.0; 3]);
}

#[test]
fn controller_warms_up_with_zero_control() {
    let (net, a) = locked_net();
    let g = gains(SmcParams::default());
    let window = vec![TrajSample { t: 0.0, theta: vec![0.1, 0.5, 0.9], theta_dot: vec![1.0; 3] }; 2];
    let input = StepInput { net: &net, adjacency: &a, window: &window, mode: ThetaDdotMode::FiniteDifference };
    let state = SlidingState::new(3, 0.1);
    let (u, next) = antifragile_controller_step(&input, &state, &g, 0.01).unwrap();
    assert_eq!(u, vec![0.0; 3]);
    assert_eq!(next, state);
    let bad = SlidingState::new(2, 0.1);
    assert!(antifragile_controller_step(&input, &bad, &g, 0.01).is_err());
}

#[test]
fn sat_law_reaches_and_stays_on_test_plant() {
    // Φ = 0.05: with the default 0.1 the worst-case disturbance leaves a ~1e-2 residual
    let g = gains(SmcParams { phi: 0.05, ..SmcParams::default() });
    assert!(g.alpha * g.k_min - g.c_bound > g.beta * g.beta / 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let amp = rng.gen_range(-0.1..0.1);
        let k = rng.gen_range(1.0..2.0);
        let c = Disturbance { amplitude: amp, freq: 1.0, phase: 0.3 };
        let run = run_sat_law(&g, k, c, 0.5, 0.0, 1e-3, 30.0);
        let t = run.settling_time(1e-3, 1e-2);
        assert!(t.is_some_and(|t| t < 20.0), "amp {amp} k {k}: settled at {t:?}");
    }
}

#[test]
fn twisting_extrema_contract() {
    let g = gains(SmcParams::default());
    let c = Disturbance { amplitude: 0.05, freq: 1.0, phase: 0.0 };
    let run = run_twisting(&g, 1.0, 1.5, c, 1.0, 1e-4, 40.0).unwrap();
    assert!(run.extrema.len() >= 4, "{:?}", run.extrema);
    for w in run.extrema.windows(2).take(3) {
        assert!(w[1].abs() < w[0].abs(), "{:?}", run.extrema);
    }
}

#[test]
fn trace_rows_round_out_to_csv() {
    let mut s = SlidingState::new(2, 0.1);
    s.u = vec![0.5, -0.5];
    let rows: Vec<TraceRow> = TraceRow::from_state(1.5, &s).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].osc_id, 1);
    let mut buf = Vec::new();
    write_trace_csv(&rows, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
}

proptest! {
    #[test]
    fn sat_is_one_lipschitz(x in -10.0f64..10.0, y in -10.0f64..10.0) {
        prop_assert!((sat(x) - sat(y)).abs() <= (x - y).abs());
        prop_assert!(sat(x).abs() <= 1.0);
    }

    #[test]
    fn sat_law_is_continuous_inside_the_band(
        sigma in -0.05f64..0.05,
        sigma_dot in -0.05f64..0.05,
        u in -0.9f64..0.9,
    ) {
        let g = gains(SmcParams::default());
        let h = 1e-9;
        let a = udot_sat_law(&single(sigma, sigma_dot, u, 0.1), &g)[0];
        let b = udot_sat_law(&single(sigma + h, sigma_dot + h, u, 0.1), &g)[0];
        prop_assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn controller_keeps_u_saturated(
        theta in prop::collection::vec(-3.0f64..3.0, 3),
        theta_dot in prop::collection::vec(-5.0f64..5.0, 3),
        steps in 1usize..50,
    ) {
        let (net, a) = locked_net();
        let g = gains(SmcParams::default());
        let window = vec![TrajSample { t: 0.0, theta, theta_dot }];
        let input = StepInput { net: &net, adjacency: &a, window: &window, mode: ThetaDdotMode::Analytic };
        let mut state = SlidingState::new(3, 0.1);
        for _ in 0..steps {
            let (_, next) = antifragile_controller_step(&input, &state, &g, 0.5).unwrap();
            state = next;
            prop_assert!(state.u.iter().all(|u| u.abs() <= 1.0));
        }
    }

    #[test]
    fn mirror_symmetry_holds_for_any_step(
        s0 in -1.0f64..1.0,
        h0 in -1.0f64..1.0,
        dt in 1e-4f64..0.2,
        steps in 1usize..200,
    ) {
        let g = gains(SmcParams::default());
        let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let mut s = SlidingState::new(2, 0.1);
        s.s = vec![s0, -s0];
        s.s_hat = vec![h0, -h0];
        for k in 0..steps {
            let tdd = (k as f64).cos();
            s = gain_dynamics_step(&s, &[tdd, tdd], &a, &g, dt).unwrap();
            let scale = 1.0 + s.s[0].abs() + s.s_hat[0].abs() + s.b[0].abs();
            prop_assert!((s.s[0] + s.s[1]).abs() <= 1e-9 * scale);
            prop_assert!((s.s_hat[0] + s.s_hat[1]).abs() <= 1e-9 * scale);
            prop_assert!((s.b[0] + s.b[1]).abs() <= 1e-9 * scale);
        }
    }
}
