use proptest::prelude::*;
use sigsync::mfd::*;

const FREE_SPEED: f64 = 60.0;
const JAM: f64 = 120.0;

fn greenshields(step: f64) -> Vec<MfdPoint> {
    let n = (JAM / step).round() as usize;
    (0..n)
        .map(|i| {
            let k = (i as f64 + 0.5) * step;
            MfdPoint::new(i as f64, k, FREE_SPEED * (1.0 - k / JAM)).unwrap()
        })
        .collect()
}

#[test]
fn greenshields_peaks_at_half_jam_density() {
    let width = 2.0;
    let bins = compute_mfd(&greenshields(0.1), width).unwrap();
    assert_eq!(bins.len(), 60);
    let c = classify_regimes(&bins, &RegimeThresholds::default()).unwrap();
    assert!((c.critical_density - JAM / 2.0).abs() <= width, "critical density {}", c.critical_density);
    assert!(!c.noisy);
    // the bin mean of a parabola sits below the parabola at the bin mean
    // by at most v_f/k_jam · w²/12
    let bound = FREE_SPEED / JAM * width * width / 12.0 + 1e-9;
    for b in &bins {
        let q = FREE_SPEED * b.mean_density * (1.0 - b.mean_density / JAM);
        assert!((b.mean_flow - q).abs() <= bound, "bin {}: {} vs {q}", b.bin, b.mean_flow);
    }
    let q_max = bins[c.critical_bin].mean_flow;
    for (b, l) in bins.iter().zip(&c.labels) {
        if b.mean_density > c.critical_density && b.mean_flow <= 0.9 * q_max {
            assert_eq!(l.traffic, TrafficRegime::Congestion);
            assert_eq!(l.response, Response::Fragile);
        }
    }
    assert_eq!(c.labels[c.critical_bin].traffic, TrafficRegime::BoundFlow);
    assert_eq!(c.labels[0].traffic, TrafficRegime::FreeFlow);
    assert_eq!(c.labels[0].response, Response::Antifragile);
}

#[test]
fn single_point_gives_one_bin() {
    let bins = compute_mfd(&[MfdPoint::new(0.0, 13.0, 40.0).unwrap()], 5.0).unwrap();
    assert_eq!(bins.len(), 1);
    assert_eq!((bins[0].bin, bins[0].count), (2, 1));
    assert_eq!(bins[0].mean_flow, 520.0);
    assert!(classify_regimes(&bins, &RegimeThresholds::default()).is_err());
}

#[test]
fn flat_zero_curve_is_noisy_congestion() {
    let pts: Vec<MfdPoint> = (0..30).map(|i| MfdPoint::new(i as f64, i as f64, 0.0).unwrap()).collect();
    let bins = compute_mfd(&pts, 10.0).unwrap();
    let c = classify_regimes(&bins, &RegimeThresholds::default()).unwrap();
    assert!(c.noisy);
    assert!(c.labels.iter().all(|l| l.traffic == TrafficRegime::Congestion));
}

#[test]
fn rising_curve_has_no_congested_bin() {
    let pts: Vec<MfdPoint> = (0..40).map(|i| MfdPoint::new(i as f64, i as f64 + 0.5, 80.0 - i as f64).unwrap()).collect();
    let bins = compute_mfd(&pts, 5.0).unwrap();
    assert!(bins.windows(2).all(|w| w[1].mean_flow >= w[0].mean_flow));
    let c = classify_regimes(&bins, &RegimeThresholds::default()).unwrap();
    assert!(c.labels.iter().all(|l| l.traffic != TrafficRegime::Congestion));
}

#[test]
fn inconsistent_points_are_rejected() {
    assert!(MfdPoint::with_flow(0.0, 10.0, 500.0, 40.0).is_err());
    assert!(MfdPoint::new(0.0, -1.0, 40.0).is_err());
    assert!(compute_mfd(&[], 1.0).is_err());
    assert!(compute_mfd(&greenshields(1.0), 0.0).is_err());
}

#[test]
fn detector_csv_reports_bad_rows() {
    let good = "t,detector_id,flow_vph,density_vpkm,speed_kmh\n0,d1,800,20,40\n300,d1,900,30,30\n";
    assert_eq!(read_detector_csv(good.as_bytes()).unwrap().len(), 2);
    let bad = good.replace("900,30,30", "999,30,30");
    assert!(matches!(read_detector_csv(bad.as_bytes()), Err(sigsync::Error::Parse { row: 3, .. })));
}

fn probe(f: impl Fn(f64) -> f64) -> Vec<ConvexityProbe> {
    let xs: Vec<f64> = (-10..=10).map(|i| i as f64 * 0.5).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    convexity_heuristic(&xs, &ys, 1.0, None).unwrap()
}

fn interior_labels(p: &[ConvexityProbe]) -> Vec<Convexity> {
    p.iter().filter_map(|q| q.label).collect()
}

#[test]
fn convexity_of_basic_shapes() {
    let up = probe(|x| x * x);
    assert!(interior_labels(&up).iter().all(|&l| l == Convexity::Convex));
    for q in up.iter().filter(|q| q.h.is_some()) {
        assert!((q.h.unwrap() - 1.0).abs() < 1e-12);
    }
    assert!(interior_labels(&probe(|x| 3.0 * x + 2.0)).iter().all(|&l| l == Convexity::Linear));
    assert!(interior_labels(&probe(|x| -x * x)).iter().all(|&l| l == Convexity::Concave));
    assert_eq!(Convexity::Convex.response(), Response::Antifragile);
    assert_eq!(Convexity::Concave.response(), Response::Fragile);
}

#[test]
fn boundary_samples_are_unlabelled() {
    let p = probe(|x| x * x);
    assert_eq!(p.len(), 21);
    assert_eq!(p.iter().filter(|q| q.label.is_none()).count(), 4);
    assert!(p[0].h.is_none() && p[1].h.is_none() && p[20].h.is_none());
    assert!(p[2].h.is_some());
}

#[test]
fn mfd_csv_has_header_and_labels() {
    let bins = compute_mfd(&greenshields(1.0), 10.0).unwrap();
    let c = classify_regimes(&bins, &RegimeThresholds::default()).unwrap();
    let mut buf = Vec::new();
    write_mfd_csv(&bins, Some(&c), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1 + bins.len());
    assert!(text.lines().last().unwrap().ends_with(",congestion,fragile"));
}

proptest! {
    #[test]
    fn convexity_survives_positive_affine_maps(
        ys in prop::collection::vec(-50.0f64..50.0, 8..20),
        a in 0.1f64..10.0,
        b in -100.0f64..100.0,
    ) {
        let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
        let mapped: Vec<f64> = ys.iter().map(|y| a * y + b).collect();
        let p = convexity_heuristic(&xs, &ys, 1.0, None).unwrap();
        let q = convexity_heuristic(&xs, &mapped, 1.0, None).unwrap();
        for (u, v) in p.iter().zip(&q) {
            match (u.h, v.h) {
                (Some(hu), Some(hv)) => {
                    prop_assert!((hv - a * hu).abs() <= 1e-9 * (1.0 + a * hu.abs() + b.abs()));
                    // labels may only differ right at the tolerance edge
                    if u.label != v.label {
                        prop_assert!((hu.abs() - 1e-3 * range(&ys)).abs() < 1e-9);
                    }
                }
                (None, None) => {}
                _ => prop_assert!(false, "boundary mismatch"),
            }
        }
    }
}

fn range(ys: &[f64]) -> f64 {
    let (lo, hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    hi - lo
}
