use geonav::geodesy::local_delta;
use geonav::geofield::GeoPosition;
use geonav::ins::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn drive(cfg: &InsConfig, seed: u64, steps: usize) -> Vec<GeoPosition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = GeoPosition::deg(152.0, 33.0);
    let mut s = initial_state(cfg, &pos);
    let mut out = Vec::new();
    for k in 0..steps {
        pos = geonav::geodesy::offset(&pos, 3.5, -3.5);
        let (next, meas) = step_ins(cfg, &s, &pos, -45.0 + (k % 3) as f64, 0.1, &mut rng);
        s = next;
        out.push(meas);
    }
    out
}

#[test]
fn offset_constant_without_drift() {
    let cfg = InsConfig { speed_error_ms: 0.0, random_walk_m_per_sqrt_h: 0.0, ..InsConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let start = GeoPosition::deg(152.0, 33.0);
    let mut s = initial_state(&cfg, &start);
    for _ in 0..200 {
        let (next, meas) = step_ins(&cfg, &s, &start, 10.0, 0.1, &mut rng);
        s = next;
        let (e, n) = local_delta(&start, &meas);
        assert!((e - 5.0).abs() < 1e-6 && (n - 5.0).abs() < 1e-6, "{e} {n}");
    }
}

#[test]
fn same_seed_same_errors() {
    let cfg = InsConfig::default();
    assert_eq!(drive(&cfg, 9, 300), drive(&cfg, 9, 300));
    assert_ne!(drive(&cfg, 9, 300), drive(&cfg, 10, 300));
}

#[test]
fn error_grows_without_bound() {
    let cfg = InsConfig { random_walk_m_per_sqrt_h: 0.0, ..InsConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pos = GeoPosition::deg(152.0, 33.0);
    let mut s = initial_state(&cfg, &pos);
    let mut last = 0.0;
    for k in 1..=100 {
        let (next, meas) = step_ins(&cfg, &s, &pos, 0.0, 0.1, &mut rng);
        s = next;
        let (e, n) = local_delta(&pos, &meas);
        let err = e.hypot(n);
        if k > 1 {
            assert!(err > last, "step {k}: {err} ≤ {last}");
        }
        last = err;
    }
    // 10 m/s for 10 h is 360 km of drift
    assert!(last > 300.0, "{last}");
}

#[test]
fn ideal_system_reports_truth() {
    let got = drive(&InsConfig::ideal(), 3, 50);
    let mut pos = GeoPosition::deg(152.0, 33.0);
    for m in got {
        pos = geonav::geodesy::offset(&pos, 3.5, -3.5);
        assert_eq!(m, pos);
    }
}
