mod common;

use common::ScalarKf;
use geonav::fusion::*;
use geonav::ins::{IDX_LAT, IDX_LON, STATE_DIM};
use nalgebra::Vector2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn matches_decoupled_scalar_filters() {
    let cfg = FusionConfig::default();
    let mut fs = FusionState::new(&cfg);
    let mut lon = ScalarKf { x: 0.0, p: 1.0, q: 0.05, r: 2.0 };
    let mut lat = lon;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for step in 0..10_000 {
        fs = predict(&fs, &cfg);
        lon.predict();
        lat.predict();
        if step % 3 != 2 {
            let dz = Vector2::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
            let (post, corr) = update(&fs, &cfg, &dz).unwrap();
            fs = post;
            lon.update(dz[0]);
            lat.update(dz[1]);
            assert!((corr[0] - lon.x).abs() <= 1e-10 && (corr[1] - lat.x).abs() <= 1e-10, "step {step}");
        }
        assert!((fs.p[(IDX_LON, IDX_LON)] - lon.p).abs() <= 1e-10, "step {step}");
        assert!((fs.p[(IDX_LAT, IDX_LAT)] - lat.p).abs() <= 1e-10, "step {step}");
    }
}

#[test]
fn predict_adds_process_noise_exactly() {
    let cfg = FusionConfig::default();
    let mut fs = FusionState::new(&cfg);
    for _ in 0..100 {
        let next = predict(&fs, &cfg);
        for k in [IDX_LON, IDX_LAT] {
            assert!((next.p[(k, k)] - fs.p[(k, k)] - 0.05).abs() <= 1e-12);
        }
        fs = next;
    }
}

#[test]
fn standard_form_agrees_with_joseph() {
    let cfg = FusionConfig::with_values(0.05, 3.0, 0.5);
    let prior = predict(&FusionState::new(&cfg), &cfg);
    let (post, _) = update(&prior, &cfg, &Vector2::new(0.01, -0.02)).unwrap();
    let k = gain(&prior, &cfg).unwrap();
    let standard = (Mat15::identity() - k * cfg.h_b) * prior.p;
    assert!((post.p - standard).amax() <= 1e-12);
}

#[test]
fn singular_innovation_reported() {
    let mut cfg = FusionConfig::with_values(0.0, 0.0, 1.0);
    cfg.r_c = nalgebra::Matrix2::zeros();
    let fs = FusionState::new(&cfg);
    assert_eq!(update(&fs, &cfg, &Vector2::zeros()), Err(FusionError::SingularInnovation));
}

proptest! {
    #[test]
    fn covariance_stays_symmetric_psd(zs in prop::collection::vec(prop::array::uniform2(-1.0f64..1.0), 1..60), q in 0.0f64..1.0, r in 0.01f64..10.0) {
        let cfg = FusionConfig::with_values(q, 1.0, r);
        let mut fs = FusionState::new(&cfg);
        for z in zs {
            let prior = predict(&fs, &cfg);
            let (post, _) = update(&prior, &cfg, &Vector2::new(z[0], z[1])).unwrap();
            prop_assert!((post.p - post.p.transpose()).amax() <= 1e-12);
            prop_assert!(post.p.symmetric_eigen().eigenvalues.min() >= -1e-12);
            for k in 0..STATE_DIM {
                prop_assert!(post.p[(k, k)] <= prior.p[(k, k)] + 1e-12);
            }
            fs = post;
        }
    }

    #[test]
    fn gain_touches_only_position_slots(p0 in 0.01f64..10.0, r in 0.01f64..10.0) {
        let cfg = FusionConfig::with_values(0.05, p0, r);
        let k = gain(&FusionState::new(&cfg), &cfg).unwrap();
        for row in 0..STATE_DIM {
            if row != IDX_LON && row != IDX_LAT {
                prop_assert_eq!(k.row(row).amax(), 0.0);
            }
        }
        prop_assert!(k[(IDX_LON, 0)] > 0.0 && k[(IDX_LAT, 1)] > 0.0);
    }
}
