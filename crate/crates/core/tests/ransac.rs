use respose_core::robust::ransac::truncated_loss;
use respose_core::robust::{generate_scene, ransac_pose, RansacConfig, RansacError, SampleScheme, SyntheticSpec};
use respose_core::solver::SolverOptions;

fn spec(seed: u64, points: usize, noise_px: f64, outliers: f64) -> SyntheticSpec {
    SyntheticSpec {
        n_cameras: 3,
        n_points: points,
        noise_px,
        outlier_fraction: outliers,
        ..SyntheticSpec::minimal(seed)
    }
}

fn config(iterations: usize, seed: u64) -> RansacConfig {
    RansacConfig {
        max_iterations: iterations,
        seed,
        ..RansacConfig::default()
    }
}

#[test]
fn replay_is_identical() {
    let s = generate_scene(&spec(2, 40, 0.5, 0.2));
    let opts = SolverOptions::default();
    let a = ransac_pose(&s.scene, &config(16, 4), &opts).unwrap();
    let b = ransac_pose(&s.scene, &config(16, 4), &opts).unwrap();
    assert_eq!(a, b);
    let c = ransac_pose(&s.scene, &config(16, 5), &opts).unwrap();
    assert_ne!(a.history, c.history);
}

#[test]
fn exact_outlier_free_scene_needs_one_iteration() {
    for seed in 0..3 {
        let s = generate_scene(&spec(seed, 30, 0.0, 0.0));
        let r = ransac_pose(&s.scene, &config(1, seed), &SolverOptions::default()).unwrap();
        assert_eq!(r.inlier_count, 30, "seed {seed}");
        assert!(r.inlier_mask.iter().all(|&m| m));
        assert!(r.pose.rotation_error_deg(&s.truth) < 1e-6, "seed {seed}");
    }
}

#[test]
fn history_never_gets_worse() {
    let s = generate_scene(&spec(7, 60, 1.0, 0.3));
    let r = ransac_pose(&s.scene, &config(40, 1), &SolverOptions::default()).unwrap();
    assert_eq!(r.history.len(), 40);
    for (i, h) in r.history.iter().enumerate() {
        assert_eq!(h.iteration, i);
    }
    for w in r.history.windows(2) {
        assert!(w[1].best_loss <= w[0].best_loss);
    }
    let last = r.history.last().unwrap();
    assert_eq!(last.best_inlier_count, r.inlier_count);
    assert_eq!(last.best_pose, Some(r.pose));
}

#[test]
fn inlier_count_is_reproducible_from_the_pose() {
    let s = generate_scene(&spec(3, 50, 0.5, 0.25));
    let cfg = config(30, 2);
    let r = ransac_pose(&s.scene, &cfg, &SolverOptions::default()).unwrap();
    let errors = s.scene.sampson_errors(&r.pose);
    let (_, count) = truncated_loss(&errors, cfg.inlier_threshold);
    assert_eq!(count, r.inlier_count);
    let mask: Vec<bool> = errors.iter().map(|&e| e < cfg.inlier_threshold).collect();
    assert_eq!(mask, r.inlier_mask);
}

#[test]
fn truncated_loss_orders_by_inlier_count() {
    let t = 1.0;
    let (a, na) = truncated_loss(&[0.9, 0.9, 0.9, 5.0], t);
    let (b, nb) = truncated_loss(&[0.0, 0.0, 5.0, 5.0], t);
    assert_eq!((na, nb), (3, 2));
    assert!(a < b);
    let (c, _) = truncated_loss(&[0.1, 0.1, 0.1, 5.0], t);
    assert!(c < a);
}

#[test]
fn uniform_sampling_also_works() {
    let s = generate_scene(&spec(4, 30, 0.0, 0.0));
    let cfg = RansacConfig {
        sample_scheme: SampleScheme::UniformSixFromTwoPlus,
        ..config(4, 0)
    };
    let r = ransac_pose(&s.scene, &cfg, &SolverOptions::default()).unwrap();
    assert!(r.pose.rotation_error_deg(&s.truth) < 1e-6);
}

#[test]
fn invalid_configurations() {
    let s = generate_scene(&spec(0, 20, 0.0, 0.0));
    let opts = SolverOptions::default();
    assert_eq!(ransac_pose(&s.scene, &config(0, 0), &opts).unwrap_err(), RansacError::NoIterations);
    for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
        let cfg = RansacConfig {
            inlier_threshold: bad,
            ..config(5, 0)
        };
        assert!(matches!(ransac_pose(&s.scene, &cfg, &opts), Err(RansacError::Threshold(_))));
    }
    let mut short = s.scene.clone();
    short.matches.truncate(5);
    assert_eq!(ransac_pose(&short, &config(5, 0), &opts).unwrap_err(), RansacError::TooFewMatches(5));

    // Only one camera keeps three or more matches.
    let mut lopsided = s.scene.clone();
    let (a, b) = (lopsided.cameras[0].id.clone(), lopsided.cameras[1].id.clone());
    for (i, m) in lopsided.matches.iter_mut().enumerate() {
        m.ref_camera = if i < 2 { b.clone() } else { a.clone() };
    }
    let err = ransac_pose(&lopsided, &config(5, 0), &opts).unwrap_err();
    assert!(matches!(err, RansacError::Scheme { .. }), "{err:?}");
}
