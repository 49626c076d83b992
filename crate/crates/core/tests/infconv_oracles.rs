use std::f64::consts::PI;

use pmdrift_core::exact::Barenblatt;
use pmdrift_core::infconv::*;
use pmdrift_core::streamlines::{classify_fb_point, FbType};
use pmdrift_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn square(n: usize) -> GridSpec {
    GridSpec::rect([-1.0, -1.0], [1.0, 1.0], [n, n]).unwrap()
}

fn interior(g: &GridSpec, stride: usize) -> Vec<usize> {
    (0..g.len()).step_by(stride).collect()
}

#[test]
fn brute_force_minimum_over_ball() {
    let g = square(96);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = Field::from_fn(&g, Role::Scalar, |x| (3.0 * x[0]).sin() * x[1] + 0.3 * x[0]);
    let r0: f64 = rng.gen_range(0.12..0.2);
    let psi = RadiusField::from_fn(&g, |x| r0 + 0.05 * x[0]).unwrap();
    let ic = inf_convolution(&h, &psi).unwrap();
    for idx in 0..g.len() {
        let x = g.center_of(idx);
        let r = psi.at(idx);
        let cells = (0..g.len())
            .filter(|&k| pmdrift_core::grid::dist(g.center_of(k), x) <= r * (1.0 + 1e-12))
            .map(|k| h.values()[k])
            .fold(f64::INFINITY, f64::min);
        let f = ic.f.values()[idx];
        // Rim samples may only lower the value, by at most the variation over one cell.
        assert!(f <= cells + 1e-15, "{x:?}");
        if !ic.flagged[idx] {
            assert!(f >= cells - 2.0 * g.dx(), "{x:?} {f} {cells}");
        }
        assert!(f <= h.values()[idx]);
    }
}

#[test]
fn one_dimensional_linear_identity() {
    let g = GridSpec::line(-1.0, 1.0, 256).unwrap();
    let h = Field::from_fn(&g, Role::Scalar, |x| x[0]);
    let psi = RadiusField::from_fn(&g, |x| 0.25 + x[0] / 8.0).unwrap();
    let ic = inf_convolution(&h, &psi).unwrap();
    for idx in 0..g.len() {
        let x = g.center_of(idx)[0];
        if !ic.flagged[idx] {
            assert!((ic.argmin[idx][0] - (x - 0.25 - x / 8.0)).abs() < 1e-12, "{x} {:?}", ic.argmin[idx]);
        }
    }
    let rep = check_gradient_identity(&h, &psi, &interior(&g, 1), 1.0).unwrap();
    assert_eq!(rep.verdict, Verdict::Pass, "{}", rep.to_record());
}

#[test]
fn constant_radius_identity() {
    let g = square(96);
    let h = Field::from_fn(&g, Role::Scalar, |x| x[0] + 0.5 * x[1] + 0.2 * x[0] * x[0]);
    let psi = RadiusField::from_fn(&g, |_| 0.15).unwrap();
    let rep = check_gradient_identity(&h, &psi, &interior(&g, 7), 2.0).unwrap();
    assert_eq!(rep.verdict, Verdict::Pass, "{}", rep.to_record());
}

#[test]
fn radial_identity_along_rays() {
    let g = square(128);
    let h = Field::from_fn(&g, Role::Scalar, |x| (x[0] * x[0] + x[1] * x[1]).sqrt().powi(3) + x[0] * 0.0);
    let psi = RadiusField::from_fn(&g, |x| 0.1 + 0.05 * (x[0] * x[0] + x[1] * x[1])).unwrap();
    let samples: Vec<usize> = (0..g.len())
        .filter(|&i| {
            let x = g.center_of(i);
            let r = x[0].hypot(x[1]);
            r > 0.4 && r < 0.6
        })
        .step_by(5)
        .collect();
    let rep = check_gradient_identity(&h, &psi, &samples, 4.0).unwrap();
    assert_eq!(rep.verdict, Verdict::Pass, "{}", rep.to_record());
}

#[test]
fn laplacian_bound_for_paraboloid() {
    let g = square(128);
    let h = Field::from_fn(&g, Role::Scalar, |x| x[0] * x[0] + x[1] * x[1]);
    let psi = RadiusField::from_fn(&g, |x| 0.1 * (0.5 * x[0]).exp()).unwrap();
    assert!(radius_sigma1(&psi) >= 1.0 - 1e-3);
    let rep = check_laplacian_bound(&h, &psi, 0.0, &interior(&g, 11)).unwrap();
    assert_eq!(rep.verdict, Verdict::Pass, "{}", rep.to_record());
}

#[test]
fn laplacian_bound_is_sharp_for_concave_quadratic() {
    let g = square(128);
    let c = 1.0;
    let h = Field::from_fn(&g, Role::Scalar, |x| x[0] - 0.5 * c * x[1] * x[1]);
    let psi = RadiusField::from_fn(&g, |_| 0.1).unwrap();
    let rep = check_laplacian_bound(&h, &psi, c, &interior(&g, 13)).unwrap();
    assert_eq!(rep.verdict, Verdict::Pass, "{}", rep.to_record());
    // Constant radius: f(x) = h(x - r e1) exactly away from the edges, so the excess is -slack.
    assert!(rep.constant("max_excess").unwrap() <= 0.0);
}

#[test]
fn laplacian_bound_rejects_unverified_floor() {
    let g = square(64);
    let h = Field::from_fn(&g, Role::Scalar, |x| -5.0 * x[1] * x[1]);
    let psi = RadiusField::from_fn(&g, |_| 0.1).unwrap();
    assert!(check_laplacian_bound(&h, &psi, 1.0, &interior(&g, 5)).is_err());
}

#[test]
fn random_pairs_satisfy_both_lemmas() {
    let g = square(96);
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    for _ in 0..6 {
        let pair = SmoothPair::random(&mut rng);
        let (h, psi) = pair.sample(&g).unwrap();
        let samples = interior(&g, 17);
        let gi = check_gradient_identity(&h, &psi, &samples, 4.0).unwrap();
        let passed = gi.constant("passed").unwrap();
        let failed = gi.constant("failed").unwrap();
        assert!(passed / (passed + failed) >= 0.95, "{}", gi.to_record());
        let lb = check_laplacian_bound(&h, &psi, pair.laplacian_floor(), &samples).unwrap();
        assert_eq!(lb.verdict, Verdict::Pass, "{}", lb.to_record());
    }
}

fn frozen_cfg(eps: f64) -> SupersolutionConfig {
    SupersolutionConfig::new(2.0, 2.0, 0.0, 3.0, 3.0, eps, 0.5).unwrap()
}

#[test]
fn small_eps_recovers_v() {
    let cfg = frozen_cfg(1e-3);
    let v = |x: Point, t: f64| Some((x[0] + t).max(0.0) + 0.1 * x[1] * x[1]);
    let phi = |_: Point| 1.0;
    let pts = [[0.1, 0.2], [-0.05, 0.0], [0.3, -0.1]];
    let times = [0.0, cfg.tau / 2.0, cfg.tau];
    let w = build_supersolution(&v, &phi, &cfg, [1.0, 0.0], &pts, &times, 1e-4, 2).unwrap();
    for (ti, &t) in times.iter().enumerate() {
        for (pi, &x) in pts.iter().enumerate() {
            assert!((w[ti][pi].unwrap() - v(x, t).unwrap()).abs() < 1e-2);
        }
    }
}

#[test]
fn frozen_half_space_closed_form() {
    let cfg = frozen_cfg(0.2);
    let v = |x: Point, _t: f64| Some(x[0].max(0.0));
    let phi = |_: Point| 0.3;
    let pts = [[0.2, 0.0], [0.05, 0.1], [-0.2, 0.0]];
    let times = [0.0, cfg.tau];
    let w = build_supersolution(&v, &phi, &cfg, [1.0, 0.0], &pts, &times, 1e-3, 2).unwrap();
    for (ti, &t) in times.iter().enumerate() {
        let radius = cfg.radius(0.3, t);
        let gain = (cfg.a0 * cfg.eps * t).exp();
        for (pi, &x) in pts.iter().enumerate() {
            let exact = gain * (x[0] + cfg.r * cfg.eps - radius).max(0.0);
            assert!((w[ti][pi].unwrap() - exact).abs() < 1e-3, "{t} {x:?}");
        }
    }
}

#[test]
fn scaling_phi_scales_the_radius() {
    let cfg = frozen_cfg(0.2);
    for s in [0.5, 2.0, 3.0] {
        let t = cfg.tau / 3.0;
        assert!((cfg.radius(0.4 * s, t) - s * cfg.radius(0.4, t)).abs() < 1e-15);
    }
}

#[test]
fn misconfigured_supersolution_is_rejected() {
    assert!(SupersolutionConfig::new(2.0, 2.0, 0.0, 3.0, 3.0, 0.6, 0.5).is_err());
    let mut cfg = frozen_cfg(0.2);
    cfg.tau *= 2.0;
    assert!(cfg.validate().is_err());
}

#[test]
fn phi_condition_on_dense_sample() {
    let p = solve_phi_profile(PI / 3.0, 2, 1.0).unwrap();
    let mu = [0.6, 0.8];
    for a in 0..40 {
        for r in 0..=10 {
            let ang = 2.0 * PI * a as f64 / 40.0;
            let rr = 0.1 * r as f64 / 10.0;
            let y = [rr * ang.cos() + mu[0] / 5.0, rr * ang.sin() + mu[1] / 5.0];
            assert!(p.at(y) >= 3.0 - 1e-12);
        }
    }
}

fn barenblatt_traj(n: usize) -> (Trajectory, Barenblatt) {
    let b = Barenblatt::new(2.0, 2, 0.05).unwrap();
    let g = GridSpec::rect([-2.0, -2.0], [2.0, 2.0], [n, n]).unwrap();
    let times: Vec<f64> = (0..=40).map(|k| 1.0 + 0.05 * k as f64).collect();
    let traj = Trajectory::from_pressure_fn(&g, &times, SolverParams::new(2.0, 1.0, 3.0), DriftSpec::zero(), |x, t| {
        b.pressure(x, t)
    })
    .unwrap();
    (traj, b)
}

#[test]
fn barenblatt_claim_holds_under_refinement() {
    for n in [256, 512] {
        let (traj, b) = barenblatt_traj(n);
        let x = [b.radius(2.0), 0.0];
        let fb = classify_fb_point(&traj, x, 2.0, &[0.1, 0.2, 0.3, 0.5, 0.8], 4.0).unwrap();
        assert_eq!(fb.verdict, FbType::TypeTwo);
        let rep = claim_comparison_check(&traj, &fb, &ClaimConfig::new(PI / 4.0, [-1.0, 0.0])).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass, "{}", rep.to_record());
        assert_eq!(rep.constant("consequence_positive"), Some(1.0));
    }
}

#[test]
fn claim_needs_type_two_point() {
    let (traj, b) = barenblatt_traj(128);
    let x = [b.radius(2.0), 0.0];
    let mut fb = classify_fb_point(&traj, x, 2.0, &[0.1, 0.2], 4.0).unwrap();
    fb.verdict = FbType::TypeOne;
    let rep = claim_comparison_check(&traj, &fb, &ClaimConfig::new(PI / 4.0, [-1.0, 0.0])).unwrap();
    assert_eq!(rep.verdict, Verdict::Inconclusive);
}

#[test]
fn claim_rejects_wrong_cone_axis() {
    let (traj, b) = barenblatt_traj(256);
    let x = [b.radius(2.0), 0.0];
    let fb = classify_fb_point(&traj, x, 2.0, &[0.1, 0.2, 0.3, 0.5, 0.8], 4.0).unwrap();
    let rep = claim_comparison_check(&traj, &fb, &ClaimConfig::new(PI / 4.0, [1.0, 0.0])).unwrap();
    assert_eq!(rep.verdict, Verdict::Inconclusive);
    assert!(rep.notes.iter().any(|n| n.contains("cone")));
}
