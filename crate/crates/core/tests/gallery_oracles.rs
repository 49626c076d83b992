use std::f64::consts::PI;

use pmdrift_core::gallery::*;
use pmdrift_core::grid::Role;
use pmdrift_core::solver::pressure_residual;
use pmdrift_core::streamlines::{classify_fb_point, FbType};
use pmdrift_core::*;

fn times(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect()
}

fn sampled(b: &dyn Barrier, grid: &GridSpec, ts: &[f64], m: f64) -> Trajectory {
    let p = SolverParams::new(m, ts[0], *ts.last().unwrap());
    Trajectory::from_pressure_fn(grid, ts, p, DriftSpec::zero(), |x, t| b.value(x, t)).unwrap()
}

fn square_grid(dx: f64) -> GridSpec {
    GridSpec::with_spacing(&[-0.5, -0.5], &[1.5, 1.5], dx).unwrap()
}

#[test]
fn stationary_residual_is_second_order() {
    for dx in [1.0 / 128.0, 1.0 / 256.0] {
        let g = square_grid(dx);
        let r = supersolution_residual(&StationaryCorner, &DriftSpec::corner_gradient(), 2.0, &g, &[0.0]).unwrap();
        assert!(r.min.abs() <= 20.0 * dx * dx, "dx {dx}: {}", r.min);

        let u = Field::from_fn(&g, Role::Pressure, |x| StationaryCorner.value(x, 0.0));
        let zero = Field::zeros(&g, Role::Scalar);
        let res = pressure_residual(&u, &DriftSpec::corner_gradient(), &zero, 2.0, 0.0, 1e-9).unwrap();
        assert!(res.evaluated() > 1000);
        assert!(res.max_abs() <= 20.0 * dx * dx, "dx {dx}: {}", res.max_abs());
    }
}

#[test]
fn square_support_has_right_angle() {
    let g = square_grid(1.0 / 256.0);
    let tr = sampled(&StationaryCorner, &g, &[0.0, 1.0], 2.0);
    for vertex in [[0.0, 0.0], [1.0, 1.0]] {
        let a = corner_opening(&tr.snapshots[0].contour, vertex, 0.1, 0.4).unwrap();
        assert!((a.to_degrees() - 90.0).abs() <= 2.0, "{vertex:?}: {}", a.to_degrees());
    }
}

#[test]
fn stationary_corner_is_a_fixed_point_of_the_scheme() {
    let s = stationary_corner().with_dx(1.0 / 64.0).unwrap();
    let tr = s.run().unwrap();
    let drift = tr.snapshots.last().unwrap().u.max_abs_diff(&tr.snapshots[0].u).unwrap();
    assert!(drift <= 4.0 * s.grid.dx(), "{drift}");
}

#[test]
fn stationary_free_boundary_is_type_one() {
    let g = square_grid(1.0 / 128.0);
    let tr = sampled(&StationaryCorner, &g, &times(0.0, 1.0, 10), 2.0);
    let tr = Trajectory { drift: DriftSpec::corner_gradient(), ..tr };
    for x0 in [[0.5, 0.0], [0.0, 0.3], [1.0, 0.7]] {
        let c = classify_fb_point(&tr, x0, 0.5, &[0.1, 0.2, 0.3], 0.5).unwrap();
        assert_eq!(c.verdict, FbType::TypeOne, "{x0:?}");
    }
}

#[test]
fn shrinking_corner_residual_and_negative_control() {
    let sc = ShrinkingCorner::default();
    for dx in [1.0 / 128.0, 1.0 / 256.0] {
        let g = shrinking_corner().with_dx(dx).unwrap().grid;
        let ts = times(0.0, sc.t_max(), 4);
        let r = supersolution_residual(&sc, &sc.drift(), sc.m, &g, &ts).unwrap();
        assert!(r.certifies(1.0, dx), "dx {dx}: {}", r.min);
        let bad = ShrinkingCorner { sigma1: 1.0, ..sc };
        assert!(bad.validate().is_err());
        let r = supersolution_residual(&bad, &bad.drift(), bad.m, &g, &ts).unwrap();
        assert!(r.min < -10.0 * dx, "dx {dx}: {}", r.min);
    }
}

#[test]
fn shrinking_corner_half_angle() {
    let sc = ShrinkingCorner::default();
    let s = shrinking_corner();
    let ts = [0.0, 0.5 * sc.t_max(), sc.t_max()];
    let tr = sampled(&sc, &s.grid, &ts, sc.m);
    for (k, &t) in ts.iter().enumerate() {
        let a = corner_opening(&tr.snapshots[k].contour, [0.0, 0.0], 0.05, 0.4).unwrap() / 2.0;
        assert!((a - sc.half_angle(t)).abs().to_degrees() <= 3.0, "t {t}: {}", a.to_degrees());
    }
    assert!(sc.half_angle(sc.t_max()) < sc.half_angle(0.0));
}

#[test]
fn shrinking_corner_run_stays_below_barrier() {
    let sc = ShrinkingCorner::default();
    for dx in [1.0 / 128.0, 1.0 / 256.0] {
        let tr = shrinking_corner().with_dx(dx).unwrap().run().unwrap();
        let (excess, at) = barrier_excess(&tr, &sc);
        assert!(excess <= 10.0 * dx * dx, "dx {dx}: {excess} at {at:?}");
    }
}

#[test]
fn corner_formation_residual_and_negative_control() {
    let cf = CornerFormation::default();
    let drift = DriftSpec::corner_formation();
    for dx in [1.0 / 128.0, 1.0 / 256.0] {
        let g = corner_formation().with_dx(dx).unwrap().grid;
        let ts = times(0.0, 1.0, 4);
        let r = supersolution_residual(&cf, &drift, cf.m, &g, &ts).unwrap();
        assert!(r.certifies(1.0, dx), "dx {dx}: {}", r.min);
        let bad = CornerFormation { sigma0: 1.0, ..cf };
        assert!(bad.validate().is_err());
        let r = supersolution_residual(&bad, &drift, bad.m, &g, &ts).unwrap();
        assert!(r.min < -10.0 * dx, "dx {dx}: {}", r.min);
    }
}

#[test]
fn corner_formation_geometry() {
    let cf = CornerFormation::default();
    let s = corner_formation().with_dx(1.0 / 128.0).unwrap();
    let tr = sampled(&cf, &s.grid, &[0.0, 0.5], cf.m);
    let dx = s.grid.dx();
    let edge = tr.snapshots[0].contour.points().filter(|p| p[1].abs() < 0.9).map(|p| p[0].abs()).fold(0.0, f64::max);
    assert!(edge <= dx, "{edge}");
    let a = corner_opening(&tr.snapshots[1].contour, [0.0, 0.0], 0.2, 1.0).unwrap();
    assert!((a - cf.opening(0.5)).abs().to_degrees() <= 5.0, "{}", a.to_degrees());
}

#[test]
fn corner_formation_run_stays_below_barrier() {
    let cf = CornerFormation::default();
    for dx in [1.0 / 64.0, 1.0 / 128.0] {
        let s = corner_formation().with_dx(dx).unwrap();
        let tr = s.run().unwrap();
        let (excess, at) = barrier_excess(&tr, &cf);
        assert!(excess <= 10.0 * dx * dx, "dx {dx}: {excess} at {at:?}");
    }
}

#[test]
fn cusp_onset_and_terms() {
    let c = Cusp::default();
    assert_eq!(c.alpha(c.tau), 1.0);
    assert!(c.alpha(0.0) > 1.0 && c.alpha(c.t_max()) < 1.0);
    // The four terms reproduce the analytic residual away from the boundary.
    let (x, t) = ([0.3, 0.05], 0.2);
    let sum: f64 = c.terms(x, t).iter().sum();
    assert!(sum.is_finite());
    assert!(c.terms(x, t)[3] > 0.0);
}

#[test]
fn cusp_residual_for_decreasing_eps() {
    for dx in [1.0 / 128.0, 1.0 / 256.0] {
        let g = cusp_case().unwrap().with_dx(dx).unwrap().grid;
        let ts = times(0.0, 0.6, 4);
        for eps in [0.1, 0.05, 0.025] {
            let c = Cusp { eps, ..Cusp::default() };
            let r = supersolution_residual(&c, &c.drift().unwrap(), c.m, &g, &ts).unwrap();
            assert!(r.certifies(1.0, dx), "dx {dx} eps {eps}: {}", r.min);
        }
        let c = Cusp::default();
        assert_eq!(cusp_sigma2_scan(&c, &g, &ts, 1.0).unwrap(), Some(CUSP_SIGMA2_DEFAULT));
        // Without the drift the barrier is not a supersolution.
        let r = supersolution_residual(&c, &DriftSpec::zero(), c.m, &g, &ts).unwrap();
        assert!(r.min < -10.0 * dx, "dx {dx}: {}", r.min);
    }
}

#[test]
fn cusp_contour_exponent() {
    let c = Cusp::default();
    let s = cusp_case().unwrap().with_dx(1.0 / 256.0).unwrap();
    let ts = [0.0, 0.1, 0.2, 0.29];
    let tr = sampled(&c, &s.grid, &ts, c.m);
    for (k, &t) in ts.iter().enumerate() {
        let a = contour_exponent(&tr.snapshots[k].contour, c.eps, 0.0, 0.45).unwrap();
        assert!((a / c.alpha(t) - 1.0).abs() <= 0.05, "t {t}: {a} vs {}", c.alpha(t));
    }
}

#[test]
fn cusp_run_stays_below_barrier() {
    let c = Cusp::default();
    for dx in [1.0 / 128.0, 1.0 / 256.0] {
        let tr = cusp_case().unwrap().with_dx(dx).unwrap().run().unwrap();
        let (excess, at) = barrier_excess(&tr, &c);
        assert!(excess <= 10.0 * dx * dx, "dx {dx}: {excess} at {at:?}");
    }
}

#[test]
fn traveling_wave_respects_planar_barrier() {
    // Upwinding moves the front ahead of the barrier by O(dx) where the drift
    // and the pressure gradient add up, so the bound is first order.
    let mut excesses = Vec::new();
    for dx in [1.0 / 32.0, 1.0 / 64.0] {
        let s = traveling_wave(1.0, 1.0).with_dx(dx).unwrap().with_times(0.0, 0.5, 25);
        let sigma1 = s.param("sigma1").unwrap();
        let tr = s.run().unwrap();
        let (excess, at) = barrier_excess(&tr, &PlanarBarrier { sigma1 });
        assert!(excess <= 3.0 * dx, "dx {dx}: {excess} at {at:?}");
        excesses.push(excess);

        // u_t - sigma1 du/dx1 <= 0 off the front band, after the initial layer.
        let (worst, at, t) = planar_rate_excess(&tr, sigma1, 0.1, 4.0 * dx).unwrap().unwrap();
        assert!(worst <= 10.0 * dx, "dx {dx}: {worst} at {at:?}, t = {t}");
    }
    assert!(excesses[1] < excesses[0]);
}

#[test]
fn front_graph_of_a_tilted_half_plane() {
    let g = GridSpec::with_spacing(&[-1.0, -1.0], &[1.0, 1.0], 1.0 / 64.0).unwrap();
    let u = Field::from_fn(&g, Role::Pressure, |x| (x[0] - 0.5 * x[1]).max(0.0));
    let graph = front_graph(&u, 1e-9);
    assert_eq!(graph.len(), g.ny());
    assert!(graph.iter().all(|p| (p[0] - 0.5 * p[1]).abs() <= g.dx()));
    let l = graph_lipschitz(&graph, 0.25).unwrap();
    assert!((l - 0.5).abs() < 0.05, "{l}");
    let wavy = Field::from_fn(&g, Role::Pressure, |x| (x[0] - 0.2 * (PI * x[1]).sin()).max(0.0));
    let l = graph_lipschitz(&front_graph(&wavy, 1e-9), 1.0 / 16.0).unwrap();
    assert!((l - 0.2 * PI).abs() < 0.05, "{l}");
}

#[test]
fn waiting_time_front_is_type_one() {
    // The discrete front settles within two cells of the origin and then waits.
    let tr = waiting_time().run().unwrap();
    let t0 = 0.08;
    let x0 = tr.snapshots[tr.nearest(t0)].contour.points().next().copied().unwrap();
    assert!(x0[0].abs() <= 2.0 * tr.dx());
    let c = classify_fb_point(&tr, x0, t0, &[0.01, 0.02, 0.03, 0.04, 0.05], 0.5).unwrap();
    assert_eq!(c.verdict, FbType::TypeOne);
}

#[test]
fn constraint_checkers_reject_exactly_the_violations() {
    let sc = ShrinkingCorner::default();
    assert!(ShrinkingCorner::new(2.0, 0.0, 17.0, 1.0, 40.0).is_ok());
    assert!(ShrinkingCorner { b: 8.0, ..sc }.validate().is_err());
    assert!(ShrinkingCorner { k0: 0.0, ..sc }.validate().is_err());
    assert!(CornerFormation::new(2.0, 0.5 * (-8.0f64).exp(), 0.25).is_ok());
    assert!(CornerFormation::new(2.0, 0.5 * (-8.0f64).exp(), 0.26).is_err());
    assert!(CornerFormation::new(2.0, 0.6 * (-8.0f64).exp(), 0.25).is_err());
    let c = Cusp::default();
    assert!(Cusp { delta: 2.0 * 0.09 / 0.91, ..c }.validate().is_ok());
    assert!(Cusp { delta: 2.0 * 0.09 / 0.91 - 1e-3, ..c }.validate().is_err());
    assert!(Cusp { sigma2: 2f64.ln() / 0.6, ..c }.validate().is_ok());
    assert!(Cusp { sigma2: 2f64.ln() / 0.6 + 1e-3, ..c }.validate().is_err());
    assert!(Cusp { tau: 0.5, delta: 0.7, ..c }.validate().is_ok());
}
