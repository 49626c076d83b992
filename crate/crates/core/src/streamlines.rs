//! Characteristics `dX/ds = -b(X, t0 + s)` of the drift and the free-boundary
//! checks built on them.

use crate::drift::{max_divergence, max_speed, Drift};
use crate::error::{CoreError, Result};
use crate::grid::{discrete_gradient, mollify, positivity_set, Field, GridSpec, Point};
use crate::report::{EstimateReport, Verdict, Witness};
use crate::sampling::{ball_max, ball_min};
use crate::solver::{interior_positive_mask, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct StreamlinePath {
    pub anchor: Point,
    pub t0: f64,
    /// Elapsed times `s_j`, starting at 0 and signed like the requested span.
    pub times: Vec<f64>,
    pub positions: Vec<Point>,
    pub h_ode: f64,
    /// Set when the path left the box and was truncated.
    pub exited: bool,
}

impl StreamlinePath {
    pub fn end(&self) -> Point {
        *self.positions.last().expect("path has its anchor")
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("path has its anchor")
    }
}

#[inline]
fn rk4_step(drift: &dyn Drift, x: Point, t: f64, h: f64) -> Point {
    let f = |x: Point, t: f64| {
        let b = drift.velocity(x, t);
        [-b[0], -b[1]]
    };
    let k1 = f(x, t);
    let k2 = f([x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]], t + 0.5 * h);
    let k3 = f([x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]], t + 0.5 * h);
    let k4 = f([x[0] + h * k3[0], x[1] + h * k3[1]], t + h);
    [
        x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Integrates `X(x0, t0; s)` with classical RK4 using steps of at most
/// `h_ode`; `s` may be negative. With a grid the path is truncated on exit.
pub fn integrate_streamline(
    x0: Point,
    t0: f64,
    s: f64,
    drift: &dyn Drift,
    h_ode: f64,
    grid: Option<&GridSpec>,
) -> Result<StreamlinePath> {
    if !(h_ode > 0.0) || !s.is_finite() {
        return Err(CoreError::InvalidParameter("streamline step must be positive and span finite".into()));
    }
    let n = ((s.abs() / h_ode).ceil() as usize).max(1);
    let h = s / n as f64;
    let mut path = StreamlinePath {
        anchor: x0,
        t0,
        times: vec![0.0],
        positions: vec![x0],
        h_ode,
        exited: false,
    };
    if s == 0.0 {
        return Ok(path);
    }
    let mut x = x0;
    for k in 0..n {
        let tau = k as f64 * h;
        x = rk4_step(drift, x, t0 + tau, h);
        if !x[0].is_finite() || !x[1].is_finite() {
            return Err(CoreError::NumericalBlowUp { t: t0 + tau + h });
        }
        if let Some(g) = grid {
            if !g.contains(x) {
                path.exited = true;
                break;
            }
        }
        path.times.push(if k + 1 == n { s } else { (k + 1) as f64 * h });
        path.positions.push(x);
    }
    Ok(path)
}

/// End point of the streamline, or `None` if it leaves the grid.
pub fn streamline_endpoint(
    x0: Point,
    t0: f64,
    s: f64,
    drift: &dyn Drift,
    h_ode: f64,
    grid: &GridSpec,
) -> Option<Point> {
    let p = integrate_streamline(x0, t0, s, drift, h_ode, Some(grid)).ok()?;
    (!p.exited).then(|| p.end())
}

/// Default integrator step for a trajectory: a quarter cell.
pub fn default_h_ode(grid: &GridSpec) -> f64 {
    0.25 * grid.dx()
}

/// Largest `-min Delta_h (mollified u)` over the interior positive cells of all
/// snapshots, clamped at zero: a measured `C0` with `Delta u >= -C0`.
pub fn measured_laplacian_floor(traj: &Trajectory) -> Result<f64> {
    let g = traj.grid();
    let mut c0: f64 = 0.0;
    for s in &traj.snapshots {
        let set = positivity_set(&s.u, traj.threshold());
        let mask = interior_positive_mask(&set.mask, g, 2);
        let smooth = mollify(&s.u, 2.0 * g.dx())?;
        let lap = crate::grid::discrete_laplacian(&smooth);
        for (idx, &m) in mask.iter().enumerate() {
            if m {
                c0 = c0.max(-lap.values()[idx]);
            }
        }
    }
    Ok(c0)
}

/// Upper bound `1 / (2 (1 + |b|_inf))` on admissible streamline spans.
pub fn consistency_span(traj: &Trajectory) -> f64 {
    let bmax = max_speed(&traj.drift, traj.grid(), traj.first_time());
    1.0 / (2.0 * (1.0 + bmax))
}

/// Checks that positivity propagates along streamlines with the quantitative
/// decay `u(X(x,t;s), t+s) >= exp(-C s) u(x,t) - 10 dx`,
/// `C = (m-1)(C0 + |div b|_inf)`. `c0` defaults to the measured Laplacian floor.
pub fn check_support_consistency(traj: &Trajectory, s: f64, c0: Option<f64>) -> Result<EstimateReport> {
    if traj.len() < 2 {
        return Err(CoreError::Precondition("support consistency needs at least two snapshots".into()));
    }
    let span = consistency_span(traj);
    if !(s > 0.0) || s > span * (1.0 + 1e-12) {
        return Err(CoreError::Precondition(format!("span s = {s} must lie in (0, {span}]")));
    }
    let g = traj.grid().clone();
    let m = traj.m();
    let c0 = match c0 {
        Some(c) => c,
        None => measured_laplacian_floor(traj)?,
    };
    let div = max_divergence(&traj.drift, &g, traj.first_time());
    let rate = (m - 1.0) * (c0 + div);
    let decay = (-rate * s).exp();
    let tol = 10.0 * g.dx();
    let h_ode = default_h_ode(&g);

    let mut checked = 0usize;
    let mut positivity_failures = 0usize;
    let mut decay_failures = 0usize;
    let mut worst_margin = f64::INFINITY;
    let mut witness = None;
    for snap in &traj.snapshots {
        let t_end = snap.t + s;
        if t_end > traj.last_time() + 1e-12 {
            break;
        }
        let Some(later) = traj.pressure_at(t_end) else { continue };
        let level = positivity_set(&later, traj.threshold()).level;
        let set = positivity_set(&snap.u, traj.threshold());
        let mask = interior_positive_mask(&set.mask, &g, 2);
        for (idx, &inside) in mask.iter().enumerate() {
            if !inside {
                continue;
            }
            let x = g.center_of(idx);
            let Some(y) = streamline_endpoint(x, snap.t, s, &traj.drift, h_ode, &g) else { continue };
            let Some(v) = later.sample(y) else { continue };
            checked += 1;
            let ux = snap.u.values()[idx];
            let margin = v - (decay * ux - tol);
            if !(v > level) {
                positivity_failures += 1;
            }
            if margin < 0.0 {
                decay_failures += 1;
            }
            if margin < worst_margin {
                worst_margin = margin;
                witness = Some(Witness { x, t: snap.t, value: v });
            }
        }
    }
    if checked == 0 {
        return Ok(EstimateReport::inconclusive("support_consistency", "no interior positive cell had a streamline inside the run"));
    }
    let ok = positivity_failures == 0 && decay_failures == 0;
    Ok(EstimateReport::new("support_consistency", Verdict::from_bool(ok))
        .with_constant("s", s)
        .with_constant("C0", c0)
        .with_constant("decay_rate", rate)
        .with_constant("checked", checked as f64)
        .with_constant("positivity_failures", positivity_failures as f64)
        .with_constant("decay_failures", decay_failures as f64)
        .with_constant("worst_margin", worst_margin)
        .with_tolerance("decay", tol)
        .with_witness(witness))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FbType {
    TypeOne,
    TypeTwo,
    Inconclusive,
}

impl FbType {
    pub fn as_str(self) -> &'static str {
        match self {
            FbType::TypeOne => "type_one",
            FbType::TypeTwo => "type_two",
            FbType::Inconclusive => "inconclusive",
        }
    }
}

/// Outcome of the two ball tests at one span `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpanEvidence {
    pub s: f64,
    pub radius: f64,
    /// Ball below `dx`, or a time or ball outside the run.
    pub skipped: bool,
    pub backward_empty: bool,
    pub forward_positive: bool,
    /// Distance from `X(x0, t0; -s)` to the free boundary at `t0 - s`.
    pub backward_gap: f64,
}

impl SpanEvidence {
    pub fn passed(&self) -> bool {
        !self.skipped && self.backward_empty && self.forward_positive
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FbClassification {
    pub point: Point,
    pub t0: f64,
    pub verdict: FbType,
    pub c_star: f64,
    pub beta: f64,
    /// Largest sampled span that passed both tests.
    pub h: f64,
    pub evidence: Vec<SpanEvidence>,
}

impl FbClassification {
    pub fn to_report(&self) -> EstimateReport {
        let mut r = EstimateReport::new(
            "classify_fb_point",
            if self.verdict == FbType::Inconclusive { Verdict::Inconclusive } else { Verdict::Pass },
        )
        .with_constant("c_star", self.c_star)
        .with_constant("beta", self.beta)
        .with_constant("h", self.h)
        .with_witness(Some(Witness { x: self.point, t: self.t0, value: 0.0 }))
        .with_note(format!("verdict {}", self.verdict.as_str()));
        for e in &self.evidence {
            r = r.with_note(format!(
                "s={} radius={} skipped={} backward_empty={} forward_positive={}",
                e.s, e.radius, e.skipped, e.backward_empty, e.forward_positive
            ));
        }
        r
    }
}

/// Exponent lattice searched when fitting `(C*, beta)`.
pub fn beta_lattice() -> Vec<f64> {
    (0..=49).map(|k| 0.55 + 0.05 * k as f64).collect()
}

struct BallProbe {
    back: Vec<Option<(Point, Field, f64)>>,
    fwd: Vec<Option<(Point, Field, f64)>>,
    dx: f64,
}

impl BallProbe {
    fn evidence(&self, k: usize, s: f64, radius: f64) -> SpanEvidence {
        let mut e = SpanEvidence {
            s,
            radius,
            skipped: true,
            backward_empty: false,
            forward_positive: false,
            backward_gap: f64::NAN,
        };
        let (Some((xb, ub, lb)), Some((xf, uf, lf))) = (&self.back[k], &self.fwd[k]) else {
            return e;
        };
        if radius < self.dx {
            return e;
        }
        let (Some(bmax), Some(fmin)) = (ball_max(ub, *xb, radius), ball_min(uf, *xf, radius)) else {
            return e;
        };
        e.skipped = false;
        e.backward_empty = bmax <= *lb;
        e.forward_positive = fmin > *lf;
        e
    }
}

/// Classifies a free-boundary point by the dichotomy of backward streamlines.
///
/// For each `s` the backward ball `B(X(-s), C* s^beta)` at `t0 - s` must be
/// empty and the forward ball `B(X(s), C* s^beta)` at `t0 + s` positive.
/// `C*` is bisected in `(0, ball_scale]` per exponent; the pair with the most
/// passing spans wins (ties go to the smaller exponent). The point is
/// `TypeTwo` when every tested span passes with at least two spans tested,
/// `TypeOne` when `X(-s)` stays within `dx` of the free boundary for every `s`.
pub fn classify_fb_point(
    traj: &Trajectory,
    x0: Point,
    t0: f64,
    s_samples: &[f64],
    ball_scale: f64,
) -> Result<FbClassification> {
    let g = traj.grid().clone();
    let dx = g.dx();
    if s_samples.is_empty() || s_samples.iter().any(|&s| !(s > 0.0)) {
        return Err(CoreError::InvalidParameter("span samples must be positive".into()));
    }
    if !(ball_scale > 0.0) {
        return Err(CoreError::InvalidParameter("ball scale must be positive".into()));
    }
    let u0 = traj
        .pressure_at(t0)
        .ok_or_else(|| CoreError::Precondition(format!("t0 = {t0} outside the run")))?;
    let gamma = positivity_set(&u0, traj.threshold()).contour;
    if gamma.distance_to(x0) > dx {
        return Err(CoreError::Precondition(format!(
            "point {x0:?} is {} away from the free boundary at t0 = {t0}",
            gamma.distance_to(x0)
        )));
    }
    let h_ode = default_h_ode(&g);
    let mut back = Vec::new();
    let mut fwd = Vec::new();
    let mut gaps = Vec::new();
    for &s in s_samples {
        let b = traj.pressure_at(t0 - s).and_then(|u| {
            let y = streamline_endpoint(x0, t0, -s, &traj.drift, h_ode, &g)?;
            let set = positivity_set(&u, traj.threshold());
            let gap = set.contour.distance_to(y);
            gaps.push(gap);
            Some((y, u, set.level))
        });
        if b.is_none() {
            gaps.push(f64::NAN);
        }
        back.push(b);
        fwd.push(traj.pressure_at(t0 + s).and_then(|u| {
            let y = streamline_endpoint(x0, t0, s, &traj.drift, h_ode, &g)?;
            let level = positivity_set(&u, traj.threshold()).level;
            Some((y, u, level))
        }));
    }
    let probe = BallProbe { back, fwd, dx };

    let run_all = |c: f64, beta: f64| -> Vec<SpanEvidence> {
        s_samples
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let mut e = probe.evidence(k, s, c * s.powf(beta));
                e.backward_gap = gaps[k];
                e
            })
            .collect()
    };
    let all_pass = |ev: &[SpanEvidence]| ev.iter().all(|e| e.skipped || e.passed());
    let score = |ev: &[SpanEvidence]| ev.iter().filter(|e| e.passed()).count();

    let mut best: Option<(usize, f64, f64, Vec<SpanEvidence>)> = None;
    for beta in beta_lattice() {
        let top = run_all(ball_scale, beta);
        let (c, ev) = if all_pass(&top) {
            (ball_scale, top)
        } else {
            let (mut lo, mut hi) = (0.0, ball_scale);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if all_pass(&run_all(mid, beta)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (lo, run_all(lo, beta))
        };
        let sc = score(&ev);
        if best.as_ref().map_or(true, |b| sc > b.0) {
            best = Some((sc, c, beta, ev));
        }
    }
    let (sc, c_star, beta, evidence) = best.expect("lattice is non-empty");
    let h = evidence.iter().filter(|e| e.passed()).map(|e| e.s).fold(0.0, f64::max);
    let type_one = gaps.iter().all(|&d| d.is_finite() && d <= dx);
    let verdict = if sc >= 2 && evidence.iter().all(|e| e.skipped || e.passed()) {
        FbType::TypeTwo
    } else if type_one {
        FbType::TypeOne
    } else {
        FbType::Inconclusive
    };
    Ok(FbClassification { point: x0, t0, verdict, c_star, beta, h, evidence })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalVelocity {
    pub measured: f64,
    pub law: f64,
    /// Outward unit normal used for both.
    pub normal: Point,
}

/// Signed position along `x + lambda n` where the pressure crosses `level`,
/// nearest to `lambda = 0` within `reach`.
fn crossing_along(u: &Field, level: f64, x: Point, n: Point, reach: f64) -> Option<f64> {
    let step = 0.25 * u.grid().dx();
    let steps = (reach / step).ceil() as i64;
    let at = |l: f64| u.sample([x[0] + l * n[0], x[1] + l * n[1]]);
    let mut best: Option<f64> = None;
    let mut prev: Option<(f64, f64)> = None;
    for k in -steps..=steps {
        let l = k as f64 * step;
        let Some(v) = at(l) else {
            prev = None;
            continue;
        };
        if let Some((lp, vp)) = prev {
            if (vp > level) != (v > level) {
                let c = lp + (level - vp) / (v - vp) * (l - lp);
                if best.map_or(true, |b: f64| c.abs() < b.abs()) {
                    best = Some(c);
                }
            }
        }
        prev = Some((l, v));
    }
    best
}

/// Measured normal speed of the free boundary at `x` near snapshot `k`,
/// from the displacement of the level crossing along the outward normal over
/// `window` snapshots on each side, and the law `|grad u| - b . n` one cell
/// inside. `None` when the crossing cannot be followed through the window.
pub fn fb_normal_velocity(traj: &Trajectory, x: Point, k: usize, window: usize) -> Result<Option<NormalVelocity>> {
    if window == 0 || k >= traj.len() {
        return Err(CoreError::InvalidParameter("window must be positive and k a snapshot index".into()));
    }
    let g = traj.grid();
    let dx = g.dx();
    let a = k.saturating_sub(window);
    let b = (k + window).min(traj.len() - 1);
    if a == b {
        return Ok(None);
    }
    let u = &traj.snapshots[k].u;
    let grad = discrete_gradient(u);
    // Normal from the gradient a cell inside; step along -grad u until positive.
    let Some(g0) = grad.sample(x) else { return Ok(None) };
    let gn = g0[0].hypot(if g.dim() == 2 { g0[1] } else { 0.0 });
    if gn == 0.0 {
        return Ok(None);
    }
    let n = [-g0[0] / gn, if g.dim() == 2 { -g0[1] / gn } else { 0.0 }];
    let inside = [x[0] - dx * n[0], x[1] - dx * n[1]];
    let Some(gi) = grad.sample(inside) else { return Ok(None) };
    let t = traj.snapshots[k].t;
    let bvec = traj.drift.velocity(inside, t);
    let law = gi[0].hypot(if g.dim() == 2 { gi[1] } else { 0.0 }) - (bvec[0] * n[0] + bvec[1] * n[1]);

    let reach = 8.0 * dx + 2.0 * (traj.snapshots[b].t - traj.snapshots[a].t) * (gn + 1.0);
    let pos = |idx: usize| {
        let s = &traj.snapshots[idx];
        let level = positivity_set(&s.u, traj.threshold()).level;
        crossing_along(&s.u, level, x, n, reach)
    };
    let (Some(la), Some(lb)) = (pos(a), pos(b)) else { return Ok(None) };
    let measured = (lb - la) / (traj.snapshots[b].t - traj.snapshots[a].t);
    Ok(Some(NormalVelocity { measured, law, normal: n }))
}

/// Sample of free-boundary points of a snapshot: every `stride`-th contour vertex.
pub fn contour_sample(traj: &Trajectory, k: usize, stride: usize) -> Vec<Point> {
    traj.snapshots[k].contour.points().step_by(stride.max(1)).copied().collect()
}
