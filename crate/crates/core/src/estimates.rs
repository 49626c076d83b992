//! Quantitative verifiers for the semi-convexity, ball-average,
//! non-degeneracy and monotonicity estimates of the pressure.

use std::f64::consts::PI;

use crate::drift::{max_divergence, Drift};
use crate::error::{CoreError, Result};
use crate::grid::{discrete_gradient, discrete_laplacian, mollify, positivity_set, Field, GridSpec, Point};
use crate::report::{EstimateReport, Verdict, Witness};
use crate::sampling::{ball_inside, ball_max, cells_in_ball};
use crate::solver::{interior_positive_mask, Trajectory};
use crate::streamlines::{default_h_ode, streamline_endpoint};

/// Spatial cone `{p : angle(p, axis) <= half_angle}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeSpec {
    pub axis: Point,
    pub half_angle: f64,
}

impl ConeSpec {
    pub fn new(axis: Point, half_angle: f64) -> Result<Self> {
        let n = axis[0].hypot(axis[1]);
        if !((n - 1.0).abs() <= 1e-12) {
            return Err(CoreError::InvalidParameter(format!("cone axis must be a unit vector, |axis| = {n}")));
        }
        if !(half_angle > 0.0 && half_angle <= PI / 2.0 + 1e-15) {
            return Err(CoreError::InvalidParameter(format!("cone half-angle {half_angle} must lie in (0, pi/2]")));
        }
        Ok(ConeSpec { axis, half_angle })
    }

    /// Unit vector at angle `phi` from `axis`.
    pub fn axis_at_angle(angle: f64) -> Point {
        [angle.cos(), angle.sin()]
    }

    /// `rays` directions spread evenly over the sector, both edges and the
    /// axis included when `rays` is odd. In 1-D only the axis is used.
    pub fn directions(&self, dim: usize, rays: usize) -> Vec<Point> {
        if dim == 1 {
            return vec![[self.axis[0].signum(), 0.0]];
        }
        let base = self.axis[1].atan2(self.axis[0]);
        let n = rays.max(2);
        (0..n)
            .map(|k| {
                let a = base - self.half_angle + 2.0 * self.half_angle * k as f64 / (n - 1) as f64;
                [a.cos(), a.sin()]
            })
            .collect()
    }
}

/// Default number of sampled rays: 16 boundary-to-boundary rays plus the axis.
pub const CONE_RAYS: usize = 17;

/// Cells considered by a verifier.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Whole,
    /// Axis-aligned box `[lo, hi]`.
    Rect { lo: Point, hi: Point },
    Mask(Vec<bool>),
}

impl Region {
    pub fn contains(&self, grid: &GridSpec, idx: usize) -> bool {
        match self {
            Region::Whole => true,
            Region::Rect { lo, hi } => {
                let c = grid.center_of(idx);
                c[0] >= lo[0] && c[0] <= hi[0] && (grid.dim() == 1 || (c[1] >= lo[1] && c[1] <= hi[1]))
            }
            Region::Mask(m) => m[idx],
        }
    }

    /// Square window of half-width `half` around `c`.
    pub fn window(c: Point, half: f64) -> Region {
        Region::Rect { lo: [c[0] - half, c[1] - half], hi: [c[0] + half, c[1] + half] }
    }
}

fn slack(grid: &GridSpec) -> f64 {
    10.0 * grid.dx()
}

/// Least-squares fit of `y = -s1 x - s2`; returns `(s1, s2)`.
fn fit_envelope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    (-slope, -intercept)
}

/// Per-snapshot minima of the discrete Laplacian of the mollified pressure.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiconvexityProfile {
    pub times: Vec<f64>,
    pub minima: Vec<f64>,
    pub witnesses: Vec<Point>,
}

/// Minimum of `Delta_h (u * eta)` over interior positive cells of each
/// snapshot with `t > 0`. Cells within `2 + 2 radius/dx` cells of the free
/// boundary or within the boundary collar are excluded: the kink of the
/// discrete profile at the front is smeared over twice the mollifier width.
pub fn laplacian_minima(traj: &Trajectory, mollify_radius: f64) -> Result<SemiconvexityProfile> {
    let g = traj.grid().clone();
    let width = 2 + 2 * (mollify_radius / g.dx()).ceil() as usize;
    let mut out = SemiconvexityProfile { times: Vec::new(), minima: Vec::new(), witnesses: Vec::new() };
    for s in traj.snapshots.iter().filter(|s| s.t > 0.0) {
        let set = positivity_set(&s.u, traj.threshold());
        let mask = interior_positive_mask(&set.mask, &g, width);
        let lap = discrete_laplacian(&mollify(&s.u, mollify_radius)?);
        let mut best = (f64::INFINITY, [f64::NAN; 2]);
        for (idx, &m) in mask.iter().enumerate() {
            if m && lap.values()[idx] < best.0 {
                best = (lap.values()[idx], g.center_of(idx));
            }
        }
        if best.0.is_finite() {
            out.times.push(s.t);
            out.minima.push(best.0);
            out.witnesses.push(best.1);
        }
    }
    Ok(out)
}

/// Semi-convexity check `Delta u >= -s1/t - s2` with a least-squares envelope.
pub fn aronson_benilan(traj: &Trajectory, mollify_radius: f64) -> Result<EstimateReport> {
    if traj.snapshots.iter().filter(|s| s.t > 0.0).count() < 4 {
        return Err(CoreError::Precondition("aronson_benilan needs at least 4 snapshots with t > 0".into()));
    }
    let prof = laplacian_minima(traj, mollify_radius)?;
    if prof.minima.len() < 4 {
        return Ok(EstimateReport::inconclusive("aronson_benilan", "fewer than 4 snapshots have interior positive cells"));
    }
    let inv_t: Vec<f64> = prof.times.iter().map(|t| 1.0 / t).collect();
    let (s1, s2) = fit_envelope(&inv_t, &prof.minima);
    let tol = slack(traj.grid());
    let mut violations = 0;
    let mut worst = (f64::INFINITY, 0usize);
    for (k, (&t, &mn)) in prof.times.iter().zip(&prof.minima).enumerate() {
        let margin = mn - (-s1 / t - s2 - tol);
        if margin < 0.0 {
            violations += 1;
        }
        if margin < worst.0 {
            worst = (margin, k);
        }
    }
    let k = worst.1;
    let mut r = EstimateReport::new("aronson_benilan", Verdict::from_bool(violations == 0))
        .with_constant("sigma1", s1)
        .with_constant("sigma2", s2)
        .with_constant("violations", violations as f64)
        .with_constant("dx", traj.dx())
        .with_tolerance("slack", tol)
        .with_witness(Some(Witness { x: prof.witnesses[k], t: prof.times[k], value: prof.minima[k] }));
    for (t, mn) in prof.times.iter().zip(&prof.minima) {
        r = r.with_note(format!("t={t} min_laplacian={mn}"));
    }
    Ok(r)
}

/// Mean of `u` over the cells whose centres lie in `B(center, radius)`.
pub fn ball_average(u: &Field, center: Point, radius: f64) -> Result<f64> {
    let g = u.grid();
    if radius < 3.0 * g.dx() {
        return Err(CoreError::InvalidParameter(format!(
            "ball radius {radius} is below 3 cells ({})",
            3.0 * g.dx()
        )));
    }
    if !ball_inside(g, center, radius) {
        return Err(CoreError::InvalidParameter("ball leaves the box".into()));
    }
    let cells = cells_in_ball(g, center, radius);
    // Accumulate deviations from the first value so constant fields average exactly.
    let base = u.values()[cells[0]];
    let dev: f64 = cells.iter().map(|&i| u.values()[i] - base).sum();
    Ok(base + dev / cells.len() as f64)
}

fn positivity_level(u: &Field, traj: &Trajectory) -> f64 {
    positivity_set(u, traj.threshold()).level
}

fn vanishes_on_ball(u: &Field, level: f64, center: Point, radius: f64) -> Option<bool> {
    ball_max(u, center, radius).map(|v| v <= level)
}

/// Implication "small average at `t0 + tau` implies vacancy on `B(X(tau), R/6)`"
/// from a vacant ball `B(x0, R)` at `t0`. The fitted `c0` is the largest
/// value consistent with every sampled `tau`.
pub fn lemma41_check(traj: &Trajectory, x0: Point, t0: f64, radius: f64, taus: &[f64]) -> Result<EstimateReport> {
    let g = traj.grid().clone();
    let u0 = traj
        .pressure_at(t0)
        .ok_or_else(|| CoreError::Precondition(format!("t0 = {t0} outside the run")))?;
    match vanishes_on_ball(&u0, positivity_level(&u0, traj), x0, radius) {
        Some(true) => {}
        Some(false) => {
            return Ok(EstimateReport::inconclusive("lemma41", "u(., t0) does not vanish on B(x0, R)"));
        }
        None => return Err(CoreError::InvalidParameter("ball leaves the box".into())),
    }
    let h_ode = default_h_ode(&g);
    let mut c0 = f64::INFINITY;
    let mut tested = 0;
    let mut largest_ok: f64 = 0.0;
    let mut r = EstimateReport::new("lemma41", Verdict::Pass);
    for &tau in taus {
        let Some(u) = traj.pressure_at(t0 + tau) else { continue };
        let Some(y) = streamline_endpoint(x0, t0, tau, &traj.drift, h_ode, &g) else { continue };
        let Ok(avg) = ball_average(&u, y, radius) else { continue };
        let Some(vacant) = vanishes_on_ball(&u, positivity_level(&u, traj), y, radius / 6.0) else { continue };
        tested += 1;
        let normalized = avg * tau / (radius * radius);
        if vacant {
            largest_ok = largest_ok.max(normalized);
        } else {
            c0 = c0.min(normalized);
        }
        r = r.with_note(format!("tau={tau} normalized_average={normalized} vacant={vacant}"));
    }
    if tested == 0 {
        return Ok(EstimateReport::inconclusive("lemma41", "no sampled tau lies inside the run and the box"));
    }
    r.verdict = Verdict::from_bool(c0 > 0.0);
    Ok(r.with_constant("c0", c0)
        .with_constant("largest_vacant_average", largest_ok)
        .with_constant("R", radius)
        .with_witness(Some(Witness { x: x0, t: t0, value: 0.0 })))
}

/// Kernel of the moment functional: `G(r) = -ln r - (1 - r^2)/2` for `d = 2`,
/// `r^(2-d) - 1 - (d-2)(1 - r^2)/2` for `d = 3`. `G(1) = G'(1) = 0` and
/// `Delta G = d` away from the origin.
pub fn green_function(r: f64, d: usize) -> Result<f64> {
    match d {
        2 => Ok(-r.ln() - 0.5 * (1.0 - r * r)),
        3 => Ok(1.0 / r - 1.0 - 0.5 * (1.0 - r * r)),
        _ => Err(CoreError::InvalidParameter(format!("Green kernel defined for d = 2 or 3, got {d}"))),
    }
}

/// `int_{B_1} G(|x|) xi(x) dx` for a 2-D field supported in the unit ball.
/// Cells within one cell of the origin are integrated on a 32 x 32 sub-grid.
/// Only `d = 2` fields exist on the grids here; `d = 3` is rejected.
pub fn green_moment(xi: &Field, d: usize) -> Result<f64> {
    let g = xi.grid();
    if d != 2 || g.dim() != 2 {
        return Err(CoreError::InvalidParameter("green_moment needs a 2-D field and d = 2".into()));
    }
    let (hx, hy) = (g.spacing(0), g.spacing(1));
    let mut acc = 0.0;
    for (idx, &v) in xi.values().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let c = g.center_of(idx);
        let r = c[0].hypot(c[1]);
        if r > 1.0 + 0.5 * hx.hypot(hy) {
            return Err(CoreError::InvalidParameter(format!("mass outside the unit ball at {c:?}")));
        }
        let weight = if r < 1.5 * hx.max(hy) {
            let n = 32;
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let p = [
                        c[0] - 0.5 * hx + hx * (a as f64 + 0.5) / n as f64,
                        c[1] - 0.5 * hy + hy * (b as f64 + 0.5) / n as f64,
                    ];
                    let rr = p[0].hypot(p[1]);
                    if rr < 1.0 {
                        s += green_function(rr, 2)?;
                    }
                }
            }
            s / (n * n) as f64
        } else if r < 1.0 {
            green_function(r, 2)?
        } else {
            0.0
        };
        acc += weight * v * g.cell_volume();
    }
    Ok(acc)
}

/// Forward propagation of positivity from a ball with a large average:
/// `u(X(x0, t0; lambda tau), t0 + lambda tau) >= c2 R^2 / tau`. Also reports
/// `Y(t) = mean over the moving ball of rho^m` and its running integral.
pub fn lemma42_check(
    traj: &Trajectory,
    x0: Point,
    t0: f64,
    radius: f64,
    tau: f64,
    lambda: f64,
) -> Result<EstimateReport> {
    let g = traj.grid().clone();
    let u0 = traj
        .pressure_at(t0)
        .ok_or_else(|| CoreError::Precondition(format!("t0 = {t0} outside the run")))?;
    let avg = ball_average(&u0, x0, radius)?;
    let c1 = avg * tau / (radius * radius);
    if !(c1 > 0.0) {
        return Ok(EstimateReport::inconclusive("lemma42", "average hypothesis fails: u vanishes on B(x0, R)"));
    }
    let t1 = t0 + lambda * tau;
    let h_ode = default_h_ode(&g);
    let Some(y) = streamline_endpoint(x0, t0, lambda * tau, &traj.drift, h_ode, &g) else {
        return Ok(EstimateReport::inconclusive("lemma42", "streamline leaves the box"));
    };
    let Some(v) = traj.pressure_value(y, t1) else {
        return Ok(EstimateReport::inconclusive("lemma42", "t0 + lambda tau lies outside the run"));
    };
    let c2 = v * tau / (radius * radius);

    let m = traj.m();
    let mut ys = Vec::new();
    for s in traj.snapshots.iter().filter(|s| s.t >= t0 - 1e-12 && s.t <= t1 + 1e-12) {
        let Some(c) = streamline_endpoint(x0, t0, s.t - t0, &traj.drift, h_ode, &g) else { break };
        let Ok(yk) = ball_average(&s.rho.map(s.rho.role(), |r| r.powf(m)), c, radius) else { break };
        ys.push((s.t, yk));
    }
    let mut z = 0.0;
    for w in ys.windows(2) {
        z += 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1);
    }
    let y0 = ys.first().map_or(0.0, |p| p.1);
    let y_floor = (-lambda).exp() * y0 / 2.0;
    let y_holds = ys.iter().all(|p| p.1 >= y_floor);
    let ymin = ys.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(EstimateReport::new("lemma42", Verdict::from_bool(c2 > 0.0))
        .with_constant("c1", c1)
        .with_constant("c2", c2)
        .with_constant("lambda", lambda)
        .with_constant("Y0", y0)
        .with_constant("Ymin", ymin)
        .with_constant("Z", z)
        .with_constant("Y_floor_holds", if y_holds { 1.0 } else { 0.0 })
        .with_witness(Some(Witness { x: y, t: t1, value: v })))
}

/// Outcome of a non-degeneracy probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub kappa: f64,
    pub witness: Option<(Point, f64)>,
    pub probes: usize,
    pub skipped: usize,
}

/// `min u(x + eps mu) / eps` over points and step sizes; steps below `2 dx`
/// and probes leaving the box are skipped.
pub fn nondegeneracy_probe_field(u: &Field, points: &[Point], mu: Point, eps_list: &[f64]) -> ProbeResult {
    let dx = u.grid().dx();
    let mut out = ProbeResult { kappa: f64::INFINITY, witness: None, probes: 0, skipped: 0 };
    for &x in points {
        for &eps in eps_list {
            if eps < 2.0 * dx - 1e-15 {
                out.skipped += 1;
                continue;
            }
            let Some(v) = u.sample([x[0] + eps * mu[0], x[1] + eps * mu[1]]) else {
                out.skipped += 1;
                continue;
            };
            out.probes += 1;
            let k = v / eps;
            if k < out.kappa {
                out.kappa = k;
                out.witness = Some((x, eps));
            }
        }
    }
    out
}

/// Non-degeneracy over a trajectory: free-boundary points of snapshot `k`
/// are given per snapshot. Passes if the smallest `kappa` reaches `kappa_min`.
pub fn nondegeneracy_probe(
    traj: &Trajectory,
    points: &[(usize, Vec<Point>)],
    mu: Point,
    eps_list: &[f64],
    kappa_min: f64,
) -> EstimateReport {
    let mut kappa = f64::INFINITY;
    let mut witness = None;
    let (mut probes, mut skipped) = (0, 0);
    for (k, pts) in points {
        let s = &traj.snapshots[*k];
        let r = nondegeneracy_probe_field(&s.u, pts, mu, eps_list);
        probes += r.probes;
        skipped += r.skipped;
        if r.kappa < kappa {
            kappa = r.kappa;
            witness = r.witness.map(|(x, eps)| Witness { x, t: s.t, value: eps });
        }
    }
    if probes == 0 {
        return EstimateReport::inconclusive("nondegeneracy", "every probe was skipped");
    }
    EstimateReport::new("nondegeneracy", Verdict::from_bool(kappa >= kappa_min))
        .with_constant("kappa", kappa)
        .with_constant("probes", probes as f64)
        .with_constant("skipped", skipped as f64)
        .with_tolerance("kappa_min", kappa_min)
        .with_witness(witness)
}

/// Largest normalized decrease `(u(x) - u(x + h p)) / h`, `h = 2 dx`, over
/// cells of the region and sampled cone directions `p`. Values `<= tol`
/// mean monotone; the measure is invariant under `u + c` and scales with
/// `c u`.
pub fn cone_monotonicity(u: &Field, cone: &ConeSpec, region: &Region) -> f64 {
    cone_monotonicity_with(u, cone, region, CONE_RAYS).0
}

/// As [`cone_monotonicity`] with an explicit ray count; also returns the worst cell.
pub fn cone_monotonicity_with(u: &Field, cone: &ConeSpec, region: &Region, rays: usize) -> (f64, Option<Point>) {
    let g = u.grid();
    let h = 2.0 * g.dx();
    let dirs = cone.directions(g.dim(), rays);
    let v = u.values();
    let mut worst = f64::NEG_INFINITY;
    let mut at = None;
    for idx in 0..g.len() {
        if !region.contains(g, idx) {
            continue;
        }
        let x = g.center_of(idx);
        for p in &dirs {
            let Some(w) = u.sample([x[0] + h * p[0], x[1] + h * p[1]]) else { continue };
            let d = (v[idx] - w) / h;
            if d > worst {
                worst = d;
                at = Some(x);
            }
        }
    }
    (worst.max(0.0), at)
}

/// Result of scanning monotonicity cones over shrinking windows.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeScan {
    pub half_widths: Vec<f64>,
    pub angles: Vec<f64>,
    pub axes: Vec<Point>,
    pub non_decreasing: bool,
}

/// For windows of half-width `scales[k]` around `x`, the largest half-angle
/// (and axis among small rotations of `mu`) with violation `<= tol`.
/// The scan stops at windows narrower than 8 cells.
pub fn cone_angle_scan(u: &Field, x: Point, mu: Point, scales: &[f64], tol: f64) -> Result<ConeScan> {
    let g = u.grid();
    let base = mu[1].atan2(mu[0]);
    let mut out = ConeScan { half_widths: Vec::new(), angles: Vec::new(), axes: Vec::new(), non_decreasing: true };
    for &half in scales {
        if 2.0 * half < 8.0 * g.dx() {
            break;
        }
        let region = Region::window(x, half);
        let mut best = (0.0, mu);
        for k in -4i32..=4 {
            let axis = ConeSpec::axis_at_angle(base + k as f64 * PI / 64.0);
            let ok = |theta: f64| {
                ConeSpec::new(axis, theta).map(|c| cone_monotonicity(u, &c, &region) <= tol).unwrap_or(false)
            };
            let theta = if ok(PI / 2.0) {
                PI / 2.0
            } else if !ok(1e-3) {
                0.0
            } else {
                let (mut lo, mut hi) = (1e-3, PI / 2.0);
                for _ in 0..30 {
                    let mid = 0.5 * (lo + hi);
                    if ok(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            };
            if theta > best.0 {
                best = (theta, axis);
            }
        }
        out.half_widths.push(half);
        out.angles.push(best.0);
        out.axes.push(best.1);
    }
    out.non_decreasing = out.angles.windows(2).all(|w| w[1] >= w[0] - 1e-9);
    Ok(out)
}

/// `min (u(x + h mu) - u(x)) / h`, `h = 2 dx`, over positive cells of the window.
pub fn directional_floor(u: &Field, mu: Point, region: &Region, threshold: f64) -> Option<(f64, Point)> {
    let g = u.grid();
    let h = 2.0 * g.dx();
    let level = positivity_set(u, threshold).level;
    let mut best: Option<(f64, Point)> = None;
    for idx in 0..g.len() {
        if !region.contains(g, idx) || !(u.values()[idx] > level) || g.in_collar(idx) {
            continue;
        }
        let x = g.center_of(idx);
        let Some(w) = u.sample([x[0] + h * mu[0], x[1] + h * mu[1]]) else { continue };
        let q = (w - u.values()[idx]) / h;
        if best.map_or(true, |b| q < b.0) {
            best = Some((q, x));
        }
    }
    best
}

/// Gradient floor over every snapshot: `c1 = min` of [`directional_floor`] on
/// the positive part of the window. Passes if `c1 > 0`.
pub fn grad_floor_check(traj: &Trajectory, mu: Point, region: &Region, delta: f64) -> EstimateReport {
    let mut c1 = f64::INFINITY;
    let mut witness = None;
    for s in &traj.snapshots {
        if let Some((q, x)) = directional_floor(&s.u, mu, region, traj.threshold()) {
            if q < c1 {
                c1 = q;
                witness = Some(Witness { x, t: s.t, value: q });
            }
        }
    }
    if witness.is_none() {
        return EstimateReport::inconclusive("grad_floor", "no positive cell in the window");
    }
    EstimateReport::new("grad_floor", Verdict::from_bool(c1 > 0.0))
        .with_constant("c1", c1)
        .with_constant("delta1", delta)
        .with_witness(witness)
}

/// Fits the smallest `A` with `u_t <= A (mu . grad u + u + 1) + tol` and the
/// smallest `sigma` with `u_t >= |grad u|^2 - sigma (C0 + 1) u + grad u . b - tol`
/// over interior positive cells of the region, `tol = 10 dx`.
pub fn cond_ii_check(traj: &Trajectory, mu: Point, region: &Region, c0: f64) -> Result<EstimateReport> {
    if traj.len() < 3 {
        return Err(CoreError::Precondition("cond_ii needs at least 3 snapshots".into()));
    }
    let g = traj.grid().clone();
    let tol = slack(&g);
    let mut a_fit: f64 = 0.0;
    let mut sigma: f64 = 0.0;
    let mut witness = None;
    let mut checked = 0;
    for k in 1..traj.len() - 1 {
        let s = &traj.snapshots[k];
        let ut = traj.pressure_time_derivative(k)?;
        let set = positivity_set(&s.u, traj.threshold());
        let mask = interior_positive_mask(&set.mask, &g, 2);
        let grad = discrete_gradient(&s.u);
        for idx in 0..g.len() {
            if !mask[idx] || !region.contains(&g, idx) {
                continue;
            }
            checked += 1;
            let x = g.center_of(idx);
            let gu = grad.at(idx);
            let u = s.u.values()[idx];
            let utv = ut.values()[idx];
            let denom = mu[0] * gu[0] + mu[1] * gu[1] + u + 1.0;
            if utv > tol {
                let need = if denom > 0.0 { (utv - tol) / denom } else { f64::INFINITY };
                if need > a_fit {
                    a_fit = need;
                    witness = Some(Witness { x, t: s.t, value: utv });
                }
            }
            let b = traj.drift.velocity(x, s.t);
            let rhs = gu[0] * gu[0] + gu[1] * gu[1] + gu[0] * b[0] + gu[1] * b[1];
            let deficit = rhs - utv - tol;
            if deficit > 0.0 {
                let need = if u > 0.0 { deficit / ((c0 + 1.0) * u) } else { f64::INFINITY };
                sigma = sigma.max(need);
            }
        }
    }
    if checked == 0 {
        return Ok(EstimateReport::inconclusive("cond_ii", "no interior positive cell in the region"));
    }
    let div = max_divergence(&traj.drift, &g, traj.first_time());
    Ok(EstimateReport::new("cond_ii", Verdict::from_bool(a_fit.is_finite() && sigma.is_finite()))
        .with_constant("A", a_fit)
        .with_constant("sigma", sigma)
        .with_constant("C0", c0)
        .with_constant("max_divergence", div)
        .with_constant("checked", checked as f64)
        .with_tolerance("slack", tol)
        .with_witness(witness))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Role;

    fn plane(g: &GridSpec) -> Field {
        Field::from_fn(g, Role::Pressure, |x| x[0].max(0.0))
    }

    #[test]
    fn planar_profile_is_monotone_and_nondegenerate() {
        let g = GridSpec::rect([-1.0, -1.0], [1.0, 1.0], [64, 64]).unwrap();
        let u = plane(&g);
        let cone = ConeSpec::new([1.0, 0.0], PI / 4.0).unwrap();
        assert_eq!(cone_monotonicity(&u, &cone, &Region::Whole), 0.0);
        let r = nondegeneracy_probe_field(&u, &[[0.0, 0.0], [0.0, 0.3]], [1.0, 0.0], &[0.1, 0.2]);
        assert!((r.kappa - 1.0).abs() < 1e-12);
        let q = directional_floor(&u, [1.0, 0.0], &Region::window([0.3, 0.0], 0.2), 1e-8).unwrap();
        assert!((q.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn radial_profile_is_not_monotone_along_an_axis() {
        let g = GridSpec::rect([-1.0, -1.0], [1.0, 1.0], [64, 64]).unwrap();
        let u = Field::from_fn(&g, Role::Pressure, |x| (0.5 - x[0] * x[0] - x[1] * x[1]).max(0.0));
        let cone = ConeSpec::new([1.0, 0.0], PI / 8.0).unwrap();
        assert!(cone_monotonicity(&u, &cone, &Region::Whole) > 0.1);
    }

    #[test]
    fn ball_average_of_constant_and_half_plane() {
        let g = GridSpec::rect([-1.0, -1.0], [1.0, 1.0], [256, 256]).unwrap();
        let c = Field::constant(&g, 0.7, Role::Pressure);
        assert_eq!(ball_average(&c, [0.1, 0.1], 0.3).unwrap(), 0.7);
        // mean of x_+ over the disc of radius R: (2 R^3 / 3) / (pi R^2)
        let r = 0.5;
        let avg = ball_average(&plane(&g), [0.0, 0.0], r).unwrap();
        assert!((avg - 2.0 * r / (3.0 * PI)).abs() < 2.0 * g.dx());
        assert!(ball_average(&c, [0.0, 0.0], g.dx()).is_err());
    }

    #[test]
    fn green_kernel_vanishes_on_the_sphere() {
        assert_eq!(green_function(1.0, 2).unwrap(), 0.0);
        assert_eq!(green_function(1.0, 3).unwrap(), 0.0);
        assert!(green_function(0.5, 4).is_err());
    }
}
