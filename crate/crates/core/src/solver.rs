//! Explicit monotone finite-volume solver for `rho_t = div(grad rho^m + rho b)`.
//!
//! Face fluxes are `F = (P_R - P_L)/h + b_face^- rho_L + b_face^+ rho_R` with
//! `P = rho^m`; the drift part is upwinded for the transport velocity `-b`.
//! Under the combined step bound used by [`run`] the update is a monotone
//! function of every cell value, so ordered data stay ordered.

use crate::drift::{max_divergence, Drift, DriftSpec};
use crate::error::{CoreError, Result};
use crate::grid::{
    density_of, discrete_gradient, discrete_laplacian, positivity_set, pressure_from_density,
    pressure_of, Contour, Field, GridSpec, Point, Role, BOUNDARY_COLLAR,
};
use crate::report::{EstimateReport, Verdict, Witness};

/// Cells of clearance required between the support and a closed face.
pub const SUPPORT_CLEARANCE: usize = 3;

/// Densities below this are set to zero after each step. Upwinded transport
/// spreads geometrically small tails one cell per step; flushing them keeps
/// the arithmetic out of the subnormal range. The map is non-decreasing, so
/// ordering between runs is unaffected.
pub const FLUSH_DENSITY: f64 = 1e-150;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    pub m: f64,
    pub cfl: f64,
    pub t0: f64,
    pub t1: f64,
    /// Number of equal snapshot intervals on `[t0, t1]`.
    pub snapshots: usize,
    /// Constant added to the initial density by [`lifted_run`].
    pub lift: f64,
    /// Relative free-boundary threshold.
    pub fb_threshold: f64,
}

impl SolverParams {
    pub fn new(m: f64, t0: f64, t1: f64) -> Self {
        SolverParams { m, cfl: 0.4, t0, t1, snapshots: 10, lift: 0.0, fb_threshold: 1e-8 }
    }

    pub fn with_snapshots(mut self, n: usize) -> Self {
        self.snapshots = n;
        self
    }

    pub fn with_cfl(mut self, cfl: f64) -> Self {
        self.cfl = cfl;
        self
    }

    pub fn with_lift(mut self, lift: f64) -> Self {
        self.lift = lift;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 1.0 && self.m.is_finite()) {
            return Err(CoreError::InvalidExponent(self.m));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(CoreError::InvalidParameter(format!("cfl = {} must lie in (0, 1]", self.cfl)));
        }
        if !(self.t1 > self.t0) || !self.t0.is_finite() || !self.t1.is_finite() {
            return Err(CoreError::InvalidParameter(format!(
                "time window [{}, {}] must satisfy t1 > t0",
                self.t0, self.t1
            )));
        }
        if self.snapshots == 0 {
            return Err(CoreError::InvalidParameter("output stride must be at least 1".into()));
        }
        if !(self.lift >= 0.0) {
            return Err(CoreError::InvalidParameter("lift must be non-negative".into()));
        }
        if !(self.fb_threshold > 0.0 && self.fb_threshold < 1.0) {
            return Err(CoreError::InvalidParameter("free-boundary threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn snapshot_time(&self, k: usize) -> f64 {
        if k == self.snapshots {
            self.t1
        } else {
            self.t0 + (self.t1 - self.t0) * k as f64 / self.snapshots as f64
        }
    }
}

/// Prescribed pressure on a Dirichlet face.
#[derive(Debug, Clone, PartialEq)]
pub enum DirichletPressure {
    /// `u = max(offset + slope . x + rate * t, 0)`.
    Affine { offset: f64, slope: Point, rate: f64 },
    /// `u = a(t) x1_+^2` with `a(t) = a0 / (1 - 2(m+1) a0 t)`, the exact 1-D
    /// solution with a waiting time.
    QuadraticFront { a0: f64 },
}

impl DirichletPressure {
    pub fn pressure(&self, x: Point, t: f64, m: f64) -> f64 {
        match self {
            DirichletPressure::Affine { offset, slope, rate } => {
                (offset + slope[0] * x[0] + slope[1] * x[1] + rate * t).max(0.0)
            }
            DirichletPressure::QuadraticFront { a0 } => {
                let a = a0 / (1.0 - 2.0 * (m + 1.0) * a0 * t);
                a * x[0].max(0.0).powi(2)
            }
        }
    }
}

/// Condition on one face of the box.
#[derive(Debug, Clone, PartialEq)]
pub enum FaceBc {
    /// No flux; the support must stay [`SUPPORT_CLEARANCE`] cells away.
    Closed,
    /// No flux, no support check (exact at symmetry lines of the data and drift).
    Reflect,
    /// Zero-gradient ghost cell; fluxes are evaluated as if the boundary cell continued.
    Extrapolate,
    /// Ghost cell carries the prescribed pressure.
    Dirichlet(DirichletPressure),
}

impl FaceBc {
    pub const NAMES: [&'static str; 5] = ["closed", "reflect", "extrapolate", "dirichlet-affine", "dirichlet-quadratic"];

    pub fn name(&self) -> &'static str {
        match self {
            FaceBc::Closed => "closed",
            FaceBc::Reflect => "reflect",
            FaceBc::Extrapolate => "extrapolate",
            FaceBc::Dirichlet(DirichletPressure::Affine { .. }) => "dirichlet-affine",
            FaceBc::Dirichlet(DirichletPressure::QuadraticFront { .. }) => "dirichlet-quadratic",
        }
    }

    /// `[offset, slope_x, slope_y, rate]` for the affine face, `[a0]` for the quadratic one.
    pub fn params(&self) -> Vec<f64> {
        match self {
            FaceBc::Dirichlet(DirichletPressure::Affine { offset, slope, rate }) => {
                vec![*offset, slope[0], slope[1], *rate]
            }
            FaceBc::Dirichlet(DirichletPressure::QuadraticFront { a0 }) => vec![*a0],
            _ => Vec::new(),
        }
    }

    pub fn from_parts(name: &str, params: &[f64]) -> Result<Self> {
        let want = match name {
            "closed" | "reflect" | "extrapolate" => 0,
            "dirichlet-affine" => 4,
            "dirichlet-quadratic" => 1,
            _ => return Err(CoreError::UnknownPreset(name.to_string())),
        };
        if params.len() != want {
            return Err(CoreError::InvalidParameter(format!(
                "face condition '{name}' takes {want} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidParameter("face parameters must be finite".into()));
        }
        Ok(match name {
            "closed" => FaceBc::Closed,
            "reflect" => FaceBc::Reflect,
            "extrapolate" => FaceBc::Extrapolate,
            "dirichlet-affine" => FaceBc::Dirichlet(DirichletPressure::Affine {
                offset: params[0],
                slope: [params[1], params[2]],
                rate: params[3],
            }),
            _ => FaceBc::Dirichlet(DirichletPressure::QuadraticFront { a0: params[0] }),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    pub lo: [FaceBc; 2],
    pub hi: [FaceBc; 2],
}

impl Default for Boundary {
    fn default() -> Self {
        Boundary::closed()
    }
}

impl Boundary {
    pub fn closed() -> Self {
        Boundary { lo: [FaceBc::Closed, FaceBc::Closed], hi: [FaceBc::Closed, FaceBc::Closed] }
    }

    pub fn uniform(bc: FaceBc) -> Self {
        Boundary { lo: [bc.clone(), bc.clone()], hi: [bc.clone(), bc] }
    }

    /// Replaces closed faces by zero-gradient ones (used when the data are lifted).
    pub fn opened(&self) -> Self {
        let open = |f: &FaceBc| if *f == FaceBc::Closed { FaceBc::Extrapolate } else { f.clone() };
        Boundary { lo: [open(&self.lo[0]), open(&self.lo[1])], hi: [open(&self.hi[0]), open(&self.hi[1])] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub rho: Field,
    pub u: Field,
    pub contour: Contour,
}

impl Snapshot {
    pub fn from_density(t: f64, rho: Field, m: f64, threshold: f64) -> Result<Self> {
        let u = pressure_from_density(&rho, m)?;
        let contour = positivity_set(&u, threshold).contour;
        Ok(Snapshot { t, rho, u, contour })
    }

    pub fn from_pressure(t: f64, u: Field, m: f64, threshold: f64) -> Result<Self> {
        let rho = crate::grid::density_from_pressure(&u, m)?;
        let u = u.with_role(Role::Pressure);
        let contour = positivity_set(&u, threshold).contour;
        Ok(Snapshot { t, rho, u, contour })
    }
}

/// Time-ordered snapshots of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub params: SolverParams,
    pub drift: DriftSpec,
    pub boundary: Boundary,
}

impl Trajectory {
    /// Trajectory sampled from an analytic pressure `u(x, t)` at the given times.
    pub fn from_pressure_fn(
        grid: &GridSpec,
        times: &[f64],
        params: SolverParams,
        drift: DriftSpec,
        pressure: impl Fn(Point, f64) -> f64,
    ) -> Result<Self> {
        check_increasing(times)?;
        let snapshots = times
            .iter()
            .map(|&t| {
                let u = Field::from_fn(grid, Role::Pressure, |x| pressure(x, t).max(0.0));
                Snapshot::from_pressure(t, u, params.m, params.fb_threshold)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Trajectory { snapshots, params, drift, boundary: Boundary::closed() })
    }

    pub fn grid(&self) -> &GridSpec {
        self.snapshots[0].u.grid()
    }
    pub fn dx(&self) -> f64 {
        self.grid().dx()
    }
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }
    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }
    pub fn first_time(&self) -> f64 {
        self.snapshots[0].t
    }
    pub fn last_time(&self) -> f64 {
        self.snapshots[self.snapshots.len() - 1].t
    }
    pub fn m(&self) -> f64 {
        self.params.m
    }
    pub fn threshold(&self) -> f64 {
        self.params.fb_threshold
    }

    /// Index of the snapshot closest in time to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, s) in self.snapshots.iter().enumerate() {
            if (s.t - t).abs() < (self.snapshots[best].t - t).abs() {
                best = k;
            }
        }
        best
    }

    /// Bracketing snapshots and the weight of the later one, if `t` is covered.
    pub fn bracket(&self, t: f64) -> Option<(usize, usize, f64)> {
        let n = self.snapshots.len();
        let tol = 1e-12 * (1.0 + t.abs());
        if t < self.first_time() - tol || t > self.last_time() + tol {
            return None;
        }
        if n == 1 {
            return Some((0, 0, 0.0));
        }
        let k = self.snapshots.partition_point(|s| s.t <= t).clamp(1, n - 1);
        let (a, b) = (self.snapshots[k - 1].t, self.snapshots[k].t);
        let w = ((t - a) / (b - a)).clamp(0.0, 1.0);
        Some((k - 1, k, w))
    }

    /// Pressure at time `t`, linear in time between snapshots.
    pub fn pressure_at(&self, t: f64) -> Option<Field> {
        let (a, b, w) = self.bracket(t)?;
        if w == 0.0 {
            return Some(self.snapshots[a].u.clone());
        }
        if w == 1.0 {
            return Some(self.snapshots[b].u.clone());
        }
        let (ua, ub) = (self.snapshots[a].u.values(), self.snapshots[b].u.values());
        let vals = ua.iter().zip(ub).map(|(x, y)| (1.0 - w) * x + w * y).collect();
        Some(Field::from_parts(self.grid().clone(), vals, Role::Pressure))
    }

    /// Pressure at `(x, t)`: bilinear in space, linear in time.
    pub fn pressure_value(&self, x: Point, t: f64) -> Option<f64> {
        let (a, b, w) = self.bracket(t)?;
        let ua = self.snapshots[a].u.sample(x)?;
        if w == 0.0 {
            return Some(ua);
        }
        let ub = self.snapshots[b].u.sample(x)?;
        Some((1.0 - w) * ua + w * ub)
    }

    /// Centred difference of the pressure between neighbouring snapshots,
    /// one-sided at the ends.
    pub fn pressure_time_derivative(&self, k: usize) -> Result<Field> {
        let n = self.snapshots.len();
        if n < 2 {
            return Err(CoreError::Precondition("u_t needs at least two snapshots".into()));
        }
        let (a, b) = if k == 0 {
            (0, 1)
        } else if k == n - 1 {
            (n - 2, n - 1)
        } else {
            (k - 1, k + 1)
        };
        let dt = self.snapshots[b].t - self.snapshots[a].t;
        let (ua, ub) = (self.snapshots[a].u.values(), self.snapshots[b].u.values());
        let vals = ua.iter().zip(ub).map(|(x, y)| (y - x) / dt).collect();
        Ok(Field::from_parts(self.grid().clone(), vals, Role::Scalar))
    }

    pub fn masses(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.rho.integral()).collect()
    }
}

fn check_increasing(times: &[f64]) -> Result<()> {
    if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CoreError::InvalidParameter("snapshot times must be strictly increasing".into()));
    }
    Ok(())
}

/// `rho^m` with cheap paths for common exponents.
#[inline(always)]
fn power(rho: f64, m: f64) -> f64 {
    if rho <= 0.0 {
        0.0
    } else if m == 2.0 {
        rho * rho
    } else if m == 1.5 {
        rho * rho.sqrt()
    } else if m == 3.0 {
        rho * rho * rho
    } else {
        rho.powf(m)
    }
}

/// Precomputed geometry, face drifts and boundary data for one grid.
struct Kernel<'a> {
    grid: GridSpec,
    m: f64,
    drift: &'a dyn Drift,
    boundary: &'a Boundary,
    steady: bool,
    /// x-face drift, `(nx + 1)` per row.
    bx: Vec<f64>,
    /// y-face drift, `nx` per face row, `ny + 1` face rows.
    by: Vec<f64>,
    /// Sum over axes of the largest face speed divided by the spacing.
    speed_rate: f64,
    /// Largest face speed over all axes.
    max_face_speed: f64,
    bx_time: f64,
    /// Relative pressure level defining the support for the clearance check.
    support_level: f64,
}

/// Ghost densities for the four faces at one time.
struct Ghosts {
    lo: [Option<Vec<f64>>; 2],
    hi: [Option<Vec<f64>>; 2],
}

impl<'a> Kernel<'a> {
    fn new(grid: &GridSpec, params: &SolverParams, drift: &'a dyn Drift, boundary: &'a Boundary, t: f64) -> Self {
        let m = params.m;
        let mut k = Kernel {
            grid: grid.clone(),
            m,
            drift,
            boundary,
            steady: drift.is_steady(),
            bx: Vec::new(),
            by: Vec::new(),
            speed_rate: 0.0,
            max_face_speed: 0.0,
            bx_time: f64::NAN,
            support_level: params.fb_threshold,
        };
        k.refresh_drift(t);
        k
    }

    fn refresh_drift(&mut self, t: f64) {
        if self.steady && !self.bx.is_empty() {
            return;
        }
        if self.bx_time == t {
            return;
        }
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let (hx, hy) = (g.spacing(0), g.spacing(1));
        let lo = g.lo();
        self.bx.clear();
        self.bx.reserve((nx + 1) * ny);
        let mut max_x: f64 = 0.0;
        for j in 0..ny {
            let y = if g.dim() == 2 { lo[1] + (j as f64 + 0.5) * hy } else { 0.0 };
            for i in 0..=nx {
                let b = self.drift.velocity([lo[0] + i as f64 * hx, y], t)[0];
                max_x = max_x.max(b.abs());
                self.bx.push(b);
            }
        }
        let mut max_y: f64 = 0.0;
        self.by.clear();
        if g.dim() == 2 {
            self.by.reserve(nx * (ny + 1));
            for j in 0..=ny {
                let y = lo[1] + j as f64 * hy;
                for i in 0..nx {
                    let b = self.drift.velocity([lo[0] + (i as f64 + 0.5) * hx, y], t)[1];
                    max_y = max_y.max(b.abs());
                    self.by.push(b);
                }
            }
        }
        self.speed_rate = max_x / hx + if g.dim() == 2 { max_y / hy } else { 0.0 };
        self.max_face_speed = max_x.max(max_y);
        self.bx_time = t;
    }

    fn ghosts(&self, rho: &[f64], t: f64) -> Ghosts {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let mut out = Ghosts { lo: [None, None], hi: [None, None] };
        for axis in 0..g.dim() {
            for (side, bc) in [(0usize, &self.boundary.lo[axis]), (1usize, &self.boundary.hi[axis])] {
                let vals = match bc {
                    FaceBc::Closed | FaceBc::Reflect => None,
                    FaceBc::Extrapolate => Some(if axis == 0 {
                        let i = if side == 0 { 0 } else { nx - 1 };
                        (0..ny).map(|j| rho[j * nx + i]).collect()
                    } else {
                        let j = if side == 0 { 0 } else { ny - 1 };
                        rho[j * nx..(j + 1) * nx].to_vec()
                    }),
                    FaceBc::Dirichlet(p) => {
                        let h = g.spacing(axis);
                        let (lo, hi) = (g.lo(), g.hi());
                        let edge = if side == 0 { lo[axis] - 0.5 * h } else { hi[axis] + 0.5 * h };
                        Some(if axis == 0 {
                            (0..ny)
                                .map(|j| {
                                    let y = g.center(0, j)[1];
                                    density_of(p.pressure([edge, y], t, self.m), self.m)
                                })
                                .collect()
                        } else {
                            (0..nx)
                                .map(|i| {
                                    let x = g.center(i, 0)[0];
                                    density_of(p.pressure([x, edge], t, self.m), self.m)
                                })
                                .collect()
                        })
                    }
                };
                if side == 0 {
                    out.lo[axis] = vals;
                } else {
                    out.hi[axis] = vals;
                }
            }
        }
        out
    }

    /// Largest density over cells and ghost cells.
    fn max_density(&self, rho: &[f64], ghosts: &Ghosts) -> f64 {
        let mut mx = rho.iter().copied().fold(0.0, f64::max);
        for v in ghosts.lo.iter().chain(ghosts.hi.iter()).flatten() {
            mx = v.iter().copied().fold(mx, f64::max);
        }
        mx
    }

    fn diffusivity(&self, rho_max: f64) -> f64 {
        if rho_max <= 0.0 {
            0.0
        } else {
            self.m * rho_max.powf(self.m - 1.0)
        }
    }

    fn inv_h2_sum(&self) -> f64 {
        let g = &self.grid;
        (0..g.dim()).map(|k| 1.0 / (g.spacing(k) * g.spacing(k))).sum()
    }

    /// Step bound from the contract of [`step_density`].
    fn contract_bound(&self, cfl: f64, rho_max: f64) -> f64 {
        let g = &self.grid;
        let h = g.dx();
        let hmin = (0..g.dim()).map(|k| g.spacing(k)).fold(f64::INFINITY, f64::min);
        let d = self.diffusivity(rho_max);
        let diff = if d > 0.0 { hmin * hmin / (2.0 * g.dim() as f64 * d) } else { f64::INFINITY };
        let adv = if self.max_face_speed > 0.0 { h.min(hmin) / self.max_face_speed } else { f64::INFINITY };
        cfl * diff.min(adv)
    }

    /// Combined bound `cfl / (2 D sum 1/h^2 + 2 sum max|b_k|/h_k)`; it implies
    /// the contract bound and makes every cell update monotone.
    fn monotone_bound(&self, cfl: f64, rho_max: f64) -> f64 {
        let rate = 2.0 * self.diffusivity(rho_max) * self.inv_h2_sum() + 2.0 * self.speed_rate;
        if rate > 0.0 {
            cfl / rate
        } else {
            f64::INFINITY
        }
    }

    /// First support cell closer than [`SUPPORT_CLEARANCE`] to a closed face.
    /// The support is where the pressure exceeds the free-boundary threshold
    /// relative to its maximum, as for the extracted contour.
    fn support_violation(&self, rho: &[f64]) -> Option<CoreError> {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let c = SUPPORT_CLEARANCE;
        let rho_max = rho.iter().copied().fold(0.0, f64::max);
        let level = rho_max * self.support_level.powf(1.0 / (self.m - 1.0));
        let hit = |i: usize, j: usize, axis: usize, side: &'static str| {
            if rho[j * nx + i] > level {
                Some(CoreError::SupportTouchesBoundary { axis, side, point: g.center(i, j) })
            } else {
                None
            }
        };
        if self.boundary.lo[0] == FaceBc::Closed || self.boundary.hi[0] == FaceBc::Closed {
            for j in 0..ny {
                for k in 0..c.min(nx) {
                    if self.boundary.lo[0] == FaceBc::Closed {
                        if let Some(e) = hit(k, j, 0, "lower") {
                            return Some(e);
                        }
                    }
                    if self.boundary.hi[0] == FaceBc::Closed {
                        if let Some(e) = hit(nx - 1 - k, j, 0, "upper") {
                            return Some(e);
                        }
                    }
                }
            }
        }
        if g.dim() == 2 {
            for k in 0..c.min(ny) {
                for i in 0..nx {
                    if self.boundary.lo[1] == FaceBc::Closed {
                        if let Some(e) = hit(i, k, 1, "lower") {
                            return Some(e);
                        }
                    }
                    if self.boundary.hi[1] == FaceBc::Closed {
                        if let Some(e) = hit(i, ny - 1 - k, 1, "upper") {
                            return Some(e);
                        }
                    }
                }
            }
        }
        None
    }

    /// Per-row range of cells that can change this step: positive cells of the
    /// row and its vertical neighbours, widened by one, plus boundary cells
    /// next to a non-empty ghost.
    fn active_ranges(&self, rho: &[f64], ghosts: &Ghosts, ranges: &mut Vec<(usize, usize)>) {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let mut own: Vec<Option<(usize, usize)>> = Vec::with_capacity(ny);
        for j in 0..ny {
            let row = &rho[j * nx..(j + 1) * nx];
            let first = row.iter().position(|&v| v > 0.0);
            let mut r = first.map(|a| (a, nx - 1 - row.iter().rev().position(|&v| v > 0.0).unwrap()));
            let ghost_lo = ghosts.lo[0].as_ref().is_some_and(|v| v[j] > 0.0);
            let ghost_hi = ghosts.hi[0].as_ref().is_some_and(|v| v[j] > 0.0);
            if ghost_lo {
                r = Some(r.map_or((0, 0), |(a, b)| (0.min(a), b)));
            }
            if ghost_hi {
                r = Some(r.map_or((nx - 1, nx - 1), |(a, _)| (a, nx - 1)));
            }
            own.push(r);
        }
        if g.dim() == 2 {
            if ghosts.lo[1].as_ref().is_some_and(|v| v.iter().any(|&x| x > 0.0)) {
                own[0] = Some((0, nx - 1));
            }
            if ghosts.hi[1].as_ref().is_some_and(|v| v.iter().any(|&x| x > 0.0)) {
                own[ny - 1] = Some((0, nx - 1));
            }
        }
        ranges.clear();
        for j in 0..ny {
            let mut lo = usize::MAX;
            let mut hi = 0usize;
            let mut any = false;
            let jlo = j.saturating_sub(1);
            let jhi = (j + 1).min(ny - 1);
            for r in own[jlo..=jhi].iter().flatten() {
                any = true;
                lo = lo.min(r.0);
                hi = hi.max(r.1);
            }
            if any {
                ranges.push((lo.saturating_sub(1), (hi + 1).min(nx - 1)));
            } else {
                ranges.push((1, 0));
            }
        }
    }

    /// One forward-Euler step from `rho` into `out`.
    fn step_into(
        &self,
        rho: &[f64],
        ghosts: &Ghosts,
        dt: f64,
        scratch: &mut Scratch,
        out: &mut [f64],
    ) {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let (hx, hy) = (g.spacing(0), g.spacing(1));
        let (inv_hx, inv_hy) = (1.0 / hx, 1.0 / hy);
        let m = self.m;
        let two_d = g.dim() == 2;

        scratch.p.resize(rho.len(), 0.0);
        self.active_ranges(rho, ghosts, &mut scratch.ranges);
        for j in 0..ny {
            let (a, b) = scratch.ranges[j];
            // Pressure-like P is also needed one cell outside the range vertically.
            let row = j * nx;
            if a <= b {
                for i in a..=b {
                    scratch.p[row + i] = power(rho[row + i], m);
                }
            }
        }
        // Cells read by a neighbour row's y-flux must have P; ranges are unions
        // over neighbouring rows, so every positive cell adjacent to an active
        // cell lies inside its own row's range.

        let ghost_p = |v: &Option<Vec<f64>>, k: usize| v.as_ref().map(|g| (g[k], power(g[k], m)));

        scratch.fx.resize(nx + 1, 0.0);
        scratch.fy_lo.resize(nx, 0.0);
        scratch.fy_hi.resize(nx, 0.0);

        out.copy_from_slice(rho);
        for j in 0..ny {
            let (a, b) = scratch.ranges[j];
            if a > b {
                continue;
            }
            let row = j * nx;
            let bxr = &self.bx[j * (nx + 1)..(j + 1) * (nx + 1)];
            // x-faces a..=b+1
            for i in a..=b + 1 {
                scratch.fx[i] = if i == 0 {
                    match ghost_p(&ghosts.lo[0], j) {
                        None => 0.0,
                        Some((rg, pg)) => {
                            let bf = bxr[0];
                            (scratch.p[row] - pg) * inv_hx + bf.min(0.0) * rg + bf.max(0.0) * rho[row]
                        }
                    }
                } else if i == nx {
                    match ghost_p(&ghosts.hi[0], j) {
                        None => 0.0,
                        Some((rg, pg)) => {
                            let bf = bxr[nx];
                            (pg - scratch.p[row + nx - 1]) * inv_hx
                                + bf.min(0.0) * rho[row + nx - 1]
                                + bf.max(0.0) * rg
                        }
                    }
                } else {
                    let (l, r) = (row + i - 1, row + i);
                    let bf = bxr[i];
                    (scratch.p[r] - scratch.p[l]) * inv_hx + bf.min(0.0) * rho[l] + bf.max(0.0) * rho[r]
                };
            }
            if !two_d {
                for i in a..=b {
                    let v = rho[row + i] + dt * (scratch.fx[i + 1] - scratch.fx[i]) * inv_hx;
                    out[row + i] = if v < FLUSH_DENSITY { 0.0 } else { v };
                }
                continue;
            }
            // y-faces below (j) and above (j + 1) for columns a..=b.
            for (face_row, buf) in [(j, &mut scratch.fy_lo), (j + 1, &mut scratch.fy_hi)] {
                let byr = &self.by[face_row * nx..(face_row + 1) * nx];
                for i in a..=b {
                    buf[i] = if face_row == 0 {
                        match ghost_p(&ghosts.lo[1], i) {
                            None => 0.0,
                            Some((rg, pg)) => {
                                let bf = byr[i];
                                (scratch.p[i] - pg) * inv_hy + bf.min(0.0) * rg + bf.max(0.0) * rho[i]
                            }
                        }
                    } else if face_row == ny {
                        match ghost_p(&ghosts.hi[1], i) {
                            None => 0.0,
                            Some((rg, pg)) => {
                                let c = (ny - 1) * nx + i;
                                let bf = byr[i];
                                (pg - scratch.p[c]) * inv_hy + bf.min(0.0) * rho[c] + bf.max(0.0) * rg
                            }
                        }
                    } else {
                        let (l, r) = ((face_row - 1) * nx + i, face_row * nx + i);
                        let pl = if rho[l] > 0.0 { power(rho[l], m) } else { 0.0 };
                        let pr = if rho[r] > 0.0 { power(rho[r], m) } else { 0.0 };
                        let bf = byr[i];
                        (pr - pl) * inv_hy + bf.min(0.0) * rho[l] + bf.max(0.0) * rho[r]
                    };
                }
            }
            for i in a..=b {
                let div = (scratch.fx[i + 1] - scratch.fx[i]) * inv_hx
                    + (scratch.fy_hi[i] - scratch.fy_lo[i]) * inv_hy;
                let v = rho[row + i] + dt * div;
                out[row + i] = if v < FLUSH_DENSITY { 0.0 } else { v };
            }
        }
    }
}

#[derive(Default)]
struct Scratch {
    p: Vec<f64>,
    fx: Vec<f64>,
    fy_lo: Vec<f64>,
    fy_hi: Vec<f64>,
    ranges: Vec<(usize, usize)>,
}

fn check_initial(rho0: &Field, kernel: &Kernel) -> Result<()> {
    if rho0.role() == Role::Pressure {
        return Err(CoreError::InvalidParameter("initial data must be a density field".into()));
    }
    rho0.ensure_nonnegative()?;
    if let Some(e) = kernel.support_violation(rho0.values()) {
        return Err(e);
    }
    Ok(())
}

/// One explicit step of size `dt` from time `t`.
pub fn step_density(
    rho: &Field,
    drift: &dyn Drift,
    params: &SolverParams,
    boundary: &Boundary,
    t: f64,
    dt: f64,
) -> Result<Field> {
    params.validate()?;
    let kernel = Kernel::new(rho.grid(), params, drift, boundary, t);
    check_initial(rho, &kernel)?;
    let ghosts = kernel.ghosts(rho.values(), t);
    let admissible = kernel.contract_bound(params.cfl, kernel.max_density(rho.values(), &ghosts));
    if !(dt > 0.0) || dt > admissible * (1.0 + 1e-12) {
        return Err(CoreError::CflViolation { dt, admissible });
    }
    let mut out = vec![0.0; rho.grid().len()];
    kernel.step_into(rho.values(), &ghosts, dt, &mut Scratch::default(), &mut out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NumericalBlowUp { t: t + dt });
    }
    if let Some(e) = kernel.support_violation(&out) {
        return Err(e);
    }
    Ok(Field::from_parts(rho.grid().clone(), out, Role::Density))
}

/// Runs one initial density over `[t0, t1]` with adaptive steps.
pub fn run(rho0: &Field, drift: &DriftSpec, params: &SolverParams, boundary: &Boundary) -> Result<Trajectory> {
    let mut out = run_ensemble(std::slice::from_ref(rho0), drift, params, boundary)?;
    Ok(out.pop().expect("one member"))
}

/// Runs several initial densities with a shared step sequence, chosen from
/// the largest density of all members, so the monotone update applies to
/// every pair and discrete ordering is preserved exactly.
pub fn run_ensemble(
    rho0s: &[Field],
    drift: &DriftSpec,
    params: &SolverParams,
    boundary: &Boundary,
) -> Result<Vec<Trajectory>> {
    params.validate()?;
    let Some(first) = rho0s.first() else {
        return Ok(Vec::new());
    };
    let grid = first.grid().clone();
    for r in rho0s {
        r.check_same_grid(first)?;
    }
    let mut kernel = Kernel::new(&grid, params, drift, boundary, params.t0);
    for r in rho0s {
        check_initial(r, &kernel)?;
    }
    let n = rho0s.len();
    let mut state: Vec<Vec<f64>> = rho0s.iter().map(|r| r.values().to_vec()).collect();
    let mut next: Vec<Vec<f64>> = vec![vec![0.0; grid.len()]; n];
    let mut scratch = Scratch::default();
    let mut snaps: Vec<Vec<Snapshot>> = vec![Vec::with_capacity(params.snapshots + 1); n];
    for (k, s) in state.iter().enumerate() {
        let rho = Field::from_parts(grid.clone(), s.clone(), Role::Density);
        snaps[k].push(Snapshot::from_density(params.t0, rho, params.m, params.fb_threshold)?);
    }

    let mut t = params.t0;
    for k in 1..=params.snapshots {
        let target = params.snapshot_time(k);
        loop {
            kernel.refresh_drift(t);
            let ghosts: Vec<Ghosts> = state.iter().map(|s| kernel.ghosts(s, t)).collect();
            let rho_max =
                state.iter().zip(&ghosts).map(|(s, g)| kernel.max_density(s, g)).fold(0.0, f64::max);
            let mut dt = kernel.monotone_bound(params.cfl, rho_max);
            let remaining = target - t;
            let last = dt >= remaining * (1.0 - 1e-12);
            if last {
                dt = remaining;
            }
            if dt > 0.0 {
                for ((s, g), o) in state.iter().zip(&ghosts).zip(next.iter_mut()) {
                    kernel.step_into(s, g, dt, &mut scratch, o);
                }
                std::mem::swap(&mut state, &mut next);
                t = if last { target } else { t + dt };
                for s in &state {
                    if let Some(e) = kernel.support_violation(s) {
                        return Err(e);
                    }
                }
            } else {
                t = target;
            }
            if last || t >= target {
                break;
            }
        }
        for (m_idx, s) in state.iter().enumerate() {
            if s.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::NumericalBlowUp { t });
            }
            let rho = Field::from_parts(grid.clone(), s.clone(), Role::Density);
            snaps[m_idx].push(Snapshot::from_density(target, rho, params.m, params.fb_threshold)?);
        }
    }
    Ok(snaps
        .into_iter()
        .map(|snapshots| Trajectory {
            snapshots,
            params: params.clone(),
            drift: drift.clone(),
            boundary: boundary.clone(),
        })
        .collect())
}

/// A lifted run together with the check of the positive floor.
#[derive(Debug, Clone)]
pub struct LiftedRun {
    pub trajectory: Trajectory,
    pub floor: EstimateReport,
}

/// Runs `rho0 + lift` and checks `rho >= lift * exp(-max|div b| (t - t0))`
/// up to `10 dx^2` at every snapshot. Closed faces become zero-gradient
/// faces, since the lifted data fill the whole box.
pub fn lifted_run(
    rho0: &Field,
    drift: &DriftSpec,
    params: &SolverParams,
    boundary: &Boundary,
) -> Result<LiftedRun> {
    params.validate()?;
    if !(params.lift > 0.0) {
        return Err(CoreError::Precondition("lifted_run needs a positive lift".into()));
    }
    let lifted = rho0.map(Role::Density, |v| v + params.lift);
    let open = boundary.opened();
    let traj = run(&lifted, drift, params, &open)?;
    let div_max = max_divergence(drift, lifted.grid(), params.t0);
    let tol = 10.0 * traj.dx() * traj.dx();
    let mut worst: Option<Witness> = None;
    let mut margin = f64::INFINITY;
    for s in &traj.snapshots {
        let floor = params.lift * (-div_max * (s.t - params.t0)).exp();
        for (idx, &v) in s.rho.values().iter().enumerate() {
            let gap = v - floor;
            if gap < margin {
                margin = gap;
                worst = Some(Witness { x: s.rho.grid().center_of(idx), t: s.t, value: v });
            }
        }
    }
    let report = EstimateReport::new("lifted_floor", Verdict::from_bool(margin >= -tol))
        .with_constant("lift", params.lift)
        .with_constant("max_divergence", div_max)
        .with_constant("min_margin", margin)
        .with_tolerance("floor", tol)
        .with_witness(worst);
    Ok(LiftedRun { trajectory: traj, floor: report })
}

/// Smooth compactly supported test function for the weak form.
pub trait TestFunction {
    /// `(phi, phi_t, grad phi)` at `(x, t)`.
    fn eval(&self, x: Point, t: f64) -> (f64, f64, Point);
    /// Spatial bounding box `(lo, hi)` and time interval `(ta, tb)` of the support.
    fn support(&self) -> (Point, Point, f64, f64);
}

/// `phi = eta(|x - c| / r) * eta_t(t)` with `eta(s) = exp(-1/(1 - s^2))` in
/// space and the analogous bump on `(ta, tb)` in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpTest {
    pub center: Point,
    pub radius: f64,
    pub ta: f64,
    pub tb: f64,
    pub dim: usize,
}

fn bump_and_derivative(s: f64) -> (f64, f64) {
    // eta(s) = exp(-1/(1 - s^2)), eta'(s) = eta * (-2 s / (1 - s^2)^2)
    if s.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - s * s;
    let e = (-1.0 / q).exp();
    (e, e * (-2.0 * s / (q * q)))
}

impl TestFunction for BumpTest {
    fn eval(&self, x: Point, t: f64) -> (f64, f64, Point) {
        let half = 0.5 * (self.tb - self.ta);
        let mid = 0.5 * (self.ta + self.tb);
        let (et, det) = bump_and_derivative((t - mid) / half);
        let dy = if self.dim == 2 { x[1] - self.center[1] } else { 0.0 };
        let dxv = x[0] - self.center[0];
        let r = dxv.hypot(dy);
        let (ex, dex) = bump_and_derivative(r / self.radius);
        let phi = ex * et;
        let phi_t = ex * det / half;
        let grad = if r > 0.0 {
            let g = dex / self.radius * et / r;
            [g * dxv, g * dy]
        } else {
            [0.0, 0.0]
        };
        (phi, phi_t, grad)
    }

    fn support(&self) -> (Point, Point, f64, f64) {
        let c = self.center;
        let ry = if self.dim == 2 { self.radius } else { 0.0 };
        ([c[0] - self.radius, c[1] - ry], [c[0] + self.radius, c[1] + ry], self.ta, self.tb)
    }
}

/// Weak-form residual
/// `int int rho phi_t + int rho0 phi(., t0) - int int (grad rho^m + rho b) . grad phi`,
/// which vanishes for a weak solution and every admissible `phi` (the test
/// function need not vanish at `t0`). Space integrals use the midpoint rule,
/// with `grad rho^m` and `rho b` on cell faces; the time integral is the
/// trapezoidal rule over snapshots.
pub fn weak_form_residual(traj: &Trajectory, phi: &dyn TestFunction) -> Result<f64> {
    let g = traj.grid().clone();
    let (lo, hi, ta, tb) = phi.support();
    let inside = g.contains(lo) && g.contains(hi) || (g.dim() == 1 && lo[0] >= g.lo()[0] && hi[0] <= g.hi()[0]);
    let t0 = traj.first_time();
    let t1 = traj.last_time();
    if !inside || ta < t0 - 1e-12 || tb > t1 + 1e-12 || !(tb > ta) {
        return Err(CoreError::InvalidParameter(
            "test function support must lie inside the box and the run's time window".into(),
        ));
    }
    let m = traj.m();
    let drift = &traj.drift;
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.spacing(0), g.spacing(1));
    let vol = g.cell_volume();

    let spatial = |s: &Snapshot| -> f64 {
        let rho = s.rho.values();
        let t = s.t;
        let mut acc = 0.0;
        for idx in 0..g.len() {
            let (_, phi_t, _) = phi.eval(g.center_of(idx), t);
            acc += rho[idx] * phi_t * vol;
        }
        // x faces
        for j in 0..ny {
            for i in 1..nx {
                let (l, r) = (j * nx + i - 1, j * nx + i);
                let xf = [g.lo()[0] + i as f64 * hx, g.center(i, j)[1]];
                let (_, _, grad) = phi.eval(xf, t);
                if grad[0] == 0.0 {
                    continue;
                }
                let b = drift.velocity(xf, t)[0];
                let flux = (power(rho[r], m) - power(rho[l], m)) / hx + b * 0.5 * (rho[l] + rho[r]);
                acc -= flux * grad[0] * vol;
            }
        }
        if g.dim() == 2 {
            for j in 1..ny {
                for i in 0..nx {
                    let (l, r) = ((j - 1) * nx + i, j * nx + i);
                    let yf = [g.center(i, j)[0], g.lo()[1] + j as f64 * hy];
                    let (_, _, grad) = phi.eval(yf, t);
                    if grad[1] == 0.0 {
                        continue;
                    }
                    let b = drift.velocity(yf, t)[1];
                    let flux = (power(rho[r], m) - power(rho[l], m)) / hy + b * 0.5 * (rho[l] + rho[r]);
                    acc -= flux * grad[1] * vol;
                }
            }
        }
        acc
    };

    let mut total = 0.0;
    for w in traj.snapshots.windows(2) {
        let dt = w[1].t - w[0].t;
        total += 0.5 * dt * (spatial(&w[0]) + spatial(&w[1]));
    }
    let s0 = &traj.snapshots[0];
    for idx in 0..g.len() {
        let (p, _, _) = phi.eval(g.center_of(idx), s0.t);
        total += s0.rho.values()[idx] * p * vol;
    }
    Ok(total)
}

/// Outcome of [`check_comparison`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub ordered: bool,
    pub tolerance: f64,
    /// Largest `rho_low - rho_high` seen.
    pub max_excess: f64,
    pub violations: usize,
    /// First violating cell centre and time.
    pub first_violation: Option<(Point, f64)>,
}

impl ComparisonReport {
    pub fn to_report(&self) -> EstimateReport {
        let witness = self.first_violation.map(|(x, t)| Witness { x, t, value: self.max_excess });
        EstimateReport::new("comparison", Verdict::from_bool(self.ordered))
            .with_constant("max_excess", self.max_excess)
            .with_constant("violations", self.violations as f64)
            .with_tolerance("ordering", self.tolerance)
            .with_witness(witness)
    }
}

/// Checks `rho_low <= rho_high + 10 dx^2` at every snapshot.
pub fn check_comparison(low: &Trajectory, high: &Trajectory) -> Result<ComparisonReport> {
    if !low.grid().same_as(high.grid()) {
        return Err(CoreError::GridMismatch);
    }
    if low.len() != high.len()
        || low.snapshots.iter().zip(&high.snapshots).any(|(a, b)| (a.t - b.t).abs() > 1e-12 * (1.0 + a.t.abs()))
    {
        return Err(CoreError::Precondition("trajectories must share snapshot times".into()));
    }
    if low.params.m != high.params.m || low.drift != high.drift {
        return Err(CoreError::Precondition("trajectories must share m and drift".into()));
    }
    let g = low.grid();
    let tol = 10.0 * g.dx() * g.dx();
    let mut max_excess = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut first = None;
    for (a, b) in low.snapshots.iter().zip(&high.snapshots) {
        for (idx, (x, y)) in a.rho.values().iter().zip(b.rho.values()).enumerate() {
            let e = x - y;
            max_excess = max_excess.max(e);
            if e > tol {
                violations += 1;
                if first.is_none() {
                    first = Some((g.center_of(idx), a.t));
                }
            }
        }
    }
    Ok(ComparisonReport { ordered: violations == 0, tolerance: tol, max_excess, violations, first_violation: first })
}

/// Pointwise pressure residual with its evaluation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureResidual {
    /// Residual where evaluated, zero elsewhere.
    pub residual: Field,
    /// Cells where the residual was evaluated.
    pub mask: Vec<bool>,
}

impl PressureResidual {
    pub fn max_abs(&self) -> f64 {
        self.values().map(f64::abs).fold(0.0, f64::max)
    }
    pub fn min(&self) -> f64 {
        self.values().fold(f64::INFINITY, f64::min)
    }
    pub fn max(&self) -> f64 {
        self.values().fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn evaluated(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.residual.values().iter().zip(&self.mask).filter(|(_, &m)| m).map(|(v, _)| *v)
    }
}

/// Cells that are positive together with every cell within `width` index
/// steps, and outside the boundary collar.
pub fn interior_positive_mask(positive: &[bool], grid: &GridSpec, width: usize) -> Vec<bool> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let w = width as isize;
    let wy = if grid.dim() == 2 { w } else { 0 };
    let mut out = vec![false; grid.len()];
    for j in 0..ny {
        for i in 0..nx {
            if grid.near_boundary(i, j, BOUNDARY_COLLAR) || !positive[j * nx + i] {
                continue;
            }
            let mut ok = true;
            'scan: for dj in -wy..=wy {
                for di in -w..=w {
                    let (ii, jj) = (i as isize + di, j as isize + dj);
                    if ii < 0 || jj < 0 || ii >= nx as isize || jj >= ny as isize {
                        continue;
                    }
                    if !positive[jj as usize * nx + ii as usize] {
                        ok = false;
                        break 'scan;
                    }
                }
            }
            out[j * nx + i] = ok;
        }
    }
    out
}

/// `u_t - (m-1) u Lap u - |grad u|^2 - grad u . b - (m-1) u div b` on the
/// interior of `{u > threshold * max u}`; cells within two cells of the
/// contour or of the box boundary are excluded.
pub fn pressure_residual(
    u: &Field,
    drift: &dyn Drift,
    u_t: &Field,
    m: f64,
    t: f64,
    threshold: f64,
) -> Result<PressureResidual> {
    u.check_same_grid(u_t)?;
    if !(m > 1.0) {
        return Err(CoreError::InvalidExponent(m));
    }
    let g = u.grid();
    let set = positivity_set(u, threshold);
    let mask = interior_positive_mask(&set.mask, g, 2);
    let lap = discrete_laplacian(u);
    let grad = discrete_gradient(u);
    let mut res = vec![0.0; g.len()];
    for idx in 0..g.len() {
        if !mask[idx] {
            continue;
        }
        let x = g.center_of(idx);
        let b = drift.velocity(x, t);
        let div = drift.divergence(x, t, g.dim());
        let gu = grad.at(idx);
        let uu = u.values()[idx];
        res[idx] = u_t.values()[idx]
            - (m - 1.0) * uu * lap.values()[idx]
            - (gu[0] * gu[0] + gu[1] * gu[1])
            - (gu[0] * b[0] + gu[1] * b[1])
            - (m - 1.0) * uu * div;
    }
    Ok(PressureResidual { residual: Field::from_parts(g.clone(), res, Role::Scalar), mask })
}

/// Pressure residual of snapshot `k` of a trajectory, with `u_t` from
/// neighbouring snapshots.
pub fn trajectory_pressure_residual(traj: &Trajectory, k: usize) -> Result<PressureResidual> {
    let ut = traj.pressure_time_derivative(k)?;
    let s = &traj.snapshots[k];
    pressure_residual(&s.u, &traj.drift, &ut, traj.m(), s.t, traj.threshold())
}

/// Pressure of a single density value (re-exported for callers building data).
pub fn pressure(rho: f64, m: f64) -> f64 {
    pressure_of(rho, m)
}
