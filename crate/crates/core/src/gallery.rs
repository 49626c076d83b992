//! Canned scenarios with explicit solutions or barriers, the discrete
//! supersolution certifier and a few level-set geometry helpers.

use std::f64::consts::{E, PI};

use crate::drift::{Drift, DriftSpec};
use crate::error::{CoreError, Result};
use crate::grid::{discrete_gradient, Contour, Field, GridSpec, Point};
use crate::initial::{InitialPreset, InitialSpec};
use crate::solver::{run, Boundary, DirichletPressure, FaceBc, SolverParams, Trajectory};

/// Expected verifier outcome shipped with a scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expectation {
    pub check: String,
    pub expect: String,
}

impl Expectation {
    pub fn new(check: &str, expect: &str) -> Self {
        Expectation { check: check.into(), expect: expect.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub m: f64,
    pub grid: GridSpec,
    pub t0: f64,
    pub t1: f64,
    pub snapshots: usize,
    pub cfl: f64,
    pub boundary: Boundary,
    pub drift: DriftSpec,
    pub initial: InitialSpec,
    pub params: Vec<(String, f64)>,
    pub expectations: Vec<Expectation>,
}

impl Scenario {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    /// Same box at spacing `dx` (rounded so cells fit the box).
    pub fn with_dx(mut self, dx: f64) -> Result<Self> {
        let (lo, hi) = (self.grid.lo(), self.grid.hi());
        let d = self.grid.dim();
        self.grid = GridSpec::with_spacing(&lo[..d], &hi[..d], dx)?;
        Ok(self)
    }

    pub fn with_times(mut self, t0: f64, t1: f64, snapshots: usize) -> Self {
        self.t0 = t0;
        self.t1 = t1;
        self.snapshots = snapshots;
        self
    }

    pub fn solver_params(&self) -> SolverParams {
        SolverParams::new(self.m, self.t0, self.t1).with_snapshots(self.snapshots).with_cfl(self.cfl)
    }

    pub fn initial_density(&self) -> Result<Field> {
        self.initial.density_field(&self.grid, self.m)
    }

    pub fn run(&self) -> Result<Trajectory> {
        run(&self.initial_density()?, &self.drift, &self.solver_params(), &self.boundary)
    }
}

pub const SCENARIO_NAMES: [&str; 7] = [
    "barenblatt",
    "stationary_corner",
    "shrinking_corner",
    "corner_formation",
    "cusp_case",
    "traveling_wave",
    "waiting_time",
];

pub fn by_name(name: &str) -> Result<Scenario> {
    match name {
        "barenblatt" => Ok(barenblatt()),
        "stationary_corner" => Ok(stationary_corner()),
        "shrinking_corner" => Ok(shrinking_corner()),
        "corner_formation" => Ok(corner_formation()),
        "cusp_case" => cusp_case(),
        "traveling_wave" => Ok(traveling_wave(1.0, 4.0)),
        "waiting_time" => Ok(waiting_time()),
        _ => Err(CoreError::UnknownPreset(name.to_string())),
    }
}

fn params(list: &[(&str, f64)]) -> Vec<(String, f64)> {
    list.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Zero-drift source solution in 1-D, the reference run for convergence.
pub fn barenblatt() -> Scenario {
    // Support radius is sqrt(12) t^(1/3) for C = 1, about 4.4 at t = 2.
    let grid = GridSpec::with_spacing(&[-6.0], &[6.0], 1.0 / 256.0).expect("static grid");
    Scenario {
        name: "barenblatt".into(),
        m: 2.0,
        grid,
        t0: 1.0,
        t1: 2.0,
        snapshots: 10,
        cfl: 0.4,
        boundary: Boundary::closed(),
        drift: DriftSpec::zero(),
        initial: InitialSpec::new(InitialPreset::Barenblatt, &[1.0, 1.0]).expect("static preset"),
        params: params(&[("C", 1.0)]),
        expectations: vec![
            Expectation::new("aronson_benilan", "pass"),
            Expectation::new("support_consistency", "pass"),
            Expectation::new("classify", "type-two"),
        ],
    }
}

/// Stationary solution `max(g(x) g(y), 0)` with `b = -grad(g(x) g(y))`, whose
/// support is the unit square.
pub fn stationary_corner() -> Scenario {
    let grid = GridSpec::with_spacing(&[-0.5, -0.5], &[1.5, 1.5], 1.0 / 128.0).expect("static grid");
    Scenario {
        name: "stationary_corner".into(),
        m: 2.0,
        grid,
        t0: 0.0,
        t1: 1.0,
        snapshots: 10,
        cfl: 0.4,
        boundary: Boundary::closed(),
        drift: DriftSpec::corner_gradient(),
        initial: InitialSpec::new(InitialPreset::StationaryCorner, &[]).expect("static preset"),
        params: Vec::new(),
        expectations: vec![
            Expectation::new("pressure_residual", "pass"),
            Expectation::new("classify", "type-one"),
            Expectation::new("normal_velocity", "pass"),
            Expectation::new("aronson_benilan", "pass"),
        ],
    }
}

/// Barrier of the shrinking corner.
pub fn shrinking_corner() -> Scenario {
    let p = ShrinkingCorner::default();
    let grid = GridSpec::with_spacing(&[-0.5, -1.0], &[1.0, 1.0], 1.0 / 128.0).expect("static grid");
    Scenario {
        name: "shrinking_corner".into(),
        m: p.m,
        grid,
        t0: 0.0,
        t1: p.t_max(),
        snapshots: 5,
        cfl: 0.4,
        boundary: Boundary::closed(),
        drift: DriftSpec::linear_diagonal(p.a, p.b),
        initial: InitialSpec::new(InitialPreset::ShrinkingCorner, &[p.k0, 0.6]).expect("static preset"),
        params: params(&[("a", p.a), ("b", p.b), ("k0", p.k0), ("sigma1", p.sigma1)]),
        expectations: vec![
            Expectation::new("supersolution_residual", "pass"),
            Expectation::new("barrier_comparison", "pass"),
        ],
    }
}

pub fn corner_formation() -> Scenario {
    let p = CornerFormation::default();
    let grid = GridSpec::with_spacing(&[-0.5, -3.0], &[4.0, 3.0], 1.0 / 64.0).expect("static grid");
    Scenario {
        name: "corner_formation".into(),
        m: p.m,
        grid,
        t0: 0.0,
        t1: 0.5,
        snapshots: 5,
        cfl: 0.4,
        boundary: Boundary::closed(),
        drift: DriftSpec::corner_formation(),
        initial: InitialSpec::new(InitialPreset::CornerFormation, &[p.sigma0, 1.0]).expect("static preset"),
        params: params(&[("sigma0", p.sigma0), ("sigma1", p.sigma1), ("eps", p.eps)]),
        expectations: vec![
            Expectation::new("supersolution_residual", "pass"),
            Expectation::new("barrier_comparison", "pass"),
        ],
    }
}

pub fn cusp_case() -> Result<Scenario> {
    let p = Cusp::default();
    p.validate()?;
    // The drift carries the support to the right, out through a zero-gradient face.
    let grid = GridSpec::with_spacing(&[-0.5, -0.5], &[1.0, 0.5], 1.0 / 128.0)?;
    let mut boundary = Boundary::closed();
    boundary.hi[0] = FaceBc::Extrapolate;
    Ok(Scenario {
        name: "cusp_case".into(),
        m: p.m,
        grid,
        t0: 0.0,
        t1: 2.0 * p.tau,
        snapshots: 6,
        cfl: 0.4,
        boundary,
        drift: DriftSpec::cusp(p.delta, 0.0)?,
        initial: InitialSpec::new(InitialPreset::Cusp, &[p.tau, p.eps, 0.25])?,
        params: params(&[("tau", p.tau), ("delta", p.delta), ("eps", p.eps), ("sigma2", p.sigma2)]),
        expectations: vec![
            Expectation::new("supersolution_residual", "pass"),
            Expectation::new("barrier_comparison", "pass"),
        ],
    })
}

/// Approximate traveling wave: `b = (A sin(k x2), 0)`, `u0 = (x1)_+` and the
/// linear growth at infinity imposed as `u = x1 + sigma1 t` on the right face.
/// The box spans one half period in `x2` with reflecting faces at the
/// extrema of the drift.
pub fn traveling_wave(amplitude: f64, wavenumber: f64) -> Scenario {
    let sigma1 = amplitude.abs() + 1.0;
    let sigma2 = amplitude.abs() * wavenumber.abs();
    let t1 = 2.0;
    let half = PI / (2.0 * wavenumber.abs());
    let left = -(sigma1 * t1 + 1.0);
    let grid = GridSpec::with_spacing(&[left, -half], &[0.5, half], 1.0 / 64.0).expect("static grid");
    let mut boundary = Boundary::uniform(FaceBc::Reflect);
    boundary.lo[0] = FaceBc::Closed;
    boundary.hi[0] = FaceBc::Dirichlet(DirichletPressure::Affine { offset: 0.0, slope: [1.0, 0.0], rate: sigma1 });
    Scenario {
        name: "traveling_wave".into(),
        m: 1.5,
        grid,
        t0: 0.0,
        t1,
        snapshots: 8,
        cfl: 0.9,
        boundary,
        drift: DriftSpec::laminar_sine(amplitude, wavenumber),
        initial: InitialSpec::new(InitialPreset::HalfPlane, &[]).expect("static preset"),
        params: params(&[("amplitude", amplitude), ("wavenumber", wavenumber), ("sigma1", sigma1), ("sigma2", sigma2)]),
        expectations: vec![
            Expectation::new("barrier_comparison", "pass"),
            Expectation::new("cone_monotonicity", "pass"),
            Expectation::new("grad_floor", "pass"),
            Expectation::new("nondegeneracy", "pass"),
        ],
    }
}

/// 1-D data `a0 (x)_+^2`: the exact solution keeps its front at the origin
/// until the coefficient blows up at `1 / (2 (m + 1) a0)`.
pub fn waiting_time() -> Scenario {
    let a0 = 1.0;
    let grid = GridSpec::with_spacing(&[-1.0], &[0.5], 1.0 / 256.0).expect("static grid");
    let mut boundary = Boundary::closed();
    boundary.hi[0] = FaceBc::Dirichlet(DirichletPressure::QuadraticFront { a0 });
    Scenario {
        name: "waiting_time".into(),
        m: 2.0,
        grid,
        t0: 0.0,
        t1: 0.1,
        snapshots: 10,
        cfl: 0.4,
        boundary,
        drift: DriftSpec::zero(),
        initial: InitialSpec::new(InitialPreset::QuadraticFront, &[a0]).expect("static preset"),
        params: params(&[("a0", a0), ("blow_up", 1.0 / (6.0 * a0))]),
        expectations: vec![Expectation::new("classify", "type-one")],
    }
}

/// Explicit candidate supersolution on a region of space-time.
pub trait Barrier {
    fn value(&self, x: Point, t: f64) -> f64;
    /// Where the residual is evaluated (inside the positive set).
    fn in_region(&self, x: Point, t: f64) -> bool;
}

/// Minimum of the pressure operator applied to a barrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSummary {
    pub min: f64,
    pub at: Option<(Point, f64)>,
    pub evaluated: usize,
}

impl ResidualSummary {
    /// `min >= -c dx`.
    pub fn certifies(&self, c: f64, dx: f64) -> bool {
        self.evaluated > 0 && self.min >= -c * dx
    }
}

/// `L phi = phi_t - (m-1) phi Lap phi - |grad phi|^2 - grad phi . b - (m-1) phi div b`
/// by centred differences of spacing `dx` at the cell centres whose 2-cell
/// neighbourhood lies in the region.
pub fn supersolution_residual(
    barrier: &dyn Barrier,
    drift: &DriftSpec,
    m: f64,
    grid: &GridSpec,
    times: &[f64],
) -> Result<ResidualSummary> {
    if times.is_empty() {
        return Err(CoreError::InvalidParameter("no residual times".into()));
    }
    let h = grid.dx();
    let ht = 1e-6;
    let dim = grid.dim();
    let mut best = ResidualSummary { min: f64::INFINITY, at: None, evaluated: 0 };
    let collar: Vec<Point> = if dim == 1 {
        vec![[2.0 * h, 0.0], [-2.0 * h, 0.0]]
    } else {
        (0..8)
            .map(|k| {
                let a = PI * k as f64 / 4.0;
                [2.0 * h * a.cos(), 2.0 * h * a.sin()]
            })
            .collect()
    };
    for &t in times {
        for idx in 0..grid.len() {
            let x = grid.center_of(idx);
            if !barrier.in_region(x, t) || !collar.iter().all(|d| barrier.in_region([x[0] + d[0], x[1] + d[1]], t)) {
                continue;
            }
            let f = |p: Point| barrier.value(p, t);
            let v = f(x);
            let phi_t = (barrier.value(x, t + ht) - barrier.value(x, t - ht)) / (2.0 * ht);
            let mut lap = 0.0;
            let mut grad = [0.0; 2];
            for k in 0..dim {
                let mut e = [0.0; 2];
                e[k] = h;
                let (fp, fm) = (f([x[0] + e[0], x[1] + e[1]]), f([x[0] - e[0], x[1] - e[1]]));
                lap += (fp - 2.0 * v + fm) / (h * h);
                grad[k] = (fp - fm) / (2.0 * h);
            }
            let b = drift.velocity(x, t);
            let div = drift.divergence(x, t, dim);
            let r = phi_t
                - (m - 1.0) * v * lap
                - (grad[0] * grad[0] + grad[1] * grad[1])
                - (grad[0] * b[0] + grad[1] * b[1])
                - (m - 1.0) * v * div;
            best.evaluated += 1;
            if r < best.min {
                best.min = r;
                best.at = Some((x, t));
            }
        }
    }
    if best.evaluated == 0 {
        return Err(CoreError::Precondition("barrier region misses every cell of the box".into()));
    }
    Ok(best)
}

/// Exact stationary solution `max(g(x) g(y), 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StationaryCorner;

impl StationaryCorner {
    fn g(s: f64) -> f64 {
        if s > 0.0 && s < 1.0 {
            (PI * s).sin()
        } else {
            0.0
        }
    }
}

impl Barrier for StationaryCorner {
    fn value(&self, x: Point, _t: f64) -> f64 {
        Self::g(x[0]) * Self::g(x[1])
    }
    fn in_region(&self, x: Point, _t: f64) -> bool {
        x[0] > 0.0 && x[0] < 1.0 && x[1] > 0.0 && x[1] < 1.0
    }
}

/// `phi = lambda(t) (x^2 - k(t) y^2)_+ 1_{x > 0}`, `lambda = exp(sigma1 t)`,
/// `k = k0 exp(t)`, with drift `(a x, b y)`, for `t < 1/sigma1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkingCorner {
    pub m: f64,
    pub a: f64,
    pub b: f64,
    pub k0: f64,
    pub sigma1: f64,
}

impl Default for ShrinkingCorner {
    fn default() -> Self {
        ShrinkingCorner { m: 2.0, a: 0.0, b: 17.0, k0: 1.0, sigma1: 40.0 }
    }
}

impl ShrinkingCorner {
    pub fn new(m: f64, a: f64, b: f64, k0: f64, sigma1: f64) -> Result<Self> {
        let s = ShrinkingCorner { m, a, b, k0, sigma1 };
        s.validate()?;
        Ok(s)
    }

    /// `2b - 1 >= 4 lambda + 8 lambda k0 + 2a` and `sigma1 >= 10`, with
    /// `lambda <= e` on `t <= 1/sigma1`, plus the explicit form of "sigma1 large
    /// enough" for the first bracket: `sigma1 >= e(2(m-1) + 4) + (m-1)(a+b) + 2a`.
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 1.0) {
            return Err(CoreError::InvalidExponent(self.m));
        }
        if !(self.k0 > 0.0) {
            return Err(CoreError::Constraint(format!("k0 = {} must be positive", self.k0)));
        }
        if !(self.sigma1 >= 10.0) {
            return Err(CoreError::Constraint(format!("sigma1 = {} violates sigma1 >= 10", self.sigma1)));
        }
        let rhs = 4.0 * E + 8.0 * E * self.k0 + 2.0 * self.a;
        if !(2.0 * self.b - 1.0 >= rhs) {
            return Err(CoreError::Constraint(format!(
                "2b - 1 = {} violates 2b - 1 >= 4 lambda + 8 lambda k0 + 2a = {rhs}",
                2.0 * self.b - 1.0
            )));
        }
        let first = E * (2.0 * (self.m - 1.0) + 4.0) + (self.m - 1.0) * (self.a + self.b) + 2.0 * self.a;
        if !(self.sigma1 >= first) {
            return Err(CoreError::Constraint(format!(
                "sigma1 = {} is below the first-bracket bound {first}",
                self.sigma1
            )));
        }
        Ok(())
    }

    pub fn t_max(&self) -> f64 {
        1.0 / self.sigma1
    }
    pub fn lambda(&self, t: f64) -> f64 {
        (self.sigma1 * t).exp()
    }
    pub fn k(&self, t: f64) -> f64 {
        self.k0 * t.exp()
    }
    /// Half-angle `arctan(k^(-1/2))` of the support corner.
    pub fn half_angle(&self, t: f64) -> f64 {
        (1.0 / self.k(t).sqrt()).atan()
    }
    pub fn drift(&self) -> DriftSpec {
        DriftSpec::linear_diagonal(self.a, self.b)
    }
}

impl Barrier for ShrinkingCorner {
    fn value(&self, x: Point, t: f64) -> f64 {
        if x[0] > 0.0 {
            self.lambda(t) * (x[0] * x[0] - self.k(t) * x[1] * x[1]).max(0.0)
        } else {
            0.0
        }
    }
    fn in_region(&self, x: Point, t: f64) -> bool {
        x[0] > self.k(t).sqrt() * x[1].abs()
    }
}

/// `phi = lambda x (x - alpha |y|)_+`, `lambda = sigma0 exp(sigma1 t)`,
/// `alpha = eps t`, drift `-(x + |y|, y)`, for `t in [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerFormation {
    pub m: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub eps: f64,
}

impl Default for CornerFormation {
    fn default() -> Self {
        let m = 2.0;
        CornerFormation { m, sigma0: 0.5 * (-4.0 * m).exp(), sigma1: 4.0 * m, eps: 0.25 }
    }
}

impl CornerFormation {
    pub fn new(m: f64, sigma0: f64, eps: f64) -> Result<Self> {
        let c = CornerFormation { m, sigma0, sigma1: 4.0 * m, eps };
        c.validate()?;
        Ok(c)
    }

    /// `sigma1 = 4m`, `0 < sigma0 <= exp(-4m)/2`, `0 < eps <= 1/4`.
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 1.0) {
            return Err(CoreError::InvalidExponent(self.m));
        }
        if (self.sigma1 - 4.0 * self.m).abs() > 1e-12 * self.m {
            return Err(CoreError::Constraint(format!("sigma1 = {} must equal 4m", self.sigma1)));
        }
        let cap = 0.5 * (-4.0 * self.m).exp();
        if !(self.sigma0 > 0.0 && self.sigma0 <= cap * (1.0 + 1e-12)) {
            return Err(CoreError::Constraint(format!("sigma0 = {} violates sigma0 <= exp(-4m)/2 = {cap}", self.sigma0)));
        }
        if !(self.eps > 0.0 && self.eps <= 0.25) {
            return Err(CoreError::Constraint(format!("eps = {} violates eps <= 1/4", self.eps)));
        }
        Ok(())
    }

    pub fn lambda(&self, t: f64) -> f64 {
        self.sigma0 * (self.sigma1 * t).exp()
    }
    pub fn alpha(&self, t: f64) -> f64 {
        self.eps * t
    }
    /// Opening `2 arctan(1/alpha)` of the support at the origin.
    pub fn opening(&self, t: f64) -> f64 {
        2.0 * (1.0 / self.alpha(t)).atan()
    }
}

impl Barrier for CornerFormation {
    fn value(&self, x: Point, t: f64) -> f64 {
        self.lambda(t) * x[0] * (x[0] - self.alpha(t) * x[1].abs()).max(0.0)
    }
    fn in_region(&self, x: Point, t: f64) -> bool {
        x[0] > self.alpha(t) * x[1].abs()
    }
}

/// `phi_eps = lambda (x^2 - (|y| + eps)^(2 alpha))_+ 1_{x >= 0}` with
/// `alpha = 1 + tau (tau - t)`, `lambda = exp(sigma2 t)` and drift
/// `(x log x - 10 x^(1 - delta), 0)`, on `(|y| + eps)^alpha <= x <= 1/2`, `t in [0, 2 tau]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cusp {
    pub m: f64,
    pub tau: f64,
    pub delta: f64,
    pub eps: f64,
    pub sigma2: f64,
}

/// Smallest `sigma2` of [`CUSP_SIGMA2_LATTICE`] passing the residual check at
/// `dx = 1/128` and `1/256` for the default `tau`, `delta`, `eps`, `m`.
pub const CUSP_SIGMA2_DEFAULT: f64 = 0.125;
pub const CUSP_SIGMA2_LATTICE: [f64; 8] = [0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0];

impl Default for Cusp {
    fn default() -> Self {
        Cusp { m: 2.0, tau: 0.3, delta: 0.5, eps: 0.05, sigma2: CUSP_SIGMA2_DEFAULT }
    }
}

impl Cusp {
    /// `1 > delta >= 2 tau^2 / (1 - tau^2)`, `0 < tau <= 1/2`, `exp(2 sigma2 tau) <= 2`,
    /// `0 < eps < 1`, `sigma2 > 0`.
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 1.0) {
            return Err(CoreError::InvalidExponent(self.m));
        }
        if !(self.tau > 0.0 && self.tau <= 0.5) {
            return Err(CoreError::Constraint(format!("tau = {} violates 0 < tau <= 1/2", self.tau)));
        }
        let lo = 2.0 * self.tau * self.tau / (1.0 - self.tau * self.tau);
        if !(self.delta < 1.0 && self.delta >= lo) {
            return Err(CoreError::Constraint(format!(
                "delta = {} violates 1 > delta >= 2 tau^2 / (1 - tau^2) = {lo}",
                self.delta
            )));
        }
        if !(self.sigma2 > 0.0 && (2.0 * self.sigma2 * self.tau).exp() <= 2.0) {
            return Err(CoreError::Constraint(format!(
                "sigma2 = {} violates exp(2 sigma2 tau) <= 2",
                self.sigma2
            )));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(CoreError::Constraint(format!("eps = {} must lie in (0, 1)", self.eps)));
        }
        Ok(())
    }

    pub fn alpha(&self, t: f64) -> f64 {
        1.0 + self.tau * (self.tau - t)
    }
    pub fn lambda(&self, t: f64) -> f64 {
        (self.sigma2 * t).exp()
    }
    pub fn t_max(&self) -> f64 {
        2.0 * self.tau
    }
    pub fn drift(&self) -> Result<DriftSpec> {
        DriftSpec::cusp(self.delta, 0.0)
    }

    /// Upper bound `sigma` of `div b` on `0 < x <= 1/2`.
    pub fn divergence_bound(&self) -> f64 {
        // div b = log x + 1 - 10 (1 - delta) x^(-delta) increases on (0, 1/2].
        let x: f64 = 0.5;
        (x.ln() + 1.0 - 10.0 * (1.0 - self.delta) * x.powf(-self.delta)).max(0.0)
    }

    /// Whether `sigma2 >= (sigma + 4)(m - 1)`, the sufficient condition of the
    /// four-term estimate.
    pub fn proof_condition(&self) -> bool {
        self.sigma2 >= (self.divergence_bound() + 4.0) * (self.m - 1.0)
    }

    /// Analytic terms `A1..A4` of the lower bound at `(x, y, t)`.
    pub fn terms(&self, x: Point, t: f64) -> [f64; 4] {
        let (lam, al) = (self.lambda(t), self.alpha(t));
        let s = x[1].abs() + self.eps;
        let sigma = self.divergence_bound();
        let a1 = (x[0] * x[0] - s.powf(2.0 * al))
            * (self.sigma2 * lam - 2.0 * lam * lam * (self.m - 1.0) - sigma * lam * (self.m - 1.0));
        let a2 = lam * self.tau * s.powf(2.0 * al) * (s * s).ln();
        let a3 = -lam * lam * (4.0 * s.powf(2.0 * al) + 4.0 * al * al * s.powf(4.0 * al - 2.0));
        let a4 = 2.0 * lam * (-x[0] * x[0] * x[0].ln() + 10.0 * x[0].powf(2.0 - self.delta));
        [a1, a2, a3, a4]
    }

    /// Contour exponent oracle: support boundary `x = (|y| + eps)^alpha`.
    pub fn boundary_x(&self, y: f64, t: f64) -> f64 {
        (y.abs() + self.eps).powf(self.alpha(t))
    }
}

impl Barrier for Cusp {
    fn value(&self, x: Point, t: f64) -> f64 {
        if x[0] >= 0.0 {
            self.lambda(t) * (x[0] * x[0] - (x[1].abs() + self.eps).powf(2.0 * self.alpha(t))).max(0.0)
        } else {
            0.0
        }
    }
    fn in_region(&self, x: Point, t: f64) -> bool {
        x[0] <= 0.5 && x[0] >= self.boundary_x(x[1], t)
    }
}

/// Smallest lattice `sigma2` whose barrier passes `min L phi >= -c dx` on `grid`.
pub fn cusp_sigma2_scan(base: &Cusp, grid: &GridSpec, times: &[f64], c: f64) -> Result<Option<f64>> {
    for s2 in CUSP_SIGMA2_LATTICE {
        let cand = Cusp { sigma2: s2, ..*base };
        if cand.validate().is_err() {
            continue;
        }
        if supersolution_residual(&cand, &cand.drift()?, cand.m, grid, times)?.certifies(c, grid.dx()) {
            return Ok(Some(s2));
        }
    }
    Ok(None)
}

/// Linear barrier `(x1 + sigma1 t)_+` of the traveling-wave run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarBarrier {
    pub sigma1: f64,
}

impl Barrier for PlanarBarrier {
    fn value(&self, x: Point, t: f64) -> f64 {
        (x[0] + self.sigma1 * t).max(0.0)
    }
    fn in_region(&self, x: Point, t: f64) -> bool {
        x[0] + self.sigma1 * t > 0.0
    }
}

/// Largest amount by which a run exceeds a barrier over all snapshots.
pub fn barrier_excess(traj: &Trajectory, barrier: &dyn Barrier) -> (f64, Option<(Point, f64)>) {
    let mut worst = (f64::NEG_INFINITY, None);
    for s in &traj.snapshots {
        let g = s.u.grid();
        for (idx, &u) in s.u.values().iter().enumerate() {
            let x = g.center_of(idx);
            let e = u - barrier.value(x, s.t);
            if e > worst.0 {
                worst = (e, Some((x, s.t)));
            }
        }
    }
    worst
}

/// Opening angle at `vertex` of a contour made of two branches, from the
/// contour points at distance `r_in..r_out`: the angle between the mean
/// directions of the two clusters separated by the two widest angular gaps.
pub fn corner_opening(contour: &Contour, vertex: Point, r_in: f64, r_out: f64) -> Option<f64> {
    let mut ang: Vec<f64> = contour
        .points()
        .filter_map(|p| {
            let d = [p[0] - vertex[0], p[1] - vertex[1]];
            let r = d[0].hypot(d[1]);
            (r >= r_in && r <= r_out).then(|| d[1].atan2(d[0]))
        })
        .collect();
    if ang.len() < 4 {
        return None;
    }
    ang.sort_by(f64::total_cmp);
    let n = ang.len();
    let gap = |k: usize| {
        let next = if k + 1 < n { ang[k + 1] } else { ang[0] + 2.0 * PI };
        next - ang[k]
    };
    let mut gaps: Vec<usize> = (0..n).collect();
    gaps.sort_by(|&a, &b| gap(b).total_cmp(&gap(a)));
    let (g1, g2) = (gaps[0].min(gaps[1]), gaps[0].max(gaps[1]));
    let mean = |idx: Vec<usize>| {
        let (sx, sy) = idx.iter().fold((0.0, 0.0), |(sx, sy), &k| (sx + ang[k].cos(), sy + ang[k].sin()));
        sy.atan2(sx)
    };
    let a = mean((g1 + 1..=g2).collect());
    let b = mean((g2 + 1..n).chain(0..=g1).collect());
    let mut d = (a - b).abs() % (2.0 * PI);
    if d > PI {
        d = 2.0 * PI - d;
    }
    Some(d)
}

/// Least-squares exponent `a` in `log x = a log(|y| + eps)` over contour
/// points with `x` in `[x_lo, x_hi]`.
pub fn contour_exponent(contour: &Contour, eps: f64, x_lo: f64, x_hi: f64) -> Option<f64> {
    let (mut num, mut den, mut n) = (0.0, 0.0, 0);
    for p in contour.points() {
        if p[0] >= x_lo && p[0] <= x_hi {
            let (lx, ly) = (p[0].ln(), (p[1].abs() + eps).ln());
            num += lx * ly;
            den += ly * ly;
            n += 1;
        }
    }
    (n >= 4 && den > 0.0).then(|| num / den)
}

/// Largest `u_t - sigma1 du/dx1` over snapshots at `t >= t_min` (the initial
/// kink of `(x1)_+` takes a short layer to smooth out) and cells off the faces
/// with `u > band` at the snapshot and its two neighbours. `u_t` is the
/// centred snapshot difference. Returns the value, the cell and the time.
pub fn planar_rate_excess(traj: &Trajectory, sigma1: f64, t_min: f64, band: f64) -> Result<Option<(f64, Point, f64)>> {
    let g = traj.grid();
    let mut worst: Option<(f64, Point, f64)> = None;
    for k in 1..traj.len().saturating_sub(1) {
        let s = &traj.snapshots[k];
        if s.t < t_min {
            continue;
        }
        let ut = traj.pressure_time_derivative(k)?;
        let grad = discrete_gradient(&s.u);
        let inside = |idx: usize| (k - 1..=k + 1).all(|j| traj.snapshots[j].u.values()[idx] > band);
        for idx in 0..g.len() {
            if g.in_collar(idx) || !inside(idx) {
                continue;
            }
            let v = ut.values()[idx] - sigma1 * grad.at(idx)[0];
            if worst.map_or(true, |w| v > w.0) {
                worst = Some((v, g.center_of(idx), s.t));
            }
        }
    }
    Ok(worst)
}

/// Front of a support of the form `{x1 > f(x2)}` as points `[f(x2), x2]`.
/// Each row's front is extrapolated linearly from its first two cells above
/// the relative level, which is exact for a pressure that grows linearly off
/// the front, and kept between those cells and the last cell below.
pub fn front_graph(u: &Field, threshold_rel: f64) -> Vec<Point> {
    let g = u.grid();
    let level = threshold_rel * u.max();
    let mut out = Vec::new();
    if g.dim() != 2 || !(level > 0.0) {
        return out;
    }
    for j in 0..g.ny() {
        let Some(i) = (0..g.nx()).find(|&i| u.at(i, j) > level) else { continue };
        let x2 = g.center(i, j)[1];
        if i == 0 {
            out.push([g.center(0, j)[0], x2]);
            continue;
        }
        let h = g.spacing(0);
        let xi = g.center(i, j)[0];
        let (a, b) = (u.at(i, j), if i + 1 < g.nx() { u.at(i + 1, j) } else { f64::NAN });
        let x1 = if b > a { xi - a * h / (b - a) } else { xi - 0.5 * h };
        out.push([x1.clamp(xi - h, xi), x2]);
    }
    out
}

/// Largest difference quotient of a front graph between rows `span` apart
/// (in `x2`). Rows closer than `span` are skipped to keep the estimate
/// insensitive to the grid.
pub fn graph_lipschitz(graph: &[Point], span: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (k, p) in graph.iter().enumerate() {
        if let Some(q) = graph[k + 1..].iter().find(|q| q[1] - p[1] >= span - 1e-12) {
            let l = (q[0] - p[0]).abs() / (q[1] - p[1]);
            best = Some(best.map_or(l, |b: f64| b.max(l)));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_satisfy_constraints() {
        ShrinkingCorner::default().validate().unwrap();
        CornerFormation::default().validate().unwrap();
        Cusp::default().validate().unwrap();
        for name in SCENARIO_NAMES {
            let s = by_name(name).unwrap();
            assert_eq!(s.name, name);
            s.solver_params().validate().unwrap();
        }
    }

    #[test]
    fn cusp_alpha_reaches_one() {
        let c = Cusp::default();
        assert_eq!(c.alpha(c.tau), 1.0);
    }

    #[test]
    fn constraint_checkers_reject_violations() {
        let base = ShrinkingCorner::default();
        assert!(ShrinkingCorner { sigma1: 9.0, ..base }.validate().is_err());
        assert!(ShrinkingCorner { b: 10.0, ..base }.validate().is_err());
        let cf = CornerFormation::default();
        assert!(CornerFormation { eps: 0.3, ..cf }.validate().is_err());
        assert!(CornerFormation { sigma0: 2.0 * cf.sigma0, ..cf }.validate().is_err());
        let c = Cusp::default();
        assert!(Cusp { tau: 0.6, ..c }.validate().is_err());
        assert!(Cusp { delta: 0.1, ..c }.validate().is_err());
        assert!(Cusp { sigma2: 2.0, ..c }.validate().is_err());
    }
}
