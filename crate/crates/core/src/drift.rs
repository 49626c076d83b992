//! Drift vector fields `b(x, t)`.
//!
//! [`Drift`] is the interface used by the solver and the streamline
//! integrator; [`DriftSpec`] is the serialisable preset family shipped with the
//! crate. Closures `Fn(Point, f64) -> Point` also implement [`Drift`], which is
//! convenient for tests with fields that are not presets.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{CoreError, Result};
use crate::grid::{GridSpec, Point};

pub type Jacobian = [[f64; 2]; 2];

pub trait Drift: Sync {
    fn velocity(&self, x: Point, t: f64) -> Point;

    /// `J[i][j] = d b_i / d x_j`. The default is a central finite difference.
    fn jacobian(&self, x: Point, t: f64) -> Jacobian {
        let h = 1e-6;
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let (bp, bm) = (self.velocity(xp, t), self.velocity(xm, t));
            for i in 0..2 {
                jac[i][k] = (bp[i] - bm[i]) / (2.0 * h);
            }
        }
        jac
    }

    /// Divergence over the first `dim` coordinates.
    fn divergence(&self, x: Point, t: f64, dim: usize) -> f64 {
        let jac = self.jacobian(x, t);
        (0..dim).map(|k| jac[k][k]).sum()
    }

    /// Whether `b` is independent of time; the solver then caches face values.
    fn is_steady(&self) -> bool {
        false
    }
}

impl<F> Drift for F
where
    F: Fn(Point, f64) -> Point + Sync,
{
    fn velocity(&self, x: Point, t: f64) -> Point {
        self(x, t)
    }
}

/// Largest `|b|` over cell centres and cell corners of `grid` at time `t`.
pub fn max_speed(drift: &dyn Drift, grid: &GridSpec, t: f64) -> f64 {
    sample_points(grid).map(|p| norm(drift.velocity(p, t))).fold(0.0, f64::max)
}

/// Largest `|div b|` over cell centres of `grid` at time `t`.
pub fn max_divergence(drift: &dyn Drift, grid: &GridSpec, t: f64) -> f64 {
    (0..grid.len())
        .map(|idx| drift.divergence(grid.center_of(idx), t, grid.dim()).abs())
        .fold(0.0, f64::max)
}

/// Largest spectral-norm bound `max_ij |J_ij| * dim` of the Jacobian over cell centres.
pub fn max_jacobian(drift: &dyn Drift, grid: &GridSpec, t: f64) -> f64 {
    let d = grid.dim();
    (0..grid.len())
        .map(|idx| {
            let jac = drift.jacobian(grid.center_of(idx), t);
            let mut m: f64 = 0.0;
            for row in jac.iter().take(d) {
                for v in row.iter().take(d) {
                    m = m.max(v.abs());
                }
            }
            m * d as f64
        })
        .fold(0.0, f64::max)
}

fn sample_points(grid: &GridSpec) -> impl Iterator<Item = Point> + '_ {
    let corners = (0..=grid.nx()).flat_map(move |i| {
        let rows = if grid.dim() == 2 { grid.ny() + 1 } else { 1 };
        (0..rows).map(move |j| {
            let x = grid.lo()[0] + i as f64 * grid.spacing(0);
            let y = if grid.dim() == 2 { grid.lo()[1] + j as f64 * grid.spacing(1) } else { 0.0 };
            [x, y]
        })
    });
    (0..grid.len()).map(|idx| grid.center_of(idx)).chain(corners)
}

#[inline]
pub fn norm(v: Point) -> f64 {
    v[0].hypot(v[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftPreset {
    /// `b = 0`.
    Zero,
    /// `b = (c1, c2)`.
    Constant,
    /// `b = (A sin(k x2 - w t), 0)`; params `[A, k, w]`.
    LaminarSine,
    /// `b = (a x1, b x2)`; params `[a, b]`.
    LinearDiagonal,
    /// `b = -grad(g(x1) g(x2))` with `g(s) = sin(pi s)` on `(0, 1)`, zero elsewhere.
    CornerGradient,
    /// `b = -(x1 + |x2|, x2)`.
    CornerFormation,
    /// `b = (x1 ln x1 - 10 x1^(1-delta), 0)` for `x1 > clamp`, zero otherwise; params `[delta, clamp]`.
    Cusp,
    /// `b = -grad(A exp(-|x - c|^2 / (2 w^2)))`; params `[A, w, c1, c2]`.
    CustomGradient,
}

impl DriftPreset {
    pub const ALL: [DriftPreset; 8] = [
        DriftPreset::Zero,
        DriftPreset::Constant,
        DriftPreset::LaminarSine,
        DriftPreset::LinearDiagonal,
        DriftPreset::CornerGradient,
        DriftPreset::CornerFormation,
        DriftPreset::Cusp,
        DriftPreset::CustomGradient,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DriftPreset::Zero => "zero",
            DriftPreset::Constant => "constant",
            DriftPreset::LaminarSine => "laminar-sine",
            DriftPreset::LinearDiagonal => "linear-diagonal",
            DriftPreset::CornerGradient => "corner-gradient",
            DriftPreset::CornerFormation => "corner-formation",
            DriftPreset::Cusp => "cusp",
            DriftPreset::CustomGradient => "custom-gradient",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|p| p.name() == name)
            .ok_or_else(|| CoreError::UnknownPreset(name.to_string()))
    }

    /// Values used for parameters left unspecified.
    pub fn defaults(self) -> &'static [f64] {
        match self {
            DriftPreset::Zero | DriftPreset::CornerGradient | DriftPreset::CornerFormation => &[],
            DriftPreset::Constant => &[0.0, 0.0],
            DriftPreset::LaminarSine => &[1.0, 1.0, 0.0],
            DriftPreset::LinearDiagonal => &[1.0, 1.0],
            DriftPreset::Cusp => &[0.5, 0.0],
            DriftPreset::CustomGradient => &[1.0, 0.25, 0.0, 0.0],
        }
    }
}

/// A preset drift together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    preset: DriftPreset,
    params: Vec<f64>,
}

impl DriftSpec {
    /// Missing trailing parameters take the preset defaults; extra ones are rejected.
    pub fn new(preset: DriftPreset, params: &[f64]) -> Result<Self> {
        let defaults = preset.defaults();
        if params.len() > defaults.len() {
            return Err(CoreError::InvalidParameter(format!(
                "drift '{}' takes at most {} parameters, got {}",
                preset.name(),
                defaults.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(CoreError::InvalidParameter("drift parameters must be finite".into()));
        }
        let mut full = defaults.to_vec();
        full[..params.len()].copy_from_slice(params);
        match preset {
            DriftPreset::Cusp if !(full[0] > 0.0 && full[0] < 1.0) => {
                return Err(CoreError::InvalidParameter(format!(
                    "cusp exponent delta = {} must lie in (0, 1)",
                    full[0]
                )));
            }
            DriftPreset::CustomGradient if !(full[1] > 0.0) => {
                return Err(CoreError::InvalidParameter("custom-gradient width must be positive".into()));
            }
            _ => {}
        }
        Ok(DriftSpec { preset, params: full })
    }

    pub fn from_name(name: &str, params: &[f64]) -> Result<Self> {
        Self::new(DriftPreset::from_name(name)?, params)
    }

    pub fn zero() -> Self {
        DriftSpec { preset: DriftPreset::Zero, params: Vec::new() }
    }
    pub fn constant(b: Point) -> Self {
        DriftSpec { preset: DriftPreset::Constant, params: b.to_vec() }
    }
    pub fn laminar_sine(amplitude: f64, wavenumber: f64) -> Self {
        DriftSpec { preset: DriftPreset::LaminarSine, params: vec![amplitude, wavenumber, 0.0] }
    }
    pub fn linear_diagonal(a: f64, b: f64) -> Self {
        DriftSpec { preset: DriftPreset::LinearDiagonal, params: vec![a, b] }
    }
    pub fn corner_gradient() -> Self {
        DriftSpec { preset: DriftPreset::CornerGradient, params: Vec::new() }
    }
    pub fn corner_formation() -> Self {
        DriftSpec { preset: DriftPreset::CornerFormation, params: Vec::new() }
    }
    pub fn cusp(delta: f64, clamp: f64) -> Result<Self> {
        Self::new(DriftPreset::Cusp, &[delta, clamp])
    }

    pub fn preset(&self) -> DriftPreset {
        self.preset
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }
    pub fn name(&self) -> &'static str {
        self.preset.name()
    }

    pub fn is_time_dependent(&self) -> bool {
        self.preset == DriftPreset::LaminarSine && self.params[2] != 0.0
    }
}

impl fmt::Display for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        for p in &self.params {
            write!(f, " {p}")?;
        }
        Ok(())
    }
}

/// Profile `g(s) = sin(pi s)` on the open interval `(0, 1)` and its derivatives.
#[inline]
fn bump(s: f64) -> (f64, f64, f64) {
    if s > 0.0 && s < 1.0 {
        let (sn, cs) = (PI * s).sin_cos();
        (sn, PI * cs, -PI * PI * sn)
    } else {
        (0.0, 0.0, 0.0)
    }
}

impl Drift for DriftSpec {
    fn velocity(&self, x: Point, t: f64) -> Point {
        let p = &self.params;
        match self.preset {
            DriftPreset::Zero => [0.0, 0.0],
            DriftPreset::Constant => [p[0], p[1]],
            DriftPreset::LaminarSine => [p[0] * (p[1] * x[1] - p[2] * t).sin(), 0.0],
            DriftPreset::LinearDiagonal => [p[0] * x[0], p[1] * x[1]],
            DriftPreset::CornerGradient => {
                let (gx, dgx, _) = bump(x[0]);
                let (gy, dgy, _) = bump(x[1]);
                [-dgx * gy, -gx * dgy]
            }
            DriftPreset::CornerFormation => [-(x[0] + x[1].abs()), -x[1]],
            DriftPreset::Cusp => {
                let (delta, clamp) = (p[0], p[1].max(0.0));
                if x[0] > clamp {
                    [x[0] * x[0].ln() - 10.0 * x[0].powf(1.0 - delta), 0.0]
                } else {
                    [0.0, 0.0]
                }
            }
            DriftPreset::CustomGradient => {
                let (amp, w, c) = (p[0], p[1], [p[2], p[3]]);
                let r = [x[0] - c[0], x[1] - c[1]];
                let phi = amp * (-(r[0] * r[0] + r[1] * r[1]) / (2.0 * w * w)).exp();
                [phi * r[0] / (w * w), phi * r[1] / (w * w)]
            }
        }
    }

    fn jacobian(&self, x: Point, t: f64) -> Jacobian {
        let p = &self.params;
        match self.preset {
            DriftPreset::Zero | DriftPreset::Constant => [[0.0; 2]; 2],
            DriftPreset::LaminarSine => {
                [[0.0, p[0] * p[1] * (p[1] * x[1] - p[2] * t).cos()], [0.0, 0.0]]
            }
            DriftPreset::LinearDiagonal => [[p[0], 0.0], [0.0, p[1]]],
            DriftPreset::CornerGradient => {
                let (gx, dgx, ddgx) = bump(x[0]);
                let (gy, dgy, ddgy) = bump(x[1]);
                [[-ddgx * gy, -dgx * dgy], [-dgx * dgy, -gx * ddgy]]
            }
            DriftPreset::CornerFormation => [[-1.0, -x[1].signum()], [0.0, -1.0]],
            DriftPreset::Cusp => {
                let (delta, clamp) = (p[0], p[1].max(0.0));
                if x[0] > clamp {
                    let d = x[0].ln() + 1.0 - 10.0 * (1.0 - delta) * x[0].powf(-delta);
                    [[d, 0.0], [0.0, 0.0]]
                } else {
                    [[0.0; 2]; 2]
                }
            }
            DriftPreset::CustomGradient => {
                let (amp, w, c) = (p[0], p[1], [p[2], p[3]]);
                let r = [x[0] - c[0], x[1] - c[1]];
                let w2 = w * w;
                let phi = amp * (-(r[0] * r[0] + r[1] * r[1]) / (2.0 * w2)).exp();
                let mut jac = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        let delta = if i == j { 1.0 / w2 } else { 0.0 };
                        jac[i][j] = phi * (delta - r[i] * r[j] / (w2 * w2));
                    }
                }
                jac
            }
        }
    }

    fn is_steady(&self) -> bool {
        !self.is_time_dependent()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_jacobian(d: &DriftSpec, x: Point, t: f64) -> Jacobian {
        let h = 1e-6;
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let (mut xp, mut xm) = (x, x);
            xp[k] += h;
            xm[k] -= h;
            let (bp, bm) = (d.velocity(xp, t), d.velocity(xm, t));
            for i in 0..2 {
                jac[i][k] = (bp[i] - bm[i]) / (2.0 * h);
            }
        }
        jac
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let specs = [
            DriftSpec::new(DriftPreset::LaminarSine, &[1.3, 2.0, 0.5]).unwrap(),
            DriftSpec::linear_diagonal(0.7, -1.1),
            DriftSpec::corner_gradient(),
            DriftSpec::corner_formation(),
            DriftSpec::cusp(0.5, 0.0).unwrap(),
            DriftSpec::new(DriftPreset::CustomGradient, &[0.8, 0.3, 0.1, -0.2]).unwrap(),
        ];
        let pts = [[0.31, 0.47], [0.72, 0.13], [0.2, 0.61]];
        for spec in &specs {
            for &x in &pts {
                let a = spec.jacobian(x, 0.3);
                let n = fd_jacobian(spec, x, 0.3);
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((a[i][j] - n[i][j]).abs() < 1e-5, "{spec}: J[{i}][{j}] {a:?} vs {n:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn presets_round_trip_by_name() {
        for p in DriftPreset::ALL {
            assert_eq!(DriftPreset::from_name(p.name()).unwrap(), p);
        }
        assert!(DriftSpec::from_name("vortex", &[]).is_err());
        assert!(DriftSpec::from_name("linear-diagonal", &[1.0, 2.0, 3.0]).is_err());
        assert!(DriftSpec::cusp(1.5, 0.0).is_err());
    }

    #[test]
    fn divergence_of_linear_diagonal() {
        let d = DriftSpec::linear_diagonal(0.5, 0.25);
        assert_eq!(d.divergence([0.3, 0.1], 0.0, 2), 0.75);
        assert_eq!(d.divergence([0.3, 0.1], 0.0, 1), 0.5);
    }

    #[test]
    fn closures_are_drifts() {
        let rot = |x: Point, _t: f64| [-x[1], x[0]];
        assert_eq!(rot.velocity([1.0, 0.0], 0.0), [0.0, 1.0]);
        assert!(rot.divergence([0.4, 0.2], 0.0, 2).abs() < 1e-8);
    }
}
