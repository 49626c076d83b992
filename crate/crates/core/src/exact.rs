//! Closed-form solutions used as oracles and as initial data.

use crate::error::{CoreError, Result};
use crate::grid::{Field, GridSpec, Point, Role};

/// Self-similar source solution of `rho_t = Lap rho^m` in dimension `d`:
/// `rho = t^(-a) (C - k |x|^2 t^(-2a/d))_+^(1/(m-1))` with
/// `a = d / (d(m-1) + 2)` and `k = a (m-1) / (2 m d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barenblatt {
    pub m: f64,
    pub dim: usize,
    pub c: f64,
}

impl Barenblatt {
    pub fn new(m: f64, dim: usize, c: f64) -> Result<Self> {
        if !(m > 1.0) {
            return Err(CoreError::InvalidExponent(m));
        }
        if !(dim == 1 || dim == 2) || !(c > 0.0) {
            return Err(CoreError::InvalidParameter("Barenblatt needs d in {1, 2} and C > 0".into()));
        }
        Ok(Barenblatt { m, dim, c })
    }

    pub fn alpha(&self) -> f64 {
        let d = self.dim as f64;
        d / (d * (self.m - 1.0) + 2.0)
    }

    /// Radial growth exponent of the support.
    pub fn beta(&self) -> f64 {
        self.alpha() / self.dim as f64
    }

    fn k(&self) -> f64 {
        self.alpha() * (self.m - 1.0) / (2.0 * self.m * self.dim as f64)
    }

    fn r2(&self, x: Point) -> f64 {
        if self.dim == 1 {
            x[0] * x[0]
        } else {
            x[0] * x[0] + x[1] * x[1]
        }
    }

    /// Bracket `(C - k |x|^2 t^(-2 beta))_+`.
    fn bracket(&self, x: Point, t: f64) -> f64 {
        (self.c - self.k() * self.r2(x) * t.powf(-2.0 * self.beta())).max(0.0)
    }

    pub fn density(&self, x: Point, t: f64) -> f64 {
        let q = self.bracket(x, t);
        if q == 0.0 {
            return 0.0;
        }
        t.powf(-self.alpha()) * q.powf(1.0 / (self.m - 1.0))
    }

    pub fn pressure(&self, x: Point, t: f64) -> f64 {
        self.m / (self.m - 1.0) * t.powf(-self.alpha() * (self.m - 1.0)) * self.bracket(x, t)
    }

    /// Support radius `sqrt(C / k) t^beta`.
    pub fn radius(&self, t: f64) -> f64 {
        (self.c / self.k()).sqrt() * t.powf(self.beta())
    }

    pub fn radius_rate(&self, t: f64) -> f64 {
        self.beta() * self.radius(t) / t
    }

    /// Laplacian of the pressure inside the support, `-a / t` (constant in space).
    pub fn pressure_laplacian(&self, t: f64) -> f64 {
        let d = self.dim as f64;
        -self.m / (self.m - 1.0) * t.powf(-self.alpha() * (self.m - 1.0)) * 2.0 * d * self.k()
            * t.powf(-2.0 * self.beta())
    }

    pub fn total_mass(&self, grid: &GridSpec, t: f64) -> f64 {
        self.density_field(grid, t).integral()
    }

    pub fn density_field(&self, grid: &GridSpec, t: f64) -> Field {
        Field::from_fn(grid, Role::Density, |x| self.density(x, t))
    }

    pub fn pressure_field(&self, grid: &GridSpec, t: f64) -> Field {
        Field::from_fn(grid, Role::Pressure, |x| self.pressure(x, t))
    }
}

/// One-dimensional pressure `u = a(t) x_+^2`, `a(t) = a0 / (1 - 2(m+1) a0 t)`,
/// an exact solution whose front stays at the origin for all `t` before blow-up.
/// Used with a compactly supported cut-off as waiting-time data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFront {
    pub m: f64,
    pub a0: f64,
}

impl QuadraticFront {
    pub fn coefficient(&self, t: f64) -> f64 {
        self.a0 / (1.0 - 2.0 * (self.m + 1.0) * self.a0 * t)
    }

    pub fn pressure(&self, x: Point, t: f64) -> f64 {
        self.coefficient(t) * x[0].max(0.0).powi(2)
    }

    /// Time at which the coefficient blows up.
    pub fn blow_up_time(&self) -> f64 {
        1.0 / (2.0 * (self.m + 1.0) * self.a0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_quadratic_case() {
        let b = Barenblatt::new(2.0, 1, 1.0).unwrap();
        assert!((b.alpha() - 1.0 / 3.0).abs() < 1e-15);
        let (x, t): (Point, f64) = ([0.7, 0.0], 1.3);
        let rho = t.powf(-1.0 / 3.0) * (1.0 - x[0] * x[0] / (12.0 * t.powf(2.0 / 3.0)));
        assert!((b.density(x, t) - rho).abs() < 1e-14);
        assert!((b.pressure(x, t) - 2.0 * rho).abs() < 1e-14);
        assert!((b.radius(t) - 12f64.sqrt() * t.powf(1.0 / 3.0)).abs() < 1e-13);
        assert!((b.pressure_laplacian(t) + 1.0 / (3.0 * t)).abs() < 1e-14);
    }

    #[test]
    fn pressure_laplacian_matches_finite_differences() {
        let b = Barenblatt::new(1.5, 2, 0.8).unwrap();
        let (x, t, h) = ([0.2, -0.1], 1.7, 1e-4);
        let f = |p: Point| b.pressure(p, t);
        let lap = (f([x[0] + h, x[1]]) + f([x[0] - h, x[1]]) + f([x[0], x[1] + h]) + f([x[0], x[1] - h])
            - 4.0 * f(x))
            / (h * h);
        assert!((lap - b.pressure_laplacian(t)).abs() < 1e-5);
    }

    #[test]
    fn waiting_time_coefficient() {
        let q = QuadraticFront { m: 2.0, a0: 1.0 };
        assert!((q.blow_up_time() - 1.0 / 6.0).abs() < 1e-15);
        assert!((q.coefficient(0.1) - 2.5).abs() < 1e-12);
    }
}
