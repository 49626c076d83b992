//! Named initial pressures, sampled to density fields for the solver.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{CoreError, Result};
use crate::exact::Barenblatt;
use crate::grid::{density_from_pressure, Field, GridSpec, Point, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitialPreset {
    /// `[C, t]`: Barenblatt profile at time `t`.
    Barenblatt,
    /// `max(g(x) g(y), 0)` with `g(s) = sin(pi s)` on `(0, 1)`.
    StationaryCorner,
    /// `[k0, R]`: `(x^2 - k0 y^2)_+ 1_{x > 0}` under a cut-off equal to 1 on `B_{R/2}`.
    ShrinkingCorner,
    /// `[sigma0, R]`: `sigma0 x_+^2 1_{|x| < R}`.
    CornerFormation,
    /// `[tau, eps, h]`: `h phi_eps(., 0)` cut off between `B_h` and `B_{2h}`.
    Cusp,
    /// `(x_1)_+`.
    HalfPlane,
    /// `[a0]`: `a0 (x_1)_+^2`.
    QuadraticFront,
    /// `[cx, cy, R, height]`: `height (1 - |x - c|^2 / R^2)_+`.
    Bump,
}

const ALL: [InitialPreset; 8] = [
    InitialPreset::Barenblatt,
    InitialPreset::StationaryCorner,
    InitialPreset::ShrinkingCorner,
    InitialPreset::CornerFormation,
    InitialPreset::Cusp,
    InitialPreset::HalfPlane,
    InitialPreset::QuadraticFront,
    InitialPreset::Bump,
];

impl InitialPreset {
    pub fn name(self) -> &'static str {
        match self {
            InitialPreset::Barenblatt => "barenblatt",
            InitialPreset::StationaryCorner => "stationary-corner",
            InitialPreset::ShrinkingCorner => "shrinking-corner",
            InitialPreset::CornerFormation => "corner-formation",
            InitialPreset::Cusp => "cusp",
            InitialPreset::HalfPlane => "half-plane",
            InitialPreset::QuadraticFront => "quadratic-front",
            InitialPreset::Bump => "bump",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        ALL.iter()
            .copied()
            .find(|p| p.name() == name)
            .ok_or_else(|| CoreError::UnknownPreset(name.to_string()))
    }

    pub fn defaults(self) -> &'static [f64] {
        match self {
            InitialPreset::Barenblatt => &[0.05, 1.0],
            InitialPreset::StationaryCorner | InitialPreset::HalfPlane => &[],
            InitialPreset::ShrinkingCorner => &[1.0, 0.6],
            InitialPreset::CornerFormation => &[1.6773131395125593e-4, 1.0],
            InitialPreset::Cusp => &[0.3, 0.05, 0.25],
            InitialPreset::QuadraticFront => &[1.0],
            InitialPreset::Bump => &[0.0, 0.0, 0.5, 0.5],
        }
    }
}

/// Smooth step: 1 for `s <= 0`, 0 for `s >= 1`.
pub fn cutoff(s: f64) -> f64 {
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (PI * s).cos())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialSpec {
    preset: InitialPreset,
    params: Vec<f64>,
}

impl InitialSpec {
    /// Missing trailing parameters take the preset defaults.
    pub fn new(preset: InitialPreset, params: &[f64]) -> Result<Self> {
        let defaults = preset.defaults();
        if params.len() > defaults.len() {
            return Err(CoreError::InvalidParameter(format!(
                "initial preset {} takes at most {} parameters",
                preset.name(),
                defaults.len()
            )));
        }
        let mut full = defaults.to_vec();
        full[..params.len()].copy_from_slice(params);
        if full.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidParameter("initial parameters must be finite".into()));
        }
        let bad = match preset {
            InitialPreset::Barenblatt => !(full[0] > 0.0 && full[1] > 0.0),
            InitialPreset::ShrinkingCorner | InitialPreset::CornerFormation => !(full[0] > 0.0 && full[1] > 0.0),
            InitialPreset::Cusp => !(full[0] > 0.0 && full[1] > 0.0 && full[2] > 0.0 && full[2] < 1.0),
            InitialPreset::QuadraticFront => !(full[0] > 0.0),
            InitialPreset::Bump => !(full[2] > 0.0 && full[3] >= 0.0),
            _ => false,
        };
        if bad {
            return Err(CoreError::InvalidParameter(format!(
                "parameters {full:?} out of range for initial preset {}",
                preset.name()
            )));
        }
        Ok(InitialSpec { preset, params: full })
    }

    pub fn from_name(name: &str, params: &[f64]) -> Result<Self> {
        Self::new(InitialPreset::from_name(name)?, params)
    }

    pub fn preset(&self) -> InitialPreset {
        self.preset
    }
    pub fn name(&self) -> &'static str {
        self.preset.name()
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Pressure at `x` for exponent `m` in dimension `dim`.
    pub fn pressure(&self, x: Point, m: f64, dim: usize) -> f64 {
        let p = &self.params;
        let r = if dim == 1 { x[0].abs() } else { x[0].hypot(x[1]) };
        let v = match self.preset {
            InitialPreset::Barenblatt => match Barenblatt::new(m, dim, p[0]) {
                Ok(b) => b.pressure(x, p[1]),
                Err(_) => 0.0,
            },
            InitialPreset::StationaryCorner => {
                let g = |s: f64| if s > 0.0 && s < 1.0 { (PI * s).sin() } else { 0.0 };
                g(x[0]) * g(x[1])
            }
            InitialPreset::ShrinkingCorner => {
                let core = if x[0] > 0.0 { (x[0] * x[0] - p[0] * x[1] * x[1]).max(0.0) } else { 0.0 };
                core * cutoff(2.0 * r / p[1] - 1.0)
            }
            InitialPreset::CornerFormation => {
                if r < p[1] {
                    p[0] * x[0].max(0.0).powi(2)
                } else {
                    0.0
                }
            }
            InitialPreset::Cusp => {
                let (tau, eps, h) = (p[0], p[1], p[2]);
                let alpha = 1.0 + tau * tau;
                let core = if x[0] >= 0.0 {
                    (x[0] * x[0] - (x[1].abs() + eps).powf(2.0 * alpha)).max(0.0)
                } else {
                    0.0
                };
                h * core * cutoff(r / h - 1.0)
            }
            InitialPreset::HalfPlane => x[0].max(0.0),
            InitialPreset::QuadraticFront => p[0] * x[0].max(0.0).powi(2),
            InitialPreset::Bump => {
                let d2 = (x[0] - p[0]).powi(2) + if dim == 2 { (x[1] - p[1]).powi(2) } else { 0.0 };
                p[3] * (1.0 - d2 / (p[2] * p[2])).max(0.0)
            }
        };
        v.max(0.0)
    }

    pub fn pressure_field(&self, grid: &GridSpec, m: f64) -> Field {
        Field::from_fn(grid, Role::Pressure, |x| self.pressure(x, m, grid.dim()))
    }

    pub fn density_field(&self, grid: &GridSpec, m: f64) -> Result<Field> {
        density_from_pressure(&self.pressure_field(grid, m), m)
    }
}

impl fmt::Display for InitialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        for v in &self.params {
            write!(f, " {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in ALL {
            assert_eq!(InitialPreset::from_name(p.name()).unwrap(), p);
        }
        assert!(InitialPreset::from_name("nope").is_err());
    }

    #[test]
    fn cutoff_is_monotone_and_bounded() {
        let v: Vec<f64> = (0..=20).map(|k| cutoff(-0.5 + k as f64 / 10.0)).collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(v[0], 1.0);
        assert_eq!(*v.last().unwrap(), 0.0);
    }

    #[test]
    fn shrinking_corner_data_sits_below_barrier() {
        let s = InitialSpec::new(InitialPreset::ShrinkingCorner, &[]).unwrap();
        for (x, y) in [(0.1f64, 0.05f64), (0.25, -0.1), (0.5, 0.2), (-0.1, 0.0)] {
            let barrier = if x > 0.0 { (x * x - y * y).max(0.0) } else { 0.0 };
            assert!(s.pressure([x, y], 2.0, 2) <= barrier + 1e-15);
        }
        assert!((s.pressure([0.2, 0.1], 2.0, 2) - 0.03).abs() < 1e-15);
    }
}
