//! Extrema and averages of grid fields over small Euclidean balls.

use std::f64::consts::PI;

use crate::grid::{Field, GridSpec, Point};

/// Number of bilinear samples on the rim of a ball.
pub const RIM_SAMPLES: usize = 16;

/// Indices of cells whose centres lie in the closed ball.
pub fn cells_in_ball(grid: &GridSpec, center: Point, radius: f64) -> Vec<usize> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (lo, hx, hy) = (grid.lo(), grid.spacing(0), grid.spacing(1));
    let span = |c: f64, lo: f64, h: f64, n: usize| {
        let a = ((c - radius - lo) / h - 0.5).ceil().max(0.0) as usize;
        let b = ((c + radius - lo) / h - 0.5).floor();
        if b < 0.0 {
            return (1, 0);
        }
        (a, (b as usize).min(n - 1))
    };
    let (i0, i1) = span(center[0], lo[0], hx, nx);
    let (j0, j1) = if grid.dim() == 2 { span(center[1], lo[1], hy, ny) } else { (0, 0) };
    let r2 = radius * radius * (1.0 + 1e-12);
    let mut out = Vec::new();
    for j in j0..=j1.min(ny - 1) {
        for i in i0..=i1 {
            let c = grid.center(i, j);
            let dy = if grid.dim() == 2 { c[1] - center[1] } else { 0.0 };
            let dxv = c[0] - center[0];
            if dxv * dxv + dy * dy <= r2 {
                out.push(j * nx + i);
            }
        }
    }
    out
}

/// Whether the closed ball lies inside the box.
pub fn ball_inside(grid: &GridSpec, center: Point, radius: f64) -> bool {
    let (lo, hi) = (grid.lo(), grid.hi());
    let ok = |k: usize| center[k] - radius >= lo[k] - 1e-12 && center[k] + radius <= hi[k] + 1e-12;
    ok(0) && (grid.dim() == 1 || ok(1))
}

/// Sample points used for ball extrema: the centre, the rim and every cell centre inside.
fn ball_values(f: &Field, center: Point, radius: f64) -> Option<Vec<f64>> {
    let g = f.grid();
    if !ball_inside(g, center, radius) {
        return None;
    }
    let mut vals = vec![f.sample(center)?];
    if g.dim() == 1 {
        vals.push(f.sample([center[0] - radius, 0.0])?);
        vals.push(f.sample([center[0] + radius, 0.0])?);
    } else {
        for k in 0..RIM_SAMPLES {
            let a = 2.0 * PI * k as f64 / RIM_SAMPLES as f64;
            vals.push(f.sample([center[0] + radius * a.cos(), center[1] + radius * a.sin()])?);
        }
    }
    vals.extend(cells_in_ball(g, center, radius).into_iter().map(|i| f.values()[i]));
    Some(vals)
}

/// Minimum over the ball; `None` if the ball leaves the box.
pub fn ball_min(f: &Field, center: Point, radius: f64) -> Option<f64> {
    ball_values(f, center, radius).map(|v| v.into_iter().fold(f64::INFINITY, f64::min))
}

/// Maximum over the ball; `None` if the ball leaves the box.
pub fn ball_max(f: &Field, center: Point, radius: f64) -> Option<f64> {
    ball_values(f, center, radius).map(|v| v.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Role;

    #[test]
    fn ball_extrema_of_linear_field() {
        let g = GridSpec::rect([-1.0, -1.0], [1.0, 1.0], [64, 64]).unwrap();
        let f = Field::from_fn(&g, Role::Scalar, |x| x[0]);
        assert!((ball_min(&f, [0.1, 0.0], 0.2).unwrap() + 0.1).abs() < 1e-12);
        assert!((ball_max(&f, [0.1, 0.0], 0.2).unwrap() - 0.3).abs() < 1e-12);
        assert!(ball_min(&f, [0.9, 0.0], 0.2).is_none());
    }

    #[test]
    fn cells_in_ball_counts_disc() {
        let g = GridSpec::rect([-1.0, -1.0], [1.0, 1.0], [128, 128]).unwrap();
        let n = cells_in_ball(&g, [0.0, 0.0], 0.5).len() as f64;
        let area = n * g.cell_volume();
        assert!((area - PI * 0.25).abs() < 0.02);
    }
}
