//! Uniform cell-centred grids in one or two dimensions, scalar and vector
//! fields on them, the density/pressure transform and the finite-difference
//! stencils shared by the solver and the verifiers.
//!
//! Cells are stored row-major with `x` fastest: index `j * nx + i`. A 1-D grid
//! is a 2-D grid with a single row, and points always carry two coordinates
//! (the second one is ignored in 1-D).

use crate::error::{CoreError, Result};

/// A point in the plane. In 1-D only the first coordinate is meaningful.
pub type Point = [f64; 2];

/// Minimum number of cells per axis.
pub const MIN_CELLS: usize = 8;

/// Width, in cells, of the collar along the box boundary that verifiers skip.
pub const BOUNDARY_COLLAR: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    dim: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    cells: [usize; 2],
    h: [f64; 2],
}

impl GridSpec {
    /// Builds a grid from per-axis bounds and cell counts; `lo.len()` fixes the dimension.
    pub fn new(lo: &[f64], hi: &[f64], cells: &[usize]) -> Result<Self> {
        let dim = lo.len();
        if !(dim == 1 || dim == 2) || hi.len() != dim || cells.len() != dim {
            return Err(CoreError::InvalidGrid(format!(
                "dimension must be 1 or 2 with matching bounds and cells (got {}/{}/{})",
                lo.len(),
                hi.len(),
                cells.len()
            )));
        }
        let mut g = GridSpec { dim, lo: [0.0, 0.0], hi: [1.0, 1.0], cells: [1, 1], h: [1.0, 1.0] };
        for k in 0..dim {
            if !(lo[k].is_finite() && hi[k].is_finite() && lo[k] < hi[k]) {
                return Err(CoreError::InvalidGrid(format!(
                    "axis {k}: bounds [{}, {}] are not well ordered",
                    lo[k], hi[k]
                )));
            }
            if cells[k] < MIN_CELLS {
                return Err(CoreError::InvalidGrid(format!(
                    "axis {k}: {} cells, need at least {MIN_CELLS}",
                    cells[k]
                )));
            }
            g.lo[k] = lo[k];
            g.hi[k] = hi[k];
            g.cells[k] = cells[k];
            g.h[k] = (hi[k] - lo[k]) / cells[k] as f64;
        }
        Ok(g)
    }

    pub fn line(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        Self::new(&[lo], &[hi], &[cells])
    }

    pub fn rect(lo: Point, hi: Point, cells: [usize; 2]) -> Result<Self> {
        Self::new(&lo, &hi, &cells)
    }

    /// Grid on `[lo, hi]` per axis whose spacing is as close as possible to `dx`.
    pub fn with_spacing(lo: &[f64], hi: &[f64], dx: f64) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(CoreError::InvalidGrid(format!("spacing {dx} must be positive")));
        }
        let cells: Vec<usize> =
            lo.iter().zip(hi).map(|(a, b)| ((b - a) / dx).round().max(1.0) as usize).collect();
        Self::new(lo, hi, &cells)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn nx(&self) -> usize {
        self.cells[0]
    }
    /// Number of rows; 1 for a 1-D grid.
    pub fn ny(&self) -> usize {
        self.cells[1]
    }
    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn lo(&self) -> Point {
        self.lo
    }
    pub fn hi(&self) -> Point {
        self.hi
    }
    pub fn cells(&self, axis: usize) -> usize {
        self.cells[axis]
    }
    pub fn spacing(&self, axis: usize) -> f64 {
        self.h[axis]
    }
    /// Largest spacing over the active axes; the "dx" used in tolerances.
    pub fn dx(&self) -> f64 {
        if self.dim == 1 {
            self.h[0]
        } else {
            self.h[0].max(self.h[1])
        }
    }
    pub fn cell_volume(&self) -> f64 {
        if self.dim == 1 {
            self.h[0]
        } else {
            self.h[0] * self.h[1]
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.cells[0] + i
    }
    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.cells[0], idx / self.cells[0])
    }
    #[inline]
    pub fn center(&self, i: usize, j: usize) -> Point {
        let x = self.lo[0] + (i as f64 + 0.5) * self.h[0];
        let y = if self.dim == 2 { self.lo[1] + (j as f64 + 0.5) * self.h[1] } else { 0.0 };
        [x, y]
    }
    pub fn center_of(&self, idx: usize) -> Point {
        let (i, j) = self.coords(idx);
        self.center(i, j)
    }

    /// True if cell `(i, j)` lies within `width` cells of the box boundary.
    pub fn near_boundary(&self, i: usize, j: usize, width: usize) -> bool {
        let nx = self.cells[0];
        if i < width || i + width >= nx {
            return true;
        }
        if self.dim == 2 {
            let ny = self.cells[1];
            if j < width || j + width >= ny {
                return true;
            }
        }
        false
    }

    /// Cells excluded from verifier statistics (the two-cell boundary collar).
    pub fn in_collar(&self, idx: usize) -> bool {
        let (i, j) = self.coords(idx);
        self.near_boundary(i, j, BOUNDARY_COLLAR)
    }

    pub fn contains(&self, p: Point) -> bool {
        let inside = |k: usize| p[k] >= self.lo[k] && p[k] <= self.hi[k];
        inside(0) && (self.dim == 1 || inside(1))
    }

    /// Nearest cell containing `p`, if `p` is inside the box.
    pub fn locate(&self, p: Point) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let i = (((p[0] - self.lo[0]) / self.h[0]) as usize).min(self.cells[0] - 1);
        let j = if self.dim == 2 {
            (((p[1] - self.lo[1]) / self.h[1]) as usize).min(self.cells[1] - 1)
        } else {
            0
        };
        Some((i, j))
    }

    /// Bilinear (linear in 1-D) interpolation of cell-centred `values` at `p`.
    /// Points between the outermost centres and the box edge use the edge
    /// value; points outside the box give `None`.
    pub fn interpolate(&self, values: &[f64], p: Point) -> Option<f64> {
        if !self.contains(p) {
            return None;
        }
        let (i0, tx) = axis_weight(p[0], self.lo[0], self.h[0], self.cells[0]);
        if self.dim == 1 {
            let a = values[i0];
            let b = values[(i0 + 1).min(self.cells[0] - 1)];
            return Some(a + tx * (b - a));
        }
        let (j0, ty) = axis_weight(p[1], self.lo[1], self.h[1], self.cells[1]);
        let i1 = (i0 + 1).min(self.cells[0] - 1);
        let j1 = (j0 + 1).min(self.cells[1] - 1);
        let f00 = values[self.index(i0, j0)];
        let f10 = values[self.index(i1, j0)];
        let f01 = values[self.index(i0, j1)];
        let f11 = values[self.index(i1, j1)];
        let bottom = f00 + tx * (f10 - f00);
        let top = f01 + tx * (f11 - f01);
        Some(bottom + ty * (top - bottom))
    }

    /// Whether two grids describe the same cells (bounds equal to round-off).
    pub fn same_as(&self, other: &GridSpec) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        self.dim == other.dim
            && self.cells == other.cells
            && (0..2).all(|k| close(self.lo[k], other.lo[k]) && close(self.hi[k], other.hi[k]))
    }
}

/// Lower neighbour index and fractional weight along one axis.
fn axis_weight(x: f64, lo: f64, h: f64, n: usize) -> (usize, f64) {
    let s = (x - lo) / h - 0.5;
    if s <= 0.0 {
        return (0, 0.0);
    }
    let i = s.floor() as usize;
    if i >= n - 1 {
        return (n - 1, 0.0);
    }
    (i, s - i as f64)
}

/// What a field represents; density and pressure fields must be non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Density,
    Pressure,
    Scalar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
    role: Role,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>, role: Role) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(CoreError::InvalidParameter(format!(
                "field has {} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite { index });
        }
        Ok(Field { grid, values, role })
    }

    pub fn zeros(grid: &GridSpec, role: Role) -> Self {
        Field { grid: grid.clone(), values: vec![0.0; grid.len()], role }
    }

    pub fn constant(grid: &GridSpec, c: f64, role: Role) -> Self {
        Field { grid: grid.clone(), values: vec![c; grid.len()], role }
    }

    /// Samples `f` at every cell centre.
    pub fn from_fn(grid: &GridSpec, role: Role, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.center_of(idx))).collect();
        Field { grid: grid.clone(), values, role }
    }

    pub(crate) fn from_parts(grid: GridSpec, values: Vec<f64>, role: Role) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values, role }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn role(&self) -> Role {
        self.role
    }
    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Midpoint-rule integral, summed in storage order.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn sample(&self, p: Point) -> Option<f64> {
        self.grid.interpolate(&self.values, p)
    }

    pub fn l1_distance(&self, other: &Field) -> Result<f64> {
        self.check_same_grid(other)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(CoreError::GridMismatch)
        }
    }

    /// Rejects the first negative cell, reporting where it is.
    pub fn ensure_nonnegative(&self) -> Result<()> {
        match self.values.iter().position(|&v| v < 0.0) {
            None => Ok(()),
            Some(index) => Err(CoreError::NegativeValue {
                index,
                point: self.grid.center_of(index),
                value: self.values[index],
            }),
        }
    }

    pub fn map(&self, role: Role, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect(), role }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: GridSpec, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() || comps.iter().any(|c| c.len() != grid.len()) {
            return Err(CoreError::InvalidParameter("vector field shape mismatch".into()));
        }
        if comps.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidParameter("vector field has non-finite entries".into()));
        }
        Ok(VectorField { grid, comps })
    }
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn component(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }
    pub fn at(&self, idx: usize) -> Point {
        let x = self.comps[0][idx];
        let y = if self.grid.dim() == 2 { self.comps[1][idx] } else { 0.0 };
        [x, y]
    }
    pub fn norm_at(&self, idx: usize) -> f64 {
        let v = self.at(idx);
        v[0].hypot(v[1])
    }
    /// Component-wise interpolation.
    pub fn sample(&self, p: Point) -> Option<Point> {
        let x = self.grid.interpolate(&self.comps[0], p)?;
        let y = if self.grid.dim() == 2 { self.grid.interpolate(&self.comps[1], p)? } else { 0.0 };
        Some([x, y])
    }
}

/// `u = m/(m-1) * rho^(m-1)` for a single value.
#[inline]
pub fn pressure_of(rho: f64, m: f64) -> f64 {
    if rho <= 0.0 {
        0.0
    } else if m == 2.0 {
        2.0 * rho
    } else {
        m / (m - 1.0) * rho.powf(m - 1.0)
    }
}

/// Inverse of [`pressure_of`].
#[inline]
pub fn density_of(u: f64, m: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if m == 2.0 {
        0.5 * u
    } else {
        ((m - 1.0) / m * u).powf(1.0 / (m - 1.0))
    }
}

fn check_exponent(m: f64) -> Result<()> {
    if m > 1.0 && m.is_finite() {
        Ok(())
    } else {
        Err(CoreError::InvalidExponent(m))
    }
}

pub fn pressure_from_density(rho: &Field, m: f64) -> Result<Field> {
    check_exponent(m)?;
    rho.ensure_nonnegative()?;
    Ok(rho.map(Role::Pressure, |r| pressure_of(r, m)))
}

pub fn density_from_pressure(u: &Field, m: f64) -> Result<Field> {
    check_exponent(m)?;
    u.ensure_nonnegative()?;
    Ok(u.map(Role::Density, |p| density_of(p, m)))
}

/// Second difference along one axis with one-sided second-order ends.
#[inline]
fn second_diff(get: impl Fn(usize) -> f64, k: usize, n: usize, inv_h2: f64) -> f64 {
    if k == 0 {
        (2.0 * get(0) - 5.0 * get(1) + 4.0 * get(2) - get(3)) * inv_h2
    } else if k == n - 1 {
        (2.0 * get(n - 1) - 5.0 * get(n - 2) + 4.0 * get(n - 3) - get(n - 4)) * inv_h2
    } else {
        (get(k - 1) - 2.0 * get(k) + get(k + 1)) * inv_h2
    }
}

/// First difference along one axis: central inside, one-sided second order at the ends.
#[inline]
fn first_diff(get: impl Fn(usize) -> f64, k: usize, n: usize, inv_2h: f64) -> f64 {
    if k == 0 {
        (-3.0 * get(0) + 4.0 * get(1) - get(2)) * inv_2h
    } else if k == n - 1 {
        (3.0 * get(n - 1) - 4.0 * get(n - 2) + get(n - 3)) * inv_2h
    } else {
        (get(k + 1) - get(k - 1)) * inv_2h
    }
}

/// Standard (2d+1)-point Laplacian. Boundary cells use one-sided stencils;
/// they are the cells reported by [`GridSpec::in_collar`].
pub fn discrete_laplacian(f: &Field) -> Field {
    let g = f.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let v = f.values();
    let inv_hx2 = 1.0 / (g.spacing(0) * g.spacing(0));
    let inv_hy2 = 1.0 / (g.spacing(1) * g.spacing(1));
    let mut out = vec![0.0; g.len()];
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let mut lap = second_diff(|k| v[row + k], i, nx, inv_hx2);
            if g.dim() == 2 {
                lap += second_diff(|k| v[k * nx + i], j, ny, inv_hy2);
            }
            out[row + i] = lap;
        }
    }
    Field::from_parts(g.clone(), out, Role::Scalar)
}

pub fn discrete_gradient(f: &Field) -> VectorField {
    let g = f.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let v = f.values();
    let inv_2hx = 0.5 / g.spacing(0);
    let inv_2hy = 0.5 / g.spacing(1);
    let mut gx = vec![0.0; g.len()];
    let mut gy = if g.dim() == 2 { vec![0.0; g.len()] } else { Vec::new() };
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            gx[row + i] = first_diff(|k| v[row + k], i, nx, inv_2hx);
            if g.dim() == 2 {
                gy[row + i] = first_diff(|k| v[k * nx + i], j, ny, inv_2hy);
            }
        }
    }
    let comps = if g.dim() == 2 { vec![gx, gy] } else { vec![gx] };
    VectorField { grid: g.clone(), comps }
}

/// Convolution with the normalised bump `exp(-1/(1 - |y|^2/r^2))`. Near the box
/// edge the truncated kernel is renormalised, so constants are preserved
/// everywhere and mass is preserved for fields supported away from the edge.
pub fn mollify(f: &Field, radius: f64) -> Result<Field> {
    let g = f.grid();
    if !(radius >= g.dx() * (1.0 - 1e-12)) {
        return Err(CoreError::InvalidParameter(format!(
            "mollifier radius {radius} is below the grid spacing {}",
            g.dx()
        )));
    }
    let (hx, hy) = (g.spacing(0), g.spacing(1));
    let rx = (radius / hx).floor() as isize;
    let ry = if g.dim() == 2 { (radius / hy).floor() as isize } else { 0 };
    let mut kernel: Vec<(isize, isize, f64)> = Vec::new();
    for dj in -ry..=ry {
        for di in -rx..=rx {
            let y = if g.dim() == 2 { dj as f64 * hy } else { 0.0 };
            let s = ((di as f64 * hx).powi(2) + y * y) / (radius * radius);
            if s < 1.0 {
                kernel.push((di, dj, (-1.0 / (1.0 - s)).exp()));
            }
        }
    }
    let total: f64 = kernel.iter().map(|k| k.2).sum();
    for k in &mut kernel {
        k.2 /= total;
    }
    let (nx, ny) = (g.nx() as isize, g.ny() as isize);
    let v = f.values();
    let mut out = vec![0.0; g.len()];
    for j in 0..ny {
        for i in 0..nx {
            // Averaging deviations from the centre value keeps constants bit-exact.
            let centre = v[(j * nx + i) as usize];
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for &(di, dj, w) in &kernel {
                let (ii, jj) = (i + di, j + dj);
                if ii >= 0 && ii < nx && jj >= 0 && jj < ny {
                    acc += w * (v[(jj * nx + ii) as usize] - centre);
                    wsum += w;
                }
            }
            out[(j * nx + i) as usize] = centre + acc / wsum;
        }
    }
    Ok(Field::from_parts(g.clone(), out, f.role()))
}

/// Level-set polylines. In 1-D every crossing is a single-point polyline.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Contour {
    pub polylines: Vec<Vec<Point>>,
}

impl Contour {
    pub fn is_empty(&self) -> bool {
        self.polylines.iter().all(|p| p.is_empty())
    }

    pub fn points(&self) -> impl Iterator<Item = &Point> {
        self.polylines.iter().flatten()
    }

    pub fn vertex_count(&self) -> usize {
        self.polylines.iter().map(|p| p.len()).sum()
    }

    /// Euclidean distance from `p` to the nearest vertex or segment.
    pub fn distance_to(&self, p: Point) -> f64 {
        let mut best = f64::INFINITY;
        for line in &self.polylines {
            if line.len() == 1 {
                best = best.min(dist(p, line[0]));
            }
            for w in line.windows(2) {
                best = best.min(segment_distance(p, w[0], w[1]));
            }
        }
        best
    }

    pub fn translated(&self, shift: Point) -> Contour {
        Contour {
            polylines: self
                .polylines
                .iter()
                .map(|l| l.iter().map(|q| [q[0] + shift[0], q[1] + shift[1]]).collect())
                .collect(),
        }
    }
}

pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * dx, a[1] + t * dy])
}

/// Thresholded positivity set `{u > level}` and its level contour.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivitySet {
    pub level: f64,
    pub mask: Vec<bool>,
    pub contour: Contour,
}

impl PositivitySet {
    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// Cells where `u > threshold_rel * max(u)`, with the contour of that level
/// extracted by linear interpolation between cell centres.
pub fn positivity_set(u: &Field, threshold_rel: f64) -> PositivitySet {
    let g = u.grid();
    let umax = u.max();
    if !(umax > 0.0) {
        return PositivitySet { level: 0.0, mask: vec![false; g.len()], contour: Contour::default() };
    }
    let level = threshold_rel * umax;
    let mask: Vec<bool> = u.values().iter().map(|&v| v > level).collect();
    let contour = if g.dim() == 1 {
        contour_1d(u, level, &mask)
    } else {
        marching_squares(u, level, &mask)
    };
    PositivitySet { level, mask, contour }
}

fn contour_1d(u: &Field, level: f64, mask: &[bool]) -> Contour {
    let g = u.grid();
    let v = u.values();
    let mut polylines = Vec::new();
    for i in 0..g.nx() - 1 {
        if mask[i] != mask[i + 1] {
            let t = (level - v[i]) / (v[i + 1] - v[i]);
            let x = g.center(i, 0)[0] + t * g.spacing(0);
            polylines.push(vec![[x, 0.0]]);
        }
    }
    Contour { polylines }
}

/// Edge of the cell-centre lattice: horizontal edges join `(i,j)`-`(i+1,j)`,
/// vertical edges join `(i,j)`-`(i,j+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

fn marching_squares(u: &Field, level: f64, mask: &[bool]) -> Contour {
    let g = u.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let v = u.values();
    let crossing = |e: Edge| -> Point {
        let (a, b) = match e {
            Edge::H(i, j) => ((i, j), (i + 1, j)),
            Edge::V(i, j) => ((i, j), (i, j + 1)),
        };
        let fa = v[g.index(a.0, a.1)];
        let fb = v[g.index(b.0, b.1)];
        let t = ((level - fa) / (fb - fa)).clamp(0.0, 1.0);
        let pa = g.center(a.0, a.1);
        let pb = g.center(b.0, b.1);
        [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
    };

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = mask[g.index(i, j)];
            let b = mask[g.index(i + 1, j)];
            let c = mask[g.index(i + 1, j + 1)];
            let d = mask[g.index(i, j + 1)];
            let case = (a as u8) | (b as u8) << 1 | (c as u8) << 2 | (d as u8) << 3;
            let bottom = Edge::H(i, j);
            let right = Edge::V(i + 1, j);
            let top = Edge::H(i, j + 1);
            let left = Edge::V(i, j);
            match case {
                0 | 15 => {}
                1 | 14 => segments.push((left, bottom)),
                2 | 13 => segments.push((bottom, right)),
                3 | 12 => segments.push((left, right)),
                4 | 11 => segments.push((right, top)),
                6 | 9 => segments.push((bottom, top)),
                7 | 8 => segments.push((left, top)),
                5 | 10 => {
                    // Saddle: decide by the centre average.
                    let avg = 0.25
                        * (v[g.index(i, j)]
                            + v[g.index(i + 1, j)]
                            + v[g.index(i + 1, j + 1)]
                            + v[g.index(i, j + 1)]);
                    let centre_in = avg > level;
                    if (case == 5) == centre_in {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    let mut by_edge: std::collections::HashMap<Edge, Vec<usize>> = std::collections::HashMap::new();
    for (k, (e1, e2)) in segments.iter().enumerate() {
        by_edge.entry(*e1).or_default().push(k);
        by_edge.entry(*e2).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let mut polylines = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let mut chain: std::collections::VecDeque<Edge> = std::collections::VecDeque::new();
        chain.push_back(segments[start].0);
        chain.push_back(segments[start].1);
        // Extend forward, then backward.
        for forward in [true, false] {
            loop {
                let end = if forward { *chain.back().unwrap() } else { *chain.front().unwrap() };
                let next = by_edge[&end].iter().copied().find(|&k| !used[k]);
                let Some(k) = next else { break };
                used[k] = true;
                let (e1, e2) = segments[k];
                let other = if e1 == end { e2 } else { e1 };
                if forward {
                    chain.push_back(other);
                } else {
                    chain.push_front(other);
                }
            }
        }
        polylines.push(chain.into_iter().map(crossing).collect());
    }
    Contour { polylines }
}
