//! Run directories: one CSV per snapshot (`x[,y],rho,u`, row-major) and a
//! TOML manifest with the grid, solver parameters, drift and face conditions.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::drift::DriftSpec;
use crate::error::{CoreError, Result};
use crate::grid::{positivity_set, Field, GridSpec, Role};
use crate::report::fmt17;
use crate::solver::{Boundary, FaceBc, SolverParams, Snapshot, Trajectory};

pub const MANIFEST_FILE: &str = "manifest.toml";

pub fn snapshot_file_name(k: usize) -> String {
    format!("snapshot_{k:04}.csv")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CoreError {
    CoreError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn format_err(path: &str, message: impl Into<String>) -> CoreError {
    CoreError::Format { path: path.to_string(), message: message.into() }
}

pub fn write_snapshot_csv<W: Write>(out: W, snap: &Snapshot) -> Result<()> {
    let g = snap.u.grid();
    let mut w = csv::Writer::from_writer(out);
    let header: &[&str] = if g.dim() == 1 { &["x", "rho", "u"] } else { &["x", "y", "rho", "u"] };
    let csv_err = |e: csv::Error| CoreError::Io { path: "<snapshot>".into(), message: e.to_string() };
    w.write_record(header).map_err(csv_err)?;
    for idx in 0..g.len() {
        let x = g.center_of(idx);
        let mut row = vec![fmt17(x[0])];
        if g.dim() == 2 {
            row.push(fmt17(x[1]));
        }
        row.push(fmt17(snap.rho.values()[idx]));
        row.push(fmt17(snap.u.values()[idx]));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CoreError::Io { path: "<snapshot>".into(), message: e.to_string() })
}

/// Reads a snapshot written by [`write_snapshot_csv`] on `grid`; cell centres
/// must match the grid to within `1e-9 dx`.
pub fn read_snapshot_csv<R: Read>(input: R, name: &str, grid: &GridSpec, t: f64, threshold: f64) -> Result<Snapshot> {
    let mut r = csv::Reader::from_reader(input);
    let expected: &[&str] = if grid.dim() == 1 { &["x", "rho", "u"] } else { &["x", "y", "rho", "u"] };
    let header = r.headers().map_err(|e| format_err(name, e.to_string()))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(format_err(name, format!("header {:?}, expected {}", header, expected.join(","))));
    }
    let mut rho = Vec::with_capacity(grid.len());
    let mut u = Vec::with_capacity(grid.len());
    for (idx, rec) in r.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| format_err(name, e.to_string()))?;
        if idx >= grid.len() {
            return Err(format_err(name, format!("line {line}: more rows than the {} grid cells", grid.len())));
        }
        let vals = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| format_err(name, format!("line {line}: {e}")))?;
        let c = grid.center_of(idx);
        let d = grid.dim();
        if (0..d).any(|k| (vals[k] - c[k]).abs() > 1e-9 * grid.dx()) {
            return Err(format_err(name, format!("line {line}: cell centre {:?} does not match the grid", &vals[..d])));
        }
        if !(vals[d] >= 0.0 && vals[d + 1] >= 0.0) || !vals[d].is_finite() || !vals[d + 1].is_finite() {
            return Err(format_err(name, format!("line {line}: density and pressure must be finite and non-negative")));
        }
        rho.push(vals[d]);
        u.push(vals[d + 1]);
    }
    if rho.len() != grid.len() {
        return Err(format_err(name, format!("{} rows for {} grid cells", rho.len(), grid.len())));
    }
    let rho = Field::new(grid.clone(), rho, Role::Density)?;
    let u = Field::new(grid.clone(), u, Role::Pressure)?;
    let contour = positivity_set(&u, threshold).contour;
    Ok(Snapshot { t, rho, u, contour })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    format: String,
    grid: GridSection,
    solver: SolverSection,
    drift: PresetSection,
    boundary: BoundarySection,
    snapshot: Vec<SnapshotEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    lo: Vec<f64>,
    hi: Vec<f64>,
    cells: Vec<usize>,
    dx: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    m: f64,
    cfl: f64,
    t0: f64,
    t1: f64,
    snapshots: usize,
    lift: f64,
    fb_threshold: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetSection {
    preset: String,
    params: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundarySection {
    /// Faces in the order x-lo, x-hi, y-lo, y-hi.
    faces: Vec<String>,
    params: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotEntry {
    t: f64,
    file: String,
}

const FORMAT: &str = "pmdrift-run-1";

fn list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| fmt17(*x)).collect();
    format!("[{}]", items.join(", "))
}

/// Manifest text for a trajectory whose snapshot `k` lives in [`snapshot_file_name`]`(k)`.
pub fn manifest_text(traj: &Trajectory) -> String {
    let g = traj.grid();
    let d = g.dim();
    let p = &traj.params;
    let mut s = String::new();
    let _ = writeln!(s, "format = \"{FORMAT}\"\n");
    let _ = writeln!(s, "[grid]");
    let _ = writeln!(s, "lo = {}", list(&g.lo()[..d]));
    let _ = writeln!(s, "hi = {}", list(&g.hi()[..d]));
    let cells: Vec<String> = (0..d).map(|k| g.cells(k).to_string()).collect();
    let _ = writeln!(s, "cells = [{}]", cells.join(", "));
    let _ = writeln!(s, "dx = {}\n", fmt17(g.dx()));
    let _ = writeln!(s, "[solver]");
    let _ = writeln!(s, "m = {}", fmt17(p.m));
    let _ = writeln!(s, "cfl = {}", fmt17(p.cfl));
    let _ = writeln!(s, "t0 = {}", fmt17(p.t0));
    let _ = writeln!(s, "t1 = {}", fmt17(p.t1));
    let _ = writeln!(s, "snapshots = {}", p.snapshots);
    let _ = writeln!(s, "lift = {}", fmt17(p.lift));
    let _ = writeln!(s, "fb_threshold = {}\n", fmt17(p.fb_threshold));
    let _ = writeln!(s, "[drift]");
    let _ = writeln!(s, "preset = \"{}\"", traj.drift.name());
    let _ = writeln!(s, "params = {}\n", list(traj.drift.params()));
    let b = &traj.boundary;
    let faces = [&b.lo[0], &b.hi[0], &b.lo[1], &b.hi[1]];
    let names: Vec<String> = faces.iter().map(|f| format!("\"{}\"", f.name())).collect();
    let params: Vec<String> = faces.iter().map(|f| list(&f.params())).collect();
    let _ = writeln!(s, "[boundary]");
    let _ = writeln!(s, "faces = [{}]", names.join(", "));
    let _ = writeln!(s, "params = [{}]", params.join(", "));
    for (k, snap) in traj.snapshots.iter().enumerate() {
        let _ = writeln!(s, "\n[[snapshot]]\nt = {}\nfile = \"{}\"", fmt17(snap.t), snapshot_file_name(k));
    }
    s
}

/// Writes the manifest and every snapshot into `dir`, creating it if needed.
pub fn write_run(dir: &Path, traj: &Trajectory) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (k, snap) in traj.snapshots.iter().enumerate() {
        let path = dir.join(snapshot_file_name(k));
        let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        write_snapshot_csv(std::io::BufWriter::new(f), snap).map_err(|e| match e {
            CoreError::Io { message, .. } => CoreError::Io { path: path.display().to_string(), message },
            other => other,
        })?;
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest_text(traj)).map_err(|e| io_err(&path, e))
}

/// Loads a run directory written by [`write_run`].
pub fn read_run(dir: &Path) -> Result<Trajectory> {
    let path = dir.join(MANIFEST_FILE);
    if !dir.is_dir() {
        return Err(io_err(dir, "run directory does not exist"));
    }
    if !path.exists() {
        return Err(CoreError::NoSnapshots(dir.display().to_string()));
    }
    let name = path.display().to_string();
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let mf: ManifestFile = toml::from_str(&text).map_err(|e| format_err(&name, e.to_string()))?;
    if mf.format != FORMAT {
        return Err(format_err(&name, format!("format '{}', expected '{FORMAT}'", mf.format)));
    }
    if mf.snapshot.is_empty() {
        return Err(CoreError::NoSnapshots(dir.display().to_string()));
    }
    let grid = GridSpec::new(&mf.grid.lo, &mf.grid.hi, &mf.grid.cells)?;
    if (grid.dx() - mf.grid.dx).abs() > 1e-12 * mf.grid.dx {
        return Err(format_err(&name, format!("dx = {} disagrees with the grid ({})", mf.grid.dx, grid.dx())));
    }
    let s = &mf.solver;
    let params = SolverParams {
        m: s.m,
        cfl: s.cfl,
        t0: s.t0,
        t1: s.t1,
        snapshots: s.snapshots,
        lift: s.lift,
        fb_threshold: s.fb_threshold,
    };
    params.validate()?;
    let drift = DriftSpec::from_name(&mf.drift.preset, &mf.drift.params)?;
    if mf.boundary.faces.len() != 4 || mf.boundary.params.len() != 4 {
        return Err(format_err(&name, "boundary needs four faces and four parameter lists"));
    }
    let face = |k: usize| FaceBc::from_parts(&mf.boundary.faces[k], &mf.boundary.params[k]);
    let boundary = Boundary { lo: [face(0)?, face(2)?], hi: [face(1)?, face(3)?] };
    let mut snapshots = Vec::with_capacity(mf.snapshot.len());
    for entry in &mf.snapshot {
        let p = dir.join(&entry.file);
        let f = fs::File::open(&p).map_err(|e| io_err(&p, e))?;
        let snap = read_snapshot_csv(std::io::BufReader::new(f), &p.display().to_string(), &grid, entry.t, params.fb_threshold)?;
        snapshots.push(snap);
    }
    if snapshots.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(format_err(&name, "snapshot times must increase"));
    }
    Ok(Trajectory { snapshots, params, drift, boundary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;

    #[test]
    fn csv_round_trips_bit_exactly() {
        let g = GridSpec::rect([-1.0, -0.5], [1.0, 0.5], [16, 8]).unwrap();
        let u = Field::from_fn(&g, Role::Pressure, |x| (0.3 - x[0] * x[0] / 3.0 - x[1]).max(0.0));
        let snap = Snapshot::from_pressure(0.7, u, 2.0, 1e-8).unwrap();
        let mut buf = Vec::new();
        write_snapshot_csv(&mut buf, &snap).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,y,rho,u\n"));
        assert_eq!(text.lines().count(), 1 + g.len());
        let back = read_snapshot_csv(&buf[..], "mem", &g, 0.7, 1e-8).unwrap();
        assert_eq!(back, snap);
    }

    #[test]
    fn rejects_mismatched_grid() {
        let g = GridSpec::line(0.0, 1.0, 8).unwrap();
        let snap = Snapshot::from_pressure(0.0, Field::constant(&g, 1.0, Role::Pressure), 2.0, 1e-8).unwrap();
        let mut buf = Vec::new();
        write_snapshot_csv(&mut buf, &snap).unwrap();
        let other = GridSpec::line(0.0, 1.0, 9).unwrap();
        assert!(matches!(read_snapshot_csv(&buf[..], "mem", &other, 0.0, 1e-8), Err(CoreError::Format { .. })));
    }

    #[test]
    fn manifest_round_trips_every_face_kind() {
        let s = gallery::traveling_wave(1.0, 1.0).with_dx(0.25).unwrap().with_times(0.0, 0.1, 2);
        let traj = s.run().unwrap();
        let dir = std::env::temp_dir().join(format!("pmdrift-io-{}", std::process::id()));
        write_run(&dir, &traj).unwrap();
        let back = read_run(&dir).unwrap();
        assert_eq!(back, traj);
        assert_eq!(manifest_text(&back), manifest_text(&traj));
        fs::remove_dir_all(&dir).unwrap();
    }
}
