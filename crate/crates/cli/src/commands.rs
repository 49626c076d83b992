//! The four subcommands. Each returns what it wrote so `main` can print it.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use pmdrift_core::gallery::{self, Scenario};
use pmdrift_core::grid::positivity_set;
use pmdrift_core::io::{read_run, write_run};
use pmdrift_core::report::fmt17;
use pmdrift_core::solver::{lifted_run, run};
use pmdrift_core::{CoreError, EstimateReport, Trajectory};

use crate::config::{
    parse_config, ConfigErrors, FaceSection, GridSection, OutputSection, PmeSection, PresetSection, RunConfig,
    TimeSection, CHECK_NAMES,
};
use crate::verify::{default_tolerance, run_check};

/// Overrides the directory relative output paths are resolved against.
pub const OUTPUT_ROOT_ENV: &str = "PMDRIFT_OUTPUT_ROOT";
/// Copy of the run's config stored next to the snapshots.
pub const RUN_CONFIG_FILE: &str = "config.toml";
pub const REPORTS_DIR: &str = "reports";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONTOURS_DIR: &str = "contours";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config:\n{0}")]
    Config(#[from] ConfigErrors),
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn resolve(dir: impl AsRef<Path>) -> PathBuf {
    let p = dir.as_ref();
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        output_root().join(p)
    }
}

/// Reads a config from a path, or from stdin for `-`.
pub fn read_config_text(source: &Path) -> CliResult<String> {
    if source == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(io_err(source))?;
        Ok(s)
    } else {
        fs::read_to_string(source).map_err(io_err(source))
    }
}

/// Runs the configured problem and stores snapshots, manifest and config.
/// Returns the run directory.
pub fn simulate(config_text: &str, out: Option<&Path>) -> CliResult<PathBuf> {
    let cfg = parse_config(config_text)?;
    let grid = cfg.grid_spec()?;
    let drift = cfg.drift_spec()?;
    let boundary = cfg.boundary_spec()?;
    let params = cfg.solver_params();
    let rho0 = cfg.initial_spec()?.density_field(&grid, cfg.pme.m)?;
    let dir = resolve(out.unwrap_or(Path::new(&cfg.output.dir)));
    let (traj, floor) = if cfg.pme.lift > 0.0 {
        let lifted = lifted_run(&rho0, &drift, &params, &boundary)?;
        (lifted.trajectory, Some(lifted.floor))
    } else {
        (run(&rho0, &drift, &params, &boundary)?, None)
    };
    write_run(&dir, &traj)?;
    let path = dir.join(RUN_CONFIG_FILE);
    fs::write(&path, cfg.to_text()).map_err(io_err(&path))?;
    if let Some(report) = floor {
        save_report(&dir, &report)?;
    }
    Ok(dir)
}

fn save_report(dir: &Path, report: &EstimateReport) -> CliResult<PathBuf> {
    let reports = dir.join(REPORTS_DIR);
    fs::create_dir_all(&reports).map_err(io_err(&reports))?;
    let path = reports.join(format!("{}.txt", report.check));
    fs::write(&path, report.to_record()).map_err(io_err(&path))?;
    Ok(path)
}

/// Tolerance precedence: command line, then the run's stored config, then the default.
fn tolerance_for(check: &str, dir: &Path, traj: &Trajectory, explicit: Option<f64>) -> CliResult<f64> {
    if let Some(t) = explicit {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Usage(format!("tolerance {t} must be positive")));
        }
        return Ok(t);
    }
    let path = dir.join(RUN_CONFIG_FILE);
    if path.exists() {
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        if let Some(t) = parse_config(&text)?.tolerance(check) {
            return Ok(t);
        }
    }
    Ok(default_tolerance(check, traj.dx()).expect("known check"))
}

/// Runs one verifier on a stored run and saves its report.
pub fn verify(check: &str, dir: &Path, tolerance: Option<f64>) -> CliResult<EstimateReport> {
    if !CHECK_NAMES.contains(&check) {
        return Err(CliError::Usage(format!("unknown check '{check}' (known: {})", CHECK_NAMES.join(", "))));
    }
    let traj = read_run(dir)?;
    let tol = tolerance_for(check, dir, &traj, tolerance)?;
    let report = run_check(check, &traj, tol)?;
    save_report(dir, &report)?;
    Ok(report)
}

/// The run config for a gallery scenario; checks are the expectations the
/// `verify` subcommand can evaluate.
pub fn scenario_config(s: &Scenario) -> RunConfig {
    let g = &s.grid;
    let d = g.dim();
    let face = |f: &pmdrift_core::FaceBc| FaceSection { kind: f.name().to_string(), params: f.params() };
    let b = &s.boundary;
    let checks = s
        .expectations
        .iter()
        .filter(|e| e.expect == "pass" && CHECK_NAMES.contains(&e.check.as_str()))
        .map(|e| (e.check.clone(), default_tolerance(&e.check, g.dx()).expect("known check")))
        .collect();
    RunConfig {
        grid: GridSection {
            lo: g.lo()[..d].to_vec(),
            hi: g.hi()[..d].to_vec(),
            cells: (0..d).map(|k| g.cells(k)).collect(),
        },
        time: TimeSection { t0: s.t0, t1: s.t1, cfl: s.cfl, stride: s.snapshots },
        pme: PmeSection { m: s.m, lift: 0.0, fb_threshold: 1e-8 },
        drift: PresetSection { preset: s.drift.name().to_string(), params: s.drift.params().to_vec() },
        initial: PresetSection { preset: s.initial.name().to_string(), params: s.initial.params().to_vec() },
        boundary: [face(&b.lo[0]), face(&b.hi[0]), face(&b.lo[1]), face(&b.hi[1])],
        checks,
        output: OutputSection { dir: format!("runs/{}", s.name), formats: vec!["csv".into()] },
    }
}

fn expectations_text(s: &Scenario) -> String {
    let mut t = format!("scenario = \"{}\"\n\n[params]\n", s.name);
    for (k, v) in &s.params {
        t += &format!("{k} = {}\n", fmt17(*v));
    }
    for e in &s.expectations {
        t += &format!("\n[[expect]]\ncheck = \"{}\"\nexpect = \"{}\"\n", e.check, e.expect);
    }
    t
}

/// Writes `config.toml` and `expectations.toml` for a scenario and returns
/// the config text with the directory written to.
pub fn gallery(name: &str, dx: Option<f64>, out: Option<&Path>) -> CliResult<(String, PathBuf)> {
    let mut s = gallery::by_name(name).map_err(|_| {
        CliError::Usage(format!("unknown scenario '{name}' (known: {})", gallery::SCENARIO_NAMES.join(", ")))
    })?;
    if let Some(dx) = dx {
        s = s.with_dx(dx)?;
    }
    let text = scenario_config(&s).to_text();
    let dir = match out {
        Some(p) => resolve(p),
        None => output_root().join("gallery").join(&s.name),
    };
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let path = dir.join(RUN_CONFIG_FILE);
    fs::write(&path, &text).map_err(io_err(&path))?;
    let path = dir.join("expectations.toml");
    fs::write(&path, expectations_text(&s)).map_err(io_err(&path))?;
    Ok((text, dir))
}

/// Collects every report of a run into `summary.csv` and writes the
/// free-boundary contour of each snapshot as a polyline file.
pub fn report(dir: &Path) -> CliResult<(PathBuf, usize)> {
    let traj = read_run(dir)?;
    let mut reports = Vec::new();
    let rdir = dir.join(REPORTS_DIR);
    if rdir.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(&rdir)
            .map_err(io_err(&rdir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        for path in files {
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let parsed = EstimateReport::parse_records(&text)
                .map_err(|message| CoreError::Format { path: path.display().to_string(), message })?;
            reports.extend(parsed);
        }
    }

    let summary = dir.join(SUMMARY_FILE);
    let csv_err = |e: csv::Error| CliError::Usage(format!("{}: {e}", summary.display()));
    let mut w = csv::Writer::from_path(&summary).map_err(csv_err)?;
    w.write_record(["check", "verdict", "constants", "tolerances", "witness_x", "witness_y", "witness_t", "witness_value"])
        .map_err(csv_err)?;
    let pairs = |v: &[(String, f64)]| v.iter().map(|(k, x)| format!("{k}={}", fmt17(*x))).collect::<Vec<_>>().join(";");
    for r in &reports {
        let wit: Vec<String> = match r.witness {
            Some(w) => vec![fmt17(w.x[0]), fmt17(w.x[1]), fmt17(w.t), fmt17(w.value)],
            None => vec![String::new(); 4],
        };
        let mut row = vec![r.check.clone(), r.verdict.as_str().to_string(), pairs(&r.constants), pairs(&r.tolerances)];
        row.extend(wit);
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&summary))?;

    let cdir = dir.join(CONTOURS_DIR);
    fs::create_dir_all(&cdir).map_err(io_err(&cdir))?;
    for (k, snap) in traj.snapshots.iter().enumerate() {
        let path = cdir.join(format!("contour_{k:04}.csv"));
        let csv_err = |e: csv::Error| CliError::Usage(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(["t", "polyline", "x", "y"]).map_err(csv_err)?;
        let set = positivity_set(&snap.u, traj.threshold());
        for (j, line) in set.contour.polylines.iter().enumerate() {
            for p in line {
                w.write_record([fmt17(snap.t), j.to_string(), fmt17(p[0]), fmt17(p[1])]).map_err(csv_err)?;
            }
        }
        w.flush().map_err(io_err(&path))?;
    }
    Ok((summary, reports.len()))
}
