//! Verifiers run against a stored trajectory.

use pmdrift_core::estimates::aronson_benilan;
use pmdrift_core::solver::pressure_residual as residual_field;
use pmdrift_core::{CoreError, EstimateReport, Result, Trajectory, Verdict, Witness};

/// The residual of a run is checked where `u > CORE_LEVEL * max u`. Near the
/// free boundary the pressure is only Lipschitz and drifts may jump there.
pub const CORE_LEVEL: f64 = 0.1;

/// Tolerance used when neither the command line nor the run's config names one.
pub fn default_tolerance(check: &str, dx: f64) -> Option<f64> {
    match check {
        // The upwinded drift makes the discrete residual first order.
        "pressure_residual" => Some(30.0 * dx),
        // Barenblatt has sigma1 = d / (d (m - 1) + 2) < 1 for every m > 1.
        "aronson_benilan" => Some(1.0),
        "mass" => Some(1e-10),
        _ => None,
    }
}

pub fn run_check(check: &str, traj: &Trajectory, tolerance: f64) -> Result<EstimateReport> {
    match check {
        "pressure_residual" => pressure_residual(traj, tolerance),
        "aronson_benilan" => semiconvexity(traj, tolerance),
        "mass" => Ok(mass(traj, tolerance)),
        _ => Err(CoreError::UnknownPreset(check.to_string())),
    }
}

/// Largest `|L u|` over the interior of the support core of every snapshot
/// that has neighbours on both sides in time.
fn pressure_residual(traj: &Trajectory, tolerance: f64) -> Result<EstimateReport> {
    if traj.len() < 3 {
        return Err(CoreError::Precondition("pressure_residual needs at least 3 snapshots".into()));
    }
    let mut worst = 0.0;
    let mut witness = None;
    let mut evaluated = 0;
    for k in 1..traj.len() - 1 {
        let s = &traj.snapshots[k];
        let ut = traj.pressure_time_derivative(k)?;
        let r = residual_field(&s.u, &traj.drift, &ut, traj.m(), s.t, CORE_LEVEL)?;
        evaluated += r.evaluated();
        for (idx, (&v, &m)) in r.residual.values().iter().zip(&r.mask).enumerate() {
            if m && v.abs() > worst {
                worst = v.abs();
                witness = Some(Witness { x: traj.grid().center_of(idx), t: s.t, value: v });
            }
        }
    }
    if evaluated == 0 {
        return Ok(EstimateReport::inconclusive("pressure_residual", "no interior positive cell"));
    }
    Ok(EstimateReport::new("pressure_residual", Verdict::from_bool(worst <= tolerance))
        .with_constant("max_abs", worst)
        .with_constant("evaluated", evaluated as f64)
        .with_constant("dx", traj.dx())
        .with_constant("core_level", CORE_LEVEL)
        .with_tolerance("max_abs", tolerance)
        .with_witness(witness))
}

/// The semi-convexity envelope must hold and its `sigma1` stay below `tolerance`.
fn semiconvexity(traj: &Trajectory, tolerance: f64) -> Result<EstimateReport> {
    let mut r = aronson_benilan(traj, 3.0 * traj.dx())?;
    if r.verdict == Verdict::Pass {
        let s1 = r.constant("sigma1").unwrap_or(f64::INFINITY);
        r.verdict = Verdict::from_bool(s1 <= tolerance);
    }
    Ok(r.with_tolerance("sigma1", tolerance))
}

fn mass(traj: &Trajectory, tolerance: f64) -> EstimateReport {
    let masses = traj.masses();
    let m0 = masses[0];
    let (k, drift) = masses
        .iter()
        .map(|m| (m - m0).abs() / m0.abs().max(f64::MIN_POSITIVE))
        .enumerate()
        .fold((0, 0.0), |best, (k, d)| if d > best.1 { (k, d) } else { best });
    EstimateReport::new("mass", Verdict::from_bool(drift <= tolerance))
        .with_constant("initial_mass", m0)
        .with_constant("max_relative_drift", drift)
        .with_tolerance("relative", tolerance)
        .with_note(format!("worst at t={}", traj.snapshots[k].t))
}
