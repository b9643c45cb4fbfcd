//! Single runs and δ-continuation studies driven by a [`RunConfig`].

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anideg_core::estimates::{
    check_energy_law, check_energy_monotone, check_excess_entropy_bound, check_h2_monotonicity,
    run_delta_continuation, ContinuationSetup, DiagnosticsRecord, EntropyTracker, ExcessFit, ScalingStudyResult,
};
use anideg_core::material::regularize_initial;
use anideg_core::stepper::Observer;
use anideg_core::{
    advance, AnisotropyConstants, AnisotropySpec, Error, Field, MaterialSpec, RegularizedMaterial, SimState, TorusGrid,
};
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{parse_config, AnisotropyConfig, InitialCondition, PresetConfig, RunConfig};
use crate::error::{AppError, AppResult};
use crate::output::{
    check_row, checks_csv, diagnostics_csv, load_snapshot, sha256_hex, snapshot_bytes, snapshot_name, unix_now,
    write_atomic, CheckRow, DiagnosticsRow, RunManifest, RunSummary, DIAGNOSTICS_FILE, FINAL_SNAPSHOT, MANIFEST_FILE,
    SNAPSHOT_DIR,
};

/// Relative slack of the energy law check.
pub const ENERGY_LAW_TOL: f64 = 1e-6;
/// Relative slack of the entropy estimate check.
pub const ENTROPY_TOL: f64 = 1e-4;
/// Relative slack of the H² monotonicity check.
pub const H2_TOL: f64 = 1e-12;
/// Relative mass drift allowed over a run.
pub const MASS_TOL: f64 = 1e-12;
/// Smallest accepted excess decay exponent in a continuation study.
pub const MIN_EXCESS_SLOPE: f64 = 0.3;

pub fn build_grid(cfg: &RunConfig) -> AppResult<Arc<TorusGrid>> {
    Ok(Arc::new(TorusGrid::new(&cfg.grid.points, &cfg.grid.extents)?))
}

/// The configured anisotropy with certified constants.
pub fn build_anisotropy(cfg: &RunConfig) -> AppResult<AnisotropySpec> {
    let d = cfg.grid.points.len();
    let mut a = match &cfg.anisotropy {
        AnisotropyConfig::Isotropic => AnisotropySpec::isotropic(d)?,
        AnisotropyConfig::Quadratic(m) => AnisotropySpec::quadratic(d, m.clone())?,
        AnisotropyConfig::EllipsoidSum(ms) => AnisotropySpec::ellipsoid_sum(d, ms.clone())?,
    };
    a.certify_constants(cfg.certification.samples, cfg.certification.seed)?;
    Ok(a)
}

pub fn build_material(cfg: &RunConfig) -> AppResult<MaterialSpec> {
    Ok(match cfg.material.preset {
        PresetConfig::LogQuench { theta, theta_c } => MaterialSpec::log_quench(theta, theta_c, cfg.material.m)?,
        PresetConfig::DoubleWell => MaterialSpec::double_well(cfg.material.m)?,
    })
}

/// Uniform noise `mean + amplitude · U(-1, 1)`, drawn in grid order.
pub fn seeded_noise(grid: &Arc<TorusGrid>, mean: f64, amplitude: f64, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len())
        .map(|_| mean + amplitude * rng.random_range(-1.0..1.0))
        .collect();
    Field::new(grid.clone(), values).expect("length matches grid")
}

/// `±tanh(dist / width)` along axis 0, where `dist` is the periodic distance
/// to the nearest center. The sorted centers pair up into intervals
/// `[c₁, c₂), [c₃, c₄), ...` (taken modulo the period) where the sign is `+`.
pub fn tanh_profile(grid: &Arc<TorusGrid>, centers: &[f64], width: f64) -> Field {
    let (a, b) = grid.extents()[0];
    let len = b - a;
    let mut cs = centers.to_vec();
    cs.sort_by(f64::total_cmp);
    Field::from_fn(grid.clone(), |x| {
        let x0 = x[0];
        let dist = cs
            .iter()
            .map(|c| {
                let d = (x0 - c).rem_euclid(len);
                d.min(len - d)
            })
            .fold(f64::INFINITY, f64::min);
        let inside = cs.chunks(2).any(|p| (x0 - p[0]).rem_euclid(len) < p[1] - p[0]);
        let sign = if inside { 1.0 } else { -1.0 };
        sign * (dist / width).tanh()
    })
}

/// The initial datum before the `(1-δ)` scaling. Snapshots are restart
/// states and are returned as stored; `base_dir` resolves relative paths.
pub fn build_initial(cfg: &RunConfig, grid: &Arc<TorusGrid>, base_dir: &Path) -> AppResult<Field> {
    Ok(match &cfg.initial {
        InitialCondition::Constant(v) => Field::constant(grid.clone(), *v),
        InitialCondition::SeededNoise { mean, amplitude, seed } => seeded_noise(grid, *mean, *amplitude, *seed),
        InitialCondition::TanhProfile { centers, width } => tanh_profile(grid, centers, *width),
        InitialCondition::FromSnapshot(path) => {
            let (field, _) = load_snapshot(&base_dir.join(path))?;
            let g = field.grid();
            if g.points() != grid.points() || g.extents() != grid.extents() {
                return Err(Error::InvalidArgument(format!(
                    "snapshot grid {:?} on {:?} does not match the configured grid {:?} on {:?}",
                    g.points(),
                    g.extents(),
                    grid.points(),
                    grid.extents()
                ))
                .into());
            }
            Field::new(grid.clone(), field.into_values())?
        }
    })
}

/// The regularized starting field for parameter `delta`.
pub fn starting_field(cfg: &RunConfig, phi0: Field, delta: f64) -> AppResult<Field> {
    match cfg.initial {
        InitialCondition::FromSnapshot(_) => Ok(phi0),
        _ => Ok(regularize_initial(&phi0, delta)?),
    }
}

pub fn load_config(path: &Path) -> AppResult<(RunConfig, String)> {
    let text = fs::read_to_string(path).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    Ok((parse_config(&text)?, text))
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Streams diagnostics into memory and snapshots to disk while tracking the
/// entropy estimate and the H² inequality.
struct RunObserver {
    dir: PathBuf,
    snapshots: bool,
    records: Vec<DiagnosticsRecord>,
    artifacts: Vec<PathBuf>,
    entropy: Option<EntropyTracker>,
    entropy_failure: Option<CheckRow>,
    h2_worst: Option<CheckRow>,
}

impl RunObserver {
    fn h2_row(&mut self, state: &SimState) -> anideg_core::Result<()> {
        let row = match check_row("h2_monotonicity", check_h2_monotonicity(&state.phi, &state.aniso, H2_TOL)) {
            Ok(r) => r,
            Err(AppError::Core(e)) => return Err(e),
            Err(e) => return Err(Error::Io(e.to_string())),
        };
        // compare relative margins so large and small states weigh alike
        let rel = |r: &CheckRow| if r.pass { r.margin / (1.0 + r.rhs.abs()) } else { f64::NEG_INFINITY };
        if self.h2_worst.as_ref().is_none_or(|w| rel(&row) < rel(w)) {
            self.h2_worst = Some(row);
        }
        Ok(())
    }
}

impl Observer for RunObserver {
    fn on_record(&mut self, record: &DiagnosticsRecord, state: &SimState) -> anideg_core::Result<()> {
        self.records.push(record.clone());
        if let Some(tracker) = self.entropy.as_mut() {
            match tracker.push(state.t, &state.phi, state.hess_sq_cum) {
                Ok(()) => {}
                Err(Error::EstimateViolated { lhs, rhs, .. }) => {
                    self.entropy_failure = Some(CheckRow {
                        name: "entropy_estimate".into(),
                        lhs,
                        rhs,
                        margin: rhs - lhs,
                        pass: false,
                    });
                    self.entropy = None;
                }
                Err(e) => return Err(e),
            }
        }
        self.h2_row(state)
    }

    fn on_snapshot(&mut self, state: &SimState) -> anideg_core::Result<()> {
        if !self.snapshots {
            return Ok(());
        }
        let rel = Path::new(SNAPSHOT_DIR).join(snapshot_name(state.step_count));
        let bytes = snapshot_bytes(&state.phi, state.t).map_err(|e| Error::Io(e.to_string()))?;
        write_atomic(&self.dir.join(&rel), &bytes).map_err(|e| Error::Io(e.to_string()))?;
        self.artifacts.push(rel);
        Ok(())
    }
}

/// Outcome of [`execute_run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub directory: PathBuf,
    pub records: Vec<DiagnosticsRecord>,
    pub checks: Vec<CheckRow>,
    pub final_phi: Field,
    pub manifest: RunManifest,
}

impl RunOutcome {
    pub fn failed_checks(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count()
    }
}

/// Mass drift relative to `‖φ₀‖_{L¹}`, which equals `|mass(0)|` for
/// single-signed data and stays meaningful when the mass is near zero.
fn mass_row(records: &[DiagnosticsRecord], l1_initial: f64) -> CheckRow {
    let m0 = records[0].mass;
    let scale = m0.abs().max(l1_initial).max(f64::MIN_POSITIVE);
    let lhs = records.iter().map(|r| (r.mass - m0).abs()).fold(0.0, f64::max) / scale;
    CheckRow {
        name: "mass_conservation".into(),
        lhs,
        rhs: MASS_TOL,
        margin: MASS_TOL - lhs,
        pass: lhs <= MASS_TOL,
    }
}

fn constants_array(c: Option<AnisotropyConstants>) -> [f64; 4] {
    c.map(|c| [c.a0, c.a1, c.a2, c.c_a]).unwrap_or([f64::NAN; 4])
}

/// Runs the configured simulation, writing every artifact under `dir`.
/// Failed estimate checks are recorded, not raised.
pub fn execute_run(cfg: &RunConfig, config_text: &str, base_dir: &Path, dir: &Path) -> AppResult<RunOutcome> {
    let started = unix_now();
    let grid = build_grid(cfg)?;
    let aniso = Arc::new(build_anisotropy(cfg)?);
    let constants = aniso.constants().expect("certified");
    let material = Arc::new(RegularizedMaterial::new(build_material(cfg)?, cfg.material.delta)?);
    let phi0 = build_initial(cfg, &grid, base_dir)?;
    let phi = starting_field(cfg, phi0, cfg.material.delta)?;
    let l1_initial = phi.map(f64::abs).integral();
    let state = SimState::new(phi, material.clone(), aniso.clone())?;
    let kappa = match cfg.solver.scheme {
        anideg_core::Scheme::StabilizedImex => Some(cfg.solver.resolve_kappa(&aniso, &material)?),
        anideg_core::Scheme::Explicit => None,
    };

    fs::create_dir_all(dir)?;
    let mut obs = RunObserver {
        dir: dir.to_path_buf(),
        snapshots: cfg.output.snapshots,
        records: Vec::new(),
        artifacts: Vec::new(),
        entropy: (cfg.output.diagnostics_stride == 1)
            .then(|| EntropyTracker::new(material.clone(), constants.c_a, ENTROPY_TOL)),
        entropy_failure: None,
        h2_worst: None,
    };
    info!("running to t = {} on {:?}", cfg.solver.t_final, cfg.grid.points);
    let last = advance(state, &cfg.solver, &mut obs)?;

    let mut checks = vec![mass_row(&obs.records, l1_initial)];
    checks.push(check_row("energy_law", check_energy_law(&obs.records, ENERGY_LAW_TOL))?);
    checks.push(check_row(
        "energy_monotone",
        check_energy_monotone(&obs.records, cfg.solver.energy_tol_per_step),
    )?);
    if let Some(row) = obs.entropy_failure.take() {
        checks.push(row);
    } else if let Some(report) = obs.entropy.as_ref().and_then(|t| t.report()) {
        checks.push(CheckRow::from(&report));
    }
    if let Some(row) = obs.h2_worst.take() {
        checks.push(row);
    }
    checks.push(check_row(
        "excess_entropy_bound",
        check_excess_entropy_bound(&obs.records, &material),
    )?);

    let mut artifacts = std::mem::take(&mut obs.artifacts);
    write_atomic(&dir.join(DIAGNOSTICS_FILE), &diagnostics_csv(&obs.records)?)?;
    artifacts.push(PathBuf::from(DIAGNOSTICS_FILE));
    if cfg.output.snapshots {
        write_atomic(&dir.join(FINAL_SNAPSHOT), &snapshot_bytes(&last.phi, last.t)?)?;
        artifacts.push(PathBuf::from(FINAL_SNAPSHOT));
    }
    write_atomic(&dir.join("checks.csv"), &checks_csv(&checks)?)?;
    artifacts.push(PathBuf::from("checks.csv"));
    artifacts.push(PathBuf::from(MANIFEST_FILE));

    let manifest = RunManifest {
        config_hash: sha256_hex(config_text.as_bytes()),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: unix_now(),
        artifacts,
        summary: RunSummary {
            steps: last.step_count,
            final_record: obs.records.last().map(DiagnosticsRow::from),
            kappa,
            anisotropy_constants: constants_array(Some(constants)),
        },
        checks: checks.clone(),
    };
    write_atomic(&dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(RunOutcome {
        directory: dir.to_path_buf(),
        records: obs.records,
        checks,
        final_phi: last.phi,
        manifest,
    })
}

fn output_dir(cfg: &RunConfig, config_path: &Path, output: Option<&Path>) -> PathBuf {
    match output {
        Some(p) => p.to_path_buf(),
        None => config_dir(config_path).join(&cfg.output.directory),
    }
}

pub fn print_checks(checks: &[CheckRow]) {
    println!("{:<24} {:>14} {:>14} {:>12}  result", "check", "lhs", "rhs", "margin");
    for c in checks {
        println!(
            "{:<24} {:>14.6e} {:>14.6e} {:>12.3e}  {}",
            c.name,
            c.lhs,
            c.rhs,
            c.margin,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
}

/// `anideg-ch run`: one simulation; fails with `ChecksFailed` if any
/// estimate check fails after all artifacts are written.
pub fn cmd_run(config_path: &Path, output: Option<&Path>) -> AppResult<RunOutcome> {
    let (cfg, text) = load_config(config_path)?;
    let dir = output_dir(&cfg, config_path, output);
    let outcome = execute_run(&cfg, &text, &config_dir(config_path), &dir)?;
    print_checks(&outcome.checks);
    println!("artifacts written to {}", dir.display());
    let failed = outcome.failed_checks();
    if failed > 0 {
        return Err(AppError::ChecksFailed {
            failed,
            total: outcome.checks.len(),
        });
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
struct FitSummary {
    kind: &'static str,
    slope: Option<f64>,
    intercept: Option<f64>,
    points: Option<usize>,
    reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct ScalingSummary {
    config_hash: String,
    code_version: String,
    deltas: Vec<f64>,
    excess_sup: Vec<f64>,
    cauchy: Vec<f64>,
    vacuous: bool,
    fit: FitSummary,
    checks: Vec<CheckRow>,
}

#[derive(Debug, Serialize)]
struct ScalingRow {
    delta: f64,
    excess_sup: f64,
    /// Distance to the next smaller δ; empty on the last row.
    cauchy_next: Option<f64>,
    steps: usize,
}

/// Worker count for continuation studies: the explicit cap, or the
/// available parallelism.
pub fn worker_count(cap: Option<usize>) -> usize {
    cap.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1)
}

/// Checks on a continuation study: the decay exponent and the pointwise
/// excess bound for every δ.
pub fn scaling_checks(study: &ScalingStudyResult) -> AppResult<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let (slope, pass) = match &study.fit {
        ExcessFit::Slope { slope, .. } => (*slope, *slope >= MIN_EXCESS_SLOPE),
        ExcessFit::Vacuous => (f64::INFINITY, true),
        ExcessFit::Undefined { .. } => (f64::NAN, false),
    };
    rows.push(CheckRow {
        name: "excess_slope".into(),
        lhs: MIN_EXCESS_SLOPE,
        rhs: slope,
        margin: slope - MIN_EXCESS_SLOPE,
        pass,
    });
    for run in &study.runs {
        let mut row = check_row(
            "excess_entropy_bound",
            check_excess_entropy_bound(&run.records, &run.material),
        )?;
        row.name = format!("excess_entropy_bound[delta={}]", run.delta);
        rows.push(row);
    }
    Ok(rows)
}

/// `anideg-ch continuation`: one run per δ from the configured setup. The
/// `delta` key of the config is ignored.
pub fn cmd_continuation(
    config_path: &Path,
    deltas: &[f64],
    threads: Option<usize>,
    output: Option<&Path>,
) -> AppResult<ScalingStudyResult> {
    let (cfg, text) = load_config(config_path)?;
    let dir = output_dir(&cfg, config_path, output);
    let grid = build_grid(&cfg)?;
    let phi0 = build_initial(&cfg, &grid, &config_dir(config_path))?;
    if matches!(cfg.initial, InitialCondition::FromSnapshot(_)) {
        return Err(Error::InvalidArgument(
            "continuation studies rescale the initial datum per delta; use a generated initial condition".into(),
        )
        .into());
    }
    let setup = ContinuationSetup {
        material: build_material(&cfg)?,
        aniso: build_anisotropy(&cfg)?,
        solver: cfg.solver.clone(),
        phi0,
    };
    let workers = worker_count(threads);
    info!("continuation over {deltas:?} on {workers} workers");
    let study = run_delta_continuation(&setup, deltas, workers)?;

    for run in &study.runs {
        let sub = dir.join(format!("delta_{}", run.delta));
        write_atomic(&sub.join(DIAGNOSTICS_FILE), &diagnostics_csv(&run.records)?)?;
        let t = run.records.last().map(|r| r.t).unwrap_or(0.0);
        write_atomic(&sub.join(FINAL_SNAPSHOT), &snapshot_bytes(&run.final_phi, t)?)?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for (i, run) in study.runs.iter().enumerate() {
        w.serialize(ScalingRow {
            delta: run.delta,
            excess_sup: run.excess_sup,
            cauchy_next: study.cauchy.get(i).copied(),
            steps: run.records.len().saturating_sub(1) * cfg.solver.diagnostics_stride.max(1),
        })?;
    }
    write_atomic(
        &dir.join("scaling.csv"),
        &w.into_inner().map_err(|e| AppError::Io(e.to_string()))?,
    )?;

    let checks = scaling_checks(&study)?;
    let fit = match &study.fit {
        ExcessFit::Slope {
            slope,
            intercept,
            points,
        } => FitSummary {
            kind: "slope",
            slope: Some(*slope),
            intercept: Some(*intercept),
            points: Some(*points),
            reason: None,
        },
        ExcessFit::Vacuous => FitSummary {
            kind: "vacuous",
            slope: None,
            intercept: None,
            points: None,
            reason: Some("excess is zero for every delta".into()),
        },
        ExcessFit::Undefined { reason } => FitSummary {
            kind: "undefined",
            slope: None,
            intercept: None,
            points: None,
            reason: Some(reason.clone()),
        },
    };
    let summary = ScalingSummary {
        config_hash: sha256_hex(text.as_bytes()),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        deltas: study.deltas.clone(),
        excess_sup: study.excess_sup.clone(),
        cauchy: study.cauchy.clone(),
        vacuous: study.is_vacuous(),
        fit,
        checks: checks.clone(),
    };
    write_atomic(&dir.join("scaling.json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    write_atomic(&dir.join("checks.csv"), &checks_csv(&checks)?)?;

    println!("{:>10} {:>14} {:>14}", "delta", "excess_sup", "cauchy_next");
    for (i, run) in study.runs.iter().enumerate() {
        let c = study.cauchy.get(i).map(|c| format!("{c:>14.6e}")).unwrap_or_default();
        println!("{:>10} {:>14.6e} {c}", run.delta, run.excess_sup);
    }
    match &study.fit {
        ExcessFit::Slope { slope, points, .. } => println!("fitted excess slope {slope:.4} over {points} points"),
        ExcessFit::Vacuous => println!("excess is zero for every delta (bound holds vacuously)"),
        ExcessFit::Undefined { reason } => println!("excess slope undefined: {reason}"),
    }
    print_checks(&checks);
    println!("artifacts written to {}", dir.display());

    if let ExcessFit::Undefined { .. } = study.fit {
        study.slope()?;
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(AppError::ChecksFailed {
            failed,
            total: checks.len(),
        });
    }
    Ok(study)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(n: usize, len: f64) -> Arc<TorusGrid> {
        Arc::new(TorusGrid::new(&[n], &[(0.0, len)]).unwrap())
    }

    #[test]
    fn noise_is_seeded_and_bounded() {
        let g = grid1(64, 8.0);
        let a = seeded_noise(&g, 0.4, 0.1, 7);
        let b = seeded_noise(&g, 0.4, 0.1, 7);
        let c = seeded_noise(&g, 0.4, 0.1, 8);
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        assert!(a.values().iter().all(|v| (0.3..0.5).contains(v)));
    }

    #[test]
    fn tanh_profile_signs_and_zeros() {
        let g = grid1(64, 16.0);
        let f = tanh_profile(&g, &[4.0, 12.0], 1.0);
        // x = 8 is between the centers, x = 0 outside
        assert!(f.values()[32] > 0.99);
        assert!(f.values()[0] < -0.99);
        assert_eq!(f.values()[16], 0.0);
        assert_eq!(f.values()[48], 0.0);
        // periodic wrap: a center past the right end acts like one near the left
        let h = tanh_profile(&g, &[-4.0, 4.0], 1.0);
        assert!(h.values()[0] > 0.99);
        assert!(h.values()[32] < -0.99);
        assert!(f.linf() < 1.0);
    }

    #[test]
    fn worker_cap() {
        assert_eq!(worker_count(Some(3)), 3);
        assert_eq!(worker_count(Some(0)), 1);
        assert!(worker_count(None) >= 1);
    }
}
