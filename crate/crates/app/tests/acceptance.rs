//! Acceptance criteria A1–A9. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anideg_ch::run::{build_anisotropy, build_grid, build_initial, build_material, cmd_run, load_config};
use anideg_ch::verify::{
    anisotropy_fixtures, euler_identity_defect, gradient_fd_defect, phi_closed_vs_quadrature,
    sampled_b_delta_lipschitz,
};
use anideg_core::estimates::{
    check_energy_law, check_energy_monotone, check_entropy_estimate, check_excess_entropy_bound,
    check_h2_monotonicity, check_lipschitz_composition, check_weak_residual, h2_terms, run_delta_continuation,
    ContinuationSetup, ExcessFit,
};
use anideg_core::material::regularize_initial;
use anideg_core::stepper::{step_explicit, step_imex, MemoryObserver};
use anideg_core::{
    advance, AnisotropySpec, Field, MaterialSpec, RegularizedMaterial, SimState, SolverConfig, SpectralSolver,
    TorusGrid, VectorField,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// The 1D reference problem, loaded from the shipped config.
struct Reference {
    state: SimState,
    solver: SolverConfig,
    setup: ContinuationSetup,
}

fn reference() -> Reference {
    let path = configs().join("reference_1d.cfg");
    let (cfg, _) = load_config(&path).expect("reference config");
    let grid = build_grid(&cfg).unwrap();
    let aniso = build_anisotropy(&cfg).unwrap();
    let base = build_material(&cfg).unwrap();
    let phi0 = build_initial(&cfg, &grid, &configs()).unwrap();
    let material = Arc::new(RegularizedMaterial::new(base.clone(), cfg.material.delta).unwrap());
    let phi = regularize_initial(&phi0, cfg.material.delta).unwrap();
    let state = SimState::new(phi, material, Arc::new(aniso.clone())).unwrap();
    Reference {
        state,
        solver: SolverConfig {
            snapshot_stride: 1,
            ..cfg.solver.clone()
        },
        setup: ContinuationSetup {
            material: base,
            aniso,
            solver: cfg.solver,
            phi0,
        },
    }
}

struct Trajectory {
    last: SimState,
    obs: MemoryObserver,
    initial: SimState,
}

fn a1(tr: &Trajectory) -> Outcome {
    let m0 = tr.initial.phi.mean();
    let drift = (tr.last.phi.mean() - m0).abs() / m0.abs();
    let worst = tr
        .obs
        .records
        .iter()
        .map(|r| (r.mass - tr.obs.records[0].mass).abs() / tr.obs.records[0].mass.abs())
        .fold(drift, f64::max);
    let msg = format!("{} IMEX steps, max relative mean drift {worst:.2e} (limit 1e-12)", tr.last.step_count);
    if tr.last.step_count >= 10_000 && worst <= 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn a2(tr: &Trajectory) -> Outcome {
    let law = check_energy_law(&tr.obs.records, 1e-6).map_err(|e| e.to_string())?;
    let mono = check_energy_monotone(&tr.obs.records, 0.0).map_err(|e| e.to_string())?;
    Ok(format!(
        "energy law min margin {:.2e}, raw energy nonincreasing over {} records (min drop {:.2e})",
        law.margin,
        tr.obs.records.len(),
        mono.margin
    ))
}

fn a3(tr: &Trajectory) -> Outcome {
    let ent = check_entropy_estimate(&tr.obs.records, &tr.obs.snapshots, &tr.initial.material, 1.0, 1e-4)
        .map_err(|e| e.to_string())?;
    let mut iso_gap = 0.0_f64;
    for (_, phi) in &tr.obs.snapshots {
        let (l, r) = h2_terms(phi, &tr.initial.aniso, 1.0);
        iso_gap = iso_gap.max((l - r).abs() / r.abs().max(f64::MIN_POSITIVE));
    }
    if iso_gap > 1e-12 {
        return Err(format!("isotropic H2 identity off by {iso_gap:.2e} relative"));
    }
    check_h2_monotonicity(&tr.last.phi, &tr.initial.aniso, 1e-12).map_err(|e| e.to_string())?;

    // 2D sum-of-ellipsoids run from the same kind of datum
    let path = configs().join("ellipsoid_2d.cfg");
    let (cfg, _) = load_config(&path).map_err(|e| e.to_string())?;
    let grid = build_grid(&cfg).unwrap();
    let aniso = Arc::new(build_anisotropy(&cfg).unwrap());
    let material = Arc::new(RegularizedMaterial::new(build_material(&cfg).unwrap(), cfg.material.delta).unwrap());
    let phi = regularize_initial(&build_initial(&cfg, &grid, &configs()).unwrap(), cfg.material.delta).unwrap();
    let state = SimState::new(phi, material, aniso.clone()).unwrap();
    let mut obs = MemoryObserver::default();
    let solver = SolverConfig {
        snapshot_stride: 10,
        ..cfg.solver
    };
    advance(state, &solver, &mut obs).map_err(|e| e.to_string())?;
    let mut min_rel = f64::INFINITY;
    for (_, phi) in &obs.snapshots {
        let r = check_h2_monotonicity(phi, &aniso, 0.0).map_err(|e| e.to_string())?;
        min_rel = min_rel.min(r.margin / r.rhs.abs().max(f64::MIN_POSITIVE));
    }
    Ok(format!(
        "entropy estimate min margin {:.2e} over {} snapshots; isotropic H2 gap {iso_gap:.1e}; \
         sum-of-ellipsoids H2 inequality on {} snapshots, min relative margin {min_rel:.3}",
        ent.margin,
        tr.obs.snapshots.len(),
        obs.snapshots.len()
    ))
}

fn a4_a5(reference: &Reference) -> (Outcome, Outcome) {
    let deltas = [0.2, 0.1, 0.05, 0.025];
    let study = match run_delta_continuation(&reference.setup, &deltas, 4) {
        Ok(s) => s,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let table: Vec<String> = study
        .deltas
        .iter()
        .zip(&study.excess_sup)
        .map(|(d, e)| format!("{d}:{e:.3e}"))
        .collect();
    let a4 = match &study.fit {
        ExcessFit::Slope { slope, points, .. } => {
            let msg = format!("slope {slope:.3} over {points} points (need >= 0.3), sup excess {}", table.join(" "));
            if *slope >= 0.3 {
                Ok(msg)
            } else {
                Err(msg)
            }
        }
        ExcessFit::Vacuous => Ok("vacuous: excess is zero for every delta".into()),
        ExcessFit::Undefined { reason } => Err(format!("slope undefined: {reason}")),
    };
    let mut records = 0;
    let mut min_margin = f64::INFINITY;
    for run in &study.runs {
        match check_excess_entropy_bound(&run.records, &run.material) {
            Ok(r) => min_margin = min_margin.min(r.margin),
            Err(e) => return (a4, Err(format!("delta = {}: {e}", run.delta))),
        }
        records += run.records.len();
    }
    (
        a4,
        Ok(format!("pointwise excess bound on {records} records, min margin {min_margin:.3e}")),
    )
}

/// Smooth 1D state at resolution `n` for the refinement study.
fn smooth_state(n: usize) -> SimState {
    let len = 16.0;
    let g = Arc::new(TorusGrid::new(&[n], &[(0.0, len)]).unwrap());
    let k = 2.0 * std::f64::consts::PI / len;
    let phi = Field::from_fn(g, |x| 0.3 + 0.4 * (k * x[0]).sin() + 0.15 * (2.0 * k * x[0] + 0.7).cos());
    let mut a = AnisotropySpec::isotropic(1).unwrap();
    a.certify_constants(1000, 1).unwrap();
    let base = MaterialSpec::log_quench(1.0, 2.75, 1.0).unwrap();
    let mat = Arc::new(RegularizedMaterial::new(base, 0.05).unwrap());
    SimState::new(phi, mat, Arc::new(a)).unwrap()
}

fn a6(tr: &Trajectory) -> Outcome {
    let aux = [&tr.initial, &tr.last]
        .iter()
        .map(|s| check_weak_residual(s, 12, 5).auxiliary)
        .fold(0.0, f64::max);
    if aux > 1e-10 {
        return Err(format!("auxiliary identity residual {aux:.2e} exceeds 1e-10"));
    }
    let ns = [32usize, 64, 128];
    let res: Vec<f64> = ns.iter().map(|&n| check_weak_residual(&smooth_state(n), 12, 5).flux).collect();
    let xs: Vec<f64> = ns.iter().map(|&n| (16.0 / n as f64).ln()).collect();
    let ys: Vec<f64> = res.iter().map(|r| r.ln()).collect();
    let mx = xs.iter().sum::<f64>() / 3.0;
    let my = ys.iter().sum::<f64>() / 3.0;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let msg = format!(
        "auxiliary residual {aux:.2e}; flux residuals {:.3e} {:.3e} {:.3e}, order {slope:.3} (need 2.0 +- 0.3)",
        res[0], res[1], res[2]
    );
    if (slope - 2.0).abs() <= 0.3 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn a7(reference: &Reference) -> Outcome {
    let s0 = &reference.state;
    let kappa = reference
        .solver
        .resolve_kappa(&s0.aniso, &s0.material)
        .map_err(|e| e.to_string())?;
    let solver = SpectralSolver::new(s0.phi.grid().clone());
    let (mut se, mut si) = (s0.clone(), s0.clone());
    for _ in 0..1000 {
        se = step_explicit(&se, 1e-6).map_err(|e| e.to_string())?;
        si = step_imex(&si, 1e-6, kappa, &solver).map_err(|e| e.to_string())?;
    }
    let diff = se.phi.zip_map(&si.phi, |a, b| a - b).linf();
    let change = se.phi.zip_map(&s0.phi, |a, b| a - b).linf();
    let msg = format!("max |IMEX - explicit| = {diff:.3e} after 1000 steps (limit 1e-4; solution moved {change:.2e})");
    if diff <= 1e-4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn a8() -> Outcome {
    let mut euler = 0.0_f64;
    let mut fd = 0.0_f64;
    for (i, (_, a)) in anisotropy_fixtures().into_iter().enumerate() {
        euler = euler.max(euler_identity_defect(&a, 100_000, 40 + i as u64));
        fd = fd.max(gradient_fd_defect(&a, 10_000, 50 + i as u64));
    }
    if euler > 1e-12 || fd > 1e-6 {
        return Err(format!("Euler defect {euler:.2e}, gradient defect {fd:.2e}"));
    }

    let deltas = [0.2, 0.1, 0.05, 0.025, 0.0125];
    let mut phi_err = 0.0_f64;
    let bases = [
        MaterialSpec::log_quench(1.0, 2.75, 1.0).unwrap(),
        MaterialSpec::log_quench(0.5, 3.0, 1.0).unwrap(),
    ];
    for base in &bases {
        for &d in &deltas {
            match phi_closed_vs_quadrature(base, d) {
                Ok(Some(e)) => phi_err = phi_err.max(e),
                Ok(None) => return Err("log quench lost its closed form".into()),
                Err(e) => return Err(e.to_string()),
            }
        }
    }
    if phi_err > 1e-8 {
        return Err(format!("closed form vs quadrature differs by {phi_err:.2e}"));
    }

    let base = &bases[0];
    let l = base.mobility_lipschitz();
    // independent oracle: b(r) = 1 - r² has sup|b'| = 2 on [-1, 1]
    if (l - 2.0).abs() > 1e-12 {
        return Err(format!("mobility Lipschitz constant {l} differs from 2"));
    }
    let mut lip_spread = 0.0_f64;
    let mut lip_excess = 0.0_f64;
    for &d in &deltas {
        let m = RegularizedMaterial::new(base.clone(), d).unwrap();
        lip_spread = lip_spread.max((m.base().mobility_lipschitz() - l).abs());
        lip_excess = lip_excess.max(sampled_b_delta_lipschitz(&m) - l);
    }
    if lip_spread > 1e-12 || lip_excess > 1e-12 {
        return Err(format!("b_delta Lipschitz constant varies by {lip_spread:.2e}, exceeded by {lip_excess:.2e}"));
    }

    let g = Arc::new(TorusGrid::new(&[32, 32], &[(0.0, 8.0), (0.0, 8.0)]).unwrap());
    let mut ell = AnisotropySpec::ellipsoid_sum(2, vec![vec![1.0, 0.0, 0.0, 0.25], vec![0.5, 0.2, 0.2, 1.5]]).unwrap();
    ell.certify_constants(20_000, 3).unwrap();
    let l_agrad = ell.agrad_lipschitz_bound();
    let mat = RegularizedMaterial::new(base.clone(), 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let amp = rng.random_range(0.1..1.5);
        let v: Vec<f64> = (0..g.len()).map(|_| amp * rng.random_range(-1.0..1.0)).collect();
        let phi = Field::new(g.clone(), v).unwrap();
        let u = VectorField { comps: vec![phi.clone()] };
        let rb = check_lipschitz_composition(&u, |x, o| o[0] = mat.eval_b_delta(x[0]), 1, l).map_err(|e| e.to_string())?;
        let ra = check_lipschitz_composition(&phi.grad_h(), |x, o| ell.agrad_into(x, o), 2, l_agrad)
            .map_err(|e| e.to_string())?;
        worst = worst.max(rb.lhs / rb.rhs).max(ra.lhs / ra.rhs);
    }
    Ok(format!(
        "Euler {euler:.1e}, gradient {fd:.1e}, closed form vs quadrature {phi_err:.1e}, \
         Lipschitz constant {l} for every delta, composition bound on 100 fields (max ratio {worst:.3})"
    ))
}

fn a9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = configs().join("reference_1d.cfg");
    let mut csvs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        cmd_run(&path, Some(&out)).map_err(|e| e.to_string())?;
        csvs.push(std::fs::read(out.join("diagnostics.csv")).map_err(|e| e.to_string())?);
    }
    if csvs[0] == csvs[1] {
        Ok(format!("two runs wrote identical {} byte diagnostics", csvs[0].len()))
    } else {
        Err("diagnostics differ between identical runs".into())
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let reference = reference();
    let mut obs = MemoryObserver::default();
    let last = advance(reference.state.clone(), &reference.solver, &mut obs).expect("reference run");
    let tr = Trajectory {
        last,
        obs,
        initial: reference.state.clone(),
    };

    let (r4, r5) = a4_a5(&reference);
    let results: Vec<(&str, &str, Outcome)> = vec![
        ("A1", "mass conservation", a1(&tr)),
        ("A2", "energy law", a2(&tr)),
        ("A3", "entropy and H2 estimate", a3(&tr)),
        ("A4", "excess decay in delta", r4),
        ("A5", "pointwise excess bound", r5),
        ("A6", "weak-form residuals", a6(&tr)),
        ("A7", "IMEX vs explicit", a7(&reference)),
        ("A8", "structural identities", a8()),
        ("A9", "determinism", a9()),
    ];
    let mut failed = 0;
    for (id, what, r) in &results {
        match r {
            Ok(m) => println!("{id} PASS {what}: {m}"),
            Err(m) => {
                failed += 1;
                println!("{id} FAIL {what}: {m}");
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1} s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
