//! Property suites on built-in fixtures, run by `anideg-ch verify`.

use std::path::Path;
use std::sync::Arc;

use anideg_core::estimates::{
    check_energy_law, check_energy_monotone, check_entropy_estimate, check_excess_entropy_bound,
    check_h2_monotonicity, check_lipschitz_composition, check_weak_residual, chain_rule_defect, h2_terms,
};
use anideg_core::grid::{read_snapshot, write_snapshot};
use anideg_core::material::PhiEvaluation;
use anideg_core::stepper::MemoryObserver;
use anideg_core::{
    advance, AnisotropySpec, Field, MaterialSpec, Order, RegularizedMaterial, SimState, SolverConfig, SpectralSolver,
    TorusGrid, VectorField,
};
use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{AppError, AppResult};
use crate::output::{check_row, checks_csv, write_atomic, CheckRow};
use crate::run::{seeded_noise, print_checks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Anisotropy,
    Material,
    Grid,
    Estimates,
    All,
}

fn row(name: impl Into<String>, lhs: f64, rhs: f64) -> CheckRow {
    CheckRow {
        name: name.into(),
        lhs,
        rhs,
        margin: rhs - lhs,
        pass: lhs <= rhs,
    }
}

/// A point with random direction and a magnitude spread over four decades.
fn sample_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    (0..d).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
}

/// `max |A'(p)·p - 2A(p)| / max(1, 2A(p))` over `n` seeded points.
pub fn euler_identity_defect(a: &AnisotropySpec, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = vec![0.0; a.dim()];
    (0..n)
        .map(|_| {
            let p = sample_point(&mut rng, a.dim());
            a.agrad_into(&p, &mut g);
            let lhs: f64 = g.iter().zip(&p).map(|(x, y)| x * y).sum();
            let two_a = 2.0 * a.a(&p);
            (lhs - two_a).abs() / two_a.max(1.0)
        })
        .fold(0.0, f64::max)
}

/// `max |A'(p) - ∇_FD A(p)| / max(1, |A'(p)|)` with central differences.
pub fn gradient_fd_defect(a: &AnisotropySpec, n: usize, seed: u64) -> f64 {
    let d = a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = vec![0.0; d];
    let mut worst = 0.0_f64;
    for _ in 0..n {
        let p = sample_point(&mut rng, d);
        a.agrad_into(&p, &mut g);
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h = 1e-6 * norm.max(1e-3);
        let mut err = 0.0;
        for i in 0..d {
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[i] += h;
            pm[i] -= h;
            let fd = (a.a(&pp) - a.a(&pm)) / (2.0 * h);
            err += (fd - g[i]).powi(2);
        }
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(err.sqrt() / gn.max(1.0).max(norm));
    }
    worst
}

/// `max |A'(p) - A'(q)| / (L |p - q|)` over seeded pairs.
fn agrad_lipschitz_ratio(a: &AnisotropySpec, n: usize, seed: u64) -> f64 {
    let d = a.dim();
    let l = a.agrad_lipschitz_bound();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut gp, mut gq) = (vec![0.0; d], vec![0.0; d]);
    (0..n)
        .map(|_| {
            let p = sample_point(&mut rng, d);
            let q = sample_point(&mut rng, d);
            a.agrad_into(&p, &mut gp);
            a.agrad_into(&q, &mut gq);
            let num: f64 = gp.iter().zip(&gq).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let den: f64 = p.iter().zip(&q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            num / (l * den)
        })
        .fold(0.0, f64::max)
}

pub fn anisotropy_fixtures() -> Vec<(&'static str, AnisotropySpec)> {
    vec![
        ("isotropic_2d", AnisotropySpec::isotropic(2).expect("valid")),
        (
            "quadratic_2d",
            AnisotropySpec::quadratic(2, vec![2.0, 0.5, 0.5, 1.0]).expect("valid"),
        ),
        (
            "ellipsoid_sum_2d",
            AnisotropySpec::ellipsoid_sum(2, vec![vec![1.0, 0.0, 0.0, 0.25], vec![0.5, 0.2, 0.2, 1.5]]).expect("valid"),
        ),
        (
            "ellipsoid_sum_3d",
            AnisotropySpec::ellipsoid_sum(
                3,
                vec![
                    vec![1.0, 0.1, 0.0, 0.1, 0.5, 0.0, 0.0, 0.0, 2.0],
                    vec![0.3, 0.0, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0, 0.3],
                ],
            )
            .expect("valid"),
        ),
    ]
}

/// Indefinite `M = diag(1, -1)`, which must fail certification.
pub fn indefinite_fixture() -> AnisotropySpec {
    AnisotropySpec::quadratic(2, vec![1.0, 0.0, 0.0, -1.0]).expect("symmetric")
}

/// Outcome of a suite: rows, plus the first fatal error met by a fixture.
#[derive(Debug, Default)]
pub struct SuiteReport {
    pub rows: Vec<CheckRow>,
    pub error: Option<anideg_core::Error>,
}

impl SuiteReport {
    fn fatal(&mut self, name: &str, e: anideg_core::Error) {
        self.rows.push(CheckRow {
            name: format!("{name} ({})", e.class()),
            lhs: f64::NAN,
            rhs: f64::NAN,
            margin: f64::NAN,
            pass: false,
        });
        self.error.get_or_insert(e);
    }

    fn push(&mut self, name: &str, outcome: anideg_core::Result<anideg_core::estimates::CheckReport>) {
        match check_row(name, outcome) {
            Ok(mut r) => {
                r.name = name.to_string();
                self.rows.push(r);
            }
            Err(AppError::Core(e)) => self.fatal(name, e),
            Err(e) => self.fatal(name, anideg_core::Error::Io(e.to_string())),
        }
    }
}

pub fn anisotropy_suite(inject_failure: bool) -> SuiteReport {
    let mut rep = SuiteReport::default();
    let mut fixtures = anisotropy_fixtures();
    if inject_failure {
        fixtures.push(("quadratic_indefinite", indefinite_fixture()));
    }
    for (name, mut a) in fixtures {
        match a.certify_constants(5000, 11) {
            Ok(c) => rep.rows.push(row(format!("certify[{name}] c_A > 0"), -c.c_a, 0.0)),
            Err(e) => {
                rep.fatal(&format!("certify[{name}]"), e);
                continue;
            }
        }
        rep.rows.push(row(format!("euler_identity[{name}]"), euler_identity_defect(&a, 10_000, 1), 1e-12));
        rep.rows.push(row(format!("gradient_fd[{name}]"), gradient_fd_defect(&a, 2_000, 2), 1e-6));
        rep.rows.push(row(
            format!("agrad_lipschitz[{name}]"),
            agrad_lipschitz_ratio(&a, 10_000, 3),
            1.0 + 1e-12,
        ));
    }
    rep
}

/// `max |Φ_δ^closed - Φ_δ^quadrature|` over a grid on `[-1.2, 1.2]`, or
/// `None` when the material has no closed form.
pub fn phi_closed_vs_quadrature(base: &MaterialSpec, delta: f64) -> anideg_core::Result<Option<f64>> {
    let closed = RegularizedMaterial::new(base.clone(), delta)?;
    if !closed.uses_closed_form_phi() {
        return Ok(None);
    }
    let quad = RegularizedMaterial::with_evaluation(base.clone(), delta, PhiEvaluation::Quadrature)?;
    let worst = (0..=480)
        .map(|i| -1.2 + 2.4 * i as f64 / 480.0)
        .map(|r| {
            [Order::Value, Order::First]
                .iter()
                .map(|&o| (closed.eval_phi_delta(r, o) - quad.eval_phi_delta(r, o)).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    Ok(Some(worst))
}

/// Largest difference quotient of `b_δ` over a fine grid on `[-1.5, 1.5]`.
pub fn sampled_b_delta_lipschitz(mat: &RegularizedMaterial) -> f64 {
    let n = 60_000;
    let xs: Vec<f64> = (0..=n).map(|i| -1.5 + 3.0 * i as f64 / n as f64).collect();
    xs.windows(2)
        .map(|w| (mat.eval_b_delta(w[1]) - mat.eval_b_delta(w[0])).abs() / (w[1] - w[0]))
        .fold(0.0, f64::max)
}

pub fn material_fixtures() -> Vec<(&'static str, MaterialSpec)> {
    vec![
        ("log_quench_m1", MaterialSpec::log_quench(1.0, 2.75, 1.0).expect("valid")),
        ("log_quench_m2", MaterialSpec::log_quench(1.0, 3.0, 2.0).expect("valid")),
        ("double_well_m1", MaterialSpec::double_well(1.0).expect("valid")),
    ]
}

pub fn material_suite() -> SuiteReport {
    let mut rep = SuiteReport::default();
    let deltas = [0.2, 0.1, 0.05, 0.025];
    for (name, base) in material_fixtures() {
        let l = base.mobility_lipschitz();
        for &delta in &deltas {
            let mat = match RegularizedMaterial::new(base.clone(), delta) {
                Ok(m) => m,
                Err(e) => {
                    rep.fatal(&format!("regularize[{name}, delta={delta}]"), e);
                    continue;
                }
            };
            rep.rows.push(row(
                format!("b_delta_lipschitz[{name}, delta={delta}]"),
                sampled_b_delta_lipschitz(&mat),
                l * (1.0 + 1e-12),
            ));
            match phi_closed_vs_quadrature(&base, delta) {
                Ok(Some(err)) => rep
                    .rows
                    .push(row(format!("phi_closed_vs_quadrature[{name}, delta={delta}]"), err, 1e-8)),
                Ok(None) => {}
                Err(e) => rep.fatal(&format!("phi_quadrature[{name}, delta={delta}]"), e),
            }
            let zs: Vec<f64> = (0..=600).map(|i| -3.0 + 6.0 * i as f64 / 600.0).collect();
            let min_phi = zs.iter().map(|&z| mat.eval_phi_delta(z, Order::Value)).fold(f64::INFINITY, f64::min);
            rep.rows.push(row(format!("phi_delta_nonnegative[{name}, delta={delta}]"), -min_phi, 1e-14));
            let bad = zs.iter().filter(|&&z| !mat.check_excess_bound(z)).count();
            rep.rows
                .push(row(format!("pointwise_excess_bound[{name}, delta={delta}]"), bad as f64, 0.0));
            let max_second = zs
                .iter()
                .map(|&z| mat.eval_phi_delta(z, Order::Second).abs())
                .fold(0.0, f64::max);
            rep.rows.push(row(
                format!("phi_second_bounded[{name}, delta={delta}]"),
                max_second,
                mat.c_delta() * (1.0 + 1e-12),
            ));
        }
    }
    rep
}

fn random_field(grid: &Arc<TorusGrid>, rng: &mut ChaCha8Rng) -> Field {
    let v = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Field::new(grid.clone(), v).expect("length matches grid")
}

pub fn grid_suite() -> SuiteReport {
    let mut rep = SuiteReport::default();
    let grids = [
        TorusGrid::new(&[64], &[(0.0, 8.0)]),
        TorusGrid::new(&[16, 32], &[(0.0, 2.0), (-1.0, 3.0)]),
        TorusGrid::new(&[8, 8, 16], &[(0.0, 1.0), (0.0, 1.0), (0.0, 2.0)]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for g in grids {
        let g = match g {
            Ok(g) => Arc::new(g),
            Err(e) => {
                rep.fatal("grid", e);
                continue;
            }
        };
        let d = g.dim();
        let f = random_field(&g, &mut rng);
        let v = VectorField {
            comps: (0..d).map(|_| random_field(&g, &mut rng)).collect(),
        };
        let scale = f.grad_h().l2() * v.l2() + f.l2() * v.div_h().l2();
        let adj = (f.grad_h().inner(&v) + f.inner(&v.div_h())).abs() / scale;
        rep.rows.push(row(format!("grad_div_adjoint[{d}d]"), adj, 1e-13));
        let lap = f.lap_h();
        let dg = f.grad_h().div_h();
        let lap_err = lap.zip_map(&dg, |a, b| a - b).linf() / lap.linf();
        rep.rows.push(row(format!("laplacian_is_div_grad[{d}d]"), lap_err, 1e-14));
        rep.rows.push(row(
            format!("divergence_has_zero_mean[{d}d]"),
            v.div_h().integral().abs() / (v.div_h().l2() * g.volume().sqrt()),
            1e-13,
        ));
        let solver = SpectralSolver::new(g.clone());
        match solver.solve(&f, |k| 1.0 + solver.laplacian_symbol(k)) {
            Ok(u) => {
                let back = u.zip_map(&u.lap_h(), |a, b| a - b);
                let err = back.zip_map(&f, |a, b| a - b).linf() / f.linf();
                rep.rows.push(row(format!("spectral_solve_roundtrip[{d}d]"), err, 1e-12));
            }
            Err(e) => rep.fatal("spectral_solve", e),
        }
        let mut buf = Vec::new();
        let roundtrip = write_snapshot(&mut buf, &f, 1.5).and_then(|_| read_snapshot(&buf[..]));
        match roundtrip {
            Ok((h, t)) => {
                let same = h.values() == f.values() && t == 1.5 && h.grid().points() == g.points();
                rep.rows.push(row(format!("snapshot_roundtrip[{d}d]"), if same { 0.0 } else { 1.0 }, 0.0));
            }
            Err(e) => rep.fatal("snapshot_roundtrip", e),
        }
    }
    rep
}

/// The short 1D log-quench trajectory used by the estimates suite.
fn short_reference_run() -> anideg_core::Result<(SimState, MemoryObserver, Arc<RegularizedMaterial>)> {
    let g = Arc::new(TorusGrid::new(&[64], &[(0.0, 16.0)])?);
    let base = MaterialSpec::log_quench(1.0, 2.75, 1.0)?;
    let mat = Arc::new(RegularizedMaterial::new(base, 0.05)?);
    let mut a = AnisotropySpec::isotropic(1)?;
    a.certify_constants(1000, 1)?;
    let phi = anideg_core::material::regularize_initial(&seeded_noise(&g, 0.4, 0.1, 7), 0.05)?;
    let state = SimState::new(phi, mat.clone(), Arc::new(a))?;
    let cfg = SolverConfig {
        dt_init: 1e-6,
        dt_max: 1e-2,
        t_final: 5.0,
        snapshot_stride: 1,
        ..Default::default()
    };
    let mut obs = MemoryObserver::default();
    let last = advance(state, &cfg, &mut obs)?;
    Ok((last, obs, mat))
}

pub fn estimates_suite() -> SuiteReport {
    let mut rep = SuiteReport::default();
    let (last, obs, mat) = match short_reference_run() {
        Ok(v) => v,
        Err(e) => {
            rep.fatal("reference_run", e);
            return rep;
        }
    };
    let m0 = obs.records[0].mass;
    let drift = obs.records.iter().map(|r| (r.mass - m0).abs()).fold(0.0, f64::max) / m0.abs();
    rep.rows.push(row("mass_conservation", drift, 1e-12));
    rep.push("energy_law", check_energy_law(&obs.records, 1e-6));
    rep.push("energy_monotone", check_energy_monotone(&obs.records, 1e-12));
    rep.push(
        "entropy_estimate",
        check_entropy_estimate(&obs.records, &obs.snapshots, &mat, 1.0, 1e-4),
    );
    rep.push("excess_entropy_bound", check_excess_entropy_bound(&obs.records, &mat));
    let iso_gap = obs
        .snapshots
        .iter()
        .map(|(_, p)| {
            let (l, r) = h2_terms(p, &last.aniso, 1.0);
            (l - r).abs() / r.abs().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);
    rep.rows.push(row("h2_isotropic_equality", iso_gap, 1e-12));
    let weak = check_weak_residual(&last, 8, 3);
    rep.rows.push(row("auxiliary_weak_identity", weak.auxiliary, 1e-10));
    rep.rows
        .push(row("chain_rule_defect_finite", if chain_rule_defect(&last.phi, &mat).is_finite() { 0.0 } else { 1.0 }, 0.0));

    // H² inequality and Lipschitz compositions on seeded 2D fields
    let g2 = match TorusGrid::new(&[32, 32], &[(0.0, 8.0), (0.0, 8.0)]) {
        Ok(g) => Arc::new(g),
        Err(e) => {
            rep.fatal("grid_2d", e);
            return rep;
        }
    };
    let mut ell = AnisotropySpec::ellipsoid_sum(2, vec![vec![1.0, 0.0, 0.0, 0.25], vec![0.5, 0.2, 0.2, 1.5]])
        .expect("valid");
    if let Err(e) = ell.certify_constants(20_000, 3) {
        rep.fatal("certify_ellipsoid", e);
        return rep;
    }
    let l_agrad = ell.agrad_lipschitz_bound();
    let l_b = mat.base().mobility_lipschitz();
    for seed in 0..5 {
        let phi = seeded_noise(&g2, 0.0, 0.9, 100 + seed);
        rep.push(&format!("h2_monotonicity[seed={seed}]"), check_h2_monotonicity(&phi, &ell, 0.0));
        let u = VectorField { comps: vec![phi.clone()] };
        rep.push(
            &format!("lipschitz_b_delta[seed={seed}]"),
            check_lipschitz_composition(&u, |x, out| out[0] = mat.eval_b_delta(x[0]), 1, l_b),
        );
        rep.push(
            &format!("lipschitz_agrad[seed={seed}]"),
            check_lipschitz_composition(&phi.grad_h(), |x, out| ell.agrad_into(x, out), 2, l_agrad),
        );
    }
    rep
}

pub fn run_suite(suite: Suite, inject_failure: bool) -> Vec<(&'static str, SuiteReport)> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Anisotropy | Suite::All) {
        out.push(("anisotropy", anisotropy_suite(inject_failure)));
    }
    if matches!(suite, Suite::Material | Suite::All) {
        out.push(("material", material_suite()));
    }
    if matches!(suite, Suite::Grid | Suite::All) {
        out.push(("grid", grid_suite()));
    }
    if matches!(suite, Suite::Estimates | Suite::All) {
        out.push(("estimates", estimates_suite()));
    }
    out
}

/// `anideg-ch verify`: prints a pass/fail table. A fixture that fails with
/// an error is reported by that error's class; otherwise any failed row
/// gives `ChecksFailed`.
pub fn cmd_verify(suite: Suite, inject_failure: bool, report: Option<&Path>) -> AppResult<Vec<CheckRow>> {
    let results = run_suite(suite, inject_failure);
    let mut all = Vec::new();
    let mut error = None;
    for (name, rep) in results {
        println!("== {name}");
        print_checks(&rep.rows);
        all.extend(rep.rows.into_iter().map(|mut r| {
            r.name = format!("{name}/{}", r.name);
            r
        }));
        if error.is_none() {
            error = rep.error;
        }
    }
    if let Some(path) = report {
        write_atomic(path, &checks_csv(&all)?)?;
    }
    let failed = all.iter().filter(|r| !r.pass).count();
    println!("{} of {} checks passed", all.len() - failed, all.len());
    if let Some(e) = error {
        return Err(e.into());
    }
    if failed > 0 {
        return Err(AppError::ChecksFailed {
            failed,
            total: all.len(),
        });
    }
    Ok(all)
}
