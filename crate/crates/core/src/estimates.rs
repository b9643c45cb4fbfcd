//! Discrete energy, entropy and excess functionals, checks of the a-priori
//! estimates on computed trajectories, and the δ-continuation study.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::anisotropy::AnisotropySpec;
use crate::error::{Error, Result};
use crate::grid::{Field, TorusGrid, VectorField};
use crate::material::{regularize_initial, MaterialSpec, Order, RegularizedMaterial};
use crate::stepper::{advance, agrad_field, face_mobility, MemoryObserver, SimState, SolverConfig};

/// One row of the diagnostics table.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `∫ φ`.
    pub mass: f64,
    /// `∫ A(∇_h φ) + ∫ ψ_δ(φ)`.
    pub energy: f64,
    /// `∫ Φ_δ(φ)`.
    pub entropy: f64,
    pub dissipation_cum: f64,
    /// `‖(|φ|-1)₊‖_{L²}`.
    pub excess_l2: f64,
    pub hess_sq_cum: f64,
    pub dt: f64,
    pub accepted: bool,
}

impl DiagnosticsRecord {
    pub fn from_state(state: &SimState, energy: f64, dt: f64, accepted: bool) -> Self {
        Self {
            t: state.t,
            mass: state.phi.integral(),
            energy,
            entropy: entropy(&state.phi, &state.material),
            dissipation_cum: state.dissipation_cum,
            excess_l2: excess_l2(&state.phi),
            hess_sq_cum: state.hess_sq_cum,
            dt,
            accepted,
        }
    }
}

pub fn energy(phi: &Field, material: &RegularizedMaterial, aniso: &AnisotropySpec) -> f64 {
    let p = phi.grad_h();
    let d = p.len();
    let mut pin = [0.0; 3];
    let mut total = 0.0;
    for (x, &r) in phi.values().iter().enumerate() {
        for j in 0..d {
            pin[j] = p.comps[j].values()[x];
        }
        total += aniso.a(&pin[..d]) + material.eval_psi_delta(r, Order::Value);
    }
    total * phi.grid().cell_volume()
}

pub fn entropy(phi: &Field, material: &RegularizedMaterial) -> f64 {
    phi.map(|r| material.eval_phi_delta(r, Order::Value)).integral()
}

pub fn excess_l2(phi: &Field) -> f64 {
    phi.map(|r| (r.abs() - 1.0).max(0.0).powi(2)).integral().sqrt()
}

/// Outcome of one inequality check `lhs <= rhs`.
///
/// `margin = rhs - lhs`; the check passes when `margin >= -slack`, where the
/// slack is the tolerance term of the individual check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

fn sorted_by_t(records: &[DiagnosticsRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    if records.windows(2).any(|w| !(w[1].t >= w[0].t)) {
        return Err(Error::InvalidArgument("records are not sorted by t".into()));
    }
    Ok(())
}

/// `E(t) + ½ dissipation_cum(t) <= E(0) + tol (1 + |E(0)|)` on every record.
/// The report carries the record with the smallest margin.
pub fn check_energy_law(records: &[DiagnosticsRecord], tol: f64) -> Result<CheckReport> {
    sorted_by_t(records)?;
    let e0 = records[0].energy;
    let slack = tol * (1.0 + e0.abs());
    let mut worst: Option<(f64, f64, f64)> = None;
    for r in records {
        let lhs = r.energy + 0.5 * r.dissipation_cum;
        let margin = e0 - lhs;
        // the initial record has margin 0 by construction; report a later one
        if worst.is_none_or(|w| margin < w.2 || (w.0 == records[0].t && r.t > w.0)) {
            worst = Some((r.t, lhs, margin));
        }
        if margin < -slack || !lhs.is_finite() {
            return Err(Error::EstimateViolated {
                check: "energy_law",
                t: r.t,
                lhs,
                rhs: e0,
            });
        }
    }
    let (_, lhs, margin) = worst.expect("nonempty");
    Ok(CheckReport {
        name: "energy_law".into(),
        lhs,
        rhs: e0,
        margin,
        pass: true,
    })
}

/// Raw energy nonincreasing between consecutive records up to
/// `tol (1 + |E|)` per record.
pub fn check_energy_monotone(records: &[DiagnosticsRecord], tol: f64) -> Result<CheckReport> {
    sorted_by_t(records)?;
    let mut worst = (records[0].energy, records[0].energy, 0.0);
    for w in records.windows(2) {
        let (prev, next) = (w[0].energy, w[1].energy);
        let margin = prev - next;
        if margin < worst.2 {
            worst = (next, prev, margin);
        }
        if margin < -tol * (1.0 + prev.abs()) {
            return Err(Error::EstimateViolated {
                check: "energy_monotone",
                t: w[1].t,
                lhs: next,
                rhs: prev,
            });
        }
    }
    Ok(CheckReport {
        name: "energy_monotone".into(),
        lhs: worst.0,
        rhs: worst.1,
        margin: worst.2,
        pass: true,
    })
}

/// `Σ_x ψ₂''(φ) |∇_h φ|² · cellvol`.
fn psi2_gradient_work(phi: &Field, material: &MaterialSpec) -> f64 {
    let p = phi.grad_h();
    let sq = p
        .comps
        .iter()
        .fold(Field::zeros(phi.grid().clone()), |acc, c| acc.zip_map(c, |a, b| a + b * b));
    phi.zip_map(&sq, |r, g| material.psi2(r, Order::Second) * g).integral()
}

/// Incremental form of [`check_entropy_estimate`]: feed states in time
/// order, starting with the initial one.
#[derive(Debug, Clone)]
pub struct EntropyTracker {
    material: Arc<RegularizedMaterial>,
    c_a: f64,
    tol: f64,
    ent0: Option<f64>,
    work: f64,
    prev: Option<(f64, f64)>,
    pushes: usize,
    worst: Option<CheckReport>,
}

impl EntropyTracker {
    pub fn new(material: Arc<RegularizedMaterial>, c_a: f64, tol: f64) -> Self {
        Self {
            material,
            c_a,
            tol,
            ent0: None,
            work: 0.0,
            prev: None,
            pushes: 0,
            worst: None,
        }
    }

    /// Adds the state `phi` at time `t` with its accumulated `hess_sq_cum`.
    pub fn push(&mut self, t: f64, phi: &Field, hess_sq_cum: f64) -> Result<()> {
        let ent = entropy(phi, &self.material);
        let ent0 = *self.ent0.get_or_insert(ent);
        if let Some((t_prev, rate)) = self.prev {
            self.work += (t - t_prev) * rate;
        }
        self.prev = Some((t, psi2_gradient_work(phi, self.material.base())));
        let lhs = ent + self.c_a * hess_sq_cum;
        let rhs = ent0 - self.work;
        let margin = rhs - lhs;
        if margin < -self.tol * (1.0 + rhs.abs()) || !lhs.is_finite() {
            return Err(Error::EstimateViolated {
                check: "entropy_estimate",
                t,
                lhs,
                rhs,
            });
        }
        self.pushes += 1;
        // the initial state has margin 0 by construction; report a later one
        if self.worst.as_ref().is_none_or(|w| margin < w.margin) || self.pushes == 2 {
            self.worst = Some(CheckReport {
                name: "entropy_estimate".into(),
                lhs,
                rhs,
                margin,
                pass: true,
            });
        }
        Ok(())
    }

    /// Report with the smallest margin seen so far.
    pub fn report(&self) -> Option<CheckReport> {
        self.worst.clone()
    }
}

/// Entropy estimate
///
/// ```text
/// ∫Φ_δ(φ(t)) + c_A hess_sq_cum(t) <= ∫Φ_δ(φ(0)) - ∫₀ᵗ ∫ψ₂''(φ)|∇_h φ|²
/// ```
///
/// checked at every snapshot, with slack `tol (1 + |rhs|)`. The time integral
/// on the right uses left-endpoint quadrature over the snapshot times, so
/// snapshots should be taken every step (`snapshot_stride = 1`) to match the
/// per-step accumulation of `hess_sq_cum`. Each snapshot needs a record with
/// the same `t`; the first snapshot is the initial state.
pub fn check_entropy_estimate(
    records: &[DiagnosticsRecord],
    snapshots: &[(f64, Field)],
    material: &Arc<RegularizedMaterial>,
    c_a: f64,
    tol: f64,
) -> Result<CheckReport> {
    sorted_by_t(records)?;
    if snapshots.is_empty() {
        return Err(Error::InvalidArgument("entropy check needs snapshots".into()));
    }
    let mut tracker = EntropyTracker::new(material.clone(), c_a, tol);
    let mut cursor = 0;
    for (t, phi) in snapshots {
        while cursor < records.len() && records[cursor].t < *t {
            cursor += 1;
        }
        match records.get(cursor) {
            Some(r) if r.t == *t => tracker.push(*t, phi, r.hess_sq_cum)?,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "no diagnostics record at snapshot time {t}"
                )))
            }
        }
    }
    Ok(tracker.report().expect("nonempty"))
}

/// `(c_A Σ_{i,j}‖∂_j⁺∂_i⁺φ‖², ⟨div_h A'(∇_h φ), Δ_h φ⟩)`.
pub fn h2_terms(phi: &Field, aniso: &AnisotropySpec, c_a: f64) -> (f64, f64) {
    let q = agrad_field(&phi.grad_h(), aniso);
    (c_a * phi.hessian_frobenius_sq(), q.div_h().inner(&phi.lap_h()))
}

/// `⟨div_h A'(∇_h φ), Δ_h φ⟩` rewritten by summation by parts as
/// `Σ_j Σ_x (A'(p(x+e_j)) - A'(p(x))) · (p(x+e_j) - p(x)) / h_j² · cellvol`.
pub fn h2_rhs_difference_form(phi: &Field, aniso: &AnisotropySpec) -> f64 {
    let p = phi.grad_h();
    let q = agrad_field(&p, aniso);
    let h = phi.grid().spacing();
    let mut total = 0.0;
    for (j, hj) in h.iter().enumerate() {
        let mut s = 0.0;
        for (pc, qc) in p.comps.iter().zip(&q.comps) {
            let dp = pc.shifted(j, 1).zip_map(pc, |a, b| a - b);
            let dq = qc.shifted(j, 1).zip_map(qc, |a, b| a - b);
            s += dp.values().iter().zip(dq.values()).map(|(a, b)| a * b).sum::<f64>();
        }
        total += s / (hj * hj);
    }
    total * phi.grid().cell_volume()
}

/// `lhs <= rhs + tol (1 + |rhs|)` for the pair returned by [`h2_terms`],
/// using the certified `c_A`.
pub fn check_h2_monotonicity(phi: &Field, aniso: &AnisotropySpec, tol: f64) -> Result<CheckReport> {
    let c_a = aniso
        .constants()
        .ok_or_else(|| Error::InvalidArgument("anisotropy constants are not certified".into()))?
        .c_a;
    let (lhs, rhs) = h2_terms(phi, aniso, c_a);
    let margin = rhs - lhs;
    if margin < -tol * (1.0 + rhs.abs()) || !margin.is_finite() {
        return Err(Error::EstimateViolated {
            check: "h2_monotonicity",
            t: f64::NAN,
            lhs,
            rhs,
        });
    }
    Ok(CheckReport {
        name: "h2_monotonicity".into(),
        lhs,
        rhs,
        margin,
        pass: true,
    })
}

/// A smooth periodic function on the torus, a random trigonometric
/// polynomial with modes `|k_i| <= 3` and coefficients decaying like
/// `1/(1+|k|²)`.
#[derive(Debug, Clone)]
pub struct SmoothTestFunction {
    modes: Vec<([i32; 3], f64, f64)>,
}

impl SmoothTestFunction {
    pub fn random(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut modes = Vec::new();
        let range = |i: usize| if i < dim { -3..=3 } else { 0..=0 };
        for k0 in range(0) {
            for k1 in range(1) {
                for k2 in range(2) {
                    let k = [k0, k1, k2];
                    let w = 1.0 / (1.0 + (k0 * k0 + k1 * k1 + k2 * k2) as f64);
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    modes.push((k, w * a, w * b));
                }
            }
        }
        Self { modes }
    }

    /// `cos(2π x_axis / L_axis)`.
    pub fn mode(axis: usize) -> Self {
        let mut k = [0; 3];
        k[axis] = 1;
        Self {
            modes: vec![(k, 1.0, 0.0)],
        }
    }

    /// Sampled at the nodes shifted by `offset · h`.
    pub fn sample(&self, grid: &Arc<TorusGrid>, offset: [f64; 3]) -> Field {
        let ext = grid.extents().to_vec();
        let h = grid.spacing().to_vec();
        Field::from_fn(grid.clone(), |x| {
            let mut theta = [0.0; 3];
            for i in 0..x.len() {
                let l = ext[i].1 - ext[i].0;
                theta[i] = 2.0 * std::f64::consts::PI * (x[i] + offset[i] * h[i] - ext[i].0) / l;
            }
            self.modes
                .iter()
                .map(|(k, a, b)| {
                    let arg: f64 = (0..3).map(|i| k[i] as f64 * theta[i]).sum();
                    a * arg.cos() + b * arg.sin()
                })
                .sum()
        })
    }
}

fn test_functions(dim: usize, n_test: usize, seed: u64) -> Vec<SmoothTestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_test)
        .map(|i| {
            if i < dim {
                SmoothTestFunction::mode(i)
            } else {
                SmoothTestFunction::random(dim, &mut rng)
            }
        })
        .collect()
}

fn h1_norm(f: &Field) -> f64 {
    (f.l2().powi(2) + f.h1_semi().powi(2)).sqrt()
}

fn h1_norm_vec(v: &VectorField) -> f64 {
    (v.l2().powi(2) + v.jacobian_l2().powi(2)).sqrt()
}

/// Normalized residuals of the flux and auxiliary identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakResiduals {
    /// `max_η |∫J·η - ∫w div_h(b_δ η) + ∫b_δ ψ_δ''(φ) ∇_h φ·η| / ‖η‖_{H¹}`.
    pub flux: f64,
    /// `max_ξ |∫wξ - ∫A'(∇_h φ)·∇_h ξ| / ‖ξ‖_{H¹}`.
    pub auxiliary: f64,
}

/// Residuals of the weak identities on a consistent state for `n_test`
/// seeded smooth test functions (the first `d` are single Fourier modes).
///
/// Face quantities (`b_δ`, `ψ_δ''`) are evaluated at the face-averaged `φ`
/// and `η_j` is sampled on the faces along axis `j`.
pub fn check_weak_residual(state: &SimState, n_test: usize, seed: u64) -> WeakResiduals {
    let grid = state.phi.grid().clone();
    let d = grid.dim();
    let material = &state.material;
    let b = face_mobility(&state.phi, material);
    let p = state.phi.grad_h();
    let psi2nd: Vec<Field> = (0..d)
        .map(|j| {
            state
                .phi
                .zip_map(&state.phi.shifted(j, 1), |a, c| material.eval_psi_delta(0.5 * (a + c), Order::Second))
        })
        .collect();
    let q = agrad_field(&p, &state.aniso);

    let fns = test_functions(d, n_test, seed);
    let mut flux = 0.0_f64;
    let mut auxiliary = 0.0_f64;
    for (i, f) in fns.iter().enumerate() {
        // η: component j from test function (i + j), sampled on faces
        let eta = VectorField {
            comps: (0..d)
                .map(|j| {
                    let mut off = [0.0; 3];
                    off[j] = 0.5;
                    fns[(i + j) % fns.len()].sample(&grid, off)
                })
                .collect(),
        };
        let b_eta = VectorField {
            comps: (0..d).map(|j| b.comps[j].zip_map(&eta.comps[j], |x, y| x * y)).collect(),
        };
        let mut r = state.flux.inner(&eta) - state.w.inner(&b_eta.div_h());
        for j in 0..d {
            let coef = b_eta.comps[j].zip_map(&psi2nd[j], |x, y| x * y);
            r += coef.inner(&p.comps[j]);
        }
        flux = flux.max(r.abs() / h1_norm_vec(&eta));

        let xi = f.sample(&grid, [0.0; 3]);
        let r = state.w.inner(&xi) - q.inner(&xi.grad_h());
        auxiliary = auxiliary.max(r.abs() / h1_norm(&xi));
    }
    WeakResiduals { flux, auxiliary }
}

/// `max_ζ |∫(φ_next - φ) ζ - dt ∫J·∇_h ζ| / ‖ζ‖_{H¹}` for one step of
/// length `dt` from `state`, using the flux stored on `state`.
pub fn mass_flux_residual(state: &SimState, phi_next: &Field, dt: f64, n_test: usize, seed: u64) -> f64 {
    let grid = state.phi.grid().clone();
    let diff = phi_next.zip_map(&state.phi, |a, b| a - b);
    test_functions(grid.dim(), n_test, seed)
        .iter()
        .map(|f| {
            let zeta = f.sample(&grid, [0.0; 3]);
            let r = diff.inner(&zeta) - dt * state.flux.inner(&zeta.grad_h());
            r.abs() / h1_norm(&zeta)
        })
        .fold(0.0, f64::max)
}

/// `‖D(v∘u)‖_{L²} <= L ‖Du‖_{L²}` with forward quotients, where `v` maps
/// `u.len()` components to `out_dim` components.
///
/// The discrete bound holds pointwise, `|∂⁺_j(v∘u)| <= L |∂⁺_j u|`, so no
/// extra constant is applied.
pub fn check_lipschitz_composition<V>(u: &VectorField, v: V, out_dim: usize, l: f64) -> Result<CheckReport>
where
    V: Fn(&[f64], &mut [f64]),
{
    let n = u.len();
    let grid = u.comps[0].grid().clone();
    let mut vu = VectorField::zeros(&grid, out_dim);
    let mut pin = vec![0.0; n];
    let mut pout = vec![0.0; out_dim];
    for x in 0..grid.len() {
        for (k, c) in u.comps.iter().enumerate() {
            pin[k] = c.values()[x];
        }
        v(&pin, &mut pout);
        for (k, c) in vu.comps.iter_mut().enumerate() {
            c.values_mut()[x] = pout[k];
        }
    }
    let lhs = vu.jacobian_l2();
    let rhs = l * u.jacobian_l2();
    let margin = rhs - lhs;
    if margin < -1e-12 * rhs.abs() || !lhs.is_finite() {
        return Err(Error::EstimateViolated {
            check: "lipschitz_composition",
            t: f64::NAN,
            lhs,
            rhs,
        });
    }
    Ok(CheckReport {
        name: "lipschitz_composition".into(),
        lhs,
        rhs,
        margin,
        pass: true,
    })
}

/// `‖∇_h(b_δ(φ)) - b_δ'(φ) ∇_h φ‖_{L²}`.
pub fn chain_rule_defect(phi: &Field, material: &RegularizedMaterial) -> f64 {
    let bphi = phi.map(|r| material.eval_b_delta(r));
    let bprime = phi.map(|r| material.eval_b_delta_prime(r));
    let d = phi.grid().dim();
    (0..d)
        .map(|j| {
            let lhs = bphi.dq_forward(j);
            let rhs = bprime.zip_map(&phi.dq_forward(j), |a, b| a * b);
            lhs.zip_map(&rhs, |a, b| a - b).l2().powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// `excess_L2² <= 2^{m+1} δ^m B^* entropy + 1e-10` on every record.
pub fn check_excess_entropy_bound(records: &[DiagnosticsRecord], material: &RegularizedMaterial) -> Result<CheckReport> {
    sorted_by_t(records)?;
    let c = material.excess_constant();
    let mut worst: Option<CheckReport> = None;
    for r in records {
        let lhs = r.excess_l2 * r.excess_l2;
        let rhs = c * r.entropy;
        let margin = rhs - lhs;
        if margin < -1e-10 {
            return Err(Error::EstimateViolated {
                check: "excess_entropy_bound",
                t: r.t,
                lhs,
                rhs,
            });
        }
        if worst.as_ref().is_none_or(|w| margin < w.margin) {
            worst = Some(CheckReport {
                name: "excess_entropy_bound".into(),
                lhs,
                rhs,
                margin,
                pass: true,
            });
        }
    }
    Ok(worst.expect("nonempty"))
}

/// Inputs shared by every run of a δ-continuation.
#[derive(Debug, Clone)]
pub struct ContinuationSetup {
    pub material: MaterialSpec,
    /// Certified anisotropy.
    pub aniso: AnisotropySpec,
    pub solver: SolverConfig,
    /// Unscaled initial datum, `|φ₀| <= 1`; each run starts from `(1-δ) φ₀`.
    pub phi0: Field,
}

#[derive(Debug, Clone)]
pub struct DeltaRun {
    pub delta: f64,
    pub material: Arc<RegularizedMaterial>,
    pub records: Vec<DiagnosticsRecord>,
    pub final_phi: Field,
    /// Sup over the records of `excess_l2`.
    pub excess_sup: f64,
}

/// Least-squares fit of `log excess_sup` against `log δ`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExcessFit {
    Slope {
        slope: f64,
        intercept: f64,
        /// Number of δ with positive excess used in the fit.
        points: usize,
    },
    /// Every run stayed in `[-1, 1]`.
    Vacuous,
    Undefined { reason: String },
}

#[derive(Debug, Clone)]
pub struct ScalingStudyResult {
    /// Strictly decreasing.
    pub deltas: Vec<f64>,
    pub excess_sup: Vec<f64>,
    pub fit: ExcessFit,
    /// `‖φ_{δ_i}(T) - φ_{δ_{i+1}}(T)‖_{L²}`.
    pub cauchy: Vec<f64>,
    pub runs: Vec<DeltaRun>,
}

impl ScalingStudyResult {
    /// The fitted slope, or `SlopeUndefined` (including the vacuous case).
    pub fn slope(&self) -> Result<f64> {
        match &self.fit {
            ExcessFit::Slope { slope, .. } => Ok(*slope),
            ExcessFit::Vacuous => Err(Error::SlopeUndefined {
                reason: "bound vacuously satisfied: excess is zero for every delta".into(),
            }),
            ExcessFit::Undefined { reason } => Err(Error::SlopeUndefined { reason: reason.clone() }),
        }
    }

    pub fn is_vacuous(&self) -> bool {
        self.fit == ExcessFit::Vacuous
    }
}

/// Fits over the entries with positive excess. Zero entries are bounded
/// vacuously and carry no slope information.
pub fn fit_excess_slope(deltas: &[f64], excess: &[f64]) -> ExcessFit {
    let pts: Vec<(f64, f64)> = deltas
        .iter()
        .zip(excess)
        .filter(|(_, e)| **e > 0.0)
        .map(|(d, e)| (d.ln(), e.ln()))
        .collect();
    if pts.is_empty() {
        return ExcessFit::Vacuous;
    }
    if pts.len() < 2 {
        return ExcessFit::Undefined {
            reason: format!("only {} of {} runs have positive excess", pts.len(), deltas.len()),
        };
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    ExcessFit::Slope {
        slope,
        intercept: my - slope * mx,
        points: pts.len(),
    }
}

fn run_one(setup: &ContinuationSetup, delta: f64) -> Result<DeltaRun> {
    let material = Arc::new(RegularizedMaterial::new(setup.material.clone(), delta)?);
    let phi = regularize_initial(&setup.phi0, delta)?;
    let state = SimState::new(phi, material.clone(), Arc::new(setup.aniso.clone()))?;
    let mut obs = MemoryObserver::default();
    let cfg = SolverConfig {
        snapshot_stride: 0,
        ..setup.solver.clone()
    };
    let last = advance(state, &cfg, &mut obs)?;
    let excess_sup = obs.records.iter().map(|r| r.excess_l2).fold(0.0, f64::max);
    Ok(DeltaRun {
        delta,
        material,
        records: obs.records,
        final_phi: last.phi,
        excess_sup,
    })
}

/// One run per δ on up to `max_workers` threads; results are ordered by δ.
pub fn run_delta_continuation(setup: &ContinuationSetup, deltas: &[f64], max_workers: usize) -> Result<ScalingStudyResult> {
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("no deltas given".into()));
    }
    if deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) || deltas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument(format!(
            "deltas must be strictly decreasing in (0, 1), got {deltas:?}"
        )));
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<DeltaRun>>>> = Mutex::new(vec![None; deltas.len()]);
    let workers = max_workers.clamp(1, deltas.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= deltas.len() {
                    break;
                }
                let out = run_one(setup, deltas[i]);
                slots.lock().expect("poisoned")[i] = Some(out);
            });
        }
    });
    let runs = slots
        .into_inner()
        .expect("poisoned")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect::<Result<Vec<_>>>()?;
    let excess_sup: Vec<f64> = runs.iter().map(|r| r.excess_sup).collect();
    let cauchy = runs
        .windows(2)
        .map(|w| w[0].final_phi.zip_map(&w[1].final_phi, |a, b| a - b).l2())
        .collect();
    Ok(ScalingStudyResult {
        deltas: deltas.to_vec(),
        fit: fit_excess_slope(deltas, &excess_sup),
        excess_sup,
        cauchy,
        runs,
    })
}
