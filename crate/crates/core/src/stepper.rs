//! Time stepping for the regularized system
//!
//! ```text
//! φ_t = div(b_δ(φ) ∇μ),    μ = -div A'(∇φ) + ψ_δ'(φ)
//! ```
//!
//! with an explicit Euler scheme and a first-order linearly implicit scheme
//! stabilized by `κ Δ_h²`. Both are written in flux form with the mobility
//! evaluated at the arithmetic face average of `φ`, so `Σ φ` telescopes.

use std::sync::Arc;

use log::{debug, warn};

use crate::anisotropy::AnisotropySpec;
use crate::error::{Error, Result};
use crate::estimates::{self, DiagnosticsRecord};
use crate::grid::{Field, SpectralSolver, VectorField};
use crate::material::{Order, RegularizedMaterial};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Explicit,
    StabilizedImex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Safeguard {
    RejectAndHalve,
    WarnOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Stabilization constant; `None` selects `2 A1 B^*`.
    pub kappa: Option<f64>,
    pub t_final: f64,
    pub energy_tol_per_step: f64,
    pub safeguard: Safeguard,
    pub snapshot_stride: usize,
    pub diagnostics_stride: usize,
    /// Consecutive accepted steps before `dt` grows.
    pub growth_after: usize,
    /// Factor applied when `dt` shrinks or grows.
    pub dt_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::StabilizedImex,
            dt_init: 1e-3,
            dt_min: 1e-10,
            dt_max: 1e-1,
            kappa: None,
            t_final: 1.0,
            energy_tol_per_step: 1e-12,
            safeguard: Safeguard::RejectAndHalve,
            snapshot_stride: 0,
            diagnostics_stride: 1,
            growth_after: 50,
            dt_factor: 2.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return bad(format!(
                "need 0 < dt_min <= dt_init <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            ));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad(format!("t_final must be finite and >= 0, got {}", self.t_final));
        }
        if let Some(k) = self.kappa {
            if !(k >= 0.0 && k.is_finite()) {
                return bad(format!("kappa must be finite and >= 0, got {k}"));
            }
        }
        if !(self.energy_tol_per_step >= 0.0) {
            return bad("energy_tol_per_step must be >= 0".into());
        }
        if self.diagnostics_stride == 0 {
            return bad("diagnostics_stride must be >= 1".into());
        }
        if !(self.dt_factor > 1.0) || self.growth_after == 0 {
            return bad("dt_factor must exceed 1 and growth_after must be >= 1".into());
        }
        Ok(())
    }

    /// The stabilization constant actually used: the configured value or
    /// `2 A1 B^*`. Fails if it is below the certified `A1`.
    pub fn resolve_kappa(&self, aniso: &AnisotropySpec, material: &RegularizedMaterial) -> Result<f64> {
        let a1 = aniso.constants().map(|c| c.a1);
        let b_sup = material.base().mobility_bounds().1;
        let kappa = match (self.kappa, a1) {
            (Some(k), _) => k,
            (None, Some(a1)) => 2.0 * a1 * b_sup,
            (None, None) => {
                return Err(Error::InvalidArgument(
                    "default kappa needs certified anisotropy constants".into(),
                ))
            }
        };
        if let Some(a1) = a1 {
            if self.scheme == Scheme::StabilizedImex && kappa < a1 {
                return Err(Error::InvalidArgument(format!(
                    "kappa = {kappa} is below the certified A1 = {a1}"
                )));
            }
        }
        Ok(kappa)
    }
}

/// Solution state with its consistent auxiliary fields and running integrals.
#[derive(Debug, Clone)]
pub struct SimState {
    pub phi: Field,
    pub mu: Field,
    /// `J = -b_δ(φ̄) ∂⁺μ` on faces.
    pub flux: VectorField,
    /// `w = -div_h A'(∇_h φ)`.
    pub w: Field,
    pub t: f64,
    pub step_count: usize,
    /// `Σ dt ∫ b_δ |∇_h μ|²`, left endpoint in time.
    pub dissipation_cum: f64,
    /// `Σ dt Σ_{i,j} ‖∂_j⁺∂_i⁺ φ‖²`, left endpoint in time.
    pub hess_sq_cum: f64,
    pub material: Arc<RegularizedMaterial>,
    pub aniso: Arc<AnisotropySpec>,
}

impl SimState {
    pub fn new(phi: Field, material: Arc<RegularizedMaterial>, aniso: Arc<AnisotropySpec>) -> Result<Self> {
        if phi.grid().dim() != aniso.dim() {
            return Err(Error::DimensionMismatch {
                expected: aniso.dim(),
                got: phi.grid().dim(),
            });
        }
        if !phi.is_finite() {
            return Err(Error::NonFiniteField { field: "phi" });
        }
        let (mu, w) = assemble_mu_parts(&phi, &material, &aniso)?;
        let flux = mass_flux(&phi, &mu, &material);
        Ok(Self {
            phi,
            mu,
            flux,
            w,
            t: 0.0,
            step_count: 0,
            dissipation_cum: 0.0,
            hess_sq_cum: 0.0,
            material,
            aniso,
        })
    }

    /// `∫ b_δ(φ̄) |∂⁺μ|² = -⟨J, ∂⁺μ⟩`.
    pub fn dissipation_rate(&self) -> f64 {
        -self.flux.inner(&self.mu.grad_h())
    }

    pub fn energy(&self) -> f64 {
        estimates::energy(&self.phi, &self.material, &self.aniso)
    }

    fn successor(&self, phi: Field, dt: f64) -> Result<Self> {
        if !phi.is_finite() {
            return Err(Error::NonFiniteField { field: "phi" });
        }
        let (mu, w) = assemble_mu_parts(&phi, &self.material, &self.aniso)?;
        let flux = mass_flux(&phi, &mu, &self.material);
        if !flux.is_finite() {
            return Err(Error::NonFiniteField { field: "J" });
        }
        Ok(Self {
            phi,
            mu,
            flux,
            w,
            t: self.t + dt,
            step_count: self.step_count + 1,
            dissipation_cum: self.dissipation_cum + dt * self.dissipation_rate(),
            hess_sq_cum: self.hess_sq_cum + dt * self.phi.hessian_frobenius_sq(),
            material: self.material.clone(),
            aniso: self.aniso.clone(),
        })
    }
}

/// `A'` applied nodewise to the d-tuple `p`.
pub fn agrad_field(p: &VectorField, aniso: &AnisotropySpec) -> VectorField {
    let d = p.len();
    let grid = p.comps[0].grid();
    let mut q = VectorField::zeros(grid, d);
    let mut pin = [0.0; 3];
    let mut pout = [0.0; 3];
    for x in 0..grid.len() {
        for j in 0..d {
            pin[j] = p.comps[j].values()[x];
        }
        aniso.agrad_into(&pin[..d], &mut pout[..d]);
        for j in 0..d {
            q.comps[j].values_mut()[x] = pout[j];
        }
    }
    q
}

/// `w = -div_h A'(∇_h φ)`.
pub fn anisotropic_term(phi: &Field, aniso: &AnisotropySpec) -> Field {
    agrad_field(&phi.grad_h(), aniso).div_h().map(|v| -v)
}

fn assemble_mu_parts(phi: &Field, material: &RegularizedMaterial, aniso: &AnisotropySpec) -> Result<(Field, Field)> {
    let w = anisotropic_term(phi, aniso);
    let mu = w.zip_map(phi, |a, r| a + material.eval_psi_delta(r, Order::First));
    if !mu.is_finite() {
        return Err(Error::NonFiniteField { field: "mu" });
    }
    Ok((mu, w))
}

/// `μ = -div_h A'(∇_h φ) + ψ_δ'(φ)`.
pub fn assemble_mu(phi: &Field, material: &RegularizedMaterial, aniso: &AnisotropySpec) -> Result<Field> {
    assemble_mu_parts(phi, material, aniso).map(|(mu, _)| mu)
}

/// Mobility at the forward faces, `b_δ(½(φ(x) + φ(x + h e_j)))`.
pub fn face_mobility(phi: &Field, material: &RegularizedMaterial) -> VectorField {
    VectorField {
        comps: (0..phi.grid().dim())
            .map(|j| phi.zip_map(&phi.shifted(j, 1), |a, b| material.eval_b_delta(0.5 * (a + b))))
            .collect(),
    }
}

/// `J = -b_δ(φ̄) ∂⁺μ`.
pub fn mass_flux(phi: &Field, mu: &Field, material: &RegularizedMaterial) -> VectorField {
    let b = face_mobility(phi, material);
    let g = mu.grad_h();
    VectorField {
        comps: b
            .comps
            .iter()
            .zip(&g.comps)
            .map(|(bj, gj)| bj.zip_map(gj, |b, g| -b * g))
            .collect(),
    }
}

/// One explicit Euler step `φ ← φ - dt div_h J`.
pub fn step_explicit(state: &SimState, dt: f64) -> Result<SimState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let mut phi = state.phi.clone();
    phi.axpy(-dt, &state.flux.div_h());
    state.successor(phi, dt)
}

/// One stabilized step, solving
/// `(φ' - φ)/dt + κ Δ_h² φ' = -div_h J + κ Δ_h² φ` spectrally.
pub fn step_imex(state: &SimState, dt: f64, kappa: f64, solver: &SpectralSolver) -> Result<SimState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let rhs = state.flux.div_h().map(|v| -dt * v);
    let increment = solver.solve(&rhs, |k| {
        let lam = solver.laplacian_symbol(k);
        1.0 + dt * kappa * lam * lam
    })?;
    let mut phi = state.phi.clone();
    phi.axpy(1.0, &increment);
    state.successor(phi, dt)
}

/// Receives diagnostics and snapshots from [`advance`].
pub trait Observer {
    fn on_record(&mut self, record: &DiagnosticsRecord, state: &SimState) -> Result<()>;
    fn on_snapshot(&mut self, state: &SimState) -> Result<()>;
}

/// Keeps everything in memory.
#[derive(Debug, Default, Clone)]
pub struct MemoryObserver {
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<(f64, Field)>,
}

impl Observer for MemoryObserver {
    fn on_record(&mut self, record: &DiagnosticsRecord, _state: &SimState) -> Result<()> {
        self.records.push(record.clone());
        Ok(())
    }

    fn on_snapshot(&mut self, state: &SimState) -> Result<()> {
        self.snapshots.push((state.t, state.phi.clone()));
        Ok(())
    }
}

/// Ignores everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullObserver;

impl Observer for NullObserver {
    fn on_record(&mut self, _: &DiagnosticsRecord, _: &SimState) -> Result<()> {
        Ok(())
    }

    fn on_snapshot(&mut self, _: &SimState) -> Result<()> {
        Ok(())
    }
}

/// Steps `state` until `t >= t_final` under the energy safeguard.
///
/// A record is emitted for the initial state, after every
/// `diagnostics_stride`-th step and for the final state; snapshots likewise
/// with `snapshot_stride` (0 disables them). Records describe accepted states
/// only; `accepted = false` marks a state kept under [`Safeguard::WarnOnly`]
/// despite an energy increase.
pub fn advance<O: Observer + ?Sized>(state: SimState, config: &SolverConfig, observer: &mut O) -> Result<SimState> {
    config.validate()?;
    let kappa = match config.scheme {
        Scheme::StabilizedImex => config.resolve_kappa(&state.aniso, &state.material)?,
        Scheme::Explicit => 0.0,
    };
    let solver = match config.scheme {
        Scheme::StabilizedImex => Some(SpectralSolver::new(state.phi.grid().clone())),
        Scheme::Explicit => None,
    };

    let mut state = state;
    let mut energy = state.energy();
    let mut dt = config.dt_init;
    let mut last_dt;
    let mut streak = 0usize;
    let mut all_accepted = true;
    let mut since_record = 0usize;
    let mut since_snapshot = 0usize;

    observer.on_record(&DiagnosticsRecord::from_state(&state, energy, dt, true), &state)?;
    if config.snapshot_stride > 0 {
        observer.on_snapshot(&state)?;
    }

    let t_final = config.t_final;
    while t_final - state.t > 1e-12 * t_final.max(1.0) {
        let remaining = t_final - state.t;
        let step_dt = if remaining <= dt * (1.0 + 1e-9) { remaining } else { dt };
        let trial = match &solver {
            Some(s) => step_imex(&state, step_dt, kappa, s),
            None => step_explicit(&state, step_dt),
        };
        let (next, next_energy, ok) = match trial {
            Ok(next) => {
                let e = next.energy();
                let ok = e.is_finite() && e <= energy + config.energy_tol_per_step * (1.0 + energy.abs());
                (Some(next), e, ok)
            }
            Err(Error::NonFiniteField { .. }) => (None, f64::NAN, false),
            Err(e) => return Err(e),
        };

        if !ok {
            streak = 0;
            if next.is_none() || config.safeguard == Safeguard::RejectAndHalve {
                if dt <= config.dt_min {
                    return Err(match next {
                        None => Error::NonFiniteField { field: "phi" },
                        Some(_) => Error::EnergySafeguardExhausted {
                            t: state.t,
                            dt_min: config.dt_min,
                        },
                    });
                }
                debug!(
                    "rejecting step at t = {} (dt = {dt:e}): energy {energy} -> {next_energy}",
                    state.t
                );
                dt = (dt / config.dt_factor).max(config.dt_min);
                continue;
            }
            warn!(
                "energy increased at t = {}: {energy} -> {next_energy}; kept (warn_only)",
                state.t
            );
            all_accepted = false;
        } else {
            streak += 1;
        }

        state = next.expect("accepted step has a state");
        energy = next_energy;
        last_dt = step_dt;
        since_record += 1;
        since_snapshot += 1;
        let finished = t_final - state.t <= 1e-12 * t_final.max(1.0);

        if since_record == config.diagnostics_stride || finished {
            observer.on_record(
                &DiagnosticsRecord::from_state(&state, energy, last_dt, all_accepted),
                &state,
            )?;
            since_record = 0;
            all_accepted = true;
        }
        if config.snapshot_stride > 0 && (since_snapshot == config.snapshot_stride || finished) {
            observer.on_snapshot(&state)?;
            since_snapshot = 0;
        }
        if streak >= config.growth_after {
            dt = (dt * config.dt_factor).min(config.dt_max);
            streak = 0;
        }
    }
    Ok(state)
}
