//! Potential `ψ = ψ₁ + ψ₂`, degenerate mobility `b`, entropy function `Φ`
//! and their δ-regularizations.
//!
//! The mobility is `b(r) = (1-r²)^m B(r)` on `[-1, 1]` and zero outside. The
//! singular part of the potential satisfies `ψ₁''(r) = (1-r²)^{-m} F(r)`.
//! `Φ` is the second antiderivative of `1/b` anchored at zero.
//!
//! For a fixed `δ ∈ (0, 1)` the regularized objects are
//!
//! * `b_δ(r) = b(clamp(r, -1+δ, 1-δ))`,
//! * `Φ_δ`, the second antiderivative of `1/b_δ`,
//! * `ψ_{1,δ}`, equal to `ψ₁` on `(-1+δ, 1-δ)` and continued by its second
//!   order Taylor polynomial at `±(1-δ)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::quadrature::DoubleIntegralTable;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Nodes of the cached `Φ_δ` / `ψ_{1,δ}` lookup tables.
pub const TABLE_INTERVALS: usize = 10_000;
/// Absolute tolerance of the adaptive quadrature behind the tables.
pub const TABLE_TOLERANCE: f64 = 1e-10;

/// Which derivative of a scalar function to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Value,
    First,
    Second,
}

/// User supplied `B`, `F` and `ψ₂` (library-level extension point).
#[derive(Clone)]
pub struct CustomMaterial {
    pub mobility_factor: ScalarFn,
    pub mobility_factor_prime: ScalarFn,
    /// `(B_*, B^*)`.
    pub mobility_bounds: (f64, f64),
    pub potential_weight: ScalarFn,
    /// `ψ₂`, `ψ₂'`, `ψ₂''`.
    pub psi2: [ScalarFn; 3],
}

impl fmt::Debug for CustomMaterial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomMaterial")
            .field("mobility_bounds", &self.mobility_bounds)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum Potential {
    /// `ψ₁(r) = θ/2 [(1+r)ln(1+r) + (1-r)ln(1-r)]`, `ψ₂(r) = θ_c/2 (1-r²)`, `B ≡ 1`.
    LogarithmicQuench { theta: f64, theta_c: f64 },
    /// `ψ₁ ≡ 0`, `ψ₂(r) = ¼(1-r²)²`, `B ≡ 1`.
    SmoothDoubleWell,
    Custom(CustomMaterial),
}

#[derive(Debug, Clone)]
pub struct MaterialSpec {
    m: f64,
    potential: Potential,
    b_lipschitz: f64,
}

impl MaterialSpec {
    pub fn log_quench(theta: f64, theta_c: f64, m: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite() && theta_c > 0.0 && theta_c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "theta and theta_c must be positive, got {theta}, {theta_c}"
            )));
        }
        Self::new(m, Potential::LogarithmicQuench { theta, theta_c })
    }

    pub fn double_well(m: f64) -> Result<Self> {
        Self::new(m, Potential::SmoothDoubleWell)
    }

    pub fn custom(m: f64, custom: CustomMaterial) -> Result<Self> {
        let (lo, hi) = custom.mobility_bounds;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mobility bounds must satisfy 0 < B_* <= B^*, got ({lo}, {hi})"
            )));
        }
        Self::new(m, Potential::Custom(custom))
    }

    fn new(m: f64, potential: Potential) -> Result<Self> {
        if !(m >= 1.0 && m.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "degeneracy exponent m must be >= 1, got {m}"
            )));
        }
        let mut spec = Self {
            m,
            potential,
            b_lipschitz: 0.0,
        };
        spec.b_lipschitz = spec.sup_abs_b_prime();
        Ok(spec)
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn preset_name(&self) -> &'static str {
        match self.potential {
            Potential::LogarithmicQuench { .. } => "log_quench",
            Potential::SmoothDoubleWell => "double_well",
            Potential::Custom(_) => "custom",
        }
    }

    /// `B(r)`.
    pub fn mobility_factor(&self, r: f64) -> f64 {
        match &self.potential {
            Potential::Custom(c) => (c.mobility_factor)(r),
            _ => 1.0,
        }
    }

    fn mobility_factor_prime(&self, r: f64) -> f64 {
        match &self.potential {
            Potential::Custom(c) => (c.mobility_factor_prime)(r),
            _ => 0.0,
        }
    }

    /// `(B_*, B^*)`.
    pub fn mobility_bounds(&self) -> (f64, f64) {
        match &self.potential {
            Potential::Custom(c) => c.mobility_bounds,
            _ => (1.0, 1.0),
        }
    }

    /// `F(r)`; for the logarithmic preset `F = θ(1-r²)^{m-1}` so that
    /// `ψ₁'' = θ/(1-r²)` for every `m`.
    pub fn potential_weight(&self, r: f64) -> f64 {
        match &self.potential {
            Potential::LogarithmicQuench { theta, .. } => theta * (1.0 - r * r).max(0.0).powf(self.m - 1.0),
            Potential::SmoothDoubleWell => 0.0,
            Potential::Custom(c) => (c.potential_weight)(r),
        }
    }

    /// Mobility `b(r)`, zero outside `[-1, 1]`.
    pub fn eval_b(&self, r: f64) -> f64 {
        if r.abs() > 1.0 {
            return 0.0;
        }
        (1.0 - r * r).powf(self.m) * self.mobility_factor(r)
    }

    /// `b'(r)` on `[-1, 1]` (one-sided at the ends), zero outside.
    pub fn eval_b_prime(&self, r: f64) -> f64 {
        if r.abs() > 1.0 {
            return 0.0;
        }
        let s = 1.0 - r * r;
        let m = self.m;
        let dpow = if m == 1.0 {
            -2.0 * r
        } else {
            -2.0 * m * r * s.powf(m - 1.0)
        };
        dpow * self.mobility_factor(r) + s.powf(m) * self.mobility_factor_prime(r)
    }

    /// `ψ₂` and its derivatives.
    pub fn psi2(&self, r: f64, order: Order) -> f64 {
        match &self.potential {
            Potential::LogarithmicQuench { theta_c, .. } => match order {
                Order::Value => 0.5 * theta_c * (1.0 - r * r),
                Order::First => -theta_c * r,
                Order::Second => -theta_c,
            },
            Potential::SmoothDoubleWell => match order {
                Order::Value => 0.25 * (1.0 - r * r).powi(2),
                Order::First => -r * (1.0 - r * r),
                Order::Second => 3.0 * r * r - 1.0,
            },
            Potential::Custom(c) => match order {
                Order::Value => (c.psi2[0])(r),
                Order::First => (c.psi2[1])(r),
                Order::Second => (c.psi2[2])(r),
            },
        }
    }

    /// `ψ₁''(r) = (1-r²)^{-m} F(r)` on `(-1, 1)`.
    pub fn psi1_second(&self, r: f64) -> f64 {
        match &self.potential {
            Potential::LogarithmicQuench { theta, .. } => theta / (1.0 - r * r),
            Potential::SmoothDoubleWell => 0.0,
            Potential::Custom(_) => (1.0 - r * r).powf(-self.m) * self.potential_weight(r),
        }
    }

    /// Closed-form `ψ₁` on `(-1, 1)`, normalized by `ψ₁(0) = ψ₁'(0) = 0`.
    /// `None` for custom materials.
    pub fn psi1_closed(&self, r: f64, order: Order) -> Option<f64> {
        match &self.potential {
            Potential::LogarithmicQuench { theta, .. } => Some(match order {
                Order::Value => 0.5 * theta * ((1.0 + r) * (1.0 + r).ln() + (1.0 - r) * (1.0 - r).ln()),
                Order::First => theta * r.atanh(),
                Order::Second => theta / (1.0 - r * r),
            }),
            Potential::SmoothDoubleWell => Some(0.0),
            Potential::Custom(_) => None,
        }
    }

    /// Closed-form `Φ` on `(-1, 1)` when `B ≡ 1` and `m ∈ {1, 2}`.
    pub fn phi_closed(&self, r: f64, order: Order) -> Option<f64> {
        if matches!(self.potential, Potential::Custom(_)) {
            return None;
        }
        if self.m == 1.0 {
            Some(match order {
                Order::Value => r * r.atanh() + 0.5 * (1.0 - r * r).ln(),
                Order::First => r.atanh(),
                Order::Second => 1.0 / (1.0 - r * r),
            })
        } else if self.m == 2.0 {
            let s = 1.0 - r * r;
            Some(match order {
                Order::Value => 0.5 * r * r.atanh(),
                Order::First => 0.5 * r.atanh() + 0.5 * r / s,
                Order::Second => 1.0 / (s * s),
            })
        } else {
            None
        }
    }

    /// `sup_{[-1,1]} |b'|`, the δ-independent Lipschitz constant of every `b_δ`.
    pub fn mobility_lipschitz(&self) -> f64 {
        self.b_lipschitz
    }

    fn sup_abs_b_prime(&self) -> f64 {
        const N: usize = 200_000;
        let node = |i: usize| -1.0 + 2.0 * i as f64 / N as f64;
        let (mut best_i, mut best) = (0, 0.0_f64);
        for i in 0..=N {
            let v = self.eval_b_prime(node(i)).abs();
            if v > best {
                best = v;
                best_i = i;
            }
        }
        // golden-section refinement around the best node
        let (mut a, mut b) = (node(best_i.saturating_sub(1)), node((best_i + 1).min(N)));
        let g = 0.5 * (5.0_f64.sqrt() - 1.0);
        for _ in 0..80 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if self.eval_b_prime(c).abs() > self.eval_b_prime(d).abs() {
                b = d;
            } else {
                a = c;
            }
        }
        best.max(self.eval_b_prime(0.5 * (a + b)).abs())
    }
}

#[derive(Debug, Clone)]
enum Route {
    Closed,
    Table(DoubleIntegralTable),
}

/// How `Φ_δ` is evaluated on `[-1+δ, 1-δ]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiEvaluation {
    /// Closed form when available, quadrature table otherwise.
    Auto,
    /// Always the quadrature table.
    Quadrature,
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    value: f64,
    slope: f64,
    curvature: f64,
}

/// The δ-regularized triple `(ψ_δ, b_δ, Φ_δ)`.
#[derive(Debug, Clone)]
pub struct RegularizedMaterial {
    base: MaterialSpec,
    delta: f64,
    r0: f64,
    c_delta: f64,
    b_min: f64,
    phi_route: Route,
    psi1_route: Route,
    phi_edges: [Edge; 2],
    psi1_edges: [Edge; 2],
}

impl RegularizedMaterial {
    pub fn new(base: MaterialSpec, delta: f64) -> Result<Self> {
        Self::with_evaluation(base, delta, PhiEvaluation::Auto)
    }

    pub fn with_evaluation(base: MaterialSpec, delta: f64, eval: PhiEvaluation) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        let r0 = 1.0 - delta;

        let phi_route = match (eval, base.phi_closed(0.0, Order::Value)) {
            (PhiEvaluation::Auto, Some(_)) => Route::Closed,
            _ => {
                let b = base.clone();
                Route::Table(DoubleIntegralTable::build(
                    move |t| 1.0 / b.eval_b(t),
                    r0,
                    TABLE_INTERVALS,
                    TABLE_TOLERANCE,
                )?)
            }
        };
        let psi1_route = match base.psi1_closed(0.0, Order::Value) {
            Some(_) => Route::Closed,
            None => {
                let b = base.clone();
                Route::Table(DoubleIntegralTable::build(
                    move |t| b.psi1_second(t),
                    r0,
                    TABLE_INTERVALS,
                    TABLE_TOLERANCE,
                )?)
            }
        };

        // min of b over [-r0, r0]: the end values for the presets, sampled for custom B
        let mut b_min = base.eval_b(r0).min(base.eval_b(-r0));
        if matches!(base.potential, Potential::Custom(_)) {
            for i in 0..=10_000 {
                b_min = b_min.min(base.eval_b(-r0 + 2.0 * r0 * i as f64 / 10_000.0));
            }
        }
        if !(b_min > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "regularized mobility is not positive (min {b_min})"
            )));
        }

        let mut reg = Self {
            base,
            delta,
            r0,
            c_delta: 1.0 / b_min,
            b_min,
            phi_route,
            psi1_route,
            phi_edges: [Edge { value: 0.0, slope: 0.0, curvature: 0.0 }; 2],
            psi1_edges: [Edge { value: 0.0, slope: 0.0, curvature: 0.0 }; 2],
        };
        for (k, r) in [(0, -r0), (1, r0)] {
            reg.phi_edges[k] = Edge {
                value: reg.phi_inner(r, Order::Value),
                slope: reg.phi_inner(r, Order::First),
                curvature: 1.0 / reg.base.eval_b(r),
            };
            reg.psi1_edges[k] = Edge {
                value: reg.psi1_inner(r, Order::Value),
                slope: reg.psi1_inner(r, Order::First),
                curvature: reg.base.psi1_second(r),
            };
        }
        Ok(reg)
    }

    pub fn base(&self) -> &MaterialSpec {
        &self.base
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Cached bound `c_δ` with `|Φ_δ''| <= c_δ` and `|Φ_δ'(r)| <= c_δ |r|`.
    pub fn c_delta(&self) -> f64 {
        self.c_delta
    }

    /// Positive lower bound of `b_δ` on all of ℝ.
    pub fn b_delta_min(&self) -> f64 {
        self.b_min
    }

    /// `2^{m+1} δ^m B^*`, the constant of the pointwise excess bound.
    pub fn excess_constant(&self) -> f64 {
        let m = self.base.m;
        2f64.powf(m + 1.0) * self.delta.powf(m) * self.base.mobility_bounds().1
    }

    pub fn uses_closed_form_phi(&self) -> bool {
        matches!(self.phi_route, Route::Closed)
    }

    pub fn eval_b_delta(&self, r: f64) -> f64 {
        self.base.eval_b(r.clamp(-self.r0, self.r0))
    }

    /// `b_δ'`; zero on `|r| >= 1-δ` (the kink points take the outer value).
    pub fn eval_b_delta_prime(&self, r: f64) -> f64 {
        if r.abs() >= self.r0 {
            0.0
        } else {
            self.base.eval_b_prime(r)
        }
    }

    fn phi_inner(&self, r: f64, order: Order) -> f64 {
        if order == Order::Second {
            return 1.0 / self.base.eval_b(r);
        }
        match &self.phi_route {
            Route::Closed => self.base.phi_closed(r, order).unwrap_or(f64::NAN),
            Route::Table(t) => match order {
                Order::Value => t.value(r),
                _ => t.first(r),
            },
        }
    }

    fn psi1_inner(&self, r: f64, order: Order) -> f64 {
        if order == Order::Second {
            return self.base.psi1_second(r);
        }
        match &self.psi1_route {
            Route::Closed => self.base.psi1_closed(r, order).unwrap_or(f64::NAN),
            Route::Table(t) => match order {
                Order::Value => t.value(r),
                _ => t.first(r),
            },
        }
    }

    fn extend(&self, r: f64, order: Order, edges: &[Edge; 2]) -> Option<f64> {
        let (e, x) = if r > self.r0 {
            (edges[1], r - self.r0)
        } else if r < -self.r0 {
            (edges[0], r + self.r0)
        } else {
            return None;
        };
        Some(match order {
            Order::Value => e.value + e.slope * x + 0.5 * e.curvature * x * x,
            Order::First => e.slope + e.curvature * x,
            Order::Second => e.curvature,
        })
    }

    /// `Φ_δ` and its first two derivatives.
    pub fn eval_phi_delta(&self, r: f64, order: Order) -> f64 {
        self.extend(r, order, &self.phi_edges)
            .unwrap_or_else(|| self.phi_inner(r, order))
    }

    /// `ψ_{1,δ}` and its first two derivatives.
    pub fn eval_psi1_delta(&self, r: f64, order: Order) -> f64 {
        self.extend(r, order, &self.psi1_edges)
            .unwrap_or_else(|| self.psi1_inner(r, order))
    }

    /// `ψ_δ = ψ_{1,δ} + ψ₂` and its first two derivatives.
    pub fn eval_psi_delta(&self, r: f64, order: Order) -> f64 {
        self.eval_psi1_delta(r, order) + self.base.psi2(r, order)
    }

    /// `(|z|-1)₊² <= 2^{m+1} δ^m B^* Φ_δ(z)` up to `1e-12`.
    pub fn check_excess_bound(&self, z: f64) -> bool {
        let excess = (z.abs() - 1.0).max(0.0);
        excess * excess <= self.excess_constant() * self.eval_phi_delta(z, Order::Value) + 1e-12
    }
}

/// `(1-δ) φ₀`, after checking `|φ₀| <= 1`.
pub fn regularize_initial(phi0: &Field, delta: f64) -> Result<Field> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let max_abs = phi0.linf();
    if !(max_abs <= 1.0 + 1e-12) {
        return Err(Error::InitialDatumOutOfRange { max_abs });
    }
    Ok(phi0.map(|v| (1.0 - delta) * v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;

    /// Composite 16-point Gauss–Legendre on `[a, b]` with `panels` panels.
    fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
        // nodes/weights of the 8-point rule on [-1, 1], mirrored
        const X: [f64; 8] = [
            0.0950125098376374,
            0.2816035507792589,
            0.4580167776572274,
            0.6178762444026438,
            0.7554044083550030,
            0.8656312023878318,
            0.9445750230732326,
            0.9894009349916499,
        ];
        const W: [f64; 8] = [
            0.1894506104550685,
            0.1826034150449236,
            0.1691565193950025,
            0.1495959888165767,
            0.1246289712555339,
            0.0951585116824928,
            0.0622535239386479,
            0.0271524594117541,
        ];
        let h = (b - a) / panels as f64;
        let mut s = 0.0;
        for k in 0..panels {
            let c = a + (k as f64 + 0.5) * h;
            for (x, w) in X.iter().zip(W) {
                s += w * (f(c + 0.5 * h * x) + f(c - 0.5 * h * x));
            }
        }
        0.5 * h * s
    }

    /// Oracle `Φ_δ(r) = ∫₀^r (r-τ)/b_δ(τ) dτ` (Cauchy form of the double integral).
    fn phi_oracle(m: f64, delta: f64, r: f64) -> f64 {
        let r0 = 1.0 - delta;
        let b = |t: f64| {
            let c = t.clamp(-r0, r0);
            (1.0 - c * c).powf(m)
        };
        // split at the kinks so the integrand is smooth on each piece
        let mut cuts = vec![0.0, r];
        for k in [-r0, r0] {
            if (k > 0.0 && k < r) || (k < 0.0 && k > r) {
                cuts.push(k);
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let sign = if r >= 0.0 { 1.0 } else { -1.0 };
        cuts.windows(2)
            .map(|w| gauss_legendre(|t| (r - t) / b(t), w[0], w[1], 400))
            .sum::<f64>()
            * sign
    }

    fn unit() -> MaterialSpec {
        MaterialSpec::log_quench(1.0, 2.0, 1.0).unwrap()
    }

    #[test]
    fn mobility_values() {
        let s = unit();
        assert_eq!(s.eval_b(0.0), 1.0);
        assert_eq!(s.eval_b(1.5), 0.0);
        assert!((s.eval_b(0.9) - 0.19).abs() < 1e-15);
        assert_eq!(s.mobility_lipschitz(), 2.0);
    }

    #[test]
    fn regularized_mobility() {
        let reg = RegularizedMaterial::new(unit(), 0.1).unwrap();
        assert!((reg.eval_b_delta(0.95) - 0.19).abs() < 1e-15);
        assert!((reg.eval_b_delta(-3.0) - 0.19).abs() < 1e-15);
        assert_eq!(reg.eval_b_delta_prime(0.9), 0.0);
        assert_eq!(reg.eval_b_delta_prime(-0.9), 0.0);
        assert!((reg.c_delta() - 1.0 / 0.19).abs() < 1e-12);
        let lower = reg.base().eval_b(0.9).min(reg.base().eval_b(-0.9));
        for i in 0..100_000 {
            let r = -4.0 + 8.0 * i as f64 / 100_000.0;
            assert!(reg.eval_b_delta(r) >= lower);
            assert!(reg.eval_b_delta_prime(r).abs() <= 2.0);
        }
    }

    #[test]
    fn lipschitz_constant_is_delta_independent() {
        for m in [1.0, 2.0, 3.0] {
            let base = MaterialSpec::double_well(m).unwrap();
            let l = base.mobility_lipschitz();
            for delta in [0.2, 0.1, 0.05, 0.01] {
                let reg = RegularizedMaterial::new(base.clone(), delta).unwrap();
                assert!((reg.base().mobility_lipschitz() - l).abs() <= 1e-12);
                for i in 0..20_000 {
                    let r = -1.5 + 3.0 * i as f64 / 20_000.0;
                    assert!(reg.eval_b_delta_prime(r).abs() <= l * (1.0 + 1e-12));
                }
            }
        }
        // m = 2: |b'| = 4|r|(1-r^2) peaks at r = 1/sqrt(3)
        let exact = 8.0 / (3.0 * 3f64.sqrt());
        let l2 = MaterialSpec::double_well(2.0).unwrap().mobility_lipschitz();
        assert!((l2 - exact).abs() < 1e-12);
    }

    #[test]
    fn psi_delta_second_derivative() {
        let reg = RegularizedMaterial::new(unit(), 0.1).unwrap();
        let inside = reg.eval_psi_delta(0.5, Order::Second);
        assert!((inside - (-2.0 / 3.0)).abs() < 1e-14);
        // frozen curvature outside: 1/0.19 - 2
        let outside = reg.eval_psi_delta(2.0, Order::Second);
        assert!((outside - 3.263_157_894_736_842).abs() < 1e-12);
    }

    #[test]
    fn psi1_delta_taylor_value_and_gluing() {
        let reg = RegularizedMaterial::new(unit(), 0.1).unwrap();
        // high-precision-equivalent closed form values at 0.9
        let p = 0.5 * (1.9 * 1.9f64.ln() + 0.1 * 0.1f64.ln());
        let dp = 0.9f64.atanh();
        let ddp = 1.0 / 0.19;
        let expected = p + 0.1 * dp + 0.005 * ddp;
        assert!((reg.eval_psi1_delta(1.0, Order::Value) - expected).abs() < 1e-13);

        for r in [-0.9, 0.9] {
            let eps = 1e-13;
            for order in [Order::Value, Order::First, Order::Second] {
                let left = reg.eval_psi1_delta(r - eps, order);
                let right = reg.eval_psi1_delta(r + eps, order);
                let tol = 1e-12 * (1.0 + left.abs());
                assert!((left - right).abs() <= tol, "{r} {order:?}: {left} vs {right}");
            }
        }
        assert_eq!(reg.eval_psi1_delta(0.0, Order::Value), 0.0);
        assert_eq!(reg.eval_psi1_delta(0.0, Order::First), 0.0);
    }

    #[test]
    fn phi_delta_values() {
        let reg = RegularizedMaterial::new(unit(), 0.1).unwrap();
        assert_eq!(reg.eval_phi_delta(0.0, Order::Value), 0.0);
        assert_eq!(reg.eval_phi_delta(0.0, Order::First), 0.0);
        assert_eq!(reg.eval_phi_delta(0.0, Order::Second), 1.0);
        let oracle = phi_oracle(1.0, 0.1, 0.5);
        assert!((reg.eval_phi_delta(0.5, Order::Value) - oracle).abs() < 1e-9);
        assert!((oracle - 0.130_812_035_941_137).abs() < 1e-9, "{oracle}");
        assert!((reg.eval_phi_delta(0.95, Order::Second) - 1.0 / 0.19).abs() < 1e-12);
    }

    #[test]
    fn phi_closed_form_matches_quadrature() {
        for m in [1.0, 2.0] {
            for delta in [0.2, 0.05, 0.01] {
                let base = MaterialSpec::double_well(m).unwrap();
                let closed = RegularizedMaterial::new(base.clone(), delta).unwrap();
                let table =
                    RegularizedMaterial::with_evaluation(base, delta, PhiEvaluation::Quadrature).unwrap();
                assert!(closed.uses_closed_form_phi() && !table.uses_closed_form_phi());
                for i in 0..=400 {
                    let r = -1.6 + 3.2 * i as f64 / 400.0;
                    for order in [Order::Value, Order::First] {
                        let a = closed.eval_phi_delta(r, order);
                        let b = table.eval_phi_delta(r, order);
                        assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "m={m} δ={delta} r={r}");
                    }
                }
            }
        }
    }

    #[test]
    fn phi_delta_matches_oracle_everywhere() {
        for (m, delta) in [(1.0, 0.1), (2.0, 0.05), (3.0, 0.2)] {
            let reg = RegularizedMaterial::new(MaterialSpec::double_well(m).unwrap(), delta).unwrap();
            for r in [-2.0, -1.05, -0.7, 0.3, 0.96, 1.2] {
                let o = phi_oracle(m, delta, r);
                assert!((reg.eval_phi_delta(r, Order::Value) - o).abs() < 1e-8 * (1.0 + o), "{m} {r}");
            }
        }
    }

    #[test]
    fn convexity() {
        for base in [unit(), MaterialSpec::double_well(2.0).unwrap()] {
            let reg = RegularizedMaterial::new(base, 0.05).unwrap();
            for i in 0..=10_000 {
                let r = -3.0 + 6.0 * i as f64 / 10_000.0;
                assert!(reg.eval_phi_delta(r, Order::Second) > 0.0);
                assert!(reg.eval_psi1_delta(r, Order::Second) >= 0.0);
                assert!(reg.eval_phi_delta(r, Order::Value) >= 0.0);
            }
        }
    }

    #[test]
    fn mobility_potential_identity() {
        for base in [
            unit(),
            MaterialSpec::log_quench(0.7, 1.5, 2.0).unwrap(),
            MaterialSpec::double_well(1.0).unwrap(),
            MaterialSpec::double_well(3.0).unwrap(),
        ] {
            for i in 1..10_000 {
                let r = -1.0 + 2.0 * i as f64 / 10_000.0;
                let b = base.eval_b(r);
                let psi2 = base.psi2(r, Order::Second);
                let lhs = b * (base.psi1_second(r) + psi2);
                let rhs = base.potential_weight(r) * base.mobility_factor(r) + b * psi2;
                assert!((lhs - rhs).abs() <= 1e-12, "{r}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn excess_bound_holds_on_grid() {
        for m in [1.0, 2.0] {
            for delta in [0.2, 0.1, 0.05] {
                let reg = RegularizedMaterial::new(MaterialSpec::double_well(m).unwrap(), delta).unwrap();
                for i in 0..10_000 {
                    let z = -3.0 + 6.0 * i as f64 / 9_999.0;
                    assert!(reg.check_excess_bound(z), "m={m} δ={delta} z={z}");
                }
            }
        }
        let reg = RegularizedMaterial::new(unit(), 0.1).unwrap();
        assert!(reg.check_excess_bound(0.5));
        // oracle for the two named points
        let lhs: f64 = 0.2 * 0.2;
        assert!(lhs <= 4.0 * 0.1 * phi_oracle(1.0, 0.1, 1.2));
        assert!(reg.check_excess_bound(1.2));
        let reg2 = RegularizedMaterial::new(MaterialSpec::double_well(2.0).unwrap(), 0.05).unwrap();
        assert!(0.05f64.powi(2) <= 8.0 * 0.0025 * phi_oracle(2.0, 0.05, -1.05));
        assert!(reg2.check_excess_bound(-1.05));
    }

    #[test]
    fn custom_material_uses_tables() {
        let custom = CustomMaterial {
            mobility_factor: Arc::new(|r| 1.0 + 0.25 * r),
            mobility_factor_prime: Arc::new(|_| 0.25),
            mobility_bounds: (0.75, 1.25),
            potential_weight: Arc::new(|_| 0.5),
            psi2: [
                Arc::new(|r| 1.0 - r * r),
                Arc::new(|r| -2.0 * r),
                Arc::new(|_| -2.0),
            ],
        };
        let base = MaterialSpec::custom(1.0, custom).unwrap();
        let reg = RegularizedMaterial::new(base, 0.1).unwrap();
        assert!(!reg.uses_closed_form_phi());
        // ψ₁ = ½·(log entropy) for F ≡ ½, m = 1
        let r: f64 = 0.6;
        let psi1 = 0.25 * ((1.0 + r) * (1.0 + r).ln() + (1.0 - r) * (1.0 - r).ln());
        assert!((reg.eval_psi1_delta(r, Order::Value) - psi1).abs() < 1e-9);
        // Φ'' = 1/b_δ exactly, Φ(0) = 0
        assert_eq!(reg.eval_phi_delta(0.0, Order::Value), 0.0);
        let b = (1.0 - r * r) * (1.0 + 0.25 * r);
        assert!((reg.eval_phi_delta(r, Order::Second) - 1.0 / b).abs() < 1e-14);
        for i in 0..=1000 {
            let z = -2.0 + 4.0 * i as f64 / 1000.0;
            assert!(reg.check_excess_bound(z));
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(MaterialSpec::double_well(0.5).is_err());
        assert!(MaterialSpec::log_quench(-1.0, 2.0, 1.0).is_err());
        assert!(RegularizedMaterial::new(unit(), 1.5).is_err());
        assert!(RegularizedMaterial::new(unit(), 0.0).is_err());
    }

    #[test]
    fn initial_datum_scaling() {
        let grid = Arc::new(TorusGrid::new(&[16], &[(0.0, 1.0)]).unwrap());
        let ones = Field::constant(grid.clone(), 1.0);
        let r = regularize_initial(&ones, 0.1).unwrap();
        assert!(r.values().iter().all(|v| (*v - 0.9).abs() < 1e-15));
        let zero = Field::constant(grid.clone(), 0.0);
        assert_eq!(regularize_initial(&zero, 0.3).unwrap().values(), zero.values());
        let prof = Field::from_fn(grid.clone(), |x| 0.999 * (100.0 * (x[0] - 0.3)).tanh());
        let reg = regularize_initial(&prof, 0.05).unwrap();
        assert!((reg.linf() - 0.94905).abs() < 1e-12);
        let mean_ratio = reg.mean() / prof.mean();
        assert!((mean_ratio - 0.95).abs() < 1e-12);
        let bad = Field::constant(grid, 1.1);
        assert!(matches!(
            regularize_initial(&bad, 0.1),
            Err(Error::InitialDatumOutOfRange { .. })
        ));
    }
}
