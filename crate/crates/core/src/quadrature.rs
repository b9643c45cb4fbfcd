//! Adaptive Simpson quadrature and a cubic Hermite table for functions of the
//! form `G0(r) = ∫₀^r ∫₀^s g(τ) dτ ds`.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let v = recurse(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
        .ok_or(Error::QuadratureFailure { a, b, tol })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::QuadratureFailure { a, b, tol })
    }
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Option<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return None;
    }
    if delta.abs() <= 15.0 * tol {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    Some(
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
    )
}

/// Tabulated first and second antiderivatives of `g` anchored at zero,
/// `G1(r) = ∫₀^r g` and `G0(r) = ∫₀^r G1`, on a symmetric interval `[-r_max, r_max]`.
#[derive(Debug, Clone)]
pub struct DoubleIntegralTable {
    r_max: f64,
    h: f64,
    g0: Vec<f64>,
    g1: Vec<f64>,
    g: Vec<f64>,
}

impl DoubleIntegralTable {
    /// Builds the table with `intervals` (rounded up to even) uniform cells and
    /// a total absolute tolerance `tol`.
    pub fn build<F: Fn(f64) -> f64>(g: F, r_max: f64, intervals: usize, tol: f64) -> Result<Self> {
        let n = intervals + intervals % 2;
        let h = 2.0 * r_max / n as f64;
        let mid = n / 2;
        let node = |i: usize| {
            if i == mid {
                0.0
            } else {
                -r_max + i as f64 * h
            }
        };
        let cell_tol = tol / n as f64;
        let mut g0 = vec![0.0; n + 1];
        let mut g1 = vec![0.0; n + 1];
        let gv: Vec<f64> = (0..=n).map(|i| g(node(i))).collect();

        for i in mid..n {
            let (a, b) = (node(i), node(i + 1));
            let i1 = adaptive_simpson(&g, a, b, cell_tol)?;
            let i0 = adaptive_simpson(&|t| (b - t) * g(t), a, b, cell_tol)?;
            g1[i + 1] = g1[i] + i1;
            g0[i + 1] = g0[i] + g1[i] * (b - a) + i0;
        }
        for i in (1..=mid).rev() {
            let (a, b) = (node(i - 1), node(i));
            let i1 = adaptive_simpson(&g, a, b, cell_tol)?;
            let i0 = adaptive_simpson(&|t| (t - a) * g(t), a, b, cell_tol)?;
            g1[i - 1] = g1[i] - i1;
            g0[i - 1] = g0[i] - g1[i] * (b - a) + i0;
        }
        Ok(Self {
            r_max,
            h,
            g0,
            g1,
            g: gv,
        })
    }

    fn locate(&self, r: f64) -> (usize, f64) {
        let n = self.g0.len() - 1;
        let x = ((r + self.r_max) / self.h).clamp(0.0, n as f64);
        let i = (x.floor() as usize).min(n - 1);
        (i, x - i as f64)
    }

    /// `G0(r)` for `|r| <= r_max`.
    pub fn value(&self, r: f64) -> f64 {
        let (i, t) = self.locate(r);
        hermite(self.g0[i], self.g0[i + 1], self.g1[i], self.g1[i + 1], self.h, t)
    }

    /// `G1(r)` for `|r| <= r_max`.
    pub fn first(&self, r: f64) -> f64 {
        let (i, t) = self.locate(r);
        hermite(self.g1[i], self.g1[i + 1], self.g[i], self.g[i + 1], self.h, t)
    }
}

#[inline]
fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}
