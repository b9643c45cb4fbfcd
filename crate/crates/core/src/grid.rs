//! Uniform periodic grids on a flat torus and grid functions.
//!
//! Vector quantities built from [`Field::grad_h`] use forward quotients and
//! [`VectorField::div_h`] uses backward quotients, so the pair is exactly
//! adjoint under the midpoint quadrature `⟨f, g⟩ = Σ f g · cellvol`:
//!
//! ```text
//! ⟨grad_h f, v⟩ = -⟨f, div_h v⟩
//! ```
//!
//! The component of a vector field along axis `j` lives on the face
//! `x + h_j e_j / 2` of the node `x` it is stored at.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TorusGrid {
    n: Vec<usize>,
    extents: Vec<(f64, f64)>,
    h: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
    cell_volume: f64,
}

impl TorusGrid {
    /// `n[i]` points on axis `i` (a power of two, at least 8) over `extents[i] = (a_i, b_i)`.
    pub fn new(n: &[usize], extents: &[(f64, f64)]) -> Result<Self> {
        let d = n.len();
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidArgument(format!(
                "grid dimension must be 1, 2 or 3, got {d}"
            )));
        }
        if extents.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: extents.len(),
            });
        }
        for &ni in n {
            if ni < 8 || !ni.is_power_of_two() {
                return Err(Error::InvalidArgument(format!(
                    "points per axis must be a power of two >= 8, got {ni}"
                )));
            }
        }
        for &(a, b) in extents {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidArgument(format!(
                    "grid extent ({a}, {b}) must satisfy a < b"
                )));
            }
        }
        let h: Vec<f64> = n
            .iter()
            .zip(extents)
            .map(|(&ni, &(a, b))| (b - a) / ni as f64)
            .collect();
        let mut strides = vec![1; d];
        for i in (0..d.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * n[i + 1];
        }
        Ok(Self {
            n: n.to_vec(),
            extents: extents.to_vec(),
            len: n.iter().product(),
            cell_volume: h.iter().product(),
            h,
            strides,
        })
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn points(&self) -> &[usize] {
        &self.n
    }

    pub fn extents(&self) -> &[(f64, f64)] {
        &self.extents
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn volume(&self) -> f64 {
        self.cell_volume * self.len as f64
    }

    /// Multi-index of a flat (row-major) index.
    pub fn index(&self, flat: usize) -> [usize; 3] {
        let mut idx = [0; 3];
        for (i, (&s, &n)) in self.strides.iter().zip(&self.n).enumerate() {
            idx[i] = (flat / s) % n;
        }
        idx
    }

    /// Coordinates of a node.
    pub fn coords(&self, flat: usize) -> [f64; 3] {
        let idx = self.index(flat);
        let mut x = [0.0; 3];
        for i in 0..self.dim() {
            x[i] = self.extents[i].0 + idx[i] as f64 * self.h[i];
        }
        x
    }

    /// `out[x] = values[x + shift·e_axis]` with periodic wrap, `shift ∈ {-1, 1}`.
    fn shifted(&self, values: &[f64], axis: usize, shift: isize) -> Vec<f64> {
        let n = self.n[axis];
        let s = self.strides[axis];
        let block = n * s;
        let mut out = vec![0.0; values.len()];
        for base in (0..values.len()).step_by(block) {
            for k in 0..n {
                let src = (k as isize + shift).rem_euclid(n as isize) as usize;
                let dst = base + k * s;
                let from = base + src * s;
                out[dst..dst + s].copy_from_slice(&values[from..from + s]);
            }
        }
        out
    }

    /// Discrete symbol of `-Δ_h` for every Fourier mode, in flat mode order.
    pub fn laplacian_symbols(&self) -> Vec<f64> {
        (0..self.len)
            .map(|k| {
                let idx = self.index(k);
                (0..self.dim())
                    .map(|j| {
                        let s = (PI * idx[j] as f64 / self.n[j] as f64).sin();
                        4.0 / (self.h[j] * self.h[j]) * s * s
                    })
                    .sum()
            })
            .collect()
    }
}

/// One scalar unknown on a [`TorusGrid`], stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<TorusGrid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<TorusGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<TorusGrid>, c: f64) -> Self {
        let values = vec![c; grid.len()];
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<TorusGrid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: Arc<TorusGrid>, f: F) -> Self {
        let d = grid.dim();
        let values = (0..grid.len()).map(|i| f(&grid.coords(i)[..d])).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &Field, f: F) -> Self {
        debug_assert_eq!(self.values.len(), other.values.len());
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Values shifted by one node along `axis`: `f(x + shift·h e_axis)`.
    pub fn shifted(&self, axis: usize, shift: isize) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.grid.shifted(&self.values, axis, shift),
        }
    }

    /// `∂_j^{+h} f(x) = (f(x + h e_j) - f(x)) / h`.
    pub fn dq_forward(&self, axis: usize) -> Self {
        let inv_h = 1.0 / self.grid.h[axis];
        let next = self.grid.shifted(&self.values, axis, 1);
        Self {
            grid: self.grid.clone(),
            values: next.iter().zip(&self.values).map(|(a, b)| (a - b) * inv_h).collect(),
        }
    }

    /// `∂_j^{-h} f(x) = (f(x) - f(x - h e_j)) / h`.
    pub fn dq_backward(&self, axis: usize) -> Self {
        let inv_h = 1.0 / self.grid.h[axis];
        let prev = self.grid.shifted(&self.values, axis, -1);
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&prev).map(|(a, b)| (a - b) * inv_h).collect(),
        }
    }

    pub fn grad_h(&self) -> VectorField {
        VectorField {
            comps: (0..self.grid.dim()).map(|j| self.dq_forward(j)).collect(),
        }
    }

    /// `Σ_j ∂_j^{-h} ∂_j^{+h} f`.
    pub fn lap_h(&self) -> Self {
        self.grad_h().div_h()
    }

    /// Midpoint-rule integral `Σ f · cellvol`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `⟨f, g⟩ = Σ f g · cellvol`.
    pub fn inner(&self, other: &Field) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell_volume
    }

    pub fn l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn h1_semi(&self) -> f64 {
        self.grad_h().l2()
    }

    /// `(L2, Linf, H1 seminorm)`.
    pub fn norms(&self) -> (f64, f64, f64) {
        (self.l2(), self.linf(), self.h1_semi())
    }

    /// `Σ_{i,j} ‖∂_j^{+h} ∂_i^{+h} f‖²`.
    pub fn hessian_frobenius_sq(&self) -> f64 {
        let d = self.grid.dim();
        let mut total = 0.0;
        for i in 0..d {
            let di = self.dq_forward(i);
            for j in 0..d {
                let dij = di.dq_forward(j);
                total += dij.inner(&dij);
            }
        }
        total
    }

    pub fn axpy(&mut self, alpha: f64, x: &Field) {
        for (v, w) in self.values.iter_mut().zip(&x.values) {
            *v += alpha * w;
        }
    }
}

/// A d-tuple of fields; component `j` lives on the forward face along axis `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub comps: Vec<Field>,
}

impl VectorField {
    pub fn zeros(grid: &Arc<TorusGrid>, n: usize) -> Self {
        Self {
            comps: (0..n).map(|_| Field::zeros(grid.clone())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.comps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comps.is_empty()
    }

    /// `Σ_j ∂_j^{-h} v_j`.
    pub fn div_h(&self) -> Field {
        let mut iter = self.comps.iter().enumerate();
        let (_, first) = iter.next().expect("empty vector field");
        let mut out = first.dq_backward(0);
        for (j, c) in iter {
            out.axpy(1.0, &c.dq_backward(j));
        }
        out
    }

    pub fn inner(&self, other: &VectorField) -> f64 {
        self.comps.iter().zip(&other.comps).map(|(a, b)| a.inner(b)).sum()
    }

    pub fn l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn linf(&self) -> f64 {
        let n = self.comps[0].values.len();
        (0..n)
            .map(|i| self.comps.iter().map(|c| c.values[i] * c.values[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Forward quotients of every component: `‖D v‖` in the L² sense.
    pub fn jacobian_l2(&self) -> f64 {
        let mut total = 0.0;
        for c in &self.comps {
            for j in 0..c.grid.dim() {
                let d = c.dq_forward(j);
                total += d.inner(&d);
            }
        }
        total.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(Field::is_finite)
    }
}

/// Forward and inverse plan for one axis.
type AxisPlans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

/// Constant-coefficient solves by discrete Fourier transform.
pub struct SpectralSolver {
    grid: Arc<TorusGrid>,
    plans: Vec<AxisPlans>,
    symbols: Vec<f64>,
}

impl std::fmt::Debug for SpectralSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralSolver").field("grid", &self.grid).finish()
    }
}

impl SpectralSolver {
    pub fn new(grid: Arc<TorusGrid>) -> Self {
        let mut planner = FftPlanner::new();
        let plans = grid
            .n
            .iter()
            .map(|&n| (planner.plan_fft_forward(n), planner.plan_fft_inverse(n)))
            .collect();
        let symbols = grid.laplacian_symbols();
        Self {
            grid,
            plans,
            symbols,
        }
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    /// Symbol `λ_k >= 0` of `-Δ_h` for flat mode index `k`.
    pub fn laplacian_symbol(&self, k: usize) -> f64 {
        self.symbols[k]
    }

    fn transform(&self, data: &mut [Complex<f64>], inverse: bool) {
        let g = &self.grid;
        for axis in 0..g.dim() {
            let n = g.n[axis];
            let s = g.strides[axis];
            let plan = if inverse { &self.plans[axis].1 } else { &self.plans[axis].0 };
            let mut line = vec![Complex::new(0.0, 0.0); n];
            let block = n * s;
            for base in (0..data.len()).step_by(block) {
                for off in 0..s {
                    for k in 0..n {
                        line[k] = data[base + off + k * s];
                    }
                    plan.process(&mut line);
                    for k in 0..n {
                        data[base + off + k * s] = line[k];
                    }
                }
            }
        }
        if inverse {
            let scale = 1.0 / data.len() as f64;
            data.iter_mut().for_each(|c| *c *= scale);
        }
    }

    /// Returns `u` with `multiplier(k) · û(k) = r̂(k)` for every mode `k`.
    ///
    /// A zero multiplier is allowed only where the rhs mode vanishes (relative
    /// magnitude `<= 1e-12`); that mode of `u` is set to zero.
    pub fn solve<M: Fn(usize) -> f64>(&self, rhs: &Field, multiplier: M) -> Result<Field> {
        let mut data: Vec<Complex<f64>> = rhs.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        let scale = data.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
        let mults: Vec<f64> = (0..data.len()).map(&multiplier).collect();
        let mscale = mults.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (k, (c, &mk)) in data.iter_mut().zip(&mults).enumerate() {
            if mk.abs() <= 1e-14 * mscale || mk == 0.0 {
                let magnitude = if scale > 0.0 { c.norm() / scale } else { 0.0 };
                if magnitude > 1e-12 {
                    return Err(Error::SingularMode { mode: k, magnitude });
                }
                *c = Complex::new(0.0, 0.0);
            } else {
                *c /= mk;
            }
        }
        self.transform(&mut data, true);
        Ok(Field {
            grid: rhs.grid.clone(),
            values: data.iter().map(|c| c.re).collect(),
        })
    }
}

const SNAPSHOT_MAGIC: &[u8; 5] = b"ADCH1";

/// Writes `ADCH1 | u32 d | u32 N_i.. | f64 (a_i, b_i).. | f64 t | f64 values..`,
/// all little-endian.
pub fn write_snapshot<W: Write>(mut w: W, field: &Field, time: f64) -> Result<()> {
    let g = &field.grid;
    let mut buf = Vec::with_capacity(5 + 4 * (1 + g.dim()) + 8 * (2 * g.dim() + 1 + g.len()));
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    for &n in &g.n {
        buf.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for &(a, b) in &g.extents {
        buf.extend_from_slice(&a.to_le_bytes());
        buf.extend_from_slice(&b.to_le_bytes());
    }
    buf.extend_from_slice(&time.to_le_bytes());
    for v in &field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a snapshot written by [`write_snapshot`]; returns the field and its time.
pub fn read_snapshot<R: Read>(mut r: R) -> Result<(Field, f64)> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Io("not an ADCH1 snapshot".into()));
    }
    let mut u32buf = [0u8; 4];
    let mut f64buf = [0u8; 8];
    let mut read_u32 = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let d = read_u32(&mut r)? as usize;
    if !(1..=3).contains(&d) {
        return Err(Error::Io(format!("snapshot dimension {d} out of range")));
    }
    let mut n = Vec::with_capacity(d);
    for _ in 0..d {
        n.push(read_u32(&mut r)? as usize);
    }
    let mut read_f64 = |r: &mut R| -> Result<f64> {
        r.read_exact(&mut f64buf)?;
        Ok(f64::from_le_bytes(f64buf))
    };
    let mut extents = Vec::with_capacity(d);
    for _ in 0..d {
        let a = read_f64(&mut r)?;
        let b = read_f64(&mut r)?;
        extents.push((a, b));
    }
    let time = read_f64(&mut r)?;
    let grid = Arc::new(TorusGrid::new(&n, &extents)?);
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        values.push(read_f64(&mut r)?);
    }
    Ok((Field { grid, values }, time))
}
