//! Two-homogeneous anisotropy densities `A(p) = ½ γ(p)²` and their gradients.
//!
//! Three families are provided. All of them are `C^{1,1}`, positive away from
//! the origin and have a strongly monotone gradient when their matrix
//! parameters are symmetric positive definite:
//!
//! * `Isotropic`: `A(p) = ½|p|²`.
//! * `Quadratic`: `A(p) = ½ p·Mp`.
//! * `EllipsoidSum`: `γ(p) = Σ_l √(p·G_l p)`, a genuinely non-quadratic density
//!   whose gradient is not differentiable at the origin.
//!
//! The structural constants `(A0, A1, A2, cA)` are certified by deterministic
//! seeded sampling, see [`AnisotropySpec::certify_constants`].

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Largest spatial dimension handled by the pointwise kernels.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum AnisotropyFamily {
    Isotropic,
    /// Row-major symmetric `d×d` matrix `M`.
    Quadratic(Vec<f64>),
    /// Row-major symmetric `d×d` matrices `G_l`.
    EllipsoidSum(Vec<Vec<f64>>),
}

/// Certified structural constants of an anisotropy density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisotropyConstants {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub c_a: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnisotropySpec {
    family: AnisotropyFamily,
    dim: usize,
    constants: Option<AnisotropyConstants>,
}

fn check_symmetric(m: &[f64], dim: usize, what: &str) -> Result<()> {
    if m.len() != dim * dim {
        return Err(Error::InvalidArgument(format!(
            "{what} needs {} entries for d = {dim}, got {}",
            dim * dim,
            m.len()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} has non-finite entries")));
    }
    for i in 0..dim {
        for j in 0..i {
            let (a, b) = (m[i * dim + j], m[j * dim + i]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::InvalidArgument(format!("{what} is not symmetric")));
            }
        }
    }
    Ok(())
}

#[inline]
fn mat_vec(m: &[f64], p: &[f64], out: &mut [f64]) {
    let d = p.len();
    for i in 0..d {
        let row = &m[i * d..(i + 1) * d];
        out[i] = row.iter().zip(p).map(|(a, b)| a * b).sum();
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn eigenvalues(m: &[f64], dim: usize) -> Vec<f64> {
    let mat = DMatrix::from_row_slice(dim, dim, m);
    SymmetricEigen::new(mat).eigenvalues.iter().copied().collect()
}

impl AnisotropySpec {
    pub fn isotropic(dim: usize) -> Result<Self> {
        Self::new(AnisotropyFamily::Isotropic, dim)
    }

    pub fn quadratic(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        Self::new(AnisotropyFamily::Quadratic(matrix), dim)
    }

    pub fn ellipsoid_sum(dim: usize, matrices: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(AnisotropyFamily::EllipsoidSum(matrices), dim)
    }

    pub fn new(family: AnisotropyFamily, dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "anisotropy dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        match &family {
            AnisotropyFamily::Isotropic => {}
            AnisotropyFamily::Quadratic(m) => check_symmetric(m, dim, "quadratic matrix")?,
            AnisotropyFamily::EllipsoidSum(gs) => {
                if gs.is_empty() {
                    return Err(Error::InvalidArgument(
                        "ellipsoid_sum needs at least one matrix".into(),
                    ));
                }
                for g in gs {
                    check_symmetric(g, dim, "ellipsoid matrix")?;
                }
            }
        }
        Ok(Self {
            family,
            dim,
            constants: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &AnisotropyFamily {
        &self.family
    }

    pub fn constants(&self) -> Option<AnisotropyConstants> {
        self.constants
    }

    /// Name used in configuration files.
    pub fn family_name(&self) -> &'static str {
        match self.family {
            AnisotropyFamily::Isotropic => "isotropic",
            AnisotropyFamily::Quadratic(_) => "quadratic",
            AnisotropyFamily::EllipsoidSum(_) => "ellipsoid_sum",
        }
    }

    fn check_dim(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: p.len(),
            });
        }
        Ok(())
    }

    /// `A(p)`.
    pub fn eval_a(&self, p: &[f64]) -> Result<f64> {
        self.check_dim(p)?;
        Ok(self.a(p))
    }

    /// `A'(p)`, with `A'(0) = 0`.
    pub fn eval_agrad(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(p)?;
        let mut out = vec![0.0; self.dim];
        self.agrad_into(p, &mut out);
        Ok(out)
    }

    /// Unchecked `A(p)`; `p.len()` must equal `dim`.
    #[inline]
    pub fn a(&self, p: &[f64]) -> f64 {
        match &self.family {
            AnisotropyFamily::Isotropic => 0.5 * dot(p, p),
            AnisotropyFamily::Quadratic(m) => {
                let mut mp = [0.0; MAX_DIM];
                mat_vec(m, p, &mut mp[..p.len()]);
                0.5 * dot(p, &mp[..p.len()])
            }
            AnisotropyFamily::EllipsoidSum(gs) => {
                let g = self.gamma(gs, p);
                0.5 * g * g
            }
        }
    }

    fn gamma(&self, gs: &[Vec<f64>], p: &[f64]) -> f64 {
        let mut gp = [0.0; MAX_DIM];
        gs.iter()
            .map(|g| {
                mat_vec(g, p, &mut gp[..p.len()]);
                dot(p, &gp[..p.len()]).max(0.0).sqrt()
            })
            .sum()
    }

    /// Unchecked `A'(p)` written into `out`.
    #[inline]
    pub fn agrad_into(&self, p: &[f64], out: &mut [f64]) {
        let d = p.len();
        match &self.family {
            AnisotropyFamily::Isotropic => out.copy_from_slice(p),
            AnisotropyFamily::Quadratic(m) => mat_vec(m, p, out),
            AnisotropyFamily::EllipsoidSum(gs) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                let mut gp = [0.0; MAX_DIM];
                let mut gamma = 0.0;
                for g in gs {
                    mat_vec(g, p, &mut gp[..d]);
                    let n = dot(p, &gp[..d]).max(0.0).sqrt();
                    if n > 0.0 {
                        gamma += n;
                        for (o, v) in out.iter_mut().zip(&gp[..d]) {
                            *o += v / n;
                        }
                    }
                }
                if gamma == 0.0 {
                    out.iter_mut().for_each(|v| *v = 0.0);
                } else {
                    out.iter_mut().for_each(|v| *v *= gamma);
                }
            }
        }
    }

    /// Upper bound for the Lipschitz constant of `A'`, derived from the
    /// family parameters (not sampled).
    pub fn agrad_lipschitz_bound(&self) -> f64 {
        match &self.family {
            AnisotropyFamily::Isotropic => 1.0,
            AnisotropyFamily::Quadratic(m) => eigenvalues(m, self.dim)
                .into_iter()
                .fold(0.0, |acc, l| acc.max(l.abs())),
            AnisotropyFamily::EllipsoidSum(gs) => {
                // |A''| <= S^2 + S * sum_l lmax_l / sqrt(lmin_l),  S = sum_l sqrt(lmax_l)
                let mut s = 0.0;
                let mut t = 0.0;
                for g in gs {
                    let ev = eigenvalues(g, self.dim);
                    let lmax = ev.iter().cloned().fold(f64::MIN, f64::max);
                    let lmin = ev.iter().cloned().fold(f64::MAX, f64::min);
                    if lmin <= 0.0 {
                        return f64::INFINITY;
                    }
                    s += lmax.sqrt();
                    t += lmax / lmin.sqrt();
                }
                s * s + s * t
            }
        }
    }

    /// Certifies `(A0, A1, A2, cA)` from `n_samples` seeded directions and
    /// pairs, stores the result and returns it.
    ///
    /// The sample set always contains the coordinate axes and their
    /// negatives, so axis-aligned extremes are hit exactly.
    pub fn certify_constants(&mut self, n_samples: usize, seed: u64) -> Result<AnisotropyConstants> {
        if n_samples < 1000 {
            return Err(Error::InvalidArgument(format!(
                "certification needs at least 1000 samples, got {n_samples}"
            )));
        }
        let d = self.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut directions: Vec<[f64; MAX_DIM]> = Vec::with_capacity(n_samples + 2 * d);
        for axis in 0..d {
            for sign in [1.0, -1.0] {
                let mut e = [0.0; MAX_DIM];
                e[axis] = sign;
                directions.push(e);
            }
        }
        while directions.len() < n_samples + 2 * d {
            directions.push(random_unit(&mut rng, d));
        }

        let mut a0 = f64::INFINITY;
        let mut a1 = 0.0_f64;
        let mut a2 = 0.0_f64;
        let mut grad = [0.0; MAX_DIM];
        for u in &directions {
            let u = &u[..d];
            let a = self.a(u);
            if !(a.is_finite() && a > 0.0) {
                // positivity is reported after monotonicity, see below
                a0 = a0.min(a);
                continue;
            }
            a0 = a0.min(a);
            a1 = a1.max(a);
            self.agrad_into(u, &mut grad[..d]);
            a2 = a2.max(dot(&grad[..d], &grad[..d]).sqrt());
        }

        // Monotonicity quotient over antipodal pairs, random pairs with random
        // radii and near pairs (which probe the local curvature of A).
        let mut c_a = f64::INFINITY;
        let mut gq = [0.0; MAX_DIM];
        let mut quotient = |p: &[f64], q: &[f64], gp: &mut [f64], gq: &mut [f64]| {
            self.agrad_into(p, gp);
            self.agrad_into(q, gq);
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..d {
                let dp = p[i] - q[i];
                num += (gp[i] - gq[i]) * dp;
                den += dp * dp;
            }
            if den > 0.0 {
                let r = num / den;
                c_a = if r.is_nan() { f64::NEG_INFINITY } else { c_a.min(r) };
            }
        };
        for (k, u) in directions.iter().enumerate() {
            let p = &u[..d];
            let neg: Vec<f64> = p.iter().map(|v| -v).collect();
            quotient(p, &neg, &mut grad[..d], &mut gq[..d]);

            let v = &directions[(k * 7919 + 1) % directions.len()][..d];
            let r1: f64 = rng.random_range(0.05..2.0);
            let r2: f64 = rng.random_range(0.0..2.0);
            let ps: Vec<f64> = p.iter().map(|x| r1 * x).collect();
            let qs: Vec<f64> = v.iter().map(|x| r2 * x).collect();
            quotient(&ps, &qs, &mut grad[..d], &mut gq[..d]);

            let w = random_unit(&mut rng, d);
            let eps = 1e-4;
            let qn: Vec<f64> = p.iter().zip(&w[..d]).map(|(x, y)| x + eps * y).collect();
            quotient(p, &qn, &mut grad[..d], &mut gq[..d]);
            // axis-aligned perturbations hit the extreme curvature of quadratics
            for axis in 0..d {
                let mut qa = p.to_vec();
                qa[axis] += eps;
                quotient(p, &qa, &mut grad[..d], &mut gq[..d]);
            }
        }

        if !(c_a > 0.0) {
            return Err(Error::NotStronglyMonotone { quotient: c_a });
        }
        if !(a0 > 0.0) {
            return Err(Error::NotPositive { value: a0 });
        }
        let constants = AnisotropyConstants { a0, a1, a2, c_a };
        self.constants = Some(constants);
        Ok(constants)
    }
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> [f64; MAX_DIM] {
    loop {
        let mut v = [0.0; MAX_DIM];
        for x in v.iter_mut().take(d) {
            *x = rng.sample(StandardNormal);
        }
        let n = dot(&v[..d], &v[..d]).sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let r: f64 = rng.random_range(0.01..5.0);
                random_unit(&mut rng, d)[..d].iter().map(|x| r * x).collect()
            })
            .collect()
    }

    fn ellipsoid_2d() -> AnisotropySpec {
        AnisotropySpec::ellipsoid_sum(
            2,
            vec![vec![1.0, 0.0, 0.0, 0.25], vec![0.5, 0.2, 0.2, 1.5]],
        )
        .unwrap()
    }

    fn families() -> Vec<AnisotropySpec> {
        vec![
            AnisotropySpec::isotropic(2).unwrap(),
            AnisotropySpec::quadratic(2, vec![1.0, 0.0, 0.0, 4.0]).unwrap(),
            ellipsoid_2d(),
            AnisotropySpec::ellipsoid_sum(
                3,
                vec![vec![1.0, 0.1, 0.0, 0.1, 2.0, 0.3, 0.0, 0.3, 0.7]],
            )
            .unwrap(),
        ]
    }

    #[test]
    fn closed_form_values() {
        let iso = AnisotropySpec::isotropic(2).unwrap();
        assert_eq!(iso.eval_a(&[3.0, 4.0]).unwrap(), 12.5);
        assert_eq!(iso.eval_agrad(&[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
        let q = AnisotropySpec::quadratic(2, vec![1.0, 0.0, 0.0, 4.0]).unwrap();
        assert_eq!(q.eval_a(&[1.0, 1.0]).unwrap(), 2.5);
        assert_eq!(q.eval_agrad(&[1.0, 1.0]).unwrap(), vec![1.0, 4.0]);
        for f in families() {
            let zero = vec![0.0; f.dim()];
            assert_eq!(f.eval_a(&zero).unwrap(), 0.0);
            assert!(f.eval_agrad(&zero).unwrap().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let iso = AnisotropySpec::isotropic(2).unwrap();
        assert_eq!(
            iso.eval_a(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        );
        assert!(iso.eval_agrad(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn euler_identity_and_homogeneity() {
        for f in families() {
            for p in sample_points(100_000, f.dim(), 11) {
                let a = f.a(&p);
                let g = f.eval_agrad(&p).unwrap();
                let n2 = dot(&p, &p);
                assert!((dot(&g, &p) - 2.0 * a).abs() <= 1e-12 * (1.0 + n2));
            }
            for p in sample_points(2000, f.dim(), 12) {
                let a = f.a(&p);
                let g = f.eval_agrad(&p).unwrap();
                let np = dot(&p, &p).sqrt();
                assert!((f.a(&p.iter().map(|x| 2.0 * x).collect::<Vec<_>>()) - 4.0 * a).abs() <= 1e-12 * 4.0 * a);
                for lambda in [0.5, 2.0, 10.0] {
                    let lp: Vec<f64> = p.iter().map(|x| lambda * x).collect();
                    let gl = f.eval_agrad(&lp).unwrap();
                    let err: f64 = gl
                        .iter()
                        .zip(&g)
                        .map(|(a, b)| (a - lambda * b).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    assert!(err <= 1e-12 * lambda * np.max(1.0), "{err}");
                }
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let step = 1e-6;
        for f in families() {
            let d = f.dim();
            for p in sample_points(10_000, d, 5) {
                let g = f.eval_agrad(&p).unwrap();
                let mut fd = vec![0.0; d];
                for i in 0..d {
                    let mut pp = p.clone();
                    let mut pm = p.clone();
                    pp[i] += step;
                    pm[i] -= step;
                    fd[i] = (f.a(&pp) - f.a(&pm)) / (2.0 * step);
                }
                let err: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let scale = dot(&g, &g).sqrt();
                assert!(err <= 1e-6 * scale, "{} at {p:?}: {err}", f.family_name());
            }
        }
    }

    #[test]
    fn certify_isotropic_is_exact() {
        let mut iso = AnisotropySpec::isotropic(2).unwrap();
        let c = iso.certify_constants(2000, 1).unwrap();
        assert!((c.a0 - 0.5).abs() < 1e-10);
        assert!((c.a1 - 0.5).abs() < 1e-10);
        assert!((c.a2 - 1.0).abs() < 1e-10);
        assert!((c.c_a - 1.0).abs() < 1e-10);
        assert_eq!(iso.constants(), Some(c));
    }

    #[test]
    fn certify_quadratic_matches_eigenvalues() {
        let m = vec![1.0, 0.0, 0.0, 4.0];
        // oracle: eigenvalues of M
        let ev = eigenvalues(&m, 2);
        let lmin = ev.iter().cloned().fold(f64::MAX, f64::min);
        let lmax = ev.iter().cloned().fold(f64::MIN, f64::max);
        let mut q = AnisotropySpec::quadratic(2, m).unwrap();
        let c = q.certify_constants(5000, 3).unwrap();
        assert!((c.a0 - 0.5 * lmin).abs() < 1e-6);
        assert!((c.a1 - 0.5 * lmax).abs() < 1e-6);
        assert!((c.c_a - lmin).abs() < 1e-6);
        assert!((c.a2 - lmax).abs() < 1e-6);
    }

    #[test]
    fn certify_rejects_indefinite() {
        let mut q = AnisotropySpec::quadratic(2, vec![1.0, 0.0, 0.0, -1.0]).unwrap();
        assert!(matches!(
            q.certify_constants(1000, 0),
            Err(Error::NotStronglyMonotone { .. })
        ));
        assert!(q.constants().is_none());
    }

    #[test]
    fn certify_needs_enough_samples() {
        let mut iso = AnisotropySpec::isotropic(1).unwrap();
        assert!(iso.certify_constants(10, 0).is_err());
    }

    #[test]
    fn certified_constants_are_consistent() {
        for mut f in families() {
            let c = f.certify_constants(4000, 9).unwrap();
            assert!(0.0 < c.a0 && c.a0 <= c.a1);
            assert!(c.c_a > 0.0);
            // sampled bounds hold on a fresh sample set
            for p in sample_points(2000, f.dim(), 77) {
                let n2 = dot(&p, &p);
                let a = f.a(&p);
                assert!(a >= c.a0 * n2 * (1.0 - 1e-3) && a <= c.a1 * n2 * (1.0 + 1e-3));
            }
        }
    }

    #[test]
    fn lipschitz_bound_dominates_sampled_ratio() {
        for f in families() {
            let l = f.agrad_lipschitz_bound();
            let pts = sample_points(4000, f.dim(), 21);
            for w in pts.windows(2) {
                let ga = f.eval_agrad(&w[0]).unwrap();
                let gb = f.eval_agrad(&w[1]).unwrap();
                let num: f64 = ga.iter().zip(&gb).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let den: f64 = w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(num <= l * den * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(AnisotropySpec::quadratic(2, vec![1.0, 2.0, 0.0, 1.0]).is_err());
        assert!(AnisotropySpec::quadratic(2, vec![1.0]).is_err());
        assert!(AnisotropySpec::ellipsoid_sum(2, vec![]).is_err());
        assert!(AnisotropySpec::isotropic(4).is_err());
    }
}
