//! Cost kernels `h` that are nonnegative, positively homogeneous of degree
//! `p >= 2`, and elliptic on the unit sphere, together with their first and
//! second derivatives and the sampled ellipticity constants.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_finite, Error, Result};
use crate::quadrature::norm;

/// Convention `0^0 = 1`, so `p = 2` yields `|x|^{p-2} == 1` everywhere.
pub(crate) fn pow_conv(base: f64, exponent: f64) -> f64 {
    if exponent == 0.0 {
        1.0
    } else {
        base.powf(exponent)
    }
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
pub enum CostForm {
    /// `h(x) = |x|^p`.
    Isotropic,
    /// `h(x) = (x^T M x)^{p/2}` with `M` symmetric positive definite.
    Anisotropic { matrix: DMatrix<f64> },
    /// User-supplied `(h, Dh, D^2h)` triple, validated against the
    /// homogeneity hypotheses at construction.
    Custom { h: ScalarFn, grad: VectorFn, hess: MatrixFn },
}

impl std::fmt::Debug for CostForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CostForm::Isotropic => write!(f, "Isotropic"),
            CostForm::Anisotropic { matrix } => write!(f, "Anisotropic({matrix:?})"),
            CostForm::Custom { .. } => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CostFunction {
    dimension: usize,
    exponent: f64,
    form: CostForm,
}

/// Sampled ellipticity constants of `D^2 h` on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticityBounds {
    pub lambda: f64,
    pub big_lambda: f64,
}

impl CostFunction {
    pub fn isotropic(dimension: usize, exponent: f64) -> Result<Self> {
        Self::validate_params(dimension, exponent)?;
        Ok(Self { dimension, exponent, form: CostForm::Isotropic })
    }

    /// `M` must be symmetric positive definite (checked by Cholesky).
    pub fn anisotropic(dimension: usize, exponent: f64, matrix: DMatrix<f64>) -> Result<Self> {
        Self::validate_params(dimension, exponent)?;
        if matrix.nrows() != dimension || matrix.ncols() != dimension {
            return Err(Error::Input(format!(
                "anisotropic matrix must be {dimension}x{dimension}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let sym_defect = (&matrix - matrix.transpose()).abs().max();
        if sym_defect > 1e-12 {
            return Err(Error::Input("anisotropic matrix must be symmetric".into()));
        }
        if matrix.clone().cholesky().is_none() {
            return Err(Error::Input("anisotropic matrix must be positive definite".into()));
        }
        Ok(Self { dimension, exponent, form: CostForm::Anisotropic { matrix } })
    }

    /// Hook for user-supplied kernels; the triple is validated against the
    /// degree `p`, `p-1`, `p-2` homogeneity of `(h, Dh, D^2h)` by sampling.
    pub fn custom(
        dimension: usize,
        exponent: f64,
        h: ScalarFn,
        grad: VectorFn,
        hess: MatrixFn,
    ) -> Result<Self> {
        Self::validate_params(dimension, exponent)?;
        let cost = Self { dimension, exponent, form: CostForm::Custom { h, grad, hess } };
        cost.check_homogeneity()?;
        Ok(cost)
    }

    fn validate_params(dimension: usize, exponent: f64) -> Result<()> {
        if dimension < 2 {
            return Err(Error::Input("cost dimension must be at least 2".into()));
        }
        if !(exponent >= 2.0) || !exponent.is_finite() {
            return Err(Error::Input("cost exponent must satisfy p >= 2".into()));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn form(&self) -> &CostForm {
        &self.form
    }

    /// Evaluates `h(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        ensure_finite(x, "eval_h")?;
        self.check_dim(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let p = self.exponent;
        match &self.form {
            CostForm::Isotropic => {
                let q: f64 = x.iter().map(|v| v * v).sum();
                if q == 0.0 { 0.0 } else { q.powf(p / 2.0) }
            }
            CostForm::Anisotropic { matrix } => {
                let q = quadratic_form(matrix, x);
                if q <= 0.0 { 0.0 } else { q.powf(p / 2.0) }
            }
            CostForm::Custom { h, .. } => h(x),
        }
    }

    /// `h(a - b)` without an intermediate allocation; the assignment-solver
    /// hot path.
    pub(crate) fn eval_diff(&self, a: &[f64], b: &[f64]) -> f64 {
        match &self.form {
            CostForm::Isotropic => {
                let q: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                if q == 0.0 { 0.0 } else { q.powf(self.exponent / 2.0) }
            }
            _ => {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                self.eval_unchecked(&d)
            }
        }
    }

    /// Evaluates `Dh(x)`, positively homogeneous of degree `p - 1`.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_finite(x, "grad_h")?;
        self.check_dim(x)?;
        Ok(self.grad_unchecked(x))
    }

    pub(crate) fn grad_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let p = self.exponent;
        match &self.form {
            CostForm::Isotropic => {
                let r = norm(x);
                if r == 0.0 {
                    return vec![0.0; x.len()];
                }
                let c = p * pow_conv(r, p - 2.0);
                x.iter().map(|v| c * v).collect()
            }
            CostForm::Anisotropic { matrix } => {
                let q = quadratic_form(matrix, x);
                if q <= 0.0 {
                    return vec![0.0; x.len()];
                }
                let mx = mat_vec(matrix, x);
                let c = p * q.powf(p / 2.0 - 1.0);
                mx.iter().map(|v| c * v).collect()
            }
            CostForm::Custom { grad, .. } => grad(x),
        }
    }

    /// Evaluates `D^2 h(x)`, positively homogeneous of degree `p - 2`.
    ///
    /// At `x = 0` this returns the constant Hessian for `p = 2` and the zero
    /// matrix (the homogeneous limit) for `p > 2`.
    pub fn hess(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        ensure_finite(x, "hess_h")?;
        self.check_dim(x)?;
        Ok(self.hess_unchecked(x))
    }

    pub(crate) fn hess_unchecked(&self, x: &[f64]) -> DMatrix<f64> {
        let p = self.exponent;
        let n = self.dimension;
        match &self.form {
            CostForm::Isotropic => {
                let r = norm(x);
                if r == 0.0 {
                    return if p == 2.0 {
                        DMatrix::identity(n, n) * 2.0
                    } else {
                        DMatrix::zeros(n, n)
                    };
                }
                let a = p * pow_conv(r, p - 2.0);
                let b = p * (p - 2.0) * pow_conv(r, p - 4.0);
                let mut m = DMatrix::identity(n, n) * a;
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] += b * x[i] * x[j];
                    }
                }
                m
            }
            CostForm::Anisotropic { matrix } => {
                let q = quadratic_form(matrix, x);
                if q <= 0.0 {
                    return if p == 2.0 { matrix * 2.0 } else { DMatrix::zeros(n, n) };
                }
                let mx = mat_vec(matrix, x);
                let a = p * q.powf(p / 2.0 - 1.0);
                let b = p * (p - 2.0) * q.powf(p / 2.0 - 2.0);
                let mut m = matrix * a;
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] += b * mx[i] * mx[j];
                    }
                }
                m
            }
            CostForm::Custom { hess, .. } => hess(x),
        }
    }

    /// Quadratic form `<D^2h(x) v, v>`.
    pub fn hess_quad(&self, x: &[f64], v: &[f64]) -> f64 {
        self.hess_bilin(x, v, v)
    }

    /// Bilinear form `<D^2h(x) a, b>` without building the matrix for the
    /// built-in kernels.
    pub fn hess_bilin(&self, x: &[f64], a: &[f64], b: &[f64]) -> f64 {
        let p = self.exponent;
        match &self.form {
            CostForm::Isotropic => {
                let r2: f64 = x.iter().map(|t| t * t).sum();
                let ab: f64 = a.iter().zip(b).map(|(u, v)| u * v).sum();
                if r2 == 0.0 {
                    return if p == 2.0 { 2.0 * ab } else { 0.0 };
                }
                let xa: f64 = x.iter().zip(a).map(|(u, v)| u * v).sum();
                let xb: f64 = x.iter().zip(b).map(|(u, v)| u * v).sum();
                let r = r2.sqrt();
                p * pow_conv(r, p - 2.0) * ab + p * (p - 2.0) * pow_conv(r, p - 4.0) * xa * xb
            }
            _ => {
                let m = self.hess_unchecked(x);
                let mut acc = 0.0;
                for i in 0..a.len() {
                    for j in 0..a.len() {
                        acc += m[(i, j)] * a[i] * b[j];
                    }
                }
                acc
            }
        }
    }

    /// Sampled ellipticity constants: min and max Hessian eigenvalue over a
    /// deterministic quasi-uniform sphere sample.
    pub fn ellipticity_bounds(&self, sphere_sample_count: usize) -> Result<EllipticityBounds> {
        if sphere_sample_count == 0 {
            return Err(Error::Input("sphere_sample_count must be >= 1".into()));
        }
        let mut lambda = f64::INFINITY;
        let mut big_lambda = f64::NEG_INFINITY;
        for x in sphere_sample(self.dimension, sphere_sample_count, 0) {
            let m = self.hess_unchecked(&x);
            let eig = m.symmetric_eigenvalues();
            let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if lo <= 0.0 {
                return Err(Error::NotElliptic { unit: x });
            }
            lambda = lambda.min(lo);
            big_lambda = big_lambda.max(hi);
        }
        Ok(EllipticityBounds { lambda, big_lambda })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::Input(format!(
                "expected dimension {}, got {}",
                self.dimension,
                x.len()
            )));
        }
        Ok(())
    }

    /// Sampled check of the degree `p`, `p-1`, `p-2` homogeneity of the
    /// kernel triple.
    pub fn check_homogeneity(&self) -> Result<()> {
        let p = self.exponent;
        let mut rng = ChaCha8Rng::seed_from_u64(0x0c05);
        for _ in 0..100 {
            let x: Vec<f64> = (0..self.dimension).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if norm(&x) < 1e-3 {
                continue;
            }
            for &t in &[0.5f64, 2.0, 10.0] {
                let tx: Vec<f64> = x.iter().map(|v| t * v).collect();
                let h_tx = self.eval_unchecked(&tx);
                let h_x = self.eval_unchecked(&x);
                if (h_tx - t.powf(p) * h_x).abs() > 1e-9 * (1.0 + h_tx.abs()) {
                    return Err(Error::Inconsistency(format!(
                        "h is not homogeneous of degree {p} at x={x:?}, t={t}"
                    )));
                }
                let g_tx = self.grad_unchecked(&tx);
                let g_x = self.grad_unchecked(&x);
                for (a, b) in g_tx.iter().zip(&g_x) {
                    if (a - t.powf(p - 1.0) * b).abs() > 1e-9 * (1.0 + a.abs()) {
                        return Err(Error::Inconsistency(format!(
                            "Dh is not homogeneous of degree {} at x={x:?}, t={t}",
                            p - 1.0
                        )));
                    }
                }
                let m_tx = self.hess_unchecked(&tx);
                let m_x = self.hess_unchecked(&x) * t.powf(p - 2.0);
                if (m_tx - m_x).abs().max() > 1e-9 {
                    return Err(Error::Inconsistency(format!(
                        "D^2h is not homogeneous of degree {} at x={x:?}, t={t}",
                        p - 2.0
                    )));
                }
            }
        }
        Ok(())
    }
}

fn quadratic_form(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            acc += m[(i, j)] * x[i] * x[j];
        }
    }
    acc
}

fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| (0..x.len()).map(|j| m[(i, j)] * x[j]).sum())
        .collect()
}

/// Deterministic quasi-uniform sample of `S^{n-1}`: equal angles for `n = 2`,
/// a Fibonacci spiral for `n = 3`, and a fixed-seed normalized Gaussian cloud
/// in higher dimension. `salt` selects an independent sample.
pub fn sphere_sample(n: usize, count: usize, salt: u64) -> Vec<Vec<f64>> {
    assert!(n >= 2 && count >= 1);
    match n {
        2 => (0..count)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * (i as f64 + 0.5 + 0.1 * salt as f64)
                    / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => {
            let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let th = 2.0 * std::f64::consts::PI
                        * ((i as f64 + salt as f64 * 0.37) / golden).fract();
                    vec![r * th.cos(), r * th.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0xe117 ^ salt);
            (0..count)
                .map(|_| {
                    loop {
                        let x: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
                        let r = norm(&x);
                        if r > 1e-6 {
                            return x.iter().map(|v| v / r).collect();
                        }
                    }
                })
                .collect()
        }
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
