//! Densities, the multivariate gamma function and small dense SPD matrix
//! utilities.
//!
//! Every density is returned in log-space. Matrix-variate densities are generic
//! in the dimension `d`; the tracker itself only uses `d = 2`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{domain, Error, Result};

/// Relative asymmetry accepted by [`SpdMatrix::new`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

const LN_2: f64 = std::f64::consts::LN_2;
const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Symmetric positive definite matrix.
///
/// Construction symmetrizes the input and requires a successful Cholesky
/// factorization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DMatrix<f64>", into = "DMatrix<f64>")]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                actual: m.ncols(),
            });
        }
        let asym = relative_asymmetry(&m);
        if asym > SYMMETRY_TOLERANCE {
            return Err(Error::NotSymmetric(asym));
        }
        Self::from_symmetrized(m)
    }

    /// Symmetrizes `(A + Aᵀ)/2` without a tolerance check, then validates.
    pub fn from_symmetrized(m: DMatrix<f64>) -> Result<Self> {
        let s = symmetrize(m);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        if Cholesky::new(s.clone()).is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self(s))
    }

    /// Symmetrizes and, when the factorization fails, adds an increasing
    /// diagonal jitter relative to the largest diagonal entry.
    pub fn repaired(m: DMatrix<f64>) -> Result<Self> {
        let s = symmetrize(m);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        if Cholesky::new(s.clone()).is_some() {
            return Ok(Self(s));
        }
        let scale = s.diagonal().iter().fold(0.0_f64, |a, &b| a.max(b.abs())).max(1e-12);
        for exp in [-12, -10, -8, -6] {
            let jitter = scale * 10f64.powi(exp);
            let mut t = s.clone();
            for i in 0..t.nrows() {
                t[(i, i)] += jitter;
            }
            if Cholesky::new(t.clone()).is_some() {
                return Ok(Self(t));
            }
        }
        Err(Error::NotPositiveDefinite)
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return domain(format!("scaled identity needs a positive scale, got {scale}"));
        }
        Ok(Self(DMatrix::identity(dim, dim) * scale))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn cholesky(&self) -> Cholesky<f64, Dyn> {
        // Validated at construction.
        Cholesky::new(self.0.clone()).expect("SpdMatrix holds a positive definite matrix")
    }

    pub fn ln_det(&self) -> f64 {
        ln_det_from_cholesky(&self.cholesky())
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.cholesky().inverse()
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        Self::from_symmetrized(&self.0 * factor)
    }
}

impl TryFrom<DMatrix<f64>> for SpdMatrix {
    type Error = Error;

    fn try_from(m: DMatrix<f64>) -> Result<Self> {
        SpdMatrix::new(m)
    }
}

impl From<SpdMatrix> for DMatrix<f64> {
    fn from(m: SpdMatrix) -> Self {
        m.0
    }
}

impl AsRef<DMatrix<f64>> for SpdMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).norm() / norm
}

pub(crate) fn ln_det_from_cholesky(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Gamma distribution with shape `alpha` and inverse scale `beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl GammaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return domain(format!("gamma parameters must be positive, got ({alpha}, {beta})"));
        }
        Ok(Self { alpha, beta })
    }

    pub fn mean(&self) -> f64 {
        self.alpha / self.beta
    }

    pub fn variance(&self) -> f64 {
        self.alpha / (self.beta * self.beta)
    }
}

/// Inverse Wishart distribution in the `v - d - 1` exponent convention: the
/// mean is `V / (v - 2d - 2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseWishartParams {
    pub dof: f64,
    pub scale: SpdMatrix,
}

impl InverseWishartParams {
    pub fn new(dof: f64, scale: SpdMatrix) -> Result<Self> {
        let d = scale.dim() as f64;
        if !(dof > 2.0 * d + 2.0) || !dof.is_finite() {
            return domain(format!(
                "inverse Wishart dof must exceed 2d+2 = {}, got {dof}",
                2.0 * d + 2.0
            ));
        }
        Ok(Self { dof, scale })
    }

    pub fn dim(&self) -> usize {
        self.scale.dim()
    }

    /// `dof - 2d - 2`, the divisor of the mean.
    pub fn mean_divisor(&self) -> f64 {
        self.dof - 2.0 * self.dim() as f64 - 2.0
    }

    pub fn mean(&self) -> DMatrix<f64> {
        self.scale.matrix() / self.mean_divisor()
    }
}

// ---------------------------------------------------------------------------
// Densities
// ---------------------------------------------------------------------------

pub fn log_gamma_pdf(gamma: f64, p: &GammaParams) -> Result<f64> {
    if !(gamma > 0.0) {
        return domain(format!("gamma density needs a positive argument, got {gamma}"));
    }
    Ok(p.alpha * p.beta.ln() - ln_gamma(p.alpha) + (p.alpha - 1.0) * gamma.ln() - p.beta * gamma)
}

pub fn log_poisson_pmf(n: u64, rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return domain(format!("Poisson rate must be positive, got {rate}"));
    }
    let n = n as f64;
    Ok(n * rate.ln() - rate - ln_gamma(n + 1.0))
}

pub fn log_mvnormal_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &SpdMatrix) -> Result<f64> {
    let n = cov.dim();
    for len in [x.len(), mean.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    let chol = cov.cholesky();
    let diff = x - mean;
    let y = chol.l_dirty().solve_lower_triangular(&diff).ok_or(Error::NotPositiveDefinite)?;
    Ok(-0.5 * (n as f64) * (2.0 * PI).ln() - 0.5 * ln_det_from_cholesky(&chol) - 0.5 * y.norm_squared())
}

/// `ln Γ_d(a) = d(d-1)/4 ln π + Σ_{j=1..d} ln Γ(a + (1-j)/2)`.
pub fn log_multivariate_gamma(d: usize, a: f64) -> Result<f64> {
    if d == 0 {
        return domain("multivariate gamma needs d >= 1");
    }
    let df = d as f64;
    if !(a > (df - 1.0) / 2.0) {
        return domain(format!("multivariate gamma needs a > (d-1)/2, got a = {a}, d = {d}"));
    }
    let mut acc = df * (df - 1.0) / 4.0 * LN_PI;
    for j in 1..=d {
        acc += ln_gamma(a + (1.0 - j as f64) / 2.0);
    }
    Ok(acc)
}

/// Inverse Wishart log-density with `dof > 2d`.
///
/// The normalizing power of two is `2^{-(v-d-1)d/2}`, which makes the density
/// integrate to one for every `d`.
pub fn log_iwishart_density(x: &SpdMatrix, dof: f64, scale: &SpdMatrix) -> Result<f64> {
    let d = scale.dim();
    if x.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x.dim(),
        });
    }
    let df = d as f64;
    if !(dof > 2.0 * df) {
        return domain(format!("inverse Wishart density needs dof > 2d, got {dof}"));
    }
    let nu = dof - df - 1.0;
    let x_chol = x.cholesky();
    // tr(X^{-1} V)
    let tr = x_chol.solve(scale.matrix()).trace();
    Ok(-0.5 * nu * df * LN_2 + 0.5 * nu * scale.ln_det()
        - log_multivariate_gamma(d, nu / 2.0)?
        - 0.5 * dof * ln_det_from_cholesky(&x_chol)
        - 0.5 * tr)
}

pub fn log_iwishart_pdf(x: &SpdMatrix, p: &InverseWishartParams) -> Result<f64> {
    log_iwishart_density(x, p.dof, &p.scale)
}

pub fn log_wishart_pdf(x: &SpdMatrix, dof: f64, w: &SpdMatrix) -> Result<f64> {
    let d = w.dim();
    if x.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x.dim(),
        });
    }
    let df = d as f64;
    if !(dof >= df) {
        return domain(format!("Wishart density needs dof >= d, got {dof} < {d}"));
    }
    let w_chol = w.cholesky();
    let tr = w_chol.solve(x.matrix()).trace();
    Ok(-0.5 * dof * df * LN_2 + 0.5 * (dof - df - 1.0) * x.ln_det()
        - log_multivariate_gamma(d, dof / 2.0)?
        - 0.5 * dof * ln_det_from_cholesky(&w_chol)
        - 0.5 * tr)
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
pub fn spd_sqrt(a: &SpdMatrix) -> DMatrix<f64> {
    a.cholesky().unpack()
}

pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("log_sum_exp of an empty slice"));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Ok(max);
    }
    if max == f64::INFINITY {
        return Ok(max);
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}
