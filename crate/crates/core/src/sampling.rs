//! Random draws used by the scenario simulator and by the sampling-based
//! checks in the test suites.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{domain, Result};
use crate::stats::{spd_sqrt, SpdMatrix};

pub fn standard_normal_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| StandardNormal.sample(rng))
}

pub fn mvnormal<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &SpdMatrix, rng: &mut R) -> DVector<f64> {
    let l = spd_sqrt(cov);
    mean + l * standard_normal_vector(mean.len(), rng)
}

/// Bartlett-decomposition draw from `W(dof, scale)` (mean `dof · scale`).
pub fn wishart<R: Rng + ?Sized>(dof: f64, scale: &SpdMatrix, rng: &mut R) -> Result<SpdMatrix> {
    let d = scale.dim();
    if !(dof > (d as f64) - 1.0) {
        return domain(format!("Wishart sampling needs dof > d - 1, got {dof}"));
    }
    let l = spd_sqrt(scale);
    let mut a = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        let chi = ChiSquared::new(dof - i as f64).map_err(|e| crate::Error::Domain(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let la = l * a;
    SpdMatrix::from_symmetrized(&la * la.transpose())
}

/// Draw from the inverse Wishart `IW(dof, scale)` in the `v - d - 1`
/// convention, i.e. `X⁻¹ ~ W(dof - d - 1, scale⁻¹)`.
pub fn inverse_wishart<R: Rng + ?Sized>(dof: f64, scale: &SpdMatrix, rng: &mut R) -> Result<SpdMatrix> {
    let d = scale.dim() as f64;
    let inv_scale = SpdMatrix::from_symmetrized(scale.inverse())?;
    let w = wishart(dof - d - 1.0, &inv_scale, rng)?;
    SpdMatrix::from_symmetrized(w.inverse())
}
