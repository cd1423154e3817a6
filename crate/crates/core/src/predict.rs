//! Time update of a GGIW mixture.

use nalgebra::DVector;

use crate::error::Result;
use crate::model::{GgiwComponent, GgiwMixture, StateLayout};
use crate::motion::{ct_jacobian, ct_transition, extension_transform, ModeTransitionMatrix, MotionMode};
use crate::stats::{GammaParams, InverseWishartParams, SpdMatrix};

/// Exponential forgetting: the rate mean is kept, the variance grows by `η`.
pub fn predict_rates(rates: &[GammaParams], mode: &MotionMode) -> Vec<GammaParams> {
    let eta = mode.rate_forgetting;
    rates
        .iter()
        .map(|p| GammaParams {
            alpha: p.alpha / eta,
            beta: p.beta / eta,
        })
        .collect()
}

/// Effective window length `η / (η - 1)` of the forgetting factor.
pub fn effective_window(eta: f64) -> f64 {
    eta / (eta - 1.0)
}

/// EKF prediction through the coordinated-turn model.
pub fn predict_kinematics(
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    mode: &MotionMode,
    layout: &StateLayout,
    t: f64,
) -> Result<(DVector<f64>, SpdMatrix)> {
    let f = ct_jacobian(mean, layout, t);
    let q = mode.process_noise.covariance(layout)?;
    let p = &f * cov.matrix() * f.transpose() + q.matrix();
    Ok((ct_transition(mean, layout, t), SpdMatrix::repaired(p)?))
}

/// Mean-preserving rotation of the extension with decaying degrees of
/// freedom: `X̂⁺ = M X̂ Mᵀ`, `v⁺ - 2d - 2 = λ (v - 2d - 2)` with
/// `λ = n / (n + v - 2d - 2)`.
pub fn predict_extents(
    extents: &[InverseWishartParams],
    kin_mean: &DVector<f64>,
    mode: &MotionMode,
    layout: &StateLayout,
    t: f64,
) -> Result<Vec<InverseWishartParams>> {
    let m = extension_transform(kin_mean, layout, t);
    let base = 2.0 * layout.dim as f64 + 2.0;
    let n = mode.extension_dof;
    extents
        .iter()
        .map(|iw| {
            let excess = iw.mean_divisor();
            let lambda = n / (n + excess);
            let dof = (base + lambda * excess).max((base + 2.0).min(iw.dof));
            let x_hat = &m * iw.mean() * m.transpose();
            InverseWishartParams::new(dof, SpdMatrix::from_symmetrized(x_hat * (dof - base))?)
        })
        .collect()
}

pub fn predict_component(
    comp: &GgiwComponent,
    mode_index: usize,
    mode: &MotionMode,
    layout: &StateLayout,
    t: f64,
) -> Result<GgiwComponent> {
    let (kin_mean, kin_cov) = predict_kinematics(&comp.kin_mean, &comp.kin_cov, mode, layout, t)?;
    Ok(GgiwComponent {
        weight: comp.weight,
        mode: mode_index,
        rates: predict_rates(&comp.rates, mode),
        extents: predict_extents(&comp.extents, &comp.kin_mean, mode, layout, t)?,
        kin_mean,
        kin_cov,
    })
}

/// Expands every component into one per mode with weight `π(m' → m) w`.
pub fn predict_mixture(
    mix: &GgiwMixture,
    modes: &[MotionMode],
    transition: &ModeTransitionMatrix,
    layout: &StateLayout,
    t: f64,
) -> Result<GgiwMixture> {
    let mut out = Vec::with_capacity(mix.len() * modes.len());
    for comp in &mix.components {
        for (m, mode) in modes.iter().enumerate() {
            let p = if modes.len() == 1 {
                1.0
            } else {
                transition.probability(comp.mode, m)?
            };
            let mut predicted = predict_component(comp, m, mode, layout, t)?;
            predicted.weight = comp.weight * p;
            out.push(predicted);
        }
    }
    GgiwMixture::new(out)
}
