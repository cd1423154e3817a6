//! Measurement update of a GGIW mixture over a set of association events.
//!
//! Subobjects without measurements leave the stacked Kalman update; their
//! extension passes through and only the rate's `β` grows by one.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::assoc::AssociationEvent;
use crate::error::{Error, Result};
use crate::model::{GgiwComponent, GgiwMixture, StateLayout};
use crate::motion::wrap_heading;
use crate::stats::{log_multivariate_gamma, log_sum_exp, symmetrize, GammaParams, InverseWishartParams, SpdMatrix};

const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Conjugate rate update and `ln 𝓛^γ`, the negative-binomial marginal of `n`.
pub fn correct_rates(p: &GammaParams, n: usize) -> Result<(GammaParams, f64)> {
    let nf = n as f64;
    let post = GammaParams::new(p.alpha + nf, p.beta + 1.0)?;
    let ll = ln_gamma(post.alpha) - ln_gamma(p.alpha) + p.alpha * p.beta.ln() - post.alpha * post.beta.ln();
    Ok((post, ll))
}

/// Per-subobject quantities computed from the prior and shared by the
/// kinematic and extension updates.
#[derive(Clone, Debug)]
pub struct ExtentContext {
    /// `X̂ = V / (v - 2d - 2)`.
    pub x_hat: SpdMatrix,
    /// `S_i = H_i P H_iᵀ + X̂ / n`.
    pub innovation_cov: SpdMatrix,
    /// `z̄ - H_i m`.
    pub innovation: DVector<f64>,
}

impl ExtentContext {
    pub fn new(comp: &GgiwComponent, layout: &StateLayout, i: usize, count: usize, centroid: &DVector<f64>) -> Result<Self> {
        let h = layout.measurement_matrix(i)?;
        let x_hat = SpdMatrix::from_symmetrized(comp.extents[i].mean())?;
        let s = &h * comp.kin_cov.matrix() * h.transpose() + x_hat.matrix() / count as f64;
        Ok(Self {
            innovation_cov: SpdMatrix::from_symmetrized(s)?,
            innovation: centroid - &h * &comp.kin_mean,
            x_hat,
        })
    }
}

/// Extension update `v⁺ = v + n`, `V⁺ = V + Z + N` with
/// `N = X̂^{1/2} S^{-1/2} ε εᵀ S^{-T/2} X̂^{T/2}`, and `ln 𝓛^{x,X}`.
///
/// With `n = 0` the parameters pass through and the log-likelihood is zero.
pub fn correct_extent(
    p: &InverseWishartParams,
    ctx: Option<&ExtentContext>,
    n: usize,
    scatter: &DMatrix<f64>,
) -> Result<(InverseWishartParams, f64)> {
    if n == 0 {
        return Ok((p.clone(), 0.0));
    }
    let ctx = ctx.ok_or_else(|| Error::Domain("extent update with measurements needs a context".into()))?;
    let d = p.dim();
    let df = d as f64;
    let nf = n as f64;

    let s_chol = ctx.innovation_cov.cholesky();
    let w = s_chol
        .l_dirty()
        .solve_lower_triangular(&ctx.innovation)
        .ok_or(Error::NotPositiveDefinite)?;
    let u = ctx.x_hat.cholesky().l() * w;
    let big_n = &u * u.transpose();

    let dof = p.dof + nf;
    let scale = SpdMatrix::from_symmetrized(p.scale.matrix() + scatter + big_n)?;
    let post = InverseWishartParams::new(dof, scale)?;

    let a_prior = (p.dof - df - 1.0) / 2.0;
    let a_post = (dof - df - 1.0) / 2.0;
    let ll = -0.5 * df * nf.ln() - 0.5 * nf * df * LN_PI - 0.5 * (ctx.innovation_cov.ln_det() - ctx.x_hat.ln_det())
        + log_multivariate_gamma(d, a_post)?
        - log_multivariate_gamma(d, a_prior)?
        + a_prior * p.scale.ln_det()
        - a_post * post.scale.ln_det();
    Ok((post, ll))
}

/// Stacked EKF-style update over the subobjects with `n_i > 0`.
pub fn correct_kinematics(
    comp: &GgiwComponent,
    event: &AssociationEvent,
    layout: &StateLayout,
) -> Result<(DVector<f64>, SpdMatrix)> {
    let active: Vec<usize> = (0..layout.n_subobjects)
        .filter(|&i| event.subsets[i].count > 0)
        .collect();
    if active.is_empty() {
        return Ok((comp.kin_mean.clone(), comp.kin_cov.clone()));
    }
    let d = layout.dim;
    let nx = layout.state_dim();
    let rows = d * active.len();
    let mut h = DMatrix::zeros(rows, nx);
    let mut z = DVector::zeros(rows);
    let mut r = DMatrix::zeros(rows, rows);
    for (b, &i) in active.iter().enumerate() {
        let subset = &event.subsets[i];
        let centroid = subset
            .centroid
            .as_ref()
            .ok_or_else(|| Error::Domain(format!("subobject {i} has measurements but no centroid")))?;
        h.view_mut((b * d, 0), (d, nx)).copy_from(&layout.measurement_matrix(i)?);
        z.rows_mut(b * d, d).copy_from(centroid);
        r.view_mut((b * d, b * d), (d, d))
            .copy_from(&(comp.extents[i].mean() / subset.count as f64));
    }
    let p = comp.kin_cov.matrix();
    let ph_t = p * h.transpose();
    let s = SpdMatrix::from_symmetrized(&h * &ph_t + r)?;
    // K = P Hᵀ S⁻¹ via a Cholesky solve of S Kᵀ = H P.
    let k = s.cholesky().solve(&ph_t.transpose()).transpose();
    let mut mean = &comp.kin_mean + &k * (z - &h * &comp.kin_mean);
    if layout.dim == 2 && layout.n_kinematics == 3 {
        wrap_heading(&mut mean, layout);
    }
    let cov = symmetrize(p - &k * h * p);
    Ok((mean, SpdMatrix::repaired(cov)?))
}

/// `Σᵢ ln 𝓛^γ_i + ln 𝓛^{x,X}_i` of one event under one component.
pub fn event_log_likelihood(comp: &GgiwComponent, event: &AssociationEvent, layout: &StateLayout) -> Result<f64> {
    Ok(correct_component(comp, event, layout)?.1)
}

/// Posterior component (weight untouched) and its event log-likelihood.
pub fn correct_component(
    comp: &GgiwComponent,
    event: &AssociationEvent,
    layout: &StateLayout,
) -> Result<(GgiwComponent, f64)> {
    if event.subsets.len() != layout.n_subobjects {
        return Err(Error::DimensionMismatch {
            expected: layout.n_subobjects,
            actual: event.subsets.len(),
        });
    }
    let mut ll = 0.0;
    let mut rates = Vec::with_capacity(layout.n_subobjects);
    let mut extents = Vec::with_capacity(layout.n_subobjects);
    for (i, subset) in event.subsets.iter().enumerate() {
        let (rate, ll_rate) = correct_rates(&comp.rates[i], subset.count)?;
        let ctx = match &subset.centroid {
            Some(c) if subset.count > 0 => Some(ExtentContext::new(comp, layout, i, subset.count, c)?),
            _ => None,
        };
        let (extent, ll_ext) = correct_extent(&comp.extents[i], ctx.as_ref(), subset.count, &subset.scatter)?;
        ll += ll_rate + ll_ext;
        rates.push(rate);
        extents.push(extent);
    }
    let (kin_mean, kin_cov) = correct_kinematics(comp, event, layout)?;
    Ok((
        GgiwComponent {
            weight: comp.weight,
            mode: comp.mode,
            rates,
            kin_mean,
            kin_cov,
            extents,
        },
        ll,
    ))
}

#[derive(Clone, Debug)]
pub struct CorrectionOutput {
    pub posterior: GgiwMixture,
    /// `ln p(Z_k | Z^{k-1})` under the reduced event set.
    pub log_set_likelihood: f64,
    /// `(event index, prior component index)` of every posterior component.
    pub provenance: Vec<(usize, usize)>,
}

/// One posterior component per (event, prior component), ordered by event
/// then component.
pub fn correct_mixture(
    mix: &GgiwMixture,
    events: &[AssociationEvent],
    layout: &StateLayout,
) -> Result<CorrectionOutput> {
    if events.is_empty() {
        return Err(Error::Empty("correction needs at least one association event"));
    }
    let pairs: Vec<(usize, usize)> = (0..events.len())
        .flat_map(|e| (0..mix.len()).map(move |c| (e, c)))
        .collect();
    let results: Vec<(GgiwComponent, f64)> = pairs
        .par_iter()
        .map(|&(e, c)| {
            let comp = &mix.components[c];
            let (post, ll) = correct_component(comp, &events[e], layout)?;
            Ok((post, comp.weight.ln() + ll))
        })
        .collect::<Result<_>>()?;
    let log_w: Vec<f64> = results.iter().map(|(_, lw)| *lw).collect();
    let lse = log_sum_exp(&log_w)?;
    if !lse.is_finite() {
        return Err(Error::LikelihoodUnderflow);
    }
    let components = results
        .into_iter()
        .map(|(mut comp, lw)| {
            comp.weight = (lw - lse).exp();
            comp
        })
        .collect();
    let mut posterior = GgiwMixture::new(components)?;
    posterior.normalize();
    Ok(CorrectionOutput {
        posterior,
        log_set_likelihood: lse - (events.len() as f64).ln(),
        provenance: pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assoc::AssociationEvent;
    use approx::assert_relative_eq;

    fn v2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    fn component(layout: &StateLayout) -> GgiwComponent {
        let mut m = DVector::zeros(layout.state_dim());
        m[2] = 3.0;
        m[3] = 0.2;
        for i in 1..layout.n_subobjects {
            m[layout.offset_start(i)] = 10.0 * i as f64;
        }
        GgiwComponent {
            weight: 1.0,
            mode: 0,
            rates: vec![GammaParams::new(20.0, 2.0).unwrap(); layout.n_subobjects],
            kin_mean: m,
            kin_cov: SpdMatrix::scaled_identity(layout.state_dim(), 2.0).unwrap(),
            extents: vec![
                InverseWishartParams::new(12.0, SpdMatrix::from_diagonal(&[24.0, 12.0]).unwrap()).unwrap();
                layout.n_subobjects
            ],
        }
    }

    #[test]
    fn rate_update_values() {
        let (p, ll) = correct_rates(&GammaParams::new(2.0, 1.0).unwrap(), 3).unwrap();
        assert_eq!((p.alpha, p.beta), (5.0, 2.0));
        assert_relative_eq!(ll.exp(), 0.75, epsilon = 1e-14);
        let prior = GammaParams::new(7.5, 0.5).unwrap();
        let (_, ll0) = correct_rates(&prior, 0).unwrap();
        assert_relative_eq!(ll0, prior.alpha * (prior.beta / (prior.beta + 1.0)).ln(), epsilon = 1e-12);
    }

    #[test]
    fn empty_subset_passes_extent_through() {
        let iw = InverseWishartParams::new(9.0, SpdMatrix::identity(2)).unwrap();
        let (post, ll) = correct_extent(&iw, None, 0, &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(post, iw);
        assert_eq!(ll, 0.0);
    }

    #[test]
    fn zero_innovation_adds_only_scatter() {
        let iw = InverseWishartParams::new(9.0, SpdMatrix::from_diagonal(&[4.0, 2.0]).unwrap()).unwrap();
        let ctx = ExtentContext {
            x_hat: SpdMatrix::from_symmetrized(iw.mean()).unwrap(),
            innovation_cov: SpdMatrix::identity(2),
            innovation: DVector::zeros(2),
        };
        let z = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let (post, _) = correct_extent(&iw, Some(&ctx), 4, &z).unwrap();
        assert_eq!(post.dof, 13.0);
        assert_relative_eq!(post.scale.matrix(), &(iw.scale.matrix() + z), epsilon = 1e-14);
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let layout = StateLayout::planar(2).unwrap();
        let comp = component(&layout);
        let z = vec![
            layout.subobject_position(&comp.kin_mean, 0) + v2(1.0, 0.0),
            layout.subobject_position(&comp.kin_mean, 0) - v2(1.0, 0.0),
            layout.subobject_position(&comp.kin_mean, 1),
        ];
        let ev = AssociationEvent::from_assignment(&z, &[0, 0, 1], 2).unwrap();
        let (m, p) = correct_kinematics(&comp, &ev, &layout).unwrap();
        assert_relative_eq!(m, comp.kin_mean, epsilon = 1e-12);
        assert!(p.matrix().trace() < comp.kin_cov.matrix().trace());
    }

    #[test]
    fn empty_measurement_set_only_touches_beta() {
        let layout = StateLayout::planar(3).unwrap();
        let comp = component(&layout);
        let ev = AssociationEvent::empty(2, 3);
        let out = correct_mixture(&GgiwMixture::new(vec![comp.clone()]).unwrap(), &[ev], &layout).unwrap();
        let post = &out.posterior.components[0];
        assert_eq!(post.kin_mean, comp.kin_mean);
        assert_eq!(post.extents, comp.extents);
        for (a, b) in post.rates.iter().zip(&comp.rates) {
            assert_eq!(a.alpha, b.alpha);
            assert_eq!(a.beta, b.beta + 1.0);
        }
        let expected: f64 = comp.rates.iter().map(|r| r.alpha * (r.beta / (r.beta + 1.0)).ln()).sum();
        assert_relative_eq!(out.log_set_likelihood, expected, epsilon = 1e-12);
        assert_eq!(out.posterior.components[0].weight, 1.0);
    }

    #[test]
    fn mirrored_events_tie() {
        let layout = StateLayout::planar(2).unwrap();
        let mut comp = component(&layout);
        let o = layout.offset_start(1);
        comp.kin_mean[o] = 0.0;
        // Cov(p, d_1) = -I/2 · Var(d_1) makes H_0 P H_0ᵀ = H_1 P H_1ᵀ.
        let mut p = comp.kin_cov.matrix().clone();
        for a in 0..2 {
            p[(a, o + a)] = -1.0;
            p[(o + a, a)] = -1.0;
        }
        comp.kin_cov = SpdMatrix::new(p).unwrap();
        let z = vec![v2(1.0, 1.0), v2(-1.0, 0.5), v2(0.3, -2.0)];
        let a = AssociationEvent::from_assignment(&z, &[0, 0, 1], 2).unwrap();
        let b = AssociationEvent::from_assignment(&z, &[1, 1, 0], 2).unwrap();
        assert_relative_eq!(
            event_log_likelihood(&comp, &a, &layout).unwrap(),
            event_log_likelihood(&comp, &b, &layout).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn posterior_weights_and_provenance() {
        let layout = StateLayout::planar(2).unwrap();
        let comp = component(&layout);
        let mut half = comp.clone();
        half.weight = 0.5;
        let mix = GgiwMixture::new(vec![half.clone(), half]).unwrap();
        let z = vec![v2(0.5, 0.2), v2(9.0, 1.0), v2(11.0, -1.0)];
        let events: Vec<_> = [[0, 1, 1], [0, 0, 1], [1, 0, 0]]
            .iter()
            .map(|a| AssociationEvent::from_assignment(&z, a, 2).unwrap())
            .collect();
        let out = correct_mixture(&mix, &events, &layout).unwrap();
        assert_eq!(out.posterior.len(), 6);
        assert!((out.posterior.total_weight() - 1.0).abs() < 1e-9);
        assert_eq!(out.provenance[3], (1, 1));
        for e in 0..3 {
            assert_relative_eq!(
                out.posterior.components[2 * e].weight,
                out.posterior.components[2 * e + 1].weight,
                epsilon = 1e-15
            );
        }
        // the geometrically right event dominates
        assert!(out.posterior.components[0].weight > 0.4);
        for c in &out.posterior.components {
            assert_eq!(c.extents[0].dof + c.extents[1].dof, 24.0 + 3.0);
        }
    }
}
