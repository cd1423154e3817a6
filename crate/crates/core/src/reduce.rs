//! Mixture reduction: weight pruning, greedy moment-matched merging and a
//! hard cap on the number of components.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GgiwComponent, GgiwMixture, StateLayout};
use crate::motion::{wrap_angle, HEADING};
use crate::stats::{GammaParams, InverseWishartParams, SpdMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReductionConfig {
    pub prune_threshold: f64,
    /// Squared Mahalanobis distance below which components merge.
    pub merge_threshold: f64,
    pub max_components: usize,
    /// Merge across motion modes (used for estimate extraction).
    pub cross_mode: bool,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            prune_threshold: 0.01,
            merge_threshold: 4.0,
            max_components: 10,
            cross_mode: false,
        }
    }
}

impl ReductionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prune_threshold > 0.0 && self.prune_threshold < 1.0) {
            return Err(Error::Config(format!(
                "prune threshold must lie in (0, 1), got {}",
                self.prune_threshold
            )));
        }
        if !(self.merge_threshold > 0.0) {
            return Err(Error::Config("merge threshold must be positive".into()));
        }
        if self.max_components == 0 {
            return Err(Error::Config("max_components must be at least 1".into()));
        }
        Ok(())
    }
}

/// Indices sorted by decreasing weight, ties by original index.
fn order_by_weight(mix: &GgiwMixture) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..mix.len()).collect();
    idx.sort_by(|&a, &b| {
        mix.components[b]
            .weight
            .total_cmp(&mix.components[a].weight)
            .then(a.cmp(&b))
    });
    idx
}

pub fn prune(mix: &GgiwMixture, threshold: f64) -> GgiwMixture {
    let mut kept: Vec<GgiwComponent> = mix
        .components
        .iter()
        .filter(|c| c.weight >= threshold)
        .cloned()
        .collect();
    if kept.is_empty() {
        kept.push(mix.components[mix.argmax()].clone());
    }
    let mut out = GgiwMixture { components: kept };
    out.normalize();
    out
}

pub fn cap(mix: &GgiwMixture, max_components: usize) -> GgiwMixture {
    if mix.len() <= max_components {
        let mut out = mix.clone();
        out.normalize();
        return out;
    }
    let order = order_by_weight(mix);
    let mut keep: Vec<usize> = order.into_iter().take(max_components.max(1)).collect();
    keep.sort_unstable();
    let mut out = GgiwMixture {
        components: keep.into_iter().map(|i| mix.components[i].clone()).collect(),
    };
    out.normalize();
    out
}

/// Difference of state means with the heading component wrapped.
fn mean_difference(a: &DVector<f64>, b: &DVector<f64>, layout: &StateLayout) -> DVector<f64> {
    let mut diff = a - b;
    if layout.n_kinematics > HEADING {
        let h = layout.kinematics_start() + HEADING;
        diff[h] = wrap_angle(diff[h]);
    }
    diff
}

/// Greedy merging around the heaviest remaining component.
pub fn merge(mix: &GgiwMixture, cfg: &ReductionConfig, layout: &StateLayout) -> Result<GgiwMixture> {
    let order = order_by_weight(mix);
    let mut used = vec![false; mix.len()];
    let mut out = Vec::new();
    for &lead in &order {
        if used[lead] {
            continue;
        }
        let leader = &mix.components[lead];
        let chol = leader.kin_cov.cholesky();
        let mut group = vec![lead];
        used[lead] = true;
        for &j in &order {
            if used[j] {
                continue;
            }
            let other = &mix.components[j];
            if !cfg.cross_mode && other.mode != leader.mode {
                continue;
            }
            let diff = mean_difference(&other.kin_mean, &leader.kin_mean, layout);
            let dist = diff.dot(&chol.solve(&diff));
            if dist < cfg.merge_threshold {
                group.push(j);
                used[j] = true;
            }
        }
        let members: Vec<&GgiwComponent> = group.iter().map(|&i| &mix.components[i]).collect();
        out.push(merge_components(&members, layout)?);
    }
    let mut merged = GgiwMixture::new(out)?;
    merged.normalize();
    Ok(merged)
}

/// Moment-matched merge of a group; the first member sets mode and heading
/// reference.
pub fn merge_components(members: &[&GgiwComponent], layout: &StateLayout) -> Result<GgiwComponent> {
    let lead = members.first().ok_or(Error::Empty("merge group"))?;
    if members.len() == 1 {
        return Ok((*lead).clone());
    }
    let total: f64 = members.iter().map(|c| c.weight).sum();
    let w: Vec<f64> = if total > 0.0 {
        members.iter().map(|c| c.weight / total).collect()
    } else {
        vec![1.0 / members.len() as f64; members.len()]
    };
    let n = layout.state_dim();
    let d = layout.dim as f64;

    // Gaussian, relative to the lead mean so headings do not straddle ±π
    let diffs: Vec<DVector<f64>> = members
        .iter()
        .map(|c| mean_difference(&c.kin_mean, &lead.kin_mean, layout))
        .collect();
    let shift = diffs
        .iter()
        .zip(&w)
        .fold(DVector::zeros(n), |acc, (dm, wi)| acc + dm * *wi);
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for ((c, dm), wi) in members.iter().zip(&diffs).zip(&w) {
        let spread = dm - &shift;
        cov += (c.kin_cov.matrix() + &spread * spread.transpose()) * *wi;
    }
    let mut mean = &lead.kin_mean + shift;
    if layout.n_kinematics > HEADING {
        let h = layout.kinematics_start() + HEADING;
        mean[h] = wrap_angle(mean[h]);
    }

    let mut rates = Vec::with_capacity(layout.n_subobjects);
    let mut extents = Vec::with_capacity(layout.n_subobjects);
    for i in 0..layout.n_subobjects {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (c, wi) in members.iter().zip(&w) {
            let mu = c.rates[i].mean();
            m1 += wi * mu;
            m2 += wi * (c.rates[i].variance() + mu * mu);
        }
        let var = (m2 - m1 * m1).max(m1 * m1 * 1e-12);
        rates.push(GammaParams::new(m1 * m1 / var, m1 / var)?);

        let dim = layout.dim;
        let mut x_bar = DMatrix::<f64>::zeros(dim, dim);
        let mut inv_div = 0.0;
        for (c, wi) in members.iter().zip(&w) {
            x_bar += c.extents[i].mean() * *wi;
            inv_div += wi / c.extents[i].mean_divisor();
        }
        let divisor = 1.0 / inv_div;
        let dof = 2.0 * d + 2.0 + divisor;
        extents.push(InverseWishartParams::new(
            dof,
            SpdMatrix::from_symmetrized(x_bar * divisor)?,
        )?);
    }

    Ok(GgiwComponent {
        weight: total,
        mode: lead.mode,
        rates,
        kin_mean: mean,
        kin_cov: SpdMatrix::repaired(cov)?,
        extents,
    })
}

/// prune → merge → cap.
pub fn reduce(mix: &GgiwMixture, cfg: &ReductionConfig, layout: &StateLayout) -> Result<GgiwMixture> {
    let pruned = prune(mix, cfg.prune_threshold);
    let merged = merge(&pruned, cfg, layout)?;
    Ok(cap(&merged, cfg.max_components))
}
