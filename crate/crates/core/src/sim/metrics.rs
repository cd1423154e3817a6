//! Estimation error metrics and percentile summaries.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TargetEstimate;

/// Rate, position and extension errors under the position-optimal
/// subobject assignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepErrors {
    pub d_gamma: f64,
    pub d_p: f64,
    pub d_x: f64,
}

impl StepErrors {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Gamma => self.d_gamma,
            Metric::Position => self.d_p,
            Metric::Extent => self.d_x,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Gamma,
    Position,
    Extent,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Gamma, Metric::Position, Metric::Extent];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Gamma => "d_gamma",
            Metric::Position => "d_p",
            Metric::Extent => "d_x",
        }
    }
}

/// Permutation `π` minimizing `Σ ‖p_i - p̂_{π(i)}‖`; ties keep the first in
/// lexicographic order.
pub fn best_assignment(truth: &[DVector<f64>], estimate: &[DVector<f64>]) -> Result<(Vec<usize>, f64)> {
    if truth.len() != estimate.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: estimate.len(),
        });
    }
    let n = truth.len();
    let mut best = ((0..n).collect::<Vec<_>>(), f64::INFINITY);
    for perm in (0..n).permutations(n) {
        let cost: f64 = perm.iter().enumerate().map(|(i, &j)| (&truth[i] - &estimate[j]).norm()).sum();
        if cost < best.1 {
            best = (perm, cost);
        }
    }
    Ok(best)
}

pub fn compute_errors(
    rates: &[f64],
    positions: &[DVector<f64>],
    extents: &[DMatrix<f64>],
    estimate: &TargetEstimate,
) -> Result<StepErrors> {
    let (pi, d_p) = best_assignment(positions, &estimate.positions)?;
    if rates.len() != estimate.rates.len() || extents.len() != estimate.extents.len() {
        return Err(Error::DimensionMismatch {
            expected: rates.len(),
            actual: estimate.rates.len(),
        });
    }
    let d_gamma = pi.iter().enumerate().map(|(i, &j)| (rates[i] - estimate.rates[j]).abs()).sum();
    let d_x = pi
        .iter()
        .enumerate()
        .map(|(i, &j)| (&extents[i] - estimate.extents[j].matrix()).norm())
        .sum();
    Ok(StepErrors { d_gamma, d_p, d_x })
}

/// Linearly interpolated percentile (`q` in `[0, 100]`) of unsorted data.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=100.0).contains(&q) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

pub fn median(values: &[f64]) -> Option<f64> {
    percentile(values, 50.0)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::SpdMatrix;

    fn v(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    fn estimate(pos: Vec<DVector<f64>>, rates: Vec<f64>) -> TargetEstimate {
        let n = pos.len();
        TargetEstimate {
            rates,
            positions: pos,
            extents: (0..n).map(|i| SpdMatrix::scaled_identity(2, 1.0 + i as f64).unwrap()).collect(),
            kinematics: DVector::zeros(3),
        }
    }

    #[test]
    fn perfect_and_swapped() {
        let p = vec![v(0.0, 0.0), v(10.0, 0.0), v(0.0, 5.0)];
        let x: Vec<DMatrix<f64>> = (0..3).map(|i| DMatrix::identity(2, 2) * (1.0 + i as f64)).collect();
        let est = estimate(p.clone(), vec![1.0, 2.0, 3.0]);
        assert_eq!(compute_errors(&[1.0, 2.0, 3.0], &p, &x, &est).unwrap(), StepErrors::default());

        let swapped = TargetEstimate {
            rates: vec![2.0, 1.0, 3.0],
            positions: vec![p[1].clone(), p[0].clone(), p[2].clone()],
            extents: vec![est.extents[1].clone(), est.extents[0].clone(), est.extents[2].clone()],
            kinematics: DVector::zeros(3),
        };
        assert_eq!(compute_errors(&[1.0, 2.0, 3.0], &p, &x, &swapped).unwrap(), StepErrors::default());
        assert!(compute_errors(&[1.0], &p[..1], &x[..1], &est).is_err());
    }

    #[test]
    fn percentiles() {
        let x = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(median(&x), Some(3.0));
        assert_eq!(percentile(&x, 25.0), Some(2.0));
        assert_eq!(percentile(&[1.0, 2.0], 50.0), Some(1.5));
        assert_eq!(percentile(&[7.0], 75.0), Some(7.0));
        assert_eq!(percentile(&[], 50.0), None);
        let (m, s) = mean_std(&[1.0, 3.0]).unwrap();
        assert_eq!((m, s), (2.0, 1.0));
    }
}
