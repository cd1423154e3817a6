//! Extended target state: a main-subobject position, shared kinematics and
//! relative offsets stacked in one Gaussian vector, plus a gamma rate and an
//! inverse Wishart extension per subobject.
//!
//! Subobject indices are zero-based; subobject 0 is the main subobject.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::motion::{wrap_heading, ModeTransitionMatrix, MotionMode};
use crate::reduce::{merge, ReductionConfig};
use crate::stats::{GammaParams, InverseWishartParams, SpdMatrix};

/// Dimension bookkeeping of the stacked kinematic vector
/// `[p; c; d_1; …; d_{Ns-1}]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub dim: usize,
    pub n_kinematics: usize,
    pub n_subobjects: usize,
}

impl StateLayout {
    pub fn new(dim: usize, n_kinematics: usize, n_subobjects: usize) -> Result<Self> {
        if dim == 0 || n_subobjects == 0 {
            return Err(Error::Config("layout needs d >= 1 and at least one subobject".into()));
        }
        Ok(Self {
            dim,
            n_kinematics,
            n_subobjects,
        })
    }

    /// Two-dimensional layout with `[speed, heading, turn_rate]` kinematics.
    pub fn planar(n_subobjects: usize) -> Result<Self> {
        Self::new(2, 3, n_subobjects)
    }

    pub fn state_dim(&self) -> usize {
        self.dim + self.n_kinematics + (self.n_subobjects - 1) * self.dim
    }

    pub fn kinematics_start(&self) -> usize {
        self.dim
    }

    /// Start of the offset block of subobject `i >= 1`.
    pub fn offset_start(&self, i: usize) -> usize {
        debug_assert!(i >= 1 && i < self.n_subobjects);
        self.dim + self.n_kinematics + (i - 1) * self.dim
    }

    /// `H_i` with `H_i x = p + d_i` (and `H_0 x = p`).
    pub fn measurement_matrix(&self, i: usize) -> Result<DMatrix<f64>> {
        if i >= self.n_subobjects {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n_subobjects,
            });
        }
        let mut h = DMatrix::zeros(self.dim, self.state_dim());
        for r in 0..self.dim {
            h[(r, r)] = 1.0;
            if i > 0 {
                h[(r, self.offset_start(i) + r)] = 1.0;
            }
        }
        Ok(h)
    }

    /// Absolute position `H_i m` of subobject `i`.
    pub fn subobject_position(&self, mean: &DVector<f64>, i: usize) -> DVector<f64> {
        let mut p = mean.rows(0, self.dim).clone_owned();
        if i > 0 {
            p += mean.rows(self.offset_start(i), self.dim);
        }
        p
    }
}

/// Table-driven initialization parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitParams {
    /// Prior mean `e` of every measurement rate.
    pub rate_mean: f64,
    /// Prior variance `v` of every measurement rate.
    pub rate_variance: f64,
    /// Initial kinematics `c0`.
    pub kinematics: Vec<f64>,
    /// `P0 = covariance_scale · I`.
    pub covariance_scale: f64,
    /// Replaces the kinematics block of the `P0` diagonal when set.
    pub kinematics_variance: Option<Vec<f64>>,
    /// Hypotheses per mode `N_p`; `None` means `max(1, 2(Ns - 1))`.
    pub hypotheses: Option<usize>,
    /// Per-axis sensor noise variance, used as the radius floor.
    pub sensor_noise: f64,
}

impl Default for InitParams {
    fn default() -> Self {
        Self {
            rate_mean: 15.0,
            rate_variance: 10.0,
            kinematics: vec![0.0; 3],
            covariance_scale: 100.0,
            kinematics_variance: None,
            hypotheses: None,
            sensor_noise: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_subobjects: usize,
    pub sample_time: f64,
    pub init: InitParams,
    pub modes: Vec<MotionMode>,
    pub mode_transition: ModeTransitionMatrix,
    pub reduction: ReductionConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_subobjects: 3,
            sample_time: 1.0,
            init: InitParams::default(),
            modes: vec![MotionMode::non_maneuver(), MotionMode::maneuver()],
            mode_transition: ModeTransitionMatrix::default(),
            reduction: ReductionConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn with_subobjects(n_subobjects: usize) -> Self {
        Self {
            n_subobjects,
            ..Self::default()
        }
    }

    pub fn layout(&self) -> Result<StateLayout> {
        StateLayout::planar(self.n_subobjects)
    }

    pub fn hypotheses_per_mode(&self) -> usize {
        self.init
            .hypotheses
            .unwrap_or_else(|| (2 * self.n_subobjects.saturating_sub(1)).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let layout = self.layout()?;
        if !(self.sample_time > 0.0) {
            return Err(Error::Config("sample time must be positive".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("at least one motion mode is required".into()));
        }
        if self.modes.len() != self.mode_transition.n_modes() {
            return Err(Error::Config(format!(
                "{} modes but a {}x{} transition matrix",
                self.modes.len(),
                self.mode_transition.n_modes(),
                self.mode_transition.n_modes()
            )));
        }
        for mode in &self.modes {
            mode.validate(layout.dim)?;
        }
        if self.init.kinematics.len() != layout.n_kinematics {
            return Err(Error::DimensionMismatch {
                expected: layout.n_kinematics,
                actual: self.init.kinematics.len(),
            });
        }
        if let Some(kv) = &self.init.kinematics_variance {
            if kv.len() != layout.n_kinematics || kv.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Config("kinematics variance needs one positive value per channel".into()));
            }
        }
        if !(self.init.rate_mean > 0.0 && self.init.rate_variance > 0.0) {
            return Err(Error::Config("initial rate mean and variance must be positive".into()));
        }
        if !(self.init.covariance_scale > 0.0 && self.init.sensor_noise > 0.0) {
            return Err(Error::Config("initial covariance and sensor noise must be positive".into()));
        }
        if self.hypotheses_per_mode() == 0 {
            return Err(Error::Config("need at least one initial hypothesis".into()));
        }
        self.reduction.validate()
    }
}

/// One mixture hypothesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GgiwComponent {
    pub weight: f64,
    pub mode: usize,
    pub rates: Vec<GammaParams>,
    pub kin_mean: DVector<f64>,
    pub kin_cov: SpdMatrix,
    pub extents: Vec<InverseWishartParams>,
}

impl GgiwComponent {
    pub fn n_subobjects(&self) -> usize {
        self.rates.len()
    }

    pub fn rate_estimates(&self) -> Vec<f64> {
        self.rates.iter().map(GammaParams::mean).collect()
    }

    pub fn extent_estimates(&self) -> Vec<DMatrix<f64>> {
        self.extents.iter().map(InverseWishartParams::mean).collect()
    }

    pub fn positions(&self, layout: &StateLayout) -> Vec<DVector<f64>> {
        (0..layout.n_subobjects)
            .map(|i| layout.subobject_position(&self.kin_mean, i))
            .collect()
    }

    pub fn validate(&self, layout: &StateLayout) -> Result<()> {
        if !(0.0..=1.0 + 1e-12).contains(&self.weight) {
            return Err(Error::Domain(format!("weight {} outside [0, 1]", self.weight)));
        }
        for len in [self.rates.len(), self.extents.len()] {
            if len != layout.n_subobjects {
                return Err(Error::DimensionMismatch {
                    expected: layout.n_subobjects,
                    actual: len,
                });
            }
        }
        if self.kin_mean.len() != layout.state_dim() || self.kin_cov.dim() != layout.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.state_dim(),
                actual: self.kin_mean.len(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GgiwMixture {
    pub components: Vec<GgiwComponent>,
}

impl GgiwMixture {
    pub fn new(components: Vec<GgiwComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("mixture"));
        }
        Ok(Self { components })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn normalize(&mut self) {
        let total = self.total_weight();
        if total > 0.0 {
            for c in &mut self.components {
                c.weight /= total;
            }
        }
    }

    /// Index of the heaviest component; ties go to the smallest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, c) in self.components.iter().enumerate() {
            if c.weight > self.components[best].weight {
                best = i;
            }
        }
        best
    }

    /// Weight mass per mode.
    pub fn mode_probabilities(&self, n_modes: usize) -> Vec<f64> {
        let mut p = vec![0.0; n_modes];
        for c in &self.components {
            if c.mode < n_modes {
                p[c.mode] += c.weight;
            }
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetEstimate {
    pub rates: Vec<f64>,
    pub positions: Vec<DVector<f64>>,
    pub extents: Vec<SpdMatrix>,
    pub kinematics: DVector<f64>,
}

impl TargetEstimate {
    pub fn from_component(comp: &GgiwComponent, layout: &StateLayout) -> Result<Self> {
        let k = layout.kinematics_start();
        Ok(Self {
            rates: comp.rate_estimates(),
            positions: comp.positions(layout),
            extents: comp
                .extents
                .iter()
                .map(|iw| SpdMatrix::from_symmetrized(iw.mean()))
                .collect::<Result<_>>()?,
            kinematics: comp.kin_mean.rows(k, layout.n_kinematics).clone_owned(),
        })
    }
}

/// Builds the initial mixture from the first measurement set: `N_p`
/// hypotheses per mode with offsets spread on a circle around the centroid.
pub fn initialize(measurements: &[DVector<f64>], cfg: &ModelConfig) -> Result<GgiwMixture> {
    cfg.validate()?;
    let layout = cfg.layout()?;
    if measurements.is_empty() {
        return Err(Error::Empty("initialization needs at least one measurement"));
    }
    let d = layout.dim;
    for z in measurements {
        if z.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: z.len(),
            });
        }
    }
    let n = measurements.len() as f64;
    let centroid = measurements.iter().fold(DVector::zeros(d), |acc, z| acc + z) / n;
    let spread = measurements
        .iter()
        .map(|z| (z - &centroid).norm())
        .fold(0.0_f64, f64::max);
    let radius_floor = 2.0 * (d as f64 * cfg.init.sensor_noise).sqrt();
    let radius = (0.5 * spread).max(radius_floor);

    let e = cfg.init.rate_mean;
    let var = cfg.init.rate_variance;
    let rate = GammaParams::new(e * e / var, e / var)?;
    let dof = 2.0 * d as f64 + 5.0;
    let extent_scale = (radius / 4.0).powi(2) * (dof - 2.0 * d as f64 - 2.0);
    let extent = InverseWishartParams::new(dof, SpdMatrix::scaled_identity(d, extent_scale)?)?;
    let mut diag = vec![cfg.init.covariance_scale; layout.state_dim()];
    if let Some(kv) = &cfg.init.kinematics_variance {
        diag[layout.kinematics_start()..layout.kinematics_start() + kv.len()].copy_from_slice(kv);
    }
    let cov = SpdMatrix::from_diagonal(&diag)?;

    let n_s = layout.n_subobjects;
    let n_p = cfg.hypotheses_per_mode();
    let n_modes = cfg.modes.len();
    let weight = 1.0 / (n_p * n_modes) as f64;

    let mut components = Vec::with_capacity(n_p * n_modes);
    for p in 0..n_p {
        let mut mean = DVector::zeros(layout.state_dim());
        mean.rows_mut(0, d).copy_from(&centroid);
        let k = layout.kinematics_start();
        for (j, c) in cfg.init.kinematics.iter().enumerate() {
            mean[k + j] = *c;
        }
        for i in 1..n_s {
            let angle = 2.0 * PI * (i - 1) as f64 / (n_s - 1) as f64
                + 2.0 * PI * p as f64 / (n_s * n_p) as f64;
            let s = layout.offset_start(i);
            mean[s] = radius * angle.cos();
            mean[s + 1] = radius * angle.sin();
        }
        wrap_heading(&mut mean, &layout);
        for mode in 0..n_modes {
            components.push(GgiwComponent {
                weight,
                mode,
                rates: vec![rate; n_s],
                kin_mean: mean.clone(),
                kin_cov: cov.clone(),
                extents: vec![extent.clone(); n_s],
            });
        }
    }
    GgiwMixture::new(components)
}

pub fn measurement_matrix(i: usize, cfg: &ModelConfig) -> Result<DMatrix<f64>> {
    cfg.layout()?.measurement_matrix(i)
}

/// Point estimate: merge across modes, then take the heaviest component.
pub fn extract_estimate(mix: &GgiwMixture, cfg: &ModelConfig) -> Result<TargetEstimate> {
    let layout = cfg.layout()?;
    let reduction = ReductionConfig {
        cross_mode: true,
        ..cfg.reduction.clone()
    };
    let merged = merge(mix, &reduction, &layout)?;
    TargetEstimate::from_component(&merged.components[merged.argmax()], &layout)
}

/// Linear map that makes subobject `j` the main one: `p ← p + d_j`,
/// `d_j ← -d_j`, `d_i ← d_i - d_j`; kinematics untouched.
pub fn main_swap_matrix(layout: &StateLayout, j: usize) -> Result<DMatrix<f64>> {
    let n_s = layout.n_subobjects;
    if j == 0 || j >= n_s {
        return Err(Error::IndexOutOfRange { index: j, len: n_s });
    }
    let d = layout.dim;
    let n = layout.state_dim();
    let mut a = DMatrix::<f64>::identity(n, n);
    let sj = layout.offset_start(j);
    for r in 0..d {
        a[(r, sj + r)] = 1.0;
        a[(sj + r, sj + r)] = -1.0;
        for i in 1..n_s {
            if i != j {
                a[(layout.offset_start(i) + r, sj + r)] = -1.0;
            }
        }
    }
    Ok(a)
}

/// Re-labels the component so the subobject closest to the subobject center
/// becomes the main one. Components with fewer than three subobjects are
/// returned unchanged.
pub fn change_main_subobject(comp: &GgiwComponent, layout: &StateLayout) -> Result<GgiwComponent> {
    let n_s = layout.n_subobjects;
    if n_s < 3 {
        return Ok(comp.clone());
    }
    let positions = comp.positions(layout);
    let center = positions.iter().fold(DVector::zeros(layout.dim), |acc, p| acc + p) / n_s as f64;
    let distances: Vec<f64> = positions.iter().map(|p| (p - &center).norm()).collect();
    let scale = distances.iter().fold(0.0_f64, |a, &b| a.max(b)).max(f64::MIN_POSITIVE);
    let mut j = 0;
    for (i, &dist) in distances.iter().enumerate().skip(1) {
        // ties (to rounding) keep the smaller index
        if dist < distances[j] - 1e-9 * scale {
            j = i;
        }
    }
    if j == 0 {
        return Ok(comp.clone());
    }
    let a = main_swap_matrix(layout, j)?;
    let mut out = comp.clone();
    out.kin_mean = &a * &comp.kin_mean;
    out.kin_cov = SpdMatrix::repaired(&a * comp.kin_cov.matrix() * a.transpose())?;
    out.rates.swap(0, j);
    out.extents.swap(0, j);
    Ok(out)
}
