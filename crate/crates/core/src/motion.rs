//! Coordinated-turn motion with polar velocity.
//!
//! The kinematics block is `[speed, heading, turn_rate]`. Subobject offsets
//! rotate with the body by `R(Tω)` each step, and the same rotation is the
//! extension transformation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::StateLayout;
use crate::stats::SpdMatrix;

pub const SPEED: usize = 0;
pub const HEADING: usize = 1;
pub const TURN_RATE: usize = 2;

/// Below this turn rate the arc-length factor switches to its Taylor form.
pub const TURN_RATE_SWITCH: f64 = 1e-6;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

pub fn rotation(angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

fn rotation_derivative(angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    DMatrix::from_row_slice(2, 2, &[-s, -c, c, -s])
}

fn assert_ct_layout(layout: &StateLayout) {
    assert!(
        layout.dim == 2 && layout.n_kinematics == 3,
        "coordinated-turn motion needs d = 2 and [speed, heading, turn_rate] kinematics"
    );
}

/// `g(ω) = 2 sin(ωT/2) / ω` and its derivative.
fn arc_factor(omega: f64, t: f64) -> (f64, f64) {
    if omega.abs() < TURN_RATE_SWITCH {
        let g = t - omega * omega * t.powi(3) / 24.0;
        let dg = -omega * t.powi(3) / 12.0;
        (g, dg)
    } else {
        let half = 0.5 * omega * t;
        let g = 2.0 * half.sin() / omega;
        let dg = t * half.cos() / omega - 2.0 * half.sin() / (omega * omega);
        (g, dg)
    }
}

/// Heading in a state vector is wrapped in place.
pub fn wrap_heading(x: &mut DVector<f64>, layout: &StateLayout) {
    let h = layout.kinematics_start() + HEADING;
    x[h] = wrap_angle(x[h]);
}

pub fn ct_transition(x: &DVector<f64>, layout: &StateLayout, t: f64) -> DVector<f64> {
    assert_ct_layout(layout);
    let k = layout.kinematics_start();
    let (speed, heading, omega) = (x[k + SPEED], x[k + HEADING], x[k + TURN_RATE]);
    let (g, _) = arc_factor(omega, t);
    let theta = heading + 0.5 * omega * t;

    let mut out = x.clone();
    out[0] += speed * g * theta.cos();
    out[1] += speed * g * theta.sin();
    out[k + HEADING] = wrap_angle(heading + t * omega);

    let rot = rotation(t * omega);
    for i in 1..layout.n_subobjects {
        let s = layout.offset_start(i);
        let d = x.rows(s, 2).clone_owned();
        out.rows_mut(s, 2).copy_from(&(&rot * d));
    }
    out
}

pub fn ct_jacobian(x: &DVector<f64>, layout: &StateLayout, t: f64) -> DMatrix<f64> {
    assert_ct_layout(layout);
    let n = layout.state_dim();
    let k = layout.kinematics_start();
    let (speed, heading, omega) = (x[k + SPEED], x[k + HEADING], x[k + TURN_RATE]);
    let (g, dg) = arc_factor(omega, t);
    let theta = heading + 0.5 * omega * t;
    let (st, ct) = theta.sin_cos();

    let mut f = DMatrix::<f64>::identity(n, n);
    // position row block
    f[(0, k + SPEED)] = g * ct;
    f[(1, k + SPEED)] = g * st;
    f[(0, k + HEADING)] = -speed * g * st;
    f[(1, k + HEADING)] = speed * g * ct;
    f[(0, k + TURN_RATE)] = speed * dg * ct - speed * g * 0.5 * t * st;
    f[(1, k + TURN_RATE)] = speed * dg * st + speed * g * 0.5 * t * ct;
    // heading
    f[(k + HEADING, k + TURN_RATE)] = t;

    let rot = rotation(t * omega);
    let drot = rotation_derivative(t * omega) * t;
    for i in 1..layout.n_subobjects {
        let s = layout.offset_start(i);
        let d = x.rows(s, 2).clone_owned();
        f.view_mut((s, s), (2, 2)).copy_from(&rot);
        f.view_mut((s, k + TURN_RATE), (2, 1)).copy_from(&(&drot * d));
    }
    f
}

/// `M(x) = R(Tω)`.
pub fn extension_transform(x: &DVector<f64>, layout: &StateLayout, t: f64) -> DMatrix<f64> {
    assert_ct_layout(layout);
    rotation(t * x[layout.kinematics_start() + TURN_RATE])
}

/// Diagonal process noise variances per channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessNoise {
    pub position: f64,
    pub speed: f64,
    pub heading: f64,
    pub turn_rate: f64,
    pub offset: f64,
}

impl ProcessNoise {
    pub fn non_maneuver() -> Self {
        Self {
            position: 0.01,
            speed: 0.1 * 0.1,
            heading: 0.01 * 0.01,
            turn_rate: 0.001 * 0.001,
            offset: 0.01,
        }
    }

    pub fn maneuver() -> Self {
        let base = Self::non_maneuver();
        Self {
            heading: base.heading * 100.0,
            turn_rate: base.turn_rate * 100.0,
            ..base
        }
    }

    pub fn covariance(&self, layout: &StateLayout) -> Result<SpdMatrix> {
        assert_ct_layout(layout);
        let mut diag = vec![self.position; 2];
        diag.extend([self.speed, self.heading, self.turn_rate]);
        diag.extend(std::iter::repeat_n(self.offset, 2 * (layout.n_subobjects - 1)));
        SpdMatrix::from_diagonal(&diag)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeLabel {
    NonManeuver,
    Maneuver,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionMode {
    pub label: ModeLabel,
    pub process_noise: ProcessNoise,
    /// Gamma forgetting factor `η > 1`.
    pub rate_forgetting: f64,
    /// Wishart transition degrees of freedom `n > d - 1`.
    pub extension_dof: f64,
}

impl MotionMode {
    pub fn non_maneuver() -> Self {
        Self {
            label: ModeLabel::NonManeuver,
            process_noise: ProcessNoise::non_maneuver(),
            rate_forgetting: 1.05,
            extension_dof: 100.0,
        }
    }

    pub fn maneuver() -> Self {
        Self {
            label: ModeLabel::Maneuver,
            process_noise: ProcessNoise::maneuver(),
            ..Self::non_maneuver()
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.rate_forgetting > 1.0) {
            return Err(Error::Config(format!(
                "rate forgetting must exceed 1, got {}",
                self.rate_forgetting
            )));
        }
        if !(self.extension_dof > dim as f64 - 1.0) {
            return Err(Error::Config(format!(
                "extension dof must exceed d - 1, got {}",
                self.extension_dof
            )));
        }
        let p = &self.process_noise;
        if [p.position, p.speed, p.heading, p.turn_rate, p.offset].iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("process noise variances must be positive".into()));
        }
        Ok(())
    }
}

/// Row-stochastic mode transition matrix, `rows[from][to]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ModeTransitionMatrix {
    rows: Vec<Vec<f64>>,
}

impl ModeTransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::Empty("mode transition matrix"));
        }
        for row in &rows {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    actual: row.len(),
                });
            }
            if row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::Config("transition probabilities must be non-negative".into()));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!("transition row sums to {sum}, not 1")));
            }
        }
        Ok(Self { rows })
    }

    pub fn single() -> Self {
        Self { rows: vec![vec![1.0]] }
    }

    /// Stay with probability `stay`, switch uniformly otherwise.
    pub fn uniform_switch(modes: usize, stay: f64) -> Result<Self> {
        if modes == 1 {
            return Ok(Self::single());
        }
        let off = (1.0 - stay) / (modes - 1) as f64;
        Self::new(
            (0..modes)
                .map(|i| (0..modes).map(|j| if i == j { stay } else { off }).collect())
                .collect(),
        )
    }

    pub fn n_modes(&self) -> usize {
        self.rows.len()
    }

    pub fn probability(&self, from: usize, to: usize) -> Result<f64> {
        let m = self.rows.len();
        for index in [from, to] {
            if index >= m {
                return Err(Error::IndexOutOfRange { index, len: m });
            }
        }
        Ok(self.rows[from][to])
    }
}

impl Default for ModeTransitionMatrix {
    fn default() -> Self {
        Self {
            rows: vec![vec![0.95, 0.05], vec![0.05, 0.95]],
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for ModeTransitionMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<ModeTransitionMatrix> for Vec<Vec<f64>> {
    fn from(m: ModeTransitionMatrix) -> Self {
        m.rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state(layout: &StateLayout, p: [f64; 2], c: [f64; 3], offsets: &[[f64; 2]]) -> DVector<f64> {
        let mut x = DVector::zeros(layout.state_dim());
        x[0] = p[0];
        x[1] = p[1];
        let k = layout.kinematics_start();
        for (j, v) in c.iter().enumerate() {
            x[k + j] = *v;
        }
        for (i, d) in offsets.iter().enumerate() {
            let s = layout.offset_start(i + 1);
            x[s] = d[0];
            x[s + 1] = d[1];
        }
        x
    }

    #[test]
    fn straight_line_limit() {
        let layout = StateLayout::planar(2).unwrap();
        let x = state(&layout, [0.0, 0.0], [10.0, 0.0, 0.0], &[[3.0, 1.0]]);
        let y = ct_transition(&x, &layout, 1.0);
        assert_relative_eq!(y[0], 10.0, epsilon = 1e-12);
        assert_relative_eq!(y[1], 0.0, epsilon = 1e-12);
        assert_eq!(y.rows(5, 2), x.rows(5, 2));
    }

    #[test]
    fn half_turn_negates_offsets() {
        let layout = StateLayout::planar(3).unwrap();
        let x = state(&layout, [1.0, 2.0], [5.0, 0.3, PI], &[[3.0, 1.0], [-2.0, 4.0]]);
        let y = ct_transition(&x, &layout, 1.0);
        for s in [5, 6, 7, 8] {
            assert_relative_eq!(y[s], -x[s], epsilon = 1e-12);
        }
    }

    #[test]
    fn continuity_across_switch() {
        let layout = StateLayout::planar(2).unwrap();
        let a = state(&layout, [0.0, 0.0], [12.0, 0.7, 1e-9], &[[3.0, 1.0]]);
        let b = state(&layout, [0.0, 0.0], [12.0, 0.7, 0.0], &[[3.0, 1.0]]);
        let ya = ct_transition(&a, &layout, 1.0);
        let yb = ct_transition(&b, &layout, 1.0);
        assert!((ya.rows(0, 2) - yb.rows(0, 2)).norm() < 1e-6);
        // both sides of the switch itself
        let lo = state(&layout, [0.0, 0.0], [12.0, 0.7, TURN_RATE_SWITCH * 0.999_999], &[[3.0, 1.0]]);
        let hi = state(&layout, [0.0, 0.0], [12.0, 0.7, TURN_RATE_SWITCH * 1.000_001], &[[3.0, 1.0]]);
        let (yl, yh) = (ct_transition(&lo, &layout, 1.0), ct_transition(&hi, &layout, 1.0));
        assert!((yl.rows(0, 2) - yh.rows(0, 2)).norm() < 1e-6);
        let (jl, jh) = (ct_jacobian(&lo, &layout, 1.0), ct_jacobian(&hi, &layout, 1.0));
        assert!((jl - jh).norm() < 1e-6);
    }

    #[test]
    fn jacobian_exact_entries() {
        let layout = StateLayout::planar(3).unwrap();
        let x = state(&layout, [0.0, 0.0], [4.0, 0.2, 0.0], &[[3.0, 1.0], [1.0, 1.0]]);
        let f = ct_jacobian(&x, &layout, 2.0);
        assert_eq!(f[(3, 4)], 2.0);
        assert_eq!(f.view((5, 5), (4, 4)).clone_owned(), DMatrix::identity(4, 4));
        let x = state(&layout, [0.0, 0.0], [4.0, 0.2, 0.13], &[[3.0, 1.0], [1.0, 1.0]]);
        assert_eq!(ct_jacobian(&x, &layout, 0.5)[(3, 4)], 0.5);
    }

    #[test]
    fn extension_transform_is_rotation() {
        let layout = StateLayout::planar(2).unwrap();
        let x = state(&layout, [0.0, 0.0], [1.0, 0.0, 0.0], &[[1.0, 0.0]]);
        assert_relative_eq!(extension_transform(&x, &layout, 1.0), DMatrix::identity(2, 2));
        let x = state(&layout, [0.0, 0.0], [1.0, 0.0, PI / 2.0], &[[1.0, 0.0]]);
        let m = extension_transform(&x, &layout, 1.0);
        assert_relative_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]), epsilon = 1e-15);
        for k in 0..1000 {
            let w = -3.0 + 6.0 * k as f64 / 999.0;
            let r = rotation(w);
            assert!((r.determinant() - 1.0).abs() < 1e-14);
            assert!((&r * r.transpose() - DMatrix::<f64>::identity(2, 2)).norm() < 1e-14);
        }
    }

    #[test]
    fn transition_probabilities() {
        let pi = ModeTransitionMatrix::default();
        assert_eq!(pi.probability(0, 0).unwrap(), 0.95);
        assert_eq!(pi.probability(0, 1).unwrap(), 0.05);
        for from in 0..2 {
            let s: f64 = (0..2).map(|to| pi.probability(from, to).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(pi.probability(2, 0).is_err());
        assert!(ModeTransitionMatrix::new(vec![vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_relative_eq!(wrap_angle(7.0), 7.0 - 2.0 * PI, epsilon = 1e-15);
    }
}
