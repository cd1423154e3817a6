//! Simulated targets: shapes, piecewise coordinated-turn trajectories and
//! measurement generation, plus a plain-text scenario file format.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::StateLayout;
use crate::motion::{ct_transition, rotation};
use crate::rng::{stream_rng, streams};
use crate::sampling::mvnormal;
use crate::stats::SpdMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    T,
    Plane,
    V,
    Custom,
}

impl std::str::FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t" | "T" => Ok(Self::T),
            "plane" => Ok(Self::Plane),
            "v" | "V" => Ok(Self::V),
            "custom" => Ok(Self::Custom),
            other => Err(Error::Config(format!("unknown shape '{other}'"))),
        }
    }
}

/// One elliptic part in the body frame (x along the heading).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubobjectSpec {
    /// Rate as a multiple of `γ0`.
    pub rate_factor: f64,
    pub offset: [f64; 2],
    /// Principal variances of the extension.
    pub extent: [f64; 2],
    /// Angle of the first principal axis relative to the body x axis.
    pub orientation: f64,
}

impl SubobjectSpec {
    fn body_extent(&self) -> DMatrix<f64> {
        let r = rotation(self.orientation);
        let e = DMatrix::from_diagonal(&DVector::from_row_slice(&self.extent));
        &r * e * r.transpose()
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]` in the body frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Rect {
    fn area(&self) -> f64 {
        (self.x[1] - self.x[0]) * (self.y[1] - self.y[0])
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        (self.x[0]..=self.x[1]).contains(&p[0]) && (self.y[0]..=self.y[1]).contains(&p[1])
    }

    fn center(&self) -> [f64; 2] {
        [0.5 * (self.x[0] + self.x[1]), 0.5 * (self.y[0] + self.y[1])]
    }

    /// Covariance of the uniform distribution on the rectangle.
    fn covariance(&self) -> [f64; 2] {
        let w = self.x[1] - self.x[0];
        let h = self.y[1] - self.y[0];
        [w * w / 12.0, h * h / 12.0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    /// Gaussian parts. For the T shape these are the reference subobjects
    /// used for error metrics only.
    pub parts: Vec<SubobjectSpec>,
    /// Union of rectangles sampled uniformly (T shape only).
    #[serde(default)]
    pub polygon: Vec<Rect>,
    /// Total rate of the polygon as a multiple of `γ0`.
    #[serde(default)]
    pub polygon_rate_factor: f64,
    /// Per-axis sensor noise variance added to polygon samples.
    #[serde(default)]
    pub sensor_noise: f64,
}

impl ShapeSpec {
    /// Fuselage along the body axis and two wings across it.
    pub fn plane() -> Self {
        let wing = |side: f64| SubobjectSpec {
            rate_factor: 1.0,
            offset: [-2.0, side * 11.0],
            extent: [25.0, 1.0],
            orientation: FRAC_PI_2,
        };
        Self {
            kind: ShapeKind::Plane,
            parts: vec![
                SubobjectSpec {
                    rate_factor: 2.0,
                    offset: [0.0, 0.0],
                    extent: [100.0, 4.0],
                    orientation: 0.0,
                },
                wing(1.0),
                wing(-1.0),
            ],
            polygon: Vec::new(),
            polygon_rate_factor: 0.0,
            sensor_noise: 0.0,
        }
    }

    /// Two arms meeting at the body origin and opening backwards.
    pub fn v_shape() -> Self {
        let arm = |side: f64| SubobjectSpec {
            rate_factor: 1.0,
            offset: [-20.0 * FRAC_PI_6.cos(), side * 20.0 * FRAC_PI_6.sin()],
            extent: [400.0, 1.0],
            orientation: -side * FRAC_PI_6,
        };
        Self {
            kind: ShapeKind::V,
            parts: vec![arm(1.0), arm(-1.0)],
            polygon: Vec::new(),
            polygon_rate_factor: 0.0,
            sensor_noise: 0.0,
        }
    }

    /// A 20 × 6 bar on top of a 6 × 14 stem, sampled uniformly with unit
    /// sensor noise.
    pub fn t_shape() -> Self {
        let bar = Rect {
            x: [-10.0, 10.0],
            y: [4.0, 10.0],
        };
        let stem = Rect {
            x: [-3.0, 3.0],
            y: [-10.0, 4.0],
        };
        let noise = 1.0;
        let total = bar.area() + stem.area();
        let part = |r: Rect| {
            let c = r.covariance();
            SubobjectSpec {
                rate_factor: 4.0 * r.area() / total,
                offset: r.center(),
                extent: [c[0] + noise, c[1] + noise],
                orientation: 0.0,
            }
        };
        Self {
            kind: ShapeKind::T,
            parts: vec![part(bar), part(stem)],
            polygon: vec![bar, stem],
            polygon_rate_factor: 4.0,
            sensor_noise: noise,
        }
    }

    pub fn preset(kind: ShapeKind) -> Result<Self> {
        match kind {
            ShapeKind::T => Ok(Self::t_shape()),
            ShapeKind::Plane => Ok(Self::plane()),
            ShapeKind::V => Ok(Self::v_shape()),
            ShapeKind::Custom => Err(Error::Config("custom shapes have no preset".into())),
        }
    }

    pub fn n_subobjects(&self) -> usize {
        self.parts.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.parts.is_empty() {
            return Err(Error::Config("shape needs at least one subobject".into()));
        }
        for p in &self.parts {
            if !(p.rate_factor > 0.0 && p.extent[0] > 0.0 && p.extent[1] > 0.0) {
                return Err(Error::Config("subobject rates and extents must be positive".into()));
            }
        }
        if self.kind == ShapeKind::T && (self.polygon.is_empty() || !(self.polygon_rate_factor > 0.0)) {
            return Err(Error::Config("T shape needs a polygon and a positive rate".into()));
        }
        if self.sensor_noise < 0.0 {
            return Err(Error::Config("sensor noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// Constant speed and turn rate for `duration` seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub speed: f64,
    /// rad/s
    pub turn_rate: f64,
}

/// Measurements of `subobject` are dropped for steps `first..=last`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    pub subobject: usize,
    pub first: usize,
    pub last: usize,
}

impl Occlusion {
    pub fn masks(&self, step: usize, subobject: usize) -> bool {
        subobject == self.subobject && (self.first..=self.last).contains(&step)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub shape: ShapeSpec,
    pub gamma0: f64,
    pub sample_time: f64,
    pub initial_position: [f64; 2],
    pub initial_heading: f64,
    /// Zero speed and turn rate for `stationary_duration` seconds instead of
    /// the segment list.
    pub stationary: bool,
    pub stationary_duration: f64,
    pub segments: Vec<Segment>,
    pub occlusion: Option<Occlusion>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            shape: ShapeSpec::plane(),
            gamma0: 5.0,
            sample_time: 1.0,
            initial_position: [0.0, 0.0],
            initial_heading: 0.0,
            stationary: false,
            stationary_duration: 30.0,
            segments: default_segments(),
            occlusion: None,
        }
    }
}

pub fn default_segments() -> Vec<Segment> {
    let turn = 4.5_f64.to_radians();
    let straight = |duration| Segment {
        duration,
        speed: 8.0,
        turn_rate: 0.0,
    };
    vec![
        straight(40.0),
        Segment {
            duration: 20.0,
            speed: 8.0,
            turn_rate: turn,
        },
        straight(30.0),
        Segment {
            duration: 20.0,
            speed: 8.0,
            turn_rate: -turn,
        },
        straight(40.0),
    ]
}

impl ScenarioSpec {
    pub fn with_shape(kind: ShapeKind) -> Result<Self> {
        Ok(Self {
            shape: ShapeSpec::preset(kind)?,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        if !(self.gamma0 > 0.0 && self.sample_time > 0.0) {
            return Err(Error::Config("gamma0 and sample time must be positive".into()));
        }
        if !self.stationary && self.segments.is_empty() {
            return Err(Error::Config("moving scenario needs at least one segment".into()));
        }
        if self.segments.iter().any(|s| !(s.duration > 0.0)) {
            return Err(Error::Config("segment durations must be positive".into()));
        }
        if let Some(o) = &self.occlusion {
            if o.subobject >= self.shape.n_subobjects() || o.first > o.last {
                return Err(Error::Config("invalid occlusion window".into()));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<StateLayout> {
        StateLayout::planar(self.shape.n_subobjects())
    }
}

/// Reference point of the body and its kinematics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub position: [f64; 2],
    pub speed: f64,
    pub heading: f64,
    pub turn_rate: f64,
}

/// Piecewise coordinated-turn trajectory sampled every `T` seconds, starting
/// at time zero.
pub fn build_trajectory(spec: &ScenarioSpec) -> Result<Vec<BodyState>> {
    let t = spec.sample_time;
    let segments = if spec.stationary {
        vec![Segment {
            duration: spec.stationary_duration,
            speed: 0.0,
            turn_rate: 0.0,
        }]
    } else {
        spec.segments.clone()
    };
    if segments.is_empty() {
        return Err(Error::Empty("trajectory segment list"));
    }
    let layout = StateLayout::planar(1)?;
    let first = segments[0];
    let mut x = DVector::from_vec(vec![
        spec.initial_position[0],
        spec.initial_position[1],
        first.speed,
        spec.initial_heading,
        first.turn_rate,
    ]);
    let to_body = |x: &DVector<f64>| BodyState {
        position: [x[0], x[1]],
        speed: x[2],
        heading: x[3],
        turn_rate: x[4],
    };
    let mut out = vec![to_body(&x)];
    for seg in &segments {
        let steps = (seg.duration / t).round() as usize;
        x[2] = seg.speed;
        x[4] = seg.turn_rate;
        if let Some(last) = out.last_mut() {
            last.speed = seg.speed;
            last.turn_rate = seg.turn_rate;
        }
        for _ in 0..steps {
            x = ct_transition(&x, &layout, t);
            out.push(to_body(&x));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruthStep {
    pub step: usize,
    pub time: f64,
    /// `[p; speed; heading; turn_rate; d_1; …]` with subobject 0 as main.
    pub state: DVector<f64>,
    pub rates: Vec<f64>,
    pub extents: Vec<DMatrix<f64>>,
    pub measurements: Vec<DVector<f64>>,
}

impl TruthStep {
    pub fn layout(&self) -> Result<StateLayout> {
        StateLayout::planar(self.rates.len())
    }

    pub fn positions(&self) -> Vec<DVector<f64>> {
        let layout = StateLayout::planar(self.rates.len()).expect("non-empty truth");
        (0..self.rates.len())
            .map(|i| layout.subobject_position(&self.state, i))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub steps: Vec<TruthStep>,
}

fn truth_state(body: &BodyState, shape: &ShapeSpec) -> Result<(DVector<f64>, Vec<DMatrix<f64>>)> {
    let layout = StateLayout::planar(shape.n_subobjects())?;
    let r = rotation(body.heading);
    let pos = DVector::from_row_slice(&body.position);
    let world: Vec<DVector<f64>> = shape
        .parts
        .iter()
        .map(|p| &pos + &r * DVector::from_row_slice(&p.offset))
        .collect();
    let mut x = DVector::zeros(layout.state_dim());
    x.rows_mut(0, 2).copy_from(&world[0]);
    x[2] = body.speed;
    x[3] = body.heading;
    x[4] = body.turn_rate;
    for i in 1..world.len() {
        x.rows_mut(layout.offset_start(i), 2).copy_from(&(&world[i] - &world[0]));
    }
    let extents = shape.parts.iter().map(|p| &r * p.body_extent() * r.transpose()).collect();
    Ok((x, extents))
}

fn poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).map(|p| p.sample(rng) as usize).unwrap_or(0)
}

/// Measurement set of one step. Masked subobjects generate nothing.
pub fn simulate_measurements<R: Rng + ?Sized>(
    truth: &TruthStep,
    spec: &ScenarioSpec,
    body: &BodyState,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let shape = &spec.shape;
    let masked = |i: usize| spec.occlusion.is_some_and(|o| o.masks(truth.step, i));
    let mut z = Vec::new();
    if shape.kind == ShapeKind::T {
        let n = poisson(shape.polygon_rate_factor * spec.gamma0, rng);
        let (x0, x1, y0, y1) = shape.polygon.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), r| (a.min(r.x[0]), b.max(r.x[1]), c.min(r.y[0]), d.max(r.y[1])),
        );
        let r = rotation(body.heading);
        let noise = SpdMatrix::scaled_identity(2, shape.sensor_noise.max(f64::MIN_POSITIVE))?;
        let zero = DVector::zeros(2);
        let mut drawn = 0;
        while drawn < n {
            let p = [rng.random_range(x0..=x1), rng.random_range(y0..=y1)];
            let Some(part) = shape.polygon.iter().position(|rect| rect.contains(p)) else {
                continue;
            };
            drawn += 1;
            if masked(part) {
                continue;
            }
            let world = DVector::from_row_slice(&body.position) + &r * DVector::from_row_slice(&p);
            let e = if shape.sensor_noise > 0.0 {
                mvnormal(&zero, &noise, rng)
            } else {
                zero.clone()
            };
            z.push(world + e);
        }
        return Ok(z);
    }
    let positions = truth.positions();
    for (i, part) in shape.parts.iter().enumerate() {
        let n = poisson(part.rate_factor * spec.gamma0, rng);
        if masked(i) {
            continue;
        }
        let cov = SpdMatrix::from_symmetrized(truth.extents[i].clone())?;
        let noisy = if shape.sensor_noise > 0.0 {
            SpdMatrix::from_symmetrized(cov.matrix() + DMatrix::identity(2, 2) * shape.sensor_noise)?
        } else {
            cov
        };
        for _ in 0..n {
            z.push(mvnormal(&positions[i], &noisy, rng));
        }
    }
    Ok(z)
}

/// Ground truth and measurements of the whole scenario from `seed`.
pub fn simulate(spec: &ScenarioSpec, seed: u64) -> Result<Scenario> {
    simulate_with_rng(spec, &mut stream_rng(seed, &[streams::SCENARIO]))
}

pub fn simulate_with_rng<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Scenario> {
    spec.validate()?;
    let trajectory = build_trajectory(spec)?;
    let mut steps = Vec::with_capacity(trajectory.len());
    for (k, body) in trajectory.iter().enumerate() {
        let (state, extents) = truth_state(body, &spec.shape)?;
        let mut truth = TruthStep {
            step: k,
            time: k as f64 * spec.sample_time,
            state,
            rates: spec.shape.parts.iter().map(|p| p.rate_factor * spec.gamma0).collect(),
            extents,
            measurements: Vec::new(),
        };
        truth.measurements = simulate_measurements(&truth, spec, body, rng)?;
        steps.push(truth);
    }
    Ok(Scenario {
        spec: spec.clone(),
        steps,
    })
}

// ---------------------------------------------------------------------------
// Scenario file
// ---------------------------------------------------------------------------

const HEADER: &str = "# mrm-scenario 1";

fn push_all(line: &mut String, values: impl IntoIterator<Item = f64>) {
    for v in values {
        let _ = write!(line, " {v:?}");
    }
}

/// Writes the scenario as text.
///
/// ```text
/// # mrm-scenario 1
/// # spec <json>
/// # step time | state (n_x) | rates (Ns) | extents (Ns·d·d, row-major) | n_z z_1x z_1y …
/// <one line per step>
/// ```
///
/// Numbers use the shortest representation that parses back to the same
/// `f64`, so reading and writing again reproduces the file byte for byte.
pub fn write_scenario(scenario: &Scenario) -> Result<String> {
    let json = serde_json::to_string(&scenario.spec).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "# spec {json}");
    let _ = writeln!(out, "# step time | state | rates | extents | n_z measurements");
    for s in &scenario.steps {
        let mut line = format!("{} {:?} |", s.step, s.time);
        push_all(&mut line, s.state.iter().copied());
        line.push_str(" |");
        push_all(&mut line, s.rates.iter().copied());
        line.push_str(" |");
        for e in &s.extents {
            push_all(&mut line, e.transpose().iter().copied());
        }
        let _ = write!(line, " | {}", s.measurements.len());
        for z in &s.measurements {
            push_all(&mut line, z.iter().copied());
        }
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_floats(field: &str, line: usize) -> Result<Vec<f64>> {
    field
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| parse_err(line, format!("'{t}': {e}"))))
        .collect()
}

pub fn read_scenario(text: &str) -> Result<Scenario> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        _ => return Err(parse_err(1, "missing scenario header")),
    }
    let spec: ScenarioSpec = match lines.next() {
        Some((i, l)) => {
            let json = l.strip_prefix("# spec ").ok_or_else(|| parse_err(i + 1, "missing spec line"))?;
            serde_json::from_str(json).map_err(|e| parse_err(i + 1, e.to_string()))?
        }
        None => return Err(parse_err(2, "missing spec line")),
    };
    let ns = spec.shape.n_subobjects();
    let layout = StateLayout::planar(ns)?;
    let mut steps = Vec::new();
    for (i, l) in lines {
        let ln = i + 1;
        if l.starts_with('#') || l.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = l.split('|').collect();
        if fields.len() != 5 {
            return Err(parse_err(ln, format!("expected 5 fields, found {}", fields.len())));
        }
        let mut head = fields[0].split_whitespace();
        let step = head
            .next()
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or_else(|| parse_err(ln, "bad step index"))?;
        let time = head
            .next()
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| parse_err(ln, "bad time"))?;
        let state = parse_floats(fields[1], ln)?;
        let rates = parse_floats(fields[2], ln)?;
        let ext = parse_floats(fields[3], ln)?;
        let meas = parse_floats(fields[4], ln)?;
        if state.len() != layout.state_dim() || rates.len() != ns || ext.len() != ns * 4 {
            return Err(parse_err(ln, "field sizes do not match the shape"));
        }
        let n_z = meas.first().copied().unwrap_or(-1.0);
        if n_z < 0.0 || n_z.fract() != 0.0 || meas.len() != 1 + 2 * n_z as usize {
            return Err(parse_err(ln, "measurement count does not match"));
        }
        steps.push(TruthStep {
            step,
            time,
            state: DVector::from_vec(state),
            rates,
            extents: ext.chunks(4).map(|c| DMatrix::from_row_slice(2, 2, c)).collect(),
            measurements: meas[1..].chunks(2).map(DVector::from_row_slice).collect(),
        });
    }
    if steps.is_empty() {
        return Err(Error::Empty("scenario file has no steps"));
    }
    Ok(Scenario { spec, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn straight_segment_distance() {
        let spec = ScenarioSpec {
            segments: vec![Segment {
                duration: 10.0,
                speed: 8.0,
                turn_rate: 0.0,
            }],
            initial_heading: 0.3,
            ..ScenarioSpec::default()
        };
        let traj = build_trajectory(&spec).unwrap();
        assert_eq!(traj.len(), 11);
        let end = traj.last().unwrap().position;
        assert_relative_eq!(end[0], 80.0 * 0.3_f64.cos(), epsilon = 1e-9);
        assert_relative_eq!(end[1], 80.0 * 0.3_f64.sin(), epsilon = 1e-9);
    }

    #[test]
    fn quarter_turn_heading() {
        let spec = ScenarioSpec {
            segments: vec![Segment {
                duration: 20.0,
                speed: 5.0,
                turn_rate: PI / 40.0,
            }],
            ..ScenarioSpec::default()
        };
        let traj = build_trajectory(&spec).unwrap();
        assert_relative_eq!(traj.last().unwrap().heading, PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn default_trajectory_length() {
        let traj = build_trajectory(&ScenarioSpec::default()).unwrap();
        assert_eq!(traj.len(), 151);
        let stationary = ScenarioSpec {
            stationary: true,
            ..ScenarioSpec::default()
        };
        let traj = build_trajectory(&stationary).unwrap();
        assert_eq!(traj.len(), 31);
        assert!(traj.iter().all(|b| b.position == [0.0, 0.0]));
    }

    #[test]
    fn offsets_rotate_with_heading() {
        let spec = ScenarioSpec::default();
        let sc = simulate(&spec, 3).unwrap();
        let layout = spec.layout().unwrap();
        let d0 = sc.steps[0].state.rows(layout.offset_start(1), 2).clone_owned();
        for s in &sc.steps {
            let d = s.state.rows(layout.offset_start(1), 2).clone_owned();
            assert_relative_eq!(d, rotation(s.state[3]) * &d0, epsilon = 1e-9);
        }
    }

    #[test]
    fn plane_rates_and_extents() {
        let spec = ScenarioSpec {
            gamma0: 5.0,
            ..ScenarioSpec::default()
        };
        let sc = simulate(&spec, 1).unwrap();
        assert_eq!(sc.steps[0].rates, vec![10.0, 5.0, 5.0]);
        assert_relative_eq!(
            sc.steps[0].extents[0],
            DMatrix::from_row_slice(2, 2, &[100.0, 0.0, 0.0, 4.0]),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            sc.steps[0].extents[1],
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 25.0]),
            epsilon = 1e-12
        );
    }

    #[test]
    fn occlusion_and_tiny_rates() {
        let spec = ScenarioSpec {
            gamma0: 1e-12,
            ..ScenarioSpec::default()
        };
        let sc = simulate(&spec, 9).unwrap();
        assert!(sc.steps.iter().all(|s| s.measurements.is_empty()));

        let spec = ScenarioSpec {
            gamma0: 20.0,
            occlusion: Some(Occlusion {
                subobject: 1,
                first: 2,
                last: 4,
            }),
            ..ScenarioSpec::default()
        };
        let sc = simulate(&spec, 9).unwrap();
        for s in &sc.steps[2..=4] {
            let wing = &s.positions()[1];
            assert!(s.measurements.iter().all(|z| (z - wing).norm() > 1e-9));
        }
    }

    #[test]
    fn t_shape_points_inside() {
        let spec = ScenarioSpec {
            shape: ShapeSpec::t_shape(),
            stationary: true,
            gamma0: 20.0,
            ..ScenarioSpec::default()
        };
        let sc = simulate(&spec, 4).unwrap();
        let n: usize = sc.steps.iter().map(|s| s.measurements.len()).sum();
        assert!(n > 0);
        for s in &sc.steps {
            for z in &s.measurements {
                assert!(z[0].abs() < 16.0 && z[1].abs() < 16.0);
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let spec = ScenarioSpec {
            gamma0: 2.0,
            occlusion: Some(Occlusion {
                subobject: 2,
                first: 3,
                last: 5,
            }),
            ..ScenarioSpec::default()
        };
        let sc = simulate(&spec, 42).unwrap();
        let text = write_scenario(&sc).unwrap();
        let back = read_scenario(&text).unwrap();
        assert_eq!(back, sc);
        assert_eq!(write_scenario(&back).unwrap(), text);
        assert!(read_scenario("garbage").is_err());
    }
}
