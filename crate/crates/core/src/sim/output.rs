//! Per-step CSV of a single filter run and its reader.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::TargetEstimate;
use crate::sim::filter::{truth_errors, RunOutput};
use crate::sim::metrics::{mean_std, StepErrors};
use crate::sim::scenario::Scenario;
use crate::stats::SpdMatrix;

const FIXED: [&str; 7] = [
    "step",
    "time",
    "n_z",
    "n_events",
    "n_components",
    "mode_entropy",
    "log_set_likelihood",
];
const ERRORS: [&str; 6] = ["f_d_gamma", "f_d_p", "f_d_x", "p_d_gamma", "p_d_p", "p_d_x"];

fn header(n_s: usize) -> String {
    let mut cols: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
    for i in 0..n_s {
        for c in ["rate", "px", "py", "x11", "x12", "x22"] {
            cols.push(format!("{c}_{i}"));
        }
    }
    cols.extend(["speed", "heading", "turn_rate"].map(String::from));
    cols.extend(ERRORS.map(String::from));
    cols.join(",")
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn error_cells(e: Option<StepErrors>) -> [String; 3] {
    [cell(e.map(|e| e.d_gamma)), cell(e.map(|e| e.d_p)), cell(e.map(|e| e.d_x))]
}

pub fn run_csv(scenario: &Scenario, run: &RunOutput) -> String {
    let n_s = scenario.spec.shape.n_subobjects();
    let mut out = header(n_s);
    out.push('\n');
    for (rec, truth) in run.steps.iter().zip(&scenario.steps) {
        let o = &rec.output;
        let mut row = vec![
            o.step.to_string(),
            truth.time.to_string(),
            o.n_measurements.to_string(),
            o.n_events.to_string(),
            o.n_components.to_string(),
            entropy(&o.mode_probabilities).to_string(),
            cell(o.log_set_likelihood),
        ];
        match &o.estimate {
            Some(e) => {
                for i in 0..n_s {
                    let x = e.extents[i].matrix();
                    row.extend(
                        [e.rates[i], e.positions[i][0], e.positions[i][1], x[(0, 0)], x[(0, 1)], x[(1, 1)]]
                            .map(|v| v.to_string()),
                    );
                }
                row.extend(e.kinematics.iter().map(|v| v.to_string()));
            }
            None => row.extend(std::iter::repeat_n(String::new(), 6 * n_s + 3)),
        }
        row.extend(error_cells(rec.filter_errors));
        row.extend(error_cells(rec.prediction_errors));
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Filter estimates per step read back from [`run_csv`] output.
pub fn read_run_csv(text: &str, n_s: usize) -> Result<Vec<(usize, Option<TargetEstimate>)>> {
    let mut lines = text.lines();
    if lines.next() != Some(header(n_s).as_str()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header does not match a {n_s}-subobject run"),
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let ln = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        let err = |msg: &str| Error::Parse { line: ln, msg: msg.into() };
        if f.len() != FIXED.len() + 6 * n_s + 3 + ERRORS.len() {
            return Err(err("wrong column count"));
        }
        let step = f[0].parse::<usize>().map_err(|_| err("bad step"))?;
        let est = &f[FIXED.len()..FIXED.len() + 6 * n_s + 3];
        if est[0].is_empty() {
            out.push((step, None));
            continue;
        }
        let v: Vec<f64> = est
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| err("bad number")))
            .collect::<Result<_>>()?;
        let mut rates = Vec::new();
        let mut positions = Vec::new();
        let mut extents = Vec::new();
        for c in v[..6 * n_s].chunks(6) {
            rates.push(c[0]);
            positions.push(DVector::from_vec(vec![c[1], c[2]]));
            extents.push(SpdMatrix::from_symmetrized(DMatrix::from_row_slice(2, 2, &[c[3], c[4], c[4], c[5]]))?);
        }
        out.push((
            step,
            Some(TargetEstimate {
                rates,
                positions,
                extents,
                kinematics: DVector::from_row_slice(&v[6 * n_s..]),
            }),
        ));
    }
    Ok(out)
}

/// Filter errors recomputed from stored estimates.
pub fn evaluate(scenario: &Scenario, estimates: &[(usize, Option<TargetEstimate>)]) -> Result<Vec<(usize, Option<StepErrors>)>> {
    estimates
        .iter()
        .map(|(k, est)| {
            let truth = scenario
                .steps
                .iter()
                .find(|s| s.step == *k)
                .ok_or(Error::IndexOutOfRange {
                    index: *k,
                    len: scenario.steps.len(),
                })?;
            Ok((*k, est.as_ref().map(|e| truth_errors(truth, e)).transpose()?))
        })
        .collect()
}

pub fn errors_csv(errors: &[(usize, Option<StepErrors>)]) -> String {
    let mut out = String::from("step,d_gamma,d_p,d_x\n");
    for (k, e) in errors {
        let [a, b, c] = error_cells(*e);
        let _ = writeln!(out, "{k},{a},{b},{c}");
    }
    out
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub steps: usize,
    pub failure: Option<(usize, String)>,
    pub mean_filter_d_p: Option<f64>,
    pub mean_prediction_d_p: Option<f64>,
    pub mean_events: Option<f64>,
}

impl RunReport {
    pub fn new(run: &RunOutput, seed: u64) -> Self {
        let filter: Vec<f64> = run.steps.iter().filter_map(|s| s.filter_errors.map(|e| e.d_p)).collect();
        let pred: Vec<f64> = run.steps.iter().filter_map(|s| s.prediction_errors.map(|e| e.d_p)).collect();
        let events: Vec<f64> = run.steps.iter().skip(1).map(|s| s.output.n_events as f64).collect();
        Self {
            seed,
            steps: run.steps.len(),
            failure: run.failure.clone(),
            mean_filter_d_p: mean_std(&filter).map(|m| m.0),
            mean_prediction_d_p: mean_std(&pred).map(|m| m.0),
            mean_events: mean_std(&events).map(|m| m.0),
        }
    }
}
