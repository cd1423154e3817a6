//! Monte-Carlo campaigns and their per-step percentile summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::assoc::EmConfig;
use crate::error::Result;
use crate::model::ModelConfig;
use crate::rng::derive_seed;
use crate::sim::filter::{run_filter, RunOutput};
use crate::sim::metrics::{mean_std, percentile, Metric, StepErrors};
use crate::sim::scenario::{simulate, ScenarioSpec};

/// Compact per-run record kept by a campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub filter: Vec<Option<StepErrors>>,
    pub prediction: Vec<Option<StepErrors>>,
    /// `|Θ̄|` per step (zero at initialization).
    pub events: Vec<usize>,
    pub measurements: Vec<usize>,
    pub failure: Option<(usize, String)>,
}

impl RunSummary {
    fn from_output(run: usize, out: &RunOutput) -> Self {
        Self {
            run,
            filter: out.steps.iter().map(|s| s.filter_errors).collect(),
            prediction: out.steps.iter().map(|s| s.prediction_errors).collect(),
            events: out.steps.iter().map(|s| s.output.n_events).collect(),
            measurements: out.steps.iter().map(|s| s.output.n_measurements).collect(),
            failure: out.failure.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        Some(Self {
            p25: percentile(values, 25.0)?,
            median: percentile(values, 50.0)?,
            p75: percentile(values, 75.0)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: usize,
    /// Indexed like [`Metric::ALL`].
    pub filter: Vec<Option<Quartiles>>,
    pub prediction: Vec<Option<Quartiles>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub runs: usize,
    pub failed_runs: usize,
    pub seed: u64,
    pub gamma0: f64,
    pub steps: Vec<StepSummary>,
    /// Mean and standard deviation of `|Θ̄|` over all corrected steps.
    pub events_mean: f64,
    pub events_std: f64,
    pub measurements_mean: f64,
    /// `log10(Ns^{E[n_z]})`, the size of the unreduced event set.
    pub full_events_log10: f64,
}

/// Scenario and filter seeds of run `r` both derive from `derive_seed(seed, [r])`.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    derive_seed(seed, &[run as u64])
}

pub fn run_campaign(spec: &ScenarioSpec, cfg: &ModelConfig, em: &EmConfig, runs: usize, seed: u64) -> Result<Vec<RunSummary>> {
    spec.validate()?;
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let s = run_seed(seed, r);
            let scenario = simulate(spec, s)?;
            let out = run_filter(&scenario, cfg, em, s, false)?;
            Ok(RunSummary::from_output(r, &out))
        })
        .collect()
}

fn quartiles_at(runs: &[RunSummary], k: usize, metric: Metric, filter: bool) -> Option<Quartiles> {
    let values: Vec<f64> = runs
        .iter()
        .filter_map(|r| {
            let v = if filter { &r.filter } else { &r.prediction };
            v.get(k).copied().flatten().map(|e| e.get(metric))
        })
        .collect();
    Quartiles::of(&values)
}

pub fn summarize(runs: &[RunSummary], n_subobjects: usize, gamma0: f64, seed: u64) -> McSummary {
    let n_steps = runs.iter().map(|r| r.filter.len()).max().unwrap_or(0);
    let steps = (0..n_steps)
        .map(|k| StepSummary {
            step: k,
            filter: Metric::ALL.iter().map(|&m| quartiles_at(runs, k, m, true)).collect(),
            prediction: Metric::ALL.iter().map(|&m| quartiles_at(runs, k, m, false)).collect(),
        })
        .collect();
    let events: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.events.iter().skip(1).map(|&e| e as f64))
        .collect();
    let (events_mean, events_std) = mean_std(&events).unwrap_or((0.0, 0.0));
    let nz: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.measurements.iter().map(|&n| n as f64))
        .collect();
    let (measurements_mean, _) = mean_std(&nz).unwrap_or((0.0, 0.0));
    McSummary {
        runs: runs.len(),
        failed_runs: runs.iter().filter(|r| r.failure.is_some()).count(),
        seed,
        gamma0,
        steps,
        events_mean,
        events_std,
        measurements_mean,
        full_events_log10: measurements_mean * (n_subobjects as f64).log10(),
    }
}

pub fn monte_carlo(spec: &ScenarioSpec, cfg: &ModelConfig, em: &EmConfig, runs: usize, seed: u64) -> Result<McSummary> {
    let records = run_campaign(spec, cfg, em, runs, seed)?;
    Ok(summarize(&records, spec.shape.n_subobjects(), spec.gamma0, seed))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per step with 25th/50th/75th percentiles of every filter and
/// prediction metric.
pub fn summary_csv(summary: &McSummary) -> String {
    let mut out = String::from("step");
    for kind in ["filter", "prediction"] {
        for m in Metric::ALL {
            for q in ["p25", "median", "p75"] {
                let _ = write!(out, ",{kind}_{}_{q}", m.name());
            }
        }
    }
    out.push('\n');
    for s in &summary.steps {
        let _ = write!(out, "{}", s.step);
        for side in [&s.filter, &s.prediction] {
            for q in side {
                let _ = write!(
                    out,
                    ",{},{},{}",
                    opt(q.map(|q| q.p25)),
                    opt(q.map(|q| q.median)),
                    opt(q.map(|q| q.p75))
                );
            }
        }
        out.push('\n');
    }
    out
}

/// Table-style association count line: `γ0, mean ± std, Ns^E[n_z]`.
pub fn events_report(summary: &McSummary) -> String {
    format!(
        "gamma0 = {}: |events| = {:.0} ± {:.0}, unreduced = 10^{:.1} (mean n_z = {:.1}, {} runs, {} failed)",
        summary.gamma0,
        summary.events_mean,
        summary.events_std,
        summary.full_events_log10,
        summary.measurements_mean,
        summary.runs,
        summary.failed_runs
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(run: usize, d_p: f64) -> RunSummary {
        let e = StepErrors {
            d_gamma: 1.0,
            d_p,
            d_x: 2.0,
        };
        RunSummary {
            run,
            filter: vec![Some(e), Some(e)],
            prediction: vec![None, Some(e)],
            events: vec![0, 10 + run],
            measurements: vec![5, 7],
            failure: None,
        }
    }

    #[test]
    fn single_run_summary_is_the_run() {
        let s = summarize(&[fake(0, 3.5)], 3, 2.0, 0);
        let q = s.steps[1].filter[1].unwrap();
        assert_eq!((q.p25, q.median, q.p75), (3.5, 3.5, 3.5));
        assert!(s.steps[0].prediction[0].is_none());
        assert_eq!(s.events_mean, 10.0);
        assert_eq!(s.events_std, 0.0);
    }

    #[test]
    fn summary_ignores_run_order() {
        let a = vec![fake(0, 1.0), fake(1, 2.0), fake(2, 4.0)];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(summary_csv(&summarize(&a, 3, 5.0, 1)), summary_csv(&summarize(&b, 3, 5.0, 1)));
        let s = summarize(&a, 3, 5.0, 1);
        assert_eq!(s.steps[1].filter[1].unwrap().median, 2.0);
        assert_eq!(s.events_mean, 11.0);
    }
}
