//! Filter recursion driver.

use nalgebra::DVector;

use crate::assoc::{generate_events, AssociationEvent, EmConfig};
use crate::correct::{correct_mixture, CorrectionOutput};
use crate::error::{Error, Result};
use crate::model::{change_main_subobject, extract_estimate, initialize, GgiwMixture, ModelConfig, StateLayout, TargetEstimate};
use crate::predict::predict_mixture;
use crate::reduce::reduce;
use crate::rng::{derive_seed, streams};
use crate::sim::metrics::{compute_errors, StepErrors};
use crate::sim::scenario::{Scenario, TruthStep};

/// Intermediate mixtures of one step, kept on request.
#[derive(Clone, Debug)]
pub struct StepDetails {
    pub predicted: GgiwMixture,
    pub events: Vec<AssociationEvent>,
    pub correction: CorrectionOutput,
    pub posterior: GgiwMixture,
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub step: usize,
    pub n_measurements: usize,
    pub n_events: usize,
    pub n_components: usize,
    pub mode_probabilities: Vec<f64>,
    pub log_set_likelihood: Option<f64>,
    pub predicted_estimate: Option<TargetEstimate>,
    /// `None` until the first non-empty measurement set arrives.
    pub estimate: Option<TargetEstimate>,
    pub details: Option<StepDetails>,
}

pub struct Tracker {
    cfg: ModelConfig,
    em: EmConfig,
    layout: StateLayout,
    seed: u64,
    keep_details: bool,
    mixture: Option<GgiwMixture>,
}

impl Tracker {
    pub fn new(cfg: ModelConfig, em: EmConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        em.validate()?;
        Ok(Self {
            layout: cfg.layout()?,
            cfg,
            em,
            seed: derive_seed(seed, &[streams::FILTER]),
            keep_details: false,
            mixture: None,
        })
    }

    pub fn keep_details(mut self, keep: bool) -> Self {
        self.keep_details = keep;
        self
    }

    pub fn mixture(&self) -> Option<&GgiwMixture> {
        self.mixture.as_ref()
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    /// Initializes on the first non-empty scan, otherwise runs one
    /// predict → associate → correct → reduce → relabel cycle.
    pub fn step(&mut self, step: usize, measurements: &[DVector<f64>]) -> Result<StepOutput> {
        let n_modes = self.cfg.modes.len();
        let Some(prior) = self.mixture.take() else {
            if measurements.is_empty() {
                return Ok(StepOutput {
                    step,
                    n_measurements: 0,
                    n_events: 0,
                    n_components: 0,
                    mode_probabilities: vec![0.0; n_modes],
                    log_set_likelihood: None,
                    predicted_estimate: None,
                    estimate: None,
                    details: None,
                });
            }
            let mix = initialize(measurements, &self.cfg)?;
            let out = StepOutput {
                step,
                n_measurements: measurements.len(),
                n_events: 0,
                n_components: mix.len(),
                mode_probabilities: mix.mode_probabilities(n_modes),
                log_set_likelihood: None,
                predicted_estimate: None,
                estimate: Some(extract_estimate(&mix, &self.cfg)?),
                details: None,
            };
            self.mixture = Some(mix);
            return Ok(out);
        };

        let layout = &self.layout;
        let predicted = predict_mixture(
            &prior,
            &self.cfg.modes,
            &self.cfg.mode_transition,
            layout,
            self.cfg.sample_time,
        )?;
        let predicted_estimate = extract_estimate(&predicted, &self.cfg)?;
        let events = generate_events(
            measurements,
            layout.n_subobjects,
            layout.dim,
            &self.em,
            derive_seed(self.seed, &[step as u64]),
        )?;
        let correction = correct_mixture(&predicted, &events, layout)?;
        let reduced = reduce(&correction.posterior, &self.cfg.reduction, layout)?;
        let posterior = GgiwMixture::new(
            reduced
                .components
                .iter()
                .map(|c| change_main_subobject(c, layout))
                .collect::<Result<_>>()?,
        )?;
        let out = StepOutput {
            step,
            n_measurements: measurements.len(),
            n_events: events.len(),
            n_components: posterior.len(),
            mode_probabilities: posterior.mode_probabilities(n_modes),
            log_set_likelihood: Some(correction.log_set_likelihood),
            predicted_estimate: Some(predicted_estimate),
            estimate: Some(extract_estimate(&posterior, &self.cfg)?),
            details: self.keep_details.then(|| StepDetails {
                predicted,
                events,
                correction,
                posterior: posterior.clone(),
            }),
        };
        self.mixture = Some(posterior);
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct StepRecord {
    pub output: StepOutput,
    pub filter_errors: Option<StepErrors>,
    pub prediction_errors: Option<StepErrors>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub steps: Vec<StepRecord>,
    /// Step and message of a failed correction; earlier steps are kept.
    pub failure: Option<(usize, String)>,
}

pub fn truth_errors(truth: &TruthStep, estimate: &TargetEstimate) -> Result<StepErrors> {
    compute_errors(&truth.rates, &truth.positions(), &truth.extents, estimate)
}

/// Runs the filter over a scenario. A numerical failure ends the run and is
/// reported in [`RunOutput::failure`]; configuration errors are returned.
pub fn run_filter(scenario: &Scenario, cfg: &ModelConfig, em: &EmConfig, seed: u64, keep_details: bool) -> Result<RunOutput> {
    if scenario.steps.is_empty() {
        return Err(Error::Empty("scenario has no steps"));
    }
    if cfg.n_subobjects != scenario.spec.shape.n_subobjects() {
        return Err(Error::Config(format!(
            "model has {} subobjects but the scenario {}",
            cfg.n_subobjects,
            scenario.spec.shape.n_subobjects()
        )));
    }
    let mut tracker = Tracker::new(cfg.clone(), em.clone(), seed)?.keep_details(keep_details);
    let mut steps = Vec::with_capacity(scenario.steps.len());
    for truth in &scenario.steps {
        let output = match tracker.step(truth.step, &truth.measurements) {
            Ok(o) => o,
            Err(e @ (Error::Config(_) | Error::DimensionMismatch { .. })) => return Err(e),
            Err(e) => {
                return Ok(RunOutput {
                    steps,
                    failure: Some((truth.step, e.to_string())),
                })
            }
        };
        let filter_errors = output.estimate.as_ref().map(|e| truth_errors(truth, e)).transpose()?;
        let prediction_errors = output
            .predicted_estimate
            .as_ref()
            .map(|e| truth_errors(truth, e))
            .transpose()?;
        steps.push(StepRecord {
            output,
            filter_errors,
            prediction_errors,
        });
    }
    Ok(RunOutput { steps, failure: None })
}
