//! Error measures, evaluation reports, a latency harness and plot output.

mod plot;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rom::PodGprRom;

pub use plot::{emit_coefficient_plot, emit_max_displacement_plot, PlotFiles};

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "prediction has {} entries, truth {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// `|pred - truth|_2 / |truth|_2`.
pub fn relative_l2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let den = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::DegenerateMetric("truth field has zero norm".into()));
    }
    let num = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>().sqrt();
    Ok(num / den)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxDisplacement {
    pub delta: f64,
    pub max_true: f64,
    pub max_pred: f64,
}

/// Compares the largest value of each field, not the values at one node.
pub fn max_displacement_error(pred: &[f64], truth: &[f64]) -> Result<MaxDisplacement> {
    check_lengths(pred, truth)?;
    if truth.is_empty() {
        return Err(Error::EmptyInput("empty field".into()));
    }
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (max_true, max_pred) = (max(truth), max(pred));
    Ok(MaxDisplacement {
        delta: (max_pred - max_true).abs(),
        max_true,
        max_pred,
    })
}

pub fn max_abs_node_error(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).fold(0.0, f64::max))
}

/// Errors at one dwell time. Displacements in mm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterError {
    pub dwell_time: f64,
    pub max_disp_true: f64,
    pub max_disp_pred: f64,
    pub max_abs_node_error: f64,
    pub relative_l2: f64,
}

impl ParameterError {
    pub fn compute(dwell_time: f64, pred: &[f64], truth: &[f64]) -> Result<Self> {
        let md = max_displacement_error(pred, truth)?;
        Ok(Self {
            dwell_time,
            max_disp_true: md.max_true,
            max_disp_pred: md.max_pred,
            max_abs_node_error: max_abs_node_error(pred, truth)?,
            relative_l2: relative_l2(pred, truth)?,
        })
    }

    pub fn max_disp_delta(&self) -> f64 {
        (self.max_disp_pred - self.max_disp_true).abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_seconds: Option<f64>,
    pub predict_seconds_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub model: String,
    pub rows: Vec<ParameterError>,
    /// Wall-clock numbers vary run to run, so they are optional.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl EvalReport {
    /// Report for `(dwell_time, prediction, truth)` triples, in the given order.
    pub fn from_cases<'a>(model: &str, cases: impl IntoIterator<Item = (f64, &'a [f64], &'a [f64])>) -> Result<Self> {
        let rows = cases
            .into_iter()
            .map(|(dt, pred, truth)| ParameterError::compute(dt, pred, truth))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model: model.to_string(),
            rows,
            timing: None,
        })
    }

    pub fn worst_relative_l2(&self) -> f64 {
        self.rows.iter().map(|r| r.relative_l2).fold(0.0, f64::max)
    }

    pub fn worst_max_disp_delta(&self) -> f64 {
        self.rows.iter().map(|r| r.max_disp_delta()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_seconds: f64,
    pub min_seconds: f64,
}

/// Seconds per `predict` call, averaged over each sweep through `dts`.
/// One untimed sweep runs first.
pub fn time_predict(rom: &PodGprRom, dts: &[f64], repeats: usize) -> Result<LatencyStats> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be >= 1".into()));
    }
    if dts.is_empty() {
        return Err(Error::EmptyInput("no dwell times to time".into()));
    }
    for &dt in dts {
        std::hint::black_box(rom.predict(dt));
    }
    let mut per_call = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        for &dt in dts {
            std::hint::black_box(rom.predict(std::hint::black_box(dt)));
        }
        per_call.push(start.elapsed().as_secs_f64() / dts.len() as f64);
    }
    let min_seconds = per_call.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_seconds = (per_call.iter().sum::<f64>() / repeats as f64).max(min_seconds);
    Ok(LatencyStats { mean_seconds, min_seconds })
}
