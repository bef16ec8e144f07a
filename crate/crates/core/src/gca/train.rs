use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::model::{gca_backward, gca_forward, gca_loss, GcaArchitecture, GcaModel, GcaNormalization, GcaSample, LossParts};
use super::optim::{AdamW, AdamWConfig, CosineWarmRestarts};
use crate::data::SnapshotTensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcaTrainConfig {
    pub lambda: f64,
    pub lr_max: f64,
    pub lr_min: f64,
    pub warm_restart_t0: usize,
    pub warm_restart_mult: usize,
    pub adamw: AdamWConfig,
    pub patience: usize,
    /// Standard deviation of the input corruption in field units.
    /// `None` means 1% of the training-data standard deviation.
    pub noise_sigma: Option<f64>,
    pub max_epochs: usize,
    pub seed: u64,
    pub architecture: GcaArchitecture,
}

impl Default for GcaTrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            lr_max: 1e-3,
            lr_min: 1e-5,
            warm_restart_t0: 50,
            warm_restart_mult: 2,
            adamw: AdamWConfig::default(),
            patience: 50,
            noise_sigma: None,
            max_epochs: 2000,
            seed: 0,
            architecture: GcaArchitecture::default(),
        }
    }
}

impl GcaTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return bad("lambda must be >= 0");
        }
        if self.patience < 1 {
            return bad("patience must be >= 1");
        }
        // lr_max == lr_min is allowed, which permits a frozen run with both at 0
        let rates_ok = self.lr_min >= 0.0 && self.lr_max >= self.lr_min && self.lr_max.is_finite();
        if !rates_ok {
            return bad("learning rates must satisfy lr_max >= lr_min >= 0");
        }
        if self.warm_restart_t0 < 1 || self.warm_restart_mult < 1 {
            return bad("warm restart period and multiplier must be >= 1");
        }
        if self.max_epochs < 1 {
            return bad("max_epochs must be >= 1");
        }
        if let Some(s) = self.noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return bad("noise_sigma must be finite and >= 0");
            }
        }
        if !(self.adamw.beta1 >= 0.0 && self.adamw.beta1 < 1.0 && self.adamw.beta2 >= 0.0 && self.adamw.beta2 < 1.0) {
            return bad("AdamW betas must lie in [0, 1)");
        }
        self.architecture.validate()
    }

    pub fn schedule(&self) -> CosineWarmRestarts {
        CosineWarmRestarts {
            lr_max: self.lr_max,
            lr_min: self.lr_min,
            t0: self.warm_restart_t0,
            mult: self.warm_restart_mult,
        }
    }
}

/// A final-step field and its dwell time.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub dwell_time: f64,
    pub field: Vec<f64>,
}

/// Final-step fields for the requested dwell times.
pub fn final_fields(tensor: &SnapshotTensor, dwell_times: &[f64]) -> Result<Vec<FieldSample>> {
    dwell_times
        .iter()
        .map(|&dt| {
            let s = tensor.get(dt).ok_or(Error::Lookup(dt))?;
            Ok(FieldSample {
                dwell_time: dt,
                field: s.final_field(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub l_rec: f64,
    pub l_param: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["epoch", "lr", "train_loss", "val_loss", "l_rec", "l_param"])
            .map_err(|e| csv_err(path, e))?;
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.lr.to_string(),
                r.train_loss.to_string(),
                r.val_loss.to_string(),
                r.l_rec.to_string(),
                r.l_param.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

fn normalization(train: &[FieldSample]) -> GcaNormalization {
    let count: usize = train.iter().map(|s| s.field.len()).sum();
    let sum_sq: f64 = train.iter().flat_map(|s| &s.field).map(|v| v * v).sum();
    let rms = (sum_sq / count.max(1) as f64).sqrt();
    let lo = train.iter().map(|s| s.dwell_time).fold(f64::INFINITY, f64::min);
    let hi = train.iter().map(|s| s.dwell_time).fold(f64::NEG_INFINITY, f64::max);
    GcaNormalization {
        field_scale: if rms > 0.0 { rms } else { 1.0 },
        dt_offset: lo,
        dt_scale: if hi > lo { hi - lo } else { 1.0 },
    }
}

fn std_dev(train: &[FieldSample]) -> f64 {
    let values: Vec<f64> = train.iter().flat_map(|s| s.field.iter().copied()).collect();
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

fn clean_samples(samples: &[FieldSample], norm: &GcaNormalization) -> Vec<GcaSample> {
    samples
        .iter()
        .map(|s| {
            let x: Vec<f64> = s.field.iter().map(|v| v / norm.field_scale).collect();
            GcaSample {
                input: x.clone(),
                target: x,
                dwell_time: s.dwell_time,
            }
        })
        .collect()
}

/// Mean loss over `samples` with uncorrupted inputs.
pub fn evaluate_loss(model: &GcaModel, graph: &Graph, samples: &[GcaSample], lambda: f64) -> Result<LossParts> {
    let mut acc = LossParts::default();
    let w = 1.0 / samples.len().max(1) as f64;
    for s in samples {
        let out = gca_forward(model, graph, &s.input, s.dwell_time)?;
        let l = gca_loss(&s.target, &out.x_hat, &out.z, &out.z_p, lambda);
        acc.total += w * l.total;
        acc.rec += w * l.rec;
        acc.param += w * l.param;
    }
    Ok(acc)
}

/// Full-batch training with denoising corruption, AdamW, a cosine schedule
/// with warm restarts and early stopping on the validation loss. Returns
/// the weights with the lowest validation loss seen.
pub fn train_gca(train: &[FieldSample], val: &[FieldSample], graph: &Graph, config: &GcaTrainConfig) -> Result<(GcaModel, TrainHistory)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("no training samples".into()));
    }
    let n = graph.n_nodes();
    if let Some(s) = train.iter().chain(val).find(|s| s.field.len() != n) {
        return Err(Error::Shape(format!("field has {} entries for {n} nodes", s.field.len())));
    }

    let norm = normalization(train);
    let mut model = GcaModel::new(config.architecture.clone(), n, norm, config.seed)?;
    let sigma = config.noise_sigma.unwrap_or(0.01 * std_dev(train)) / norm.field_scale;
    let noise = if sigma > 0.0 {
        Some(Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let clean_train = clean_samples(train, &norm);
    let clean_val = clean_samples(val, &norm);
    let monitor = if clean_val.is_empty() { &clean_train } else { &clean_val };

    let mut opt = AdamW::new(config.adamw, model.params.tensors().iter().map(|t| t.len()));
    let schedule = config.schedule();
    let mut history = TrainHistory {
        best_val_loss: f64::INFINITY,
        ..TrainHistory::default()
    };
    let mut best = model.params.clone();
    let mut since_best = 0;

    for epoch in 0..config.max_epochs {
        let lr = schedule.lr_at(epoch as f64);
        let batch: Vec<GcaSample> = match &noise {
            Some(dist) => clean_train
                .iter()
                .map(|s| GcaSample {
                    input: s.input.iter().map(|v| v + dist.sample(&mut rng)).collect(),
                    ..s.clone()
                })
                .collect(),
            None => clean_train.clone(),
        };
        let (loss, grads) = gca_backward(&model, graph, &batch, config.lambda)?;
        if !loss.total.is_finite() {
            return Err(Error::Divergence { epoch, lr });
        }
        {
            let mut params = model.params.tensors_mut();
            let grads = grads.tensors();
            opt.step(params.iter_mut().map(|t| t.as_mut_slice()), grads.iter().map(|t| t.as_slice()), lr);
        }
        if !model.params.is_finite() {
            return Err(Error::Divergence { epoch, lr });
        }
        let val_loss = evaluate_loss(&model, graph, monitor, config.lambda)?.total;
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, lr });
        }
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss.total,
            val_loss,
            l_rec: loss.rec,
            l_param: loss.param,
        });
        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best = model.params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    model.params = best;
    Ok((model, history))
}
