use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circular::{from_uv, to_uv, wrap_degrees, UvPair, WindSample};
use crate::data::{Scaler, Split, Window};
use crate::error::{shape_err, Error, Result};
use crate::neural::{AdamState, Tensor2};
use crate::nhits::NhitsModel;

use super::config::{ExperimentConfig, Variant};
use super::inputs::Prepared;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_digest: String,
    pub seed: u64,
    pub data_fingerprint: String,
}

/// A fitted forecaster with everything needed to reproduce its forecasts.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedArtifact {
    pub config: ExperimentConfig,
    /// `None` for persistence.
    pub model: Option<NhitsModel>,
    pub scaler: Scaler,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub provenance: Provenance,
}

impl TrainedArtifact {
    pub fn variant(&self) -> Variant {
        self.config.model.variant
    }

    pub fn best_val_loss(&self) -> f64 {
        self.history
            .iter()
            .find(|r| r.epoch == self.best_epoch)
            .map_or(f64::NAN, |r| r.val_loss)
    }
}

/// Scaled H-step forecasts of a batch, target-major per row.
pub fn predict_normalized(
    model: Option<&NhitsModel>,
    data: &Prepared,
    windows: &[Window],
) -> Result<Tensor2> {
    match model {
        Some(m) => {
            if m.shape != data.model_shape() {
                return Err(shape_err(
                    "model input layout",
                    format!("{:?}", m.shape),
                    format!("{:?}", data.model_shape()),
                ));
            }
            let (x, _) = data.batch(windows)?;
            Ok(m.forward_batch(&x)?.0.forecast)
        }
        None => {
            let (l, h, nt) = (data.input_length(), data.horizon(), data.n_targets());
            let mut out = Tensor2::zeros(windows.len(), nt * h);
            for (i, w) in windows.iter().enumerate() {
                let row = out.row_mut(i);
                for t in 0..nt {
                    let last = data.channels[t][w.start + l - 1];
                    row[t * h..(t + 1) * h].fill(last);
                }
            }
            Ok(out)
        }
    }
}

const EVAL_BATCH: usize = 512;

/// Mean squared error over all target values of `windows`.
pub fn mean_loss(model: Option<&NhitsModel>, data: &Prepared, windows: &[Window]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Empty("loss windows"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for chunk in windows.chunks(EVAL_BATCH) {
        let pred = predict_normalized(model, data, chunk)?;
        let y = data.batch_targets(chunk);
        for (p, t) in pred.as_slice().iter().zip(y.as_slice()) {
            sum += (p - t).powi(2);
        }
        count += y.as_slice().len();
    }
    Ok(sum / count as f64)
}

impl Prepared {
    /// Targets only (skips building inputs).
    pub fn batch_targets(&self, windows: &[Window]) -> Tensor2 {
        let tw = self.n_targets() * self.horizon();
        let mut y = Tensor2::zeros(windows.len(), tw);
        for (i, w) in windows.iter().enumerate() {
            self.target_into(w, y.row_mut(i));
        }
        y
    }
}

fn provenance(config: &ExperimentConfig, data: &Prepared) -> Provenance {
    Provenance {
        tool_version: TOOL_VERSION.to_string(),
        config_digest: config.digest_hex(),
        seed: config.train.seed,
        data_fingerprint: data.fingerprint.clone(),
    }
}

pub fn train(config: &ExperimentConfig, data: &Prepared) -> Result<TrainedArtifact> {
    train_with(config, data, |_| {})
}

/// Mini-batch Adam on MSE with early stopping; `on_epoch` sees every record.
pub fn train_with<F: FnMut(&EpochRecord)>(config: &ExperimentConfig, data: &Prepared, mut on_epoch: F) -> Result<TrainedArtifact> {
    config.validate()?;
    if config.model.variant != data.variant {
        return Err(Error::Config(format!(
            "config variant {} does not match prepared data for {}",
            config.model.variant, data.variant
        )));
    }
    let train_windows: Vec<Window> = data.windows.split(Split::Train).copied().collect();
    let val_windows: Vec<Window> = data.windows.split(Split::Val).copied().collect();
    if train_windows.is_empty() || val_windows.is_empty() {
        return Err(Error::Empty("training or validation windows"));
    }

    if !config.model.variant.is_trained() {
        let record = EpochRecord {
            epoch: 1,
            train_loss: mean_loss(None, data, &train_windows)?,
            val_loss: mean_loss(None, data, &val_windows)?,
        };
        on_epoch(&record);
        return Ok(TrainedArtifact {
            config: config.clone(),
            model: None,
            scaler: data.scaler.clone(),
            history: vec![record],
            best_epoch: 1,
            provenance: provenance(config, data),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
    let mut model = NhitsModel::new(data.model_shape(), config.block_configs()?, &mut rng)?;
    let mut adam = AdamState::for_slices(config.train.optimizer, &model.param_slices());
    let mut order = train_windows.clone();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, NhitsModel)> = None;
    let mut stale = 0;
    let outputs = (data.n_targets() * data.horizon()) as f64;

    for epoch in 1..=config.train.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(config.train.batch_size) {
            let (x, y) = data.batch(chunk)?;
            let (out, cache) = model.forward_batch(&x)?;
            let scale = 2.0 / (chunk.len() as f64 * outputs);
            let mut grad = out.forecast;
            for (g, t) in grad.as_mut_slice().iter_mut().zip(y.as_slice()) {
                let d = *g - t;
                sum += d * d;
                *g = scale * d;
            }
            let grads = model.backward(&cache, &grad)?;
            adam.step(&mut model.param_slices_mut(), &grads.slices())?;
        }
        let train_loss = sum / (order.len() as f64 * outputs);
        if !train_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: train_loss });
        }
        let val_loss = mean_loss(Some(&model), data, &val_windows)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: val_loss });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
        };
        on_epoch(&record);
        history.push(record);
        if best.as_ref().is_none_or(|b| val_loss < b.0) {
            best = Some((val_loss, epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.train.patience {
                break;
            }
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    Ok(TrainedArtifact {
        config: config.clone(),
        model: Some(model),
        scaler: data.scaler.clone(),
        history,
        best_epoch,
        provenance: provenance(config, data),
    })
}

/// H-step direction forecast of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionForecast {
    /// Degrees in `[0, 360)`.
    pub directions: Vec<f64>,
    pub speeds: Vec<f64>,
    /// Steps whose predicted vector is zero.
    pub calm: Vec<bool>,
    /// Predicted wind vectors.
    pub uv: Vec<UvPair>,
    /// True when only the direction was forecast (speed is carried over).
    pub direction_only: bool,
}

fn from_uv_path(u: &[f64], v: &[f64], direction_only: bool) -> DirectionForecast {
    let rec: Vec<_> = u.iter().zip(v).map(|(u, v)| from_uv(UvPair::new(*u, *v))).collect();
    DirectionForecast {
        directions: rec.iter().map(|r| r.sample.direction).collect(),
        speeds: rec.iter().map(|r| r.sample.speed).collect(),
        calm: rec.iter().map(|r| r.calm).collect(),
        uv: u.iter().zip(v).map(|(u, v)| UvPair::new(*u, *v)).collect(),
        direction_only,
    }
}

/// Last non-calm observed vector of the input part of a window.
fn last_wind(data: &Prepared, w: &Window) -> UvPair {
    let l = data.input_length();
    (w.start..w.start + l)
        .rev()
        .map(|r| data.truth.uv(r))
        .find(|p| !p.is_calm())
        .unwrap_or_default()
}

/// Repeat the last observed non-calm wind over the horizon.
pub fn persistence_forecast(data: &Prepared, w: &Window) -> DirectionForecast {
    let last = last_wind(data, w);
    let h = data.horizon();
    from_uv_path(&vec![last.u; h], &vec![last.v; h], false)
}

/// Directions and speeds for each window, in physical units.
pub fn forecast_directions(artifact: &TrainedArtifact, data: &Prepared, windows: &[Window]) -> Result<Vec<DirectionForecast>> {
    if artifact.variant() != data.variant {
        return Err(Error::Config(format!(
            "artifact variant {} does not match prepared data for {}",
            artifact.variant(),
            data.variant
        )));
    }
    if artifact.scaler != data.scaler {
        return Err(Error::Config("artifact scaler differs from the data scaler".into()));
    }
    let Some(model) = artifact.model.as_ref() else {
        return Ok(windows.iter().map(|w| persistence_forecast(data, w)).collect());
    };
    let h = data.horizon();
    let s = &artifact.scaler;
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(EVAL_BATCH) {
        let pred = predict_normalized(Some(model), data, chunk)?;
        for (i, w) in chunk.iter().enumerate() {
            let row = pred.row(i);
            if data.variant == Variant::NhitsDirect {
                let speed = last_wind(data, w).speed();
                let directions: Vec<f64> = row[..h].iter().map(|z| wrap_degrees(s.invert_value(0, *z))).collect();
                out.push(DirectionForecast {
                    uv: directions
                        .iter()
                        .map(|d| to_uv(&WindSample { speed, direction: *d }))
                        .collect(),
                    speeds: vec![speed; h],
                    calm: vec![false; h],
                    directions,
                    direction_only: true,
                });
            } else {
                let u: Vec<f64> = row[..h].iter().map(|z| s.invert_value(0, *z)).collect();
                let v: Vec<f64> = row[h..2 * h].iter().map(|z| s.invert_value(1, *z)).collect();
                out.push(from_uv_path(&u, &v, false));
            }
        }
    }
    Ok(out)
}

pub fn forecast_direction(artifact: &TrainedArtifact, data: &Prepared, window: &Window) -> Result<DirectionForecast> {
    Ok(forecast_directions(artifact, data, std::slice::from_ref(window))?.remove(0))
}
