use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledTileSet;
use crate::error::{Error, Result};
use crate::nn::layers::{argmax, softmax_xent, Mode};
use crate::nn::tensor::Tensor;
use crate::nn::Model;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
            shuffle_each_epoch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("epochs and batch size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's samples.
    pub loss: f64,
    /// Training accuracy of the epoch's train-mode predictions.
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Infer-mode accuracy on the validation set; absent when it is empty.
    pub validation_accuracy: Option<f64>,
    pub wall_clock_seconds: f64,
}

fn check_compatible(model: &Model, ds: &LabeledTileSet) -> Result<()> {
    let a = model.arch();
    if (ds.tile_h(), ds.tile_w(), ds.channels()) != (a.input_h, a.input_w, a.input_c) {
        return Err(Error::DimensionMismatch(format!(
            "tiles {}x{}x{}, model expects {}x{}x{}",
            ds.tile_h(),
            ds.tile_w(),
            ds.channels(),
            a.input_h,
            a.input_w,
            a.input_c
        )));
    }
    if ds.num_classes() != a.num_classes {
        return Err(Error::DimensionMismatch(format!(
            "{} classes in data, model has {}",
            ds.num_classes(),
            a.num_classes
        )));
    }
    Ok(())
}

/// Minibatch SGD with momentum: `v = momentum * v - lr * g; p = p + v`.
pub fn train(
    model: Model,
    train: &LabeledTileSet,
    val: &LabeledTileSet,
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    train_with(model, train, val, cfg, |_| {})
}

/// [`train`] with a callback after each epoch.
pub fn train_with(
    mut model: Model,
    train: &LabeledTileSet,
    val: &LabeledTileSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Model, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_compatible(&model, train)?;
    if !val.is_empty() {
        check_compatible(&model, val)?;
    }

    let started = Stopwatch::start();
    let lr = cfg.learning_rate as f32;
    let momentum = cfg.momentum as f32;
    let mut velocity: Vec<Vec<f32>> = model.params().iter().map(|p| vec![0.0; p.len()]).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let classes = model.num_classes();
    let mut epochs = Vec::with_capacity(cfg.epochs);

    model.set_mode(Mode::Train);
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle_each_epoch {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for (batch_no, idx) in order.chunks(cfg.batch_size).enumerate() {
            let items: Vec<_> = idx.iter().map(|&i| &train.items()[i]).collect();
            let labels: Vec<usize> = items.iter().map(|(_, l)| *l).collect();
            let input = Tensor::from_tiles(items.iter().map(|(t, _)| t))?;

            let (_, cache) = model.forward(&input)?;
            let xent = softmax_xent(cache.logits.data(), classes, &labels)?;
            if !xent.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_no });
            }
            loss_sum += f64::from(xent.loss) * labels.len() as f64;
            correct += xent
                .probs
                .chunks_exact(classes)
                .zip(&labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();

            let grads = model.backward(&cache, &xent.grad_logits)?;
            model.update_running_stats(&cache);
            for ((param, vel), grad) in model.params_mut().into_iter().zip(&mut velocity).zip(&grads) {
                for ((p, v), &g) in param.iter_mut().zip(vel.iter_mut()).zip(grad) {
                    *v = momentum * *v - lr * g;
                    *p += *v;
                }
            }
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / train.len() as f64,
            accuracy: correct as f64 / train.len() as f64,
        };
        on_epoch(&stats);
        epochs.push(stats);
    }
    model.set_mode(Mode::Infer);

    let validation_accuracy = if val.is_empty() { None } else { Some(evaluate(&model, val)?) };
    let report = TrainReport {
        epochs,
        validation_accuracy,
        wall_clock_seconds: started.seconds(),
    };
    Ok((model, report))
}

/// Fraction of tiles whose most probable class (ties to the lower index)
/// equals the label.
pub fn evaluate(model: &Model, ds: &LabeledTileSet) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_compatible(model, ds)?;
    let probs = model.predict(ds.items().iter().map(|(t, _)| t))?;
    let k = model.num_classes();
    let correct = probs
        .chunks_exact(k)
        .zip(ds.items())
        .filter(|(row, (_, label))| argmax(row) == *label)
        .count();
    Ok(correct as f64 / ds.len() as f64)
}

/// Wall-clock timer. `std::time::Instant` is unavailable in the browser, where
/// the report records zero.
struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.start.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        return 0.0;
    }
}
