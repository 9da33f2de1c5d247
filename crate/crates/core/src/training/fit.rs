use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grad, nll_loss, noisy_targets, Example};
use super::noise::NoiseConfig;
use super::optim::Adam;
use crate::data::{augment_window, rotation_normalize, AugmentConfig, TrajectoryWindow};
use crate::error::{Error, Result};
use crate::model::FlowModel;

const VAL_NOISE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    /// Global L2 gradient-norm clip; off when `None`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
    /// Speed augmentation, drawn afresh per window per epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<AugmentConfig>,
    /// Inject training noise when scoring the validation set.
    #[serde(default = "default_true")]
    pub validation_noise: bool,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_validation_fraction() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 150,
            seed: 0,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            validation_fraction: default_validation_fraction(),
            grad_clip: None,
            augment: Some(AugmentConfig::default()),
            validation_noise: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(
                "learning_rate must be a finite non-negative number",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation_fraction must lie in [0, 1]"));
        }
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_nll: f64,
    /// NaN when there is no validation set.
    pub val_nll: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Lowest validation NLL (training NLL when no validation set).
    pub best: FlowModel,
    pub best_epoch: Option<usize>,
    pub final_model: FlowModel,
    pub history: Vec<EpochStats>,
    /// Epoch whose loss became non-finite; training stopped there and
    /// `final_model` holds the parameters from before that epoch.
    pub diverged_at: Option<usize>,
}

fn prepare(
    windows: &[TrajectoryWindow],
    augment: Option<&AugmentConfig>,
    rng: &mut ChaCha8Rng,
) -> Vec<Example> {
    windows
        .iter()
        .map(|w| {
            let w = match augment {
                Some(cfg) => augment_window(w, cfg, rng),
                None => w.clone(),
            };
            Example::from_window(&rotation_normalize(&w))
        })
        .collect()
}

pub fn fit(
    train: &[TrajectoryWindow],
    val: &[TrajectoryWindow],
    model: FlowModel,
    cfg: &TrainConfig,
    noise: &NoiseConfig,
) -> Result<FitResult> {
    fit_with_callback(train, val, model, cfg, noise, |_| {})
}

/// Shuffled mini-batch Adam on the mean NLL. `on_epoch` sees each epoch's
/// statistics as they are produced.
pub fn fit_with_callback(
    train: &[TrajectoryWindow],
    val: &[TrajectoryWindow],
    mut model: FlowModel,
    cfg: &TrainConfig,
    noise: &NoiseConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<FitResult> {
    cfg.validate()?;
    noise.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let dim = model.config().dim;
    if let Some(w) = train.iter().chain(val).find(|w| 2 * w.t_future() != dim) {
        return Err(Error::invalid(format!(
            "window of agent {} has {} future steps; the flow expects {}",
            w.agent_id,
            w.t_future(),
            dim / 2
        )));
    }
    model.set_alpha(noise.alpha)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let val_examples = prepare(val, None, &mut rng);
    let mut adam = Adam::new(
        model.params().len(),
        cfg.learning_rate,
        cfg.beta1,
        cfg.beta2,
        cfg.eps,
    );
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = model.clone();
    let mut best_score = f64::INFINITY;
    let mut best_epoch = None;
    let mut diverged_at = None;

    for epoch in 0..cfg.epochs {
        let snapshot = model.params().to_vec();
        let examples = prepare(train, cfg.augment.as_ref(), &mut rng);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut failed = false;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let targets = noisy_targets(&model, &batch, noise, &mut rng);
            let (loss, mut grad) = match loss_and_grad(&model, &batch, &targets) {
                Ok(v) => v,
                Err(Error::Numeric { .. }) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            if let Some(max_norm) = cfg.grad_clip {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max_norm {
                    let s = max_norm / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            adam.step(model.params_mut(), &grad);
            total += loss * batch.len() as f64;
        }
        let val_nll = if failed || val_examples.is_empty() {
            f64::NAN
        } else {
            // Same draw every epoch, so epoch-to-epoch changes come from the model.
            let mut val_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ VAL_NOISE_SALT);
            let noise_arg = cfg.validation_noise.then_some((noise, &mut val_rng));
            match nll_loss(&model, &val_examples, noise_arg) {
                Ok(v) => v,
                Err(Error::Numeric { .. }) => {
                    failed = true;
                    f64::NAN
                }
                Err(e) => return Err(e),
            }
        };
        if failed {
            model.params_mut().copy_from_slice(&snapshot);
            diverged_at = Some(epoch);
            break;
        }
        let stats = EpochStats {
            epoch,
            train_nll: total / train.len() as f64,
            val_nll,
        };
        let score = if val_examples.is_empty() {
            stats.train_nll
        } else {
            stats.val_nll
        };
        if score < best_score {
            best_score = score;
            best = model.clone();
            best_epoch = Some(epoch);
        }
        on_epoch(&stats);
        history.push(stats);
    }

    Ok(FitResult {
        best,
        best_epoch,
        final_model: model,
        history,
        diverged_at,
    })
}

/// `epoch,train_nll,val_nll` rows, preceded by `#`-prefixed header lines.
pub fn write_history(path: impl AsRef<Path>, history: &[EpochStats], header: &str) -> Result<()> {
    let mut text = String::new();
    for line in header.lines() {
        writeln!(text, "# {line}").expect("write to string");
    }
    text.push_str("epoch,train_nll,val_nll\n");
    for h in history {
        writeln!(text, "{},{},{}", h.epoch, h.train_nll, h.val_nll).expect("write to string");
    }
    std::fs::write(path, text)?;
    Ok(())
}
