//! Mini-batch training with per-epoch validation and best-checkpoint keeping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::augment;
use crate::eval::{evaluate, ConfusionMatrix, EvalError, EvalReport};
use crate::model::{argmax_rows, FinngerModel, ModelError};
use crate::nn::{nll_backward, nll_loss, Mode, NnError};
use crate::optimizer::{Adam, AdamConfig, OptimError};
use crate::tensor::Tensor;

/// A preprocessed `[3, 96, 96]` input and its label.
pub type Sample = (Tensor, usize);

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrain,
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("batch size must be positive")]
    BatchSize,
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Seeds shuffling, augmentation and dropout.
    pub seed: u64,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 100, batch_size: 32, adam: AdamConfig::default(), seed: 0, augment: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Validation metrics of the kept model, with the accuracy series.
    pub report: EvalReport,
    pub confusion: ConfusionMatrix,
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch of the kept checkpoint; `None` when nothing was trained.
    pub best_epoch: Option<usize>,
}

const EVAL_BATCH: usize = 32;

/// Predicted class for every sample, batched, in eval mode.
pub fn predict_samples(model: &FinngerModel, samples: &[Sample]) -> Result<Vec<usize>, ModelError> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_BATCH) {
        let refs: Vec<&Tensor> = chunk.iter().map(|(x, _)| x).collect();
        let batch = Tensor::stack(&refs)?;
        out.extend(argmax_rows(&model.infer(&batch)?));
    }
    Ok(out)
}

fn validate(model: &FinngerModel, val: &[Sample]) -> Result<(ConfusionMatrix, EvalReport), TrainError> {
    let predicted = predict_samples(model, val)?;
    let pairs = predicted.into_iter().zip(val.iter().map(|(_, l)| *l));
    Ok(evaluate(pairs, |p| Ok::<_, std::convert::Infallible>(Some(p as u8)))?)
}

/// Trains `model` in place. Each epoch shuffles (seeded), augments, runs
/// mini-batch Adam steps and then measures validation accuracy. On return
/// `model` holds the best-accuracy checkpoint (earliest epoch on ties) and
/// is in eval mode. `on_epoch` sees every epoch's statistics as they come.
pub fn train_loop(
    model: &mut FinngerModel,
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    if val.is_empty() {
        return Err(TrainError::EmptyValidation);
    }
    if config.batch_size == 0 {
        return Err(TrainError::BatchSize);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.adam, model.parameters());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, FinngerModel)> = None;

    for epoch in 1..=config.epochs {
        model.set_mode(Mode::Train);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let inputs: Vec<Tensor> = idx
                .iter()
                .map(|&i| if config.augment { augment(&train[i].0, &mut rng) } else { train[i].0.clone() })
                .collect();
            let labels: Vec<usize> = idx.iter().map(|&i| train[i].1).collect();
            let x = Tensor::stack(&inputs.iter().collect::<Vec<_>>()).map_err(ModelError::from)?;
            let cache = model.forward_train(&x, &mut rng)?;
            let loss = f64::from(nll_loss(cache.log_probs(), &labels)?);
            if !loss.is_finite() {
                model.set_mode(Mode::Eval);
                return Err(TrainError::NonFiniteLoss { epoch, batch, loss });
            }
            let grads = model.backward(&cache, &nll_backward(cache.log_probs(), &labels)?)?;
            adam.step(&mut model.parameters_mut(), &grads)?;
            loss_sum += loss;
            batches += 1;
        }
        model.set_mode(Mode::Eval);
        let (_, report) = validate(model, val)?;
        let stats = EpochStats { epoch, train_loss: loss_sum / batches as f64, val_accuracy: report.accuracy };
        on_epoch(&stats);
        if best.as_ref().is_none_or(|b| stats.val_accuracy > b.1) {
            best = Some((epoch, stats.val_accuracy, model.clone()));
        }
        epochs.push(stats);
    }

    let best_epoch = best.map(|(epoch, _, kept)| {
        *model = kept;
        epoch
    });
    model.set_mode(Mode::Eval);
    let (confusion, mut report) = validate(model, val)?;
    report.per_epoch = epochs.iter().map(|e| e.val_accuracy).collect();
    Ok(TrainOutcome { report, confusion, epochs, best_epoch })
}
