//! Quantization-aware training of the mask network with ADAM and early
//! stopping on the validation loss.

mod adam;
mod toy;

use std::io::Write;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::{AdamState, MIN_BINARY_SCALE};
pub use toy::ToyTask;

use crate::error::{Error, Result};
use crate::nn::net::{backward, batch_loss, forward, BnMode};
use crate::nn::params::{Arch, MaskNetParams, BN1, BN2, BN3, BN4, BN_MEAN, BN_VAR};
use crate::nn::{mask_net_forward, Features};
use crate::quant::Precision;
use crate::room::MaskTriple;

/// Exponential moving average factor of the stored batch-norm statistics.
pub const BN_MOMENTUM: f64 = 0.99;

/// One utterance: network input and the target masks.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub features: Features,
    pub target: MaskTriple,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Epochs between validation evaluations.
    pub validation_period: usize,
    /// Evaluations without improvement tolerated before stopping.
    pub patience: usize,
    /// Utterances per update.
    pub batch_size: usize,
    pub learn_rate: f64,
    pub precision: Precision,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            validation_period: 20,
            patience: 3,
            batch_size: 1,
            learn_rate: 1e-3,
            precision: Precision::F32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.validation_period == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs, validation period and batch size must be positive".into()));
        }
        if !(self.learn_rate > 0.0 && self.learn_rate.is_finite()) {
            return Err(Error::InvalidConfig("learn rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub curve: Vec<EpochRecord>,
    /// Parameters at the lowest validation loss.
    pub best: MaskNetParams,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn first_train_loss(&self) -> f64 {
        self.curve.first().map_or(f64::NAN, |r| r.train_loss)
    }

    pub fn min_train_loss(&self) -> f64 {
        self.curve.iter().map(|r| r.train_loss).fold(f64::INFINITY, f64::min)
    }

    /// CSV with header `epoch,train_loss,val_loss`; the last column is empty
    /// on epochs without validation.
    pub fn write_loss_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "epoch,train_loss,val_loss")?;
        for r in &self.curve {
            match r.val_loss {
                Some(v) => writeln!(f, "{},{:.8},{:.8}", r.epoch, r.train_loss, v)?,
                None => writeln!(f, "{},{:.8},", r.epoch, r.train_loss)?,
            }
        }
        f.flush()?;
        Ok(())
    }
}

fn check_examples(arch: Arch, examples: &[Example]) -> Result<()> {
    for e in examples {
        if e.features.bins != arch.bins || e.features.mics != arch.mics {
            return Err(Error::ShapeMismatch("examples disagree on bins or microphones".into()));
        }
        if e.target.bins() != e.features.bins || e.target.frames() != e.features.frames {
            return Err(Error::ShapeMismatch("target masks do not match the features".into()));
        }
    }
    Ok(())
}

const BN_LAYERS: [usize; 4] = [BN1, BN2, BN3, BN4];

/// Replace the stored batch-norm statistics with population statistics of
/// `examples`, computed in one batch-mode pass.
pub fn calibrate_batch_norm(params: &mut MaskNetParams, examples: &[Example]) -> Result<()> {
    let seqs: Vec<&Features> = examples.iter().map(|e| &e.features).collect();
    let cache = forward(params, &seqs, BnMode::Batch)?;
    for (bn, (mean, var)) in BN_LAYERS.iter().zip(cache.bn_stats()) {
        params.tensors[bn + BN_MEAN].data.copy_from_slice(mean);
        params.tensors[bn + BN_VAR].data.copy_from_slice(var);
    }
    Ok(())
}

/// Mean cross-entropy over `examples` using the stored statistics.
pub fn evaluate_loss(params: &MaskNetParams, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    let mut points = 0usize;
    for e in examples {
        let cache = forward(params, &[&e.features], BnMode::Running)?;
        let n = e.target.bins() * e.target.frames();
        total += batch_loss(&cache, &[&e.target], params.arch.bins)? * n as f64;
        points += n;
    }
    Ok(total / points.max(1) as f64)
}

/// Fraction of time-frequency points whose most likely estimated class
/// matches the target.
pub fn mask_accuracy(params: &MaskNetParams, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut hits, mut points) = (0usize, 0usize);
    for e in examples {
        let est = mask_net_forward(params, &e.features)?;
        for k in 0..est.bins() {
            for t in 0..est.frames() {
                hits += usize::from(est.argmax(k, t) == e.target.argmax(k, t));
            }
        }
        points += est.bins() * est.frames();
    }
    Ok(hits as f64 / points.max(1) as f64)
}

/// Accuracy of always predicting the most frequent target class.
pub fn plurality_baseline(examples: &[Example]) -> f64 {
    let mut counts = [0.0; 3];
    for e in examples {
        let n = (e.target.bins() * e.target.frames()) as f64;
        for (c, f) in counts.iter_mut().zip(e.target.class_frequencies()) {
            *c += f * n;
        }
    }
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        0.0
    } else {
        counts.iter().cloned().fold(0.0, f64::max) / total
    }
}

/// Mean absolute difference between the masks of `params` and of the same
/// stored weights evaluated at full precision.
pub fn twin_deviation(params: &MaskNetParams, examples: &[Example]) -> Result<f64> {
    let mut twin = params.clone();
    twin.precision = Precision::F32;
    let (mut diff, mut n) = (0.0, 0usize);
    for e in examples {
        let a = mask_net_forward(params, &e.features)?;
        let b = mask_net_forward(&twin, &e.features)?;
        diff += a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).sum::<f64>();
        n += a.as_slice().len();
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(diff / n as f64)
}

/// Loss and parameter gradients of one batch in batch-norm training mode.
pub fn loss_and_gradients(params: &MaskNetParams, batch: &[&Example]) -> Result<(f64, Vec<Vec<f64>>)> {
    let seqs: Vec<&Features> = batch.iter().map(|e| &e.features).collect();
    let targets: Vec<&MaskTriple> = batch.iter().map(|e| &e.target).collect();
    let cache = forward(params, &seqs, BnMode::Batch)?;
    let loss = batch_loss(&cache, &targets, params.arch.bins)?;
    let grads = backward(params, &cache, &targets)?;
    Ok((loss, grads))
}

fn update_running_stats(params: &mut MaskNetParams, batch: &[&Example]) -> Result<()> {
    let seqs: Vec<&Features> = batch.iter().map(|e| &e.features).collect();
    let cache = forward(params, &seqs, BnMode::Batch)?;
    for (bn, (mean, var)) in BN_LAYERS.iter().zip(cache.bn_stats()) {
        for (s, v) in params.tensors[bn + BN_MEAN].data.iter_mut().zip(mean) {
            *s = BN_MOMENTUM * *s + (1.0 - BN_MOMENTUM) * v;
        }
        for (s, v) in params.tensors[bn + BN_VAR].data.iter_mut().zip(var) {
            *s = BN_MOMENTUM * *s + (1.0 - BN_MOMENTUM) * v;
        }
    }
    Ok(())
}

/// Train from a seeded initialization.
pub fn train(config: &TrainConfig, train_set: &[Example], val_set: &[Example]) -> Result<TrainOutcome> {
    let first = train_set.first().ok_or(Error::EmptyDataset)?;
    let arch = Arch::new(first.features.bins, first.features.mics)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = MaskNetParams::init(arch, config.precision, &mut rng);
    train_from(config, params, train_set, val_set)
}

/// Train starting from `params`; the precision of `params` is used.
pub fn train_from(
    config: &TrainConfig,
    mut params: MaskNetParams,
    train_set: &[Example],
    val_set: &[Example],
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    params.validate()?;
    check_examples(params.arch, train_set)?;
    check_examples(params.arch, val_set)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_ba7c4);
    let mut adam = AdamState::new(&params, config.learn_rate);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    let mut best: Option<(MaskNetParams, usize, f64)> = None;
    let mut misses = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, grads) = loss_and_gradients(&params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite);
            }
            update_running_stats(&mut params, &batch)?;
            adam.step(&mut params, &grads);
            loss_sum += loss;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;
        let mut val_loss = None;
        if epoch % config.validation_period == 0 || epoch == config.epochs {
            let mut snapshot = params.clone();
            calibrate_batch_norm(&mut snapshot, train_set)?;
            let v = evaluate_loss(&snapshot, val_set)?;
            info!("epoch {epoch}: train {train_loss:.5}, validation {v:.5}");
            val_loss = Some(v);
            match &best {
                Some((_, _, b)) if v >= *b => misses += 1,
                _ => {
                    best = Some((snapshot, epoch, v));
                    misses = 0;
                }
            }
        } else {
            debug!("epoch {epoch}: train {train_loss:.5}");
        }
        curve.push(EpochRecord { epoch, train_loss, val_loss });
        if misses > config.patience {
            stopped_early = true;
            break;
        }
    }
    let (best, best_epoch, best_val_loss) = best.ok_or(Error::EmptyDataset)?;
    Ok(TrainOutcome { curve, best, best_epoch, best_val_loss, stopped_early })
}
