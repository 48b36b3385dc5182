use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ExperimentError;
use crate::data::{derive_seed, Mask, Volume};
use crate::metrics::{dice_for_label, frequency_error_spectrum};
use crate::models::{probabilities_to_mask, ModelInput, SegmentationModel};
use crate::tensor::{soft_dice_loss, Adam, NdArray, Tape};

const SHUFFLE_STREAM: u64 = 1;

/// A preprocessed subject ready for training or evaluation.
#[derive(Debug, Clone)]
pub struct Subject {
    pub id: String,
    pub volume: Volume,
    pub mask: Mask,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Validate every this many epochs (and always after the last).
    pub val_every: usize,
    /// Bands of the frequency-error probe; 0 disables it.
    pub probe_bands: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 200,
            batch_size: 1,
            seed: 0,
            val_every: 1,
            probe_bands: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Mean validation soft Dice loss and hard Dice, on validated epochs.
    pub val: Option<(f64, f64)>,
}

impl EpochRecord {
    /// One line of the training log; `-` marks epochs without validation.
    pub fn to_line(&self) -> String {
        let (vl, vd) = match self.val {
            Some((l, d)) => (format!("{l:.6}"), format!("{d:.6}")),
            None => ("-".into(), "-".into()),
        };
        format!("epoch={} train_loss={:.6} val_loss={vl} val_dice={vd}", self.epoch, self.train_loss)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model holding the best-validation weights.
    pub model: SegmentationModel,
    pub log: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    /// Per-epoch frequency error of the first training subject, if probed.
    pub probe: Vec<Vec<f64>>,
}

/// Mean per-label Dice over labels `1..=classes`.
pub fn subject_dice(pred: &Mask, target: &Mask, classes: usize) -> Result<f64, ExperimentError> {
    let mut total = 0.0;
    for label in 1..=classes {
        total += dice_for_label(pred, target, label as u8)?;
    }
    Ok(total / classes as f64)
}

fn check_subjects(model: &SegmentationModel, subjects: &[Subject]) -> Result<(), ExperimentError> {
    for s in subjects {
        model.unet_config().check_extents(s.volume.extents())?;
        if s.mask.extents() != s.volume.extents() {
            return Err(ExperimentError::Subject(format!("{}: mask and volume extents differ", s.id)));
        }
        if usize::from(s.mask.max_label()) > model.num_classes() {
            return Err(ExperimentError::Subject(format!(
                "{}: label {} exceeds num_classes {}",
                s.id,
                s.mask.max_label(),
                model.num_classes()
            )));
        }
    }
    Ok(())
}

/// Soft Dice loss and hard Dice of one subject under the current weights.
pub fn score_subject(model: &SegmentationModel, input: &ModelInput, subject: &Subject) -> Result<(f64, f64, NdArray), ExperimentError> {
    let probs = model.predict(input)?;
    let mut tape = Tape::new();
    let p = tape.constant(probs.clone());
    let loss = soft_dice_loss(&mut tape, p, subject.mask.labels())?;
    let loss = tape.value(loss).item().expect("scalar loss");
    let pred = probabilities_to_mask(&probs, subject.volume.extents())?;
    let dice = subject_dice(&pred, &subject.mask, model.num_classes())?;
    Ok((loss, dice, probs))
}

/// Trains with Adam on the soft Dice loss and keeps the weights of the
/// epoch with the highest mean validation Dice (earliest on ties).
///
/// Shape and divisibility problems are reported before the first step.
pub fn train(
    mut model: SegmentationModel,
    train: &[Subject],
    val: &[Subject],
    settings: &TrainSettings,
) -> Result<TrainOutcome, ExperimentError> {
    if train.is_empty() || val.is_empty() {
        return Err(ExperimentError::Subject("training needs at least one train and one val subject".into()));
    }
    if !(settings.lr > 0.0) || settings.epochs == 0 || settings.batch_size == 0 || settings.val_every == 0 {
        return Err(ExperimentError::Config(
            "lr > 0 and epochs, batch_size, val_every >= 1 are required".into(),
        ));
    }
    check_subjects(&model, train)?;
    check_subjects(&model, val)?;
    let prep = |s: &Subject| model.prepare(&[&s.volume]);
    let train_in = train.iter().map(prep).collect::<Result<Vec<_>, _>>()?;
    let val_in = val.iter().map(prep).collect::<Result<Vec<_>, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, SHUFFLE_STREAM));
    let mut adam = Adam::new(settings.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(settings.epochs);
    let mut probe = Vec::new();
    let mut best: Option<(f64, usize, Vec<(String, NdArray)>)> = None;

    for epoch in 1..=settings.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(settings.batch_size) {
            let items: Vec<&ModelInput> = chunk.iter().map(|&i| &train_in[i]).collect();
            let input = ModelInput::stack(&items)?;
            let labels: Vec<u8> = chunk.iter().flat_map(|&i| train[i].mask.labels().iter().copied()).collect();
            let mut tape = Tape::new();
            let bind = model.store.bind(&mut tape, |_| true);
            let probs = model.forward(&mut tape, &bind, &input)?;
            let loss = soft_dice_loss(&mut tape, probs, &labels)?;
            loss_sum += tape.value(loss).item().expect("scalar loss");
            steps += 1;
            tape.backward(loss)?;
            model.store.collect_grads(&tape, &bind);
            adam.step(model.store.params_mut())?;
        }

        let validate = epoch % settings.val_every == 0 || epoch == settings.epochs;
        let mut val_scores = None;
        if validate {
            let (mut vl, mut vd) = (0.0, 0.0);
            for (s, input) in val.iter().zip(&val_in) {
                let (l, d, _) = score_subject(&model, input, s)?;
                vl += l;
                vd += d;
            }
            val_scores = Some((vl / val.len() as f64, vd / val.len() as f64));
        }
        log.push(EpochRecord {
            epoch,
            train_loss: loss_sum / steps as f64,
            val: val_scores,
        });

        if settings.probe_bands > 0 {
            let probs = model.predict(&train_in[0])?;
            let vox = train[0].volume.len();
            let fg = Volume::new(train[0].volume.extents(), probs.data()[..vox].to_vec())?;
            probe.push(frequency_error_spectrum(&fg, &train[0].mask, settings.probe_bands)?);
        }

        let Some((_, val_dice)) = val_scores else { continue };
        if best.as_ref().is_none_or(|(d, _, _)| val_dice > *d) {
            let snapshot = model
                .store
                .params()
                .iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect();
            best = Some((val_dice, epoch, snapshot));
        }
    }

    let (_, best_epoch, weights) = best.expect("the last epoch is always validated");
    model.store.load(weights)?;
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        probe,
    })
}
