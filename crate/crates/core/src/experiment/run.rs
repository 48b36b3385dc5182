//! Single training runs and their evaluation, shared by `train`, `evaluate`
//! and every sweep cell.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{subject_dice, train, ExperimentConfig, ExperimentError, Subject, TrainOutcome};
use crate::data::{
    derive_seed, load_subject, make_split, minmax_normalize, phantom_dataset, read_manifest, resize_mask, resize_volume,
    subsample_train, Mask, SplitSpec, Volume,
};
use crate::metrics::{hausdorff95, MetricReport, SubjectScore};
use crate::models::{Checkpoint, FusionMode, SegmentationModel};

const INIT_STREAM: u64 = 2;
const SUBSAMPLE_STREAM: u64 = 3;
const BOOTSTRAP_STREAM: u64 = 4;

/// Resamples (if requested) and min-max normalizes one subject.
pub fn preprocess(id: &str, volume: &Volume, mask: &Mask, resize: Option<[usize; 3]>) -> Subject {
    let (volume, mask) = match resize {
        Some(ext) if ext != volume.extents() => (resize_volume(volume, ext), resize_mask(mask, ext)),
        _ => (volume.clone(), mask.clone()),
    };
    Subject {
        id: id.to_string(),
        volume: minmax_normalize(&volume),
        mask,
    }
}

/// Loads and preprocesses every subject listed in `<dir>/manifest.txt`.
pub fn load_dataset(dir: &Path, resize: Option<[usize; 3]>) -> Result<Vec<Subject>, ExperimentError> {
    read_manifest(dir)?
        .iter()
        .map(|id| {
            let (v, m) = load_subject(dir, id)?;
            Ok(preprocess(id, &v, &m, resize))
        })
        .collect()
}

/// The configured dataset: loaded from `data.dir` when set, otherwise
/// generated in memory from `[phantom]`.
pub fn dataset(cfg: &ExperimentConfig) -> Result<Vec<Subject>, ExperimentError> {
    match &cfg.data.dir {
        Some(dir) => load_dataset(dir, cfg.data.resize),
        None => Ok(phantom_dataset(&cfg.phantom, cfg.data.count)?
            .iter()
            .map(|(id, v, m)| preprocess(id, v, m, cfg.data.resize))
            .collect()),
    }
}

/// Fixed partition of `ids`: `n_val` and `n_test` subjects, the rest train.
pub fn base_split(cfg: &ExperimentConfig, ids: &[String]) -> Result<SplitSpec, ExperimentError> {
    let (nv, nt) = (cfg.data.n_val, cfg.data.n_test);
    let n_train = ids.len().checked_sub(nv + nt).filter(|&n| n > 0).ok_or_else(|| {
        ExperimentError::Config(format!(
            "{} subjects cannot fill {nv} val + {nt} test + at least 1 train",
            ids.len()
        ))
    })?;
    Ok(make_split(ids, [n_train, nv, nt], cfg.data.split_seed)?)
}

/// Partition for a run: the base split with train subsampled to
/// `train.fraction`. The subsample depends only on the seed, so runs that
/// differ only in fusion mode see the same subjects.
pub fn run_split(cfg: &ExperimentConfig, ids: &[String]) -> Result<SplitSpec, ExperimentError> {
    let base = base_split(cfg, ids)?;
    Ok(subsample_train(&base, cfg.train.fraction, derive_seed(cfg.train.seed, SUBSAMPLE_STREAM))?)
}

/// Freshly initialized model for `cfg`.
pub fn build_model(cfg: &ExperimentConfig) -> Result<SegmentationModel, ExperimentError> {
    Ok(SegmentationModel::new(
        cfg.model.unet(),
        cfg.model.fusion(),
        derive_seed(cfg.train.seed, INIT_STREAM),
    )?)
}

fn pick(subjects: &[Subject], ids: &[String]) -> Result<Vec<Subject>, ExperimentError> {
    ids.iter()
        .map(|id| {
            subjects
                .iter()
                .find(|s| &s.id == id)
                .cloned()
                .ok_or_else(|| ExperimentError::Subject(format!("{id} is not in the dataset")))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub split: SplitSpec,
    pub training: TrainOutcome,
    pub report: MetricReport,
}

/// Splits, trains and evaluates on the test partition.
pub fn run(cfg: &ExperimentConfig, subjects: &[Subject]) -> Result<RunOutcome, ExperimentError> {
    cfg.validate()?;
    let ids: Vec<String> = subjects.iter().map(|s| s.id.clone()).collect();
    let split = run_split(cfg, &ids)?;
    let model = build_model(cfg)?;
    let training = train(model, &pick(subjects, &split.train)?, &pick(subjects, &split.val)?, &cfg.train.settings())?;
    let report = evaluate(cfg, &training.model, &pick(subjects, &split.test)?)?;
    Ok(RunOutcome { split, training, report })
}

/// Dice and HD95 (mean over classes) for each subject, with bootstrap
/// intervals over subjects.
pub fn evaluate(cfg: &ExperimentConfig, model: &SegmentationModel, subjects: &[Subject]) -> Result<MetricReport, ExperimentError> {
    let classes = model.num_classes();
    let mut scores = Vec::with_capacity(subjects.len());
    for s in subjects {
        let (pred, _) = model.predict_mask(&s.volume)?;
        let dice = subject_dice(&pred, &s.mask, classes)?;
        let mut hd = 0.0;
        for label in 1..=classes as u8 {
            hd += hausdorff95(&pred.select(label), &s.mask.select(label), s.volume.spacing)?;
        }
        scores.push(SubjectScore {
            id: s.id.clone(),
            dice,
            hd95: hd / classes as f64,
        });
    }
    Ok(MetricReport::from_scores(
        scores,
        cfg.sweep.bootstrap,
        derive_seed(cfg.train.seed, BOOTSTRAP_STREAM),
    )?)
}

/// Checkpoint of a trained model, stamped with the config hash.
pub fn checkpoint(cfg: &ExperimentConfig, model: &SegmentationModel) -> Checkpoint {
    Checkpoint {
        config_hash: cfg.hash(),
        params: model.store.params().iter().map(|p| (p.name.clone(), p.value.clone())).collect(),
    }
}

/// Rebuilds the model a checkpoint was trained as. Fails if the checkpoint
/// was written under a different configuration.
pub fn restore(cfg: &ExperimentConfig, ckpt: Checkpoint) -> Result<SegmentationModel, ExperimentError> {
    if ckpt.config_hash != cfg.hash() {
        return Err(ExperimentError::HashMismatch {
            checkpoint: format!("{:016x}", ckpt.config_hash),
            config: cfg.hash_hex(),
        });
    }
    let mut model = build_model(cfg)?;
    model.store.load(ckpt.params)?;
    Ok(model)
}

/// One row of Tables 2–3 style results.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub task: String,
    pub fraction: f64,
    pub n_train: usize,
    pub mode: FusionMode,
    pub seed: u64,
    pub report: MetricReport,
    pub wall_s: f64,
    pub checkpoint: Option<PathBuf>,
    pub config_hash: String,
    pub epochs: usize,
    pub best_epoch: usize,
}

impl ExperimentRecord {
    /// Flat `key = value` text: run metadata, then the metric record.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| writeln!(s, "{k} = {v}").expect("string write");
        kv("task", &self.task);
        kv("fraction", &self.fraction);
        kv("n_train", &self.n_train);
        kv("mode", &self.mode);
        kv("fusion_operator", &fusion_operator(self.mode));
        kv("seed", &self.seed);
        kv("epochs", &self.epochs);
        kv("best_epoch", &self.best_epoch);
        kv("selection", &"best validation Dice");
        kv("wall_s", &self.wall_s);
        kv(
            "checkpoint",
            &self.checkpoint.as_ref().map_or("-".to_string(), |p| p.display().to_string()),
        );
        kv("config_hash", &self.config_hash);
        s.push_str(&self.report.to_record());
        s
    }
}

/// How a topology combines the two frequency parts. These are this
/// toolkit's choices, recorded so results are not read as exact
/// reproductions.
pub fn fusion_operator(mode: FusionMode) -> &'static str {
    match mode {
        FusionMode::None => "none",
        FusionMode::Early => "channel concatenation of conv branches before the U-Net",
        FusionMode::Late => "low branch projected by 1x1x1 conv, added to U-Net logits",
    }
}

/// The training log as text, one epoch per line.
pub fn log_text(outcome: &TrainOutcome) -> String {
    let mut s = String::new();
    for r in &outcome.log {
        s.push_str(&r.to_line());
        s.push('\n');
    }
    writeln!(s, "best_epoch={}", outcome.best_epoch).expect("string write");
    s
}

/// The frequency-error probe as text: one line per epoch, one column per
/// band.
pub fn probe_text(probe: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for (i, row) in probe.iter().enumerate() {
        let cols: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(s, "{} {}", i + 1, cols.join(" ")).expect("string write");
    }
    s
}
