//! Experiment configuration: a TOML file with `[data]`, `[phantom]`,
//! `[model]`, `[train]` and `[sweep]` sections. Every key is optional and
//! unknown keys are rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExperimentError, TrainSettings};
use crate::data::PhantomSpec;
use crate::models::{FusionConfig, FusionMode, UNetConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory holding `manifest.txt`.
    pub dir: Option<PathBuf>,
    pub task: String,
    /// Subjects generated by `phantom-gen`.
    pub count: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Seed of the fixed train/val/test partition.
    pub split_seed: u64,
    /// Target extents for resampling; `None` keeps native extents.
    pub resize: Option<[usize; 3]>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: None,
            task: "phantom".into(),
            count: 34,
            n_val: 6,
            n_test: 8,
            split_seed: 0,
            resize: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: FusionMode,
    pub theta: f64,
    pub branch_channels: usize,
    pub depth: usize,
    pub base_channels: usize,
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let f = FusionConfig::default();
        let u = UNetConfig::default();
        Self {
            mode: f.mode,
            theta: f.theta,
            branch_channels: f.branch_channels,
            depth: u.depth,
            base_channels: u.base_channels,
            num_classes: u.num_classes,
        }
    }
}

impl ModelConfig {
    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            mode: self.mode,
            theta: self.theta,
            branch_channels: self.branch_channels,
        }
    }

    pub fn unet(&self) -> UNetConfig {
        self.fusion().unet_config(self.num_classes, self.depth, self.base_channels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Validate (and consider for model selection) every this many epochs;
    /// the last epoch is always validated.
    pub val_every: usize,
    /// Bands of the frequency-error probe; 0 disables it.
    pub probe_bands: usize,
    /// Training fraction used by `train`.
    pub fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 200,
            batch_size: 1,
            seed: 0,
            val_every: 1,
            probe_bands: 8,
            fraction: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn settings(&self) -> TrainSettings {
        TrainSettings {
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            val_every: self.val_every,
            probe_bands: self.probe_bands,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub fractions: Vec<f64>,
    pub modes: Vec<FusionMode>,
    /// Seed replicates per (fraction, mode).
    pub seeds: usize,
    pub workers: usize,
    pub bootstrap: usize,
    /// Write measured wall time to the CSV; off keeps reruns byte-identical.
    pub record_wall_time: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            fractions: vec![0.075, 0.15, 0.30, 0.50, 1.0],
            modes: FusionMode::ALL.to_vec(),
            seeds: 5,
            workers: 1,
            bootstrap: crate::metrics::DEFAULT_RESAMPLES,
            record_wall_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub phantom: PhantomSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

/// `(key, meaning)` for every configuration key, shown by `--help`.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("data.dir", "dataset directory containing manifest.txt"),
    ("data.task", "task name written to records (default \"phantom\")"),
    ("data.count", "subjects written by phantom-gen (default 34)"),
    ("data.n_val", "validation subjects (default 6)"),
    ("data.n_test", "test subjects (default 8)"),
    ("data.split_seed", "seed of the fixed train/val/test partition (default 0)"),
    ("data.resize", "resample volumes to [x, y, z] before training"),
    ("phantom.extents", "phantom volume extents (default [32, 32, 16])"),
    ("phantom.background_cutoff", "normalized radial cutoff of the smooth background (default 0.06)"),
    ("phantom.background_amplitude", "background standard deviation (default 1.0)"),
    ("phantom.structures", "ellipsoids per phantom (default 3)"),
    ("phantom.radius_min", "smallest semi-axis in voxels (default 2.0)"),
    ("phantom.radius_max", "largest semi-axis in voxels (default 4.0)"),
    ("phantom.edge_sharpness", "steepness of the structure boundary (default 8.0)"),
    ("phantom.contrast", "mean structure intensity offset (default 1.0)"),
    ("phantom.noise_std", "additive Gaussian noise (default 0.05)"),
    ("phantom.seed", "base seed of the phantom dataset (default 0)"),
    ("model.mode", "none | early | late (default none)"),
    ("model.theta", "high/low split ratio in (0, 1) (default 0.5)"),
    ("model.branch_channels", "output channels of each frequency branch (default 8)"),
    ("model.depth", "U-Net pooling levels (default 3)"),
    ("model.base_channels", "U-Net channels at full resolution (default 8)"),
    ("model.num_classes", "foreground classes (default 1)"),
    ("train.lr", "Adam learning rate (default 1e-3)"),
    ("train.epochs", "training epochs (default 200)"),
    ("train.batch_size", "subjects per step (default 1)"),
    ("train.seed", "initialization and shuffle seed (default 0)"),
    ("train.val_every", "epochs between validation passes (default 1)"),
    ("train.probe_bands", "bands of the frequency-error probe, 0 disables (default 8)"),
    ("train.fraction", "training fraction used by `train` (default 1.0)"),
    ("sweep.fractions", "training fractions (default [0.075, 0.15, 0.3, 0.5, 1.0])"),
    ("sweep.modes", "fusion modes (default [\"none\", \"early\", \"late\"])"),
    ("sweep.seeds", "seed replicates per cell (default 5)"),
    ("sweep.workers", "cells trained concurrently (default 1)"),
    ("sweep.bootstrap", "bootstrap resamples for confidence intervals (default 2000)"),
    ("sweep.record_wall_time", "write measured wall time to the CSV (default false)"),
];

/// `--help` text listing every configuration key.
pub fn config_help() -> String {
    let mut s = String::from("Configuration keys (TOML, all optional, unknown keys are errors):\n");
    for (k, v) in CONFIG_KEYS {
        writeln!(s, "  {k:<30} {v}").expect("string write");
    }
    s
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Io(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        self.phantom.validate()?;
        self.model.fusion().validate()?;
        self.model.unet().validate()?;
        let t = &self.train;
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return bad(format!("train.lr must be positive, got {}", t.lr));
        }
        if t.epochs == 0 || t.batch_size == 0 || t.val_every == 0 {
            return bad("train.epochs, train.batch_size and train.val_every must be at least 1".into());
        }
        if t.probe_bands == 1 {
            return bad("train.probe_bands must be 0 or at least 2".into());
        }
        for &f in std::iter::once(&t.fraction).chain(&self.sweep.fractions) {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("training fractions must lie in (0, 1], got {f}"));
            }
        }
        let s = &self.sweep;
        if s.fractions.is_empty() || s.modes.is_empty() || s.seeds == 0 || s.workers == 0 {
            return bad("sweep needs fractions, modes, seeds >= 1 and workers >= 1".into());
        }
        if s.bootstrap < crate::metrics::MIN_RESAMPLES {
            return bad(format!("sweep.bootstrap must be at least {}", crate::metrics::MIN_RESAMPLES));
        }
        let d = &self.data;
        if d.n_val == 0 || d.n_test == 0 {
            return bad("data.n_val and data.n_test must be at least 1".into());
        }
        if d.count < d.n_val + d.n_test + 1 {
            return bad(format!("data.count = {} leaves no training subjects", d.count));
        }
        if d.task.is_empty() || d.task.contains([',', '\n', ' ']) {
            return bad("data.task must be a non-empty word".into());
        }
        Ok(())
    }

    /// SHA-256 of the resolved configuration, truncated to 64 bits. Paths,
    /// worker count and wall-time recording are left out: moving a dataset
    /// or adding threads does not change it; any setting that affects
    /// numbers does.
    pub fn hash(&self) -> u64 {
        let mut canon = self.clone();
        canon.data.dir = None;
        canon.sweep.workers = 1;
        canon.sweep.record_wall_time = false;
        let digest = Sha256::digest(canon.to_toml().as_bytes());
        u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }

    /// The configuration one sweep cell trains with.
    pub fn for_cell(&self, mode: FusionMode, fraction: f64, seed: u64) -> Self {
        let mut c = self.clone();
        c.model.mode = mode;
        c.train.fraction = fraction;
        c.train.seed = seed;
        c
    }
}
