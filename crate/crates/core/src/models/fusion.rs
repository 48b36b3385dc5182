//! The three training topologies.
//!
//! - **None**: the U-Net sees the normalized volume.
//! - **Early**: the high and low parts each pass through their own 3³
//!   convolution (`O_H`, `O_L`); the two feature maps are concatenated
//!   along channels and fed to the U-Net.
//! - **Late**: only `O_H` goes through the U-Net, giving class logits
//!   `S_H`; `O_L` is projected to class space by a 1³ convolution and
//!   added to `S_H`.
//!
//! Branch convolutions have no activation. Probabilities are per-class
//! sigmoids of the final logits.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{Bindings, ParamStore};
use super::unet::{ConvLayer, UNet, UNetConfig};
use super::ModelError;
use crate::data::{Mask, Volume};
use crate::frequency::{disentangle, mask_bounds};
use crate::tensor::{NdArray, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    None,
    Early,
    Late,
}

impl FusionMode {
    pub const ALL: [FusionMode; 3] = [FusionMode::None, FusionMode::Early, FusionMode::Late];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::None => "none",
            FusionMode::Early => "early",
            FusionMode::Late => "late",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(FusionMode::None),
            "early" => Ok(FusionMode::Early),
            "late" => Ok(FusionMode::Late),
            other => Err(ModelError::Config(format!("unknown fusion mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub mode: FusionMode,
    pub theta: f64,
    pub branch_channels: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            mode: FusionMode::None,
            theta: crate::frequency::DEFAULT_THETA,
            branch_channels: 8,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(ModelError::Config(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if self.branch_channels == 0 {
            return Err(ModelError::Config("branch_channels must be at least 1".into()));
        }
        Ok(())
    }

    /// U-Net input width this topology feeds.
    pub fn unet_in_channels(&self) -> usize {
        match self.mode {
            FusionMode::None => 1,
            FusionMode::Early => 2 * self.branch_channels,
            FusionMode::Late => self.branch_channels,
        }
    }

    /// U-Net configuration wired for this topology.
    pub fn unet_config(&self, num_classes: usize, depth: usize, base_channels: usize) -> UNetConfig {
        UNetConfig {
            in_channels: self.unet_in_channels(),
            num_classes,
            depth,
            base_channels,
        }
    }
}

/// A network input: the raw volume batch and, for fusion topologies, its
/// high and low parts. All arrays are `[B, 1, X, Y, Z]`.
#[derive(Debug, Clone)]
pub struct ModelInput {
    pub raw: NdArray,
    pub high: Option<NdArray>,
    pub low: Option<NdArray>,
}

impl ModelInput {
    pub fn extents(&self) -> [usize; 3] {
        let s = self.raw.shape();
        [s[2], s[3], s[4]]
    }

    pub fn batch(&self) -> usize {
        self.raw.shape()[0]
    }

    /// Concatenates inputs along the batch axis.
    pub fn stack(items: &[&ModelInput]) -> Result<ModelInput, ModelError> {
        let first = items.first().ok_or_else(|| ModelError::Config("empty batch".into()))?;
        if items.len() == 1 {
            return Ok((*first).clone());
        }
        let cat = |get: &dyn Fn(&ModelInput) -> Option<&NdArray>| -> Result<Option<NdArray>, ModelError> {
            let Some(head) = get(first) else { return Ok(None) };
            let mut shape = head.shape().to_vec();
            let mut data = Vec::with_capacity(head.len() * items.len());
            for it in items {
                let a = get(it).ok_or(ModelError::MissingInput("batch part"))?;
                if a.shape()[1..] != shape[1..] {
                    return Err(ModelError::BatchExtents {
                        expected: [shape[2], shape[3], shape[4]],
                        found: [a.shape()[2], a.shape()[3], a.shape()[4]],
                    });
                }
                data.extend_from_slice(a.data());
            }
            shape[0] = data.len() / shape[1..].iter().product::<usize>();
            Ok(Some(NdArray::new(&shape, data)?))
        };
        Ok(ModelInput {
            raw: cat(&|m| Some(&m.raw))?.expect("raw is always present"),
            high: cat(&|m| m.high.as_ref())?,
            low: cat(&|m| m.low.as_ref())?,
        })
    }
}

#[derive(Debug, Clone)]
struct Branches {
    high: ConvLayer,
    low: ConvLayer,
    /// Late fusion only: `O_L` → class logits.
    projection: Option<ConvLayer>,
}

#[derive(Debug, Clone)]
pub struct SegmentationModel {
    pub fusion: FusionConfig,
    pub store: ParamStore,
    unet: UNet,
    branches: Option<Branches>,
}

/// Intermediate tensors of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardTrace {
    /// Input seen by the U-Net.
    pub unet_input: Tensor,
    pub high_features: Option<Tensor>,
    pub low_features: Option<Tensor>,
    /// U-Net output (`S_H` under late fusion).
    pub unet_logits: Tensor,
    pub logits: Tensor,
    pub probabilities: Tensor,
}

impl SegmentationModel {
    /// Builds a model with seeded initialization. `unet.in_channels` must
    /// match what the topology feeds the backbone.
    pub fn new(unet: UNetConfig, fusion: FusionConfig, seed: u64) -> Result<Self, ModelError> {
        fusion.validate()?;
        unet.validate()?;
        let expected = fusion.unet_in_channels();
        if unet.in_channels != expected {
            return Err(ModelError::InChannels {
                expected,
                found: unet.in_channels,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let bc = fusion.branch_channels;
        let branches = match fusion.mode {
            FusionMode::None => None,
            FusionMode::Early | FusionMode::Late => Some(Branches {
                high: ConvLayer::new(&mut store, "branch_high", 1, bc, 3, &mut rng),
                low: ConvLayer::new(&mut store, "branch_low", 1, bc, 3, &mut rng),
                projection: (fusion.mode == FusionMode::Late)
                    .then(|| ConvLayer::new(&mut store, "low_proj", bc, unet.num_classes, 1, &mut rng)),
            }),
        };
        let unet = UNet::new(unet, &mut store, &mut rng)?;
        Ok(Self {
            fusion,
            store,
            unet,
            branches,
        })
    }

    pub fn unet_config(&self) -> UNetConfig {
        self.unet.config
    }

    pub fn num_classes(&self) -> usize {
        self.unet.config.num_classes
    }

    /// Builds a batch input from volumes, splitting each into high and low
    /// parts when the topology needs them.
    pub fn prepare(&self, volumes: &[&Volume]) -> Result<ModelInput, ModelError> {
        let first = volumes.first().ok_or_else(|| ModelError::Config("empty batch".into()))?;
        let ext = first.extents();
        self.unet.config.check_extents(ext)?;
        // fail on theta before doing any work
        mask_bounds(ext[0], self.fusion.theta)?;
        let vox: usize = ext.iter().product();
        let shape = [volumes.len(), 1, ext[0], ext[1], ext[2]];
        let mut raw = Vec::with_capacity(volumes.len() * vox);
        let fd = self.fusion.mode != FusionMode::None;
        let mut high = Vec::new();
        let mut low = Vec::new();
        for v in volumes {
            if v.extents() != ext {
                return Err(ModelError::BatchExtents {
                    expected: ext,
                    found: v.extents(),
                });
            }
            raw.extend_from_slice(v.data());
            if fd {
                let pair = disentangle(ext, v.data(), self.fusion.theta)?;
                high.extend(pair.high);
                low.extend(pair.low);
            }
        }
        Ok(ModelInput {
            raw: NdArray::new(&shape, raw)?,
            high: fd.then(|| NdArray::new(&shape, high)).transpose()?,
            low: fd.then(|| NdArray::new(&shape, low)).transpose()?,
        })
    }

    /// Runs the topology and returns every intermediate of interest.
    pub fn forward_trace(&self, tape: &mut Tape, bind: &Bindings, input: &ModelInput) -> Result<ForwardTrace, ModelError> {
        let parts = |name: &'static str, v: &Option<NdArray>| {
            v.clone().ok_or(ModelError::MissingInput(name))
        };
        let trace = match (&self.branches, self.fusion.mode) {
            (None, _) => {
                let x = tape.constant(input.raw.clone());
                let logits = self.unet.forward(tape, bind, x)?;
                ForwardTrace {
                    unet_input: x,
                    high_features: None,
                    low_features: None,
                    unet_logits: logits,
                    logits,
                    probabilities: logits,
                }
            }
            (Some(b), mode) => {
                let hi = tape.constant(parts("high", &input.high)?);
                let lo = tape.constant(parts("low", &input.low)?);
                let o_h = b.high.same(tape, bind, hi)?;
                let o_l = b.low.same(tape, bind, lo)?;
                if mode == FusionMode::Early {
                    let fused = tape.concat_channels(o_h, o_l)?;
                    let logits = self.unet.forward(tape, bind, fused)?;
                    ForwardTrace {
                        unet_input: fused,
                        high_features: Some(o_h),
                        low_features: Some(o_l),
                        unet_logits: logits,
                        logits,
                        probabilities: logits,
                    }
                } else {
                    let s_h = self.unet.forward(tape, bind, o_h)?;
                    let proj = b.projection.as_ref().expect("late fusion has a projection");
                    let p_l = proj.same(tape, bind, o_l)?;
                    let logits = tape.add(s_h, p_l)?;
                    ForwardTrace {
                        unet_input: o_h,
                        high_features: Some(o_h),
                        low_features: Some(o_l),
                        unet_logits: s_h,
                        logits,
                        probabilities: logits,
                    }
                }
            }
        };
        let probabilities = tape.sigmoid(trace.logits);
        Ok(ForwardTrace { probabilities, ..trace })
    }

    /// Per-class probabilities `[B, num_classes, X, Y, Z]` on the tape.
    pub fn forward(&self, tape: &mut Tape, bind: &Bindings, input: &ModelInput) -> Result<Tensor, ModelError> {
        Ok(self.forward_trace(tape, bind, input)?.probabilities)
    }

    /// Inference without gradient bookkeeping.
    pub fn predict(&self, input: &ModelInput) -> Result<NdArray, ModelError> {
        let mut tape = Tape::new();
        let bind = self.store.bind(&mut tape, |_| false);
        let p = self.forward(&mut tape, &bind, input)?;
        Ok(tape.value(p).clone())
    }

    /// Hard labels for a single volume: class `c + 1` where its probability
    /// exceeds 0.5, the most probable class winning overlaps.
    pub fn predict_mask(&self, volume: &Volume) -> Result<(Mask, NdArray), ModelError> {
        let input = self.prepare(&[volume])?;
        let probs = self.predict(&input)?;
        Ok((probabilities_to_mask(&probs, volume.extents())?, probs))
    }

    /// Number of weights whose names start with `prefix`.
    pub fn count_params(&self, prefix: &str) -> usize {
        self.store
            .params()
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .map(|p| p.value.len())
            .sum()
    }
}

/// Thresholds the first batch item of `[B, C, X, Y, Z]` probabilities.
pub fn probabilities_to_mask(probs: &NdArray, extents: [usize; 3]) -> Result<Mask, ModelError> {
    let (_, classes, ext) = probs.volume_dims("probabilities_to_mask")?;
    if ext != extents {
        return Err(ModelError::BatchExtents {
            expected: extents,
            found: ext,
        });
    }
    let vox: usize = ext.iter().product();
    let p = probs.data();
    let labels = (0..vox)
        .map(|i| {
            let mut best = 0u8;
            let mut best_p = 0.5;
            for c in 0..classes {
                let v = p[c * vox + i];
                if v > best_p {
                    best_p = v;
                    best = (c + 1) as u8;
                }
            }
            best
        })
        .collect();
    Ok(Mask::new(extents, labels)?)
}
