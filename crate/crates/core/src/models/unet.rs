//! 3D U-Net: two 3³ convolutions with leaky ReLU per level, max-pool down,
//! stride-2 transposed convolution up, skip connections by channel
//! concatenation, and a 1³ head producing per-class logits. No
//! normalization layers.

use rand::Rng;

use super::params::{Bindings, ParamId, ParamStore};
use super::ModelError;
use crate::tensor::{conv3d, conv3d_transpose, kaiming_uniform, maxpool3d, ConvParams, NdArray, Tape, Tensor};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub num_classes: usize,
    pub depth: usize,
    pub base_channels: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            num_classes: 1,
            depth: 3,
            base_channels: 8,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.depth == 0 || self.in_channels == 0 || self.num_classes == 0 || self.base_channels == 0 {
            return Err(ModelError::Config(format!("invalid U-Net config {self:?}")));
        }
        Ok(())
    }

    /// Spatial extents must be multiples of `2^depth`.
    pub fn check_extents(&self, extents: [usize; 3]) -> Result<(), ModelError> {
        let multiple = 1usize << self.depth;
        for (axis, &e) in extents.iter().enumerate() {
            if e % multiple != 0 || e == 0 {
                return Err(ModelError::NotDivisible {
                    axis,
                    extent: e,
                    multiple,
                });
            }
        }
        Ok(())
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl ConvLayer {
    /// A `kernel³` layer with Kaiming-uniform weights and zero bias.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let shape = [out_ch, in_ch, kernel, kernel, kernel];
        let fan_in = in_ch * kernel * kernel * kernel;
        let weight = store.add(format!("{name}.weight"), kaiming_uniform(&shape, fan_in, rng));
        let bias = store.add(format!("{name}.bias"), NdArray::zeros(&[out_ch]));
        Self { weight, bias }
    }

    pub fn same(&self, tape: &mut Tape, bind: &Bindings, x: Tensor) -> Result<Tensor, ModelError> {
        let p = ConvParams::same(tape, bind.get(self.weight), bind.get(self.bias))?;
        Ok(conv3d(tape, x, &p)?)
    }

    pub fn up(&self, tape: &mut Tape, bind: &Bindings, x: Tensor) -> Result<Tensor, ModelError> {
        let p = ConvParams::upsample(bind.get(self.weight), bind.get(self.bias));
        Ok(conv3d_transpose(tape, x, &p)?)
    }
}

#[derive(Debug, Clone)]
struct Block {
    conv1: ConvLayer,
    conv2: ConvLayer,
}

impl Block {
    fn new(store: &mut ParamStore, name: &str, in_ch: usize, out_ch: usize, rng: &mut impl Rng) -> Self {
        Self {
            conv1: ConvLayer::new(store, &format!("{name}.conv1"), in_ch, out_ch, 3, rng),
            conv2: ConvLayer::new(store, &format!("{name}.conv2"), out_ch, out_ch, 3, rng),
        }
    }

    fn forward(&self, tape: &mut Tape, bind: &Bindings, x: Tensor) -> Result<Tensor, ModelError> {
        let h = self.conv1.same(tape, bind, x)?;
        let h = tape.leaky_relu(h, LEAKY_SLOPE);
        let h = self.conv2.same(tape, bind, h)?;
        Ok(tape.leaky_relu(h, LEAKY_SLOPE))
    }
}

#[derive(Debug, Clone)]
pub struct UNet {
    pub config: UNetConfig,
    encoders: Vec<Block>,
    bottleneck: Block,
    ups: Vec<ConvLayer>,
    decoders: Vec<Block>,
    head: ConvLayer,
}

impl UNet {
    pub fn new(config: UNetConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let mut encoders = Vec::with_capacity(config.depth);
        let mut in_ch = config.in_channels;
        for level in 0..config.depth {
            let ch = config.channels(level);
            encoders.push(Block::new(store, &format!("unet.enc{level}"), in_ch, ch, rng));
            in_ch = ch;
        }
        let bottleneck = Block::new(store, "unet.bottleneck", in_ch, config.channels(config.depth), rng);
        let mut ups = Vec::with_capacity(config.depth);
        let mut decoders = Vec::with_capacity(config.depth);
        for level in (0..config.depth).rev() {
            let ch = config.channels(level);
            ups.push(ConvLayer::new(store, &format!("unet.dec{level}.up"), 2 * ch, ch, 2, rng));
            decoders.push(Block::new(store, &format!("unet.dec{level}"), 2 * ch, ch, rng));
        }
        let head = ConvLayer::new(store, "unet.head", config.channels(0), config.num_classes, 1, rng);
        Ok(Self {
            config,
            encoders,
            bottleneck,
            ups,
            decoders,
            head,
        })
    }

    /// Per-voxel logits `[B, num_classes, X, Y, Z]`.
    pub fn forward(&self, tape: &mut Tape, bind: &Bindings, x: Tensor) -> Result<Tensor, ModelError> {
        let (_, ch, ext) = tape.value(x).volume_dims("unet")?;
        if ch != self.config.in_channels {
            return Err(ModelError::InChannels {
                expected: self.config.in_channels,
                found: ch,
            });
        }
        self.config.check_extents(ext)?;
        let mut skips = Vec::with_capacity(self.config.depth);
        let mut h = x;
        for enc in &self.encoders {
            h = enc.forward(tape, bind, h)?;
            skips.push(h);
            h = maxpool3d(tape, h, [2, 2, 2])?;
        }
        h = self.bottleneck.forward(tape, bind, h)?;
        for ((up, dec), skip) in self.ups.iter().zip(&self.decoders).zip(skips.into_iter().rev()) {
            let u = up.up(tape, bind, h)?;
            let cat = tape.concat_channels(u, skip)?;
            h = dec.forward(tape, bind, cat)?;
        }
        let p = ConvParams::same(tape, bind.get(self.head.weight), bind.get(self.head.bias))?;
        Ok(conv3d(tape, h, &p)?)
    }
}
