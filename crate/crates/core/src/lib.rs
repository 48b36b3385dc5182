//! Frequency-disentangled learning for 3D volumetric segmentation.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense arrays, a reverse-mode tape, convolution layers,
//!   soft Dice loss and Adam.
//! - [`frequency`]: 3D FFT, the high/low spectral split and band energies.
//! - [`data`]: volumes, masks, the SVOL file format, preprocessing, subject
//!   splits and synthetic phantoms.
//! - [`models`]: a 3D U-Net and the early/late fusion topologies.
//! - [`metrics`]: Dice, HD95, bootstrap intervals and the per-band error probe.
//! - [`experiment`]: configuration, training, evaluation and sweeps behind
//!   the `freqseg` binary.

pub mod data;
pub mod experiment;
pub mod frequency;
pub mod metrics;
pub mod models;
pub mod tensor;
