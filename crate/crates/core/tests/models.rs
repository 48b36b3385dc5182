mod common;

use common::rng;
use freqseg::data::{minmax_normalize, Volume};
use freqseg::models::{Checkpoint, FusionConfig, FusionMode, ModelError, SegmentationModel};
use freqseg::tensor::{soft_dice_loss, Adam, NdArray, Tape};
use rand::Rng;

const EXT: [usize; 3] = [8, 8, 8];

fn model(mode: FusionMode, classes: usize, seed: u64) -> SegmentationModel {
    let fusion = FusionConfig {
        mode,
        theta: 0.5,
        branch_channels: 3,
    };
    SegmentationModel::new(fusion.unet_config(classes, 2, 4), fusion, seed).unwrap()
}

fn volume(seed: u64) -> Volume {
    let mut r = rng(seed);
    Volume::new(EXT, (0..512).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap()
}

fn labels(seed: u64) -> Vec<u8> {
    let mut r = rng(seed);
    (0..512).map(|_| u8::from(r.gen_bool(0.3))).collect()
}

fn set(m: &mut SegmentationModel, name: &str, value: NdArray) {
    m.store.by_name_mut(name).unwrap().value = value;
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn every_topology_has_the_same_output_shape() {
    for classes in [1, 2] {
        for mode in FusionMode::ALL {
            let m = model(mode, classes, 1);
            let input = m.prepare(&[&volume(2)]).unwrap();
            let p = m.predict(&input).unwrap();
            assert_eq!(p.shape(), &[1, classes, 8, 8, 8], "{mode}");
            assert!(p.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}

#[test]
fn indivisible_extents_name_the_axis() {
    let m = model(FusionMode::None, 1, 1);
    let v = Volume::filled([8, 8, 6], 0.0).unwrap();
    match m.prepare(&[&v]) {
        Err(ModelError::NotDivisible { axis, extent, multiple }) => assert_eq!((axis, extent, multiple), (2, 6, 4)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn identity_branches_pass_both_parts_to_the_unet() {
    let mut m = model(FusionMode::Early, 1, 3);
    let mut id = NdArray::zeros(&[3, 1, 3, 3, 3]);
    id.data_mut()[13] = 1.0;
    for b in ["branch_high", "branch_low"] {
        set(&mut m, &format!("{b}.weight"), id.clone());
    }
    let v = volume(4);
    let input = m.prepare(&[&v]).unwrap();
    let mut tape = Tape::new();
    let bind = m.store.bind(&mut tape, |_| false);
    let trace = m.forward_trace(&mut tape, &bind, &input).unwrap();
    let high = tape.slice_channels(trace.unet_input, 0, 1).unwrap();
    let low = tape.slice_channels(trace.unet_input, 3, 1).unwrap();
    let sum: Vec<f64> = high.data().iter().zip(low.data()).map(|(h, l)| h + l).collect();
    assert!(max_diff(&sum, v.data()) < 1e-6);
    // the other channels of an identity-on-channel-0 kernel are silent
    assert!(tape.slice_channels(trace.unet_input, 1, 2).unwrap().data().iter().all(|&x| x == 0.0));
}

#[test]
fn zero_projection_reduces_late_fusion_to_the_high_unet() {
    let mut m = model(FusionMode::Late, 1, 5);
    set(&mut m, "low_proj.weight", NdArray::zeros(&[1, 3, 1, 1, 1]));
    let input = m.prepare(&[&volume(6)]).unwrap();
    let mut tape = Tape::new();
    let bind = m.store.bind(&mut tape, |_| false);
    let trace = m.forward_trace(&mut tape, &bind, &input).unwrap();
    let s_h = tape.value(trace.unet_logits).clone();
    let expect: Vec<f64> = s_h.data().iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
    assert!(max_diff(tape.value(trace.probabilities).data(), &expect) < 1e-15);
}

fn grad_norms(m: &mut SegmentationModel, trainable: impl Fn(&str) -> bool) -> Vec<(String, Option<f64>)> {
    let input = m.prepare(&[&volume(7)]).unwrap();
    let mut tape = Tape::new();
    let bind = m.store.bind(&mut tape, &trainable);
    let p = m.forward(&mut tape, &bind, &input).unwrap();
    let loss = soft_dice_loss(&mut tape, p, &labels(8)).unwrap();
    tape.backward(loss).unwrap();
    m.store.collect_grads(&tape, &bind);
    m.store
        .params()
        .iter()
        .map(|p| (p.name.clone(), trainable(&p.name).then(|| p.grad.as_ref().unwrap().norm())))
        .collect()
}

#[test]
fn early_fusion_trains_both_branches() {
    let mut m = model(FusionMode::Early, 1, 9);
    let norms = grad_norms(&mut m, |_| true);
    for name in ["branch_high.weight", "branch_low.weight"] {
        let g = norms.iter().find(|(n, _)| n == name).unwrap().1.unwrap();
        assert!(g > 0.0, "{name}: {g}");
    }
}

#[test]
fn late_low_branch_learns_with_frozen_backbone() {
    let mut m = model(FusionMode::Late, 1, 10);
    let norms = grad_norms(&mut m, |n| !n.starts_with("unet."));
    for (name, g) in &norms {
        match g {
            Some(g) if name.starts_with("branch_low") || name.starts_with("low_proj") => {
                assert!(*g > 0.0, "{name}")
            }
            _ => {}
        }
    }
    let frozen = m.store.params().iter().filter(|p| p.name.starts_with("unet."));
    for p in frozen {
        assert_eq!(p.grad.as_ref().unwrap().norm(), 0.0, "{}", p.name);
    }
}

#[test]
fn parameter_counts_follow_the_topology() {
    let (bc, base, classes) = (3, 4, 2);
    let none = model(FusionMode::None, classes, 0);
    let early = model(FusionMode::Early, classes, 0);
    let late = model(FusionMode::Late, classes, 0);
    let branch = 2 * (bc * 27 + bc);
    assert_eq!(none.count_params("branch"), 0);
    assert_eq!(early.count_params("branch"), branch);
    assert_eq!(late.count_params("branch"), branch);
    assert_eq!(early.count_params("low_proj"), 0);
    assert_eq!(late.count_params("low_proj"), bc * classes + classes);
    // only the first U-Net convolution sees the input channels
    assert_eq!(early.count_params("unet.") - late.count_params("unet."), base * bc * 27);
    assert_eq!(late.count_params("unet.") - none.count_params("unet."), base * (bc - 1) * 27);
    for m in [&none, &early, &late] {
        assert_eq!(m.count_params(""), m.store.count());
    }
}

#[test]
fn same_seed_same_logits() {
    for mode in FusionMode::ALL {
        let v = volume(11);
        let a = model(mode, 1, 12);
        let b = model(mode, 1, 12);
        let c = model(mode, 1, 13);
        let pa = a.predict(&a.prepare(&[&v]).unwrap()).unwrap();
        let pb = b.predict(&b.prepare(&[&v]).unwrap()).unwrap();
        let pc = c.predict(&c.prepare(&[&v]).unwrap()).unwrap();
        let bits = |p: &NdArray| p.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&pa), bits(&pb));
        assert_ne!(bits(&pa), bits(&pc));
    }
}

#[test]
fn one_adam_step_moves_every_parameter() {
    for mode in FusionMode::ALL {
        let mut m = model(mode, 1, 14);
        let before = m.store.clone();
        grad_norms(&mut m, |_| true);
        Adam::new(1e-3).step(m.store.params_mut()).unwrap();
        for (old, new) in before.params().iter().zip(m.store.params()) {
            assert_ne!(old.value, new.value, "{mode}: {} did not move", old.name);
        }
    }
}

#[test]
fn baseline_ignores_constant_offsets_after_normalization() {
    let m = model(FusionMode::None, 1, 15);
    let v = volume(16);
    let shifted = Volume::new(EXT, v.data().iter().map(|x| x + 3.0).collect()).unwrap();
    let a = m.predict(&m.prepare(&[&minmax_normalize(&v)]).unwrap()).unwrap();
    let b = m.predict(&m.prepare(&[&minmax_normalize(&shifted)]).unwrap()).unwrap();
    assert!(max_diff(a.data(), b.data()) < 1e-9);
}

#[test]
fn checkpoint_restores_identical_predictions() {
    let m = model(FusionMode::Late, 2, 17);
    let ckpt = Checkpoint {
        config_hash: 42,
        params: m.store.params().iter().map(|p| (p.name.clone(), p.value.clone())).collect(),
    };
    let decoded = Checkpoint::decode(&ckpt.encode()).unwrap();
    let mut fresh = model(FusionMode::Late, 2, 99);
    fresh.store.load(decoded.params).unwrap();
    let v = volume(18);
    let a = m.predict(&m.prepare(&[&v]).unwrap()).unwrap();
    let b = fresh.predict(&fresh.prepare(&[&v]).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn loading_a_foreign_checkpoint_fails() {
    let early = model(FusionMode::Early, 1, 0);
    let mut late = model(FusionMode::Late, 1, 0);
    let params = early.store.params().iter().map(|p| (p.name.clone(), p.value.clone())).collect();
    assert!(late.store.load(params).is_err());
}

#[test]
fn batched_prediction_matches_single_items() {
    let m = model(FusionMode::Early, 1, 19);
    let (v1, v2) = (volume(20), volume(21));
    let both = m.predict(&m.prepare(&[&v1, &v2]).unwrap()).unwrap();
    let one = m.predict(&m.prepare(&[&v2]).unwrap()).unwrap();
    assert!(max_diff(&both.data()[512..], one.data()) < 1e-12);
}
