//! Overfits the baseline U-Net on one phantom and prints the log.
//!
//! cargo run --release --example overfit -- [mode] [epochs]

use std::time::Instant;

use freqseg::data::{generate_phantom, minmax_normalize, PhantomSpec};
use freqseg::experiment::{train, Subject, TrainSettings};
use freqseg::models::{FusionConfig, FusionMode, SegmentationModel};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let mode: FusionMode = args.next().as_deref().unwrap_or("none").parse()?;
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);
    let (volume, mask) = generate_phantom(&PhantomSpec::default())?;
    let subject = Subject {
        id: "subj_0000".into(),
        volume: minmax_normalize(&volume),
        mask,
    };
    let fusion = FusionConfig { mode, ..FusionConfig::default() };
    let model = SegmentationModel::new(fusion.unet_config(1, 3, 8), fusion, 0)?;
    let settings = TrainSettings { epochs, probe_bands: 8, ..TrainSettings::default() };
    let start = Instant::now();
    let out = train(model, std::slice::from_ref(&subject), std::slice::from_ref(&subject), &settings)?;
    for r in out.log.iter().step_by(10) {
        println!("{}", r.to_line());
    }
    println!("best epoch {} in {:.1}s", out.best_epoch, start.elapsed().as_secs_f64());
    Ok(())
}
