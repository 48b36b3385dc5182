use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use freqseg::data::{read_volume, write_phantom_dataset, write_volume, Volume};
use freqseg::experiment::{
    checkpoint, config_help, dataset, evaluate, log_text, probe_text, restore, run, run_split, run_sweep, write_sweep,
    ExperimentConfig, ExperimentError, ExperimentRecord, Subject, FAILURES_TXT,
};
use freqseg::frequency::disentangle;
use freqseg::models::Checkpoint;

#[derive(Parser)]
#[command(name = "freqseg", version, about = "Frequency-disentangled 3D segmentation", after_help = config_help())]
struct Cli {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `train.seed` (the master seed of sweeps).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a volume into its high and low frequency parts.
    Disentangle {
        /// Input SVOL volume.
        input: PathBuf,
        /// High-frequency ratio in (0, 1).
        #[arg(long, default_value_t = 0.5, value_parser = parse_theta)]
        theta: f64,
        /// Writes `<prefix>.high.svol` and `<prefix>.low.svol`.
        #[arg(long)]
        prefix: PathBuf,
    },
    /// Write a synthetic phantom dataset and its manifest.
    PhantomGen {
        /// Number of subjects; defaults to `data.count`.
        #[arg(long)]
        count: Option<usize>,
        /// Target directory; defaults to `data.dir`, then `--out`.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Train one model and save its best-validation checkpoint.
    Train,
    /// Score a checkpoint on held-out subjects.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = Part::Test)]
        split: Part,
        /// Evaluate these subject ids instead of a partition.
        #[arg(long, value_delimiter = ',')]
        subjects: Vec<String>,
        /// Allow scoring subjects the model was trained on.
        #[arg(long)]
        leak_ok: bool,
    },
    /// Train and evaluate every fraction x mode x seed cell.
    Sweep,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Part {
    Train,
    Val,
    Test,
}

fn parse_theta(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if t > 0.0 && t < 1.0 {
        Ok(t)
    } else {
        Err(format!("theta must lie strictly between 0 and 1, got {t}"))
    }
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<ExperimentError>() {
            Some(ExperimentError::Config(_)) => Failure::Usage(format!("{e:#}")),
            _ => Failure::Runtime(e),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Disentangle { input, theta, prefix } => cmd_disentangle(input, *theta, prefix)?,
        Command::PhantomGen { count, dir } => {
            let dir = dir.clone().or_else(|| cfg.data.dir.clone()).unwrap_or_else(|| cli.out.clone());
            let count = count.unwrap_or(cfg.data.count);
            let ids = write_phantom_dataset(&cfg.phantom, count, &dir)
                .with_context(|| format!("writing phantoms to {}", dir.display()))?;
            println!("wrote {} subjects to {}", ids.len(), dir.display());
        }
        Command::Train => cmd_train(&cfg, &cli.out)?,
        Command::Evaluate {
            checkpoint,
            split,
            subjects,
            leak_ok,
        } => cmd_evaluate(&cfg, &cli.out, checkpoint, *split, subjects, *leak_ok)?,
        Command::Sweep => {
            let subjects = dataset(&cfg)?;
            let outcome = run_sweep(&cfg, &subjects);
            create_dir(&cli.out)?;
            write_sweep(&cli.out, &outcome)?;
            print!("{}", freqseg::experiment::results_table(&outcome));
            if !outcome.failures.is_empty() {
                return Err(Failure::Runtime(anyhow::anyhow!(
                    "{} of {} cells failed, see {}",
                    outcome.failures.len(),
                    outcome.failures.len() + outcome.results.len(),
                    cli.out.join(FAILURES_TXT).display()
                )));
            }
        }
    }
    Ok(())
}

fn cmd_disentangle(input: &Path, theta: f64, prefix: &Path) -> anyhow::Result<()> {
    let v = read_volume(input).with_context(|| format!("reading {}", input.display()))?;
    let pair = disentangle(v.extents(), v.data(), theta)?;
    let err = pair
        .high
        .iter()
        .zip(&pair.low)
        .zip(v.data())
        .fold(0.0f64, |m, ((h, l), x)| m.max((h + l - x).abs()));
    let name = |part: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(format!(".{part}.svol"));
        PathBuf::from(s)
    };
    for (part, data) in [("high", pair.high), ("low", pair.low)] {
        let mut out = Volume::new(v.extents(), data)?;
        out.spacing = v.spacing;
        let path = name(part);
        write_volume(&path, &out).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("reconstruction max error {err:e}");
    println!("discarded imaginary part {:e}", pair.imag_residue);
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let subjects = dataset(cfg)?;
    let outcome = run(cfg, &subjects)?;
    create_dir(out)?;
    let ckpt_path = out.join("model.ckpt");
    checkpoint(cfg, &outcome.training.model).save(&ckpt_path)?;
    write(&out.join("config.toml"), cfg.to_toml())?;
    write(&out.join("train.log"), log_text(&outcome.training))?;
    if !outcome.training.probe.is_empty() {
        write(&out.join("probe.txt"), probe_text(&outcome.training.probe))?;
    }
    let record = ExperimentRecord {
        task: cfg.data.task.clone(),
        fraction: cfg.train.fraction,
        n_train: outcome.split.train.len(),
        mode: cfg.model.mode,
        seed: cfg.train.seed,
        report: outcome.report.clone(),
        wall_s: 0.0,
        checkpoint: Some(ckpt_path.clone()),
        config_hash: cfg.hash_hex(),
        epochs: cfg.train.epochs,
        best_epoch: outcome.training.best_epoch,
    };
    write(&out.join("record.txt"), record.to_text())?;
    let last = outcome.training.log.last().expect("at least one epoch");
    println!("best epoch {} of {}, final train loss {:.6}", outcome.training.best_epoch, cfg.train.epochs, last.train_loss);
    println!("checkpoint {} (config {})", ckpt_path.display(), cfg.hash_hex());
    print!("{}", outcome.report.to_table());
    Ok(())
}

fn cmd_evaluate(
    cfg: &ExperimentConfig,
    out: &Path,
    ckpt_path: &Path,
    part: Part,
    ids: &[String],
    leak_ok: bool,
) -> Result<(), Failure> {
    let ckpt = Checkpoint::load(ckpt_path).with_context(|| format!("reading {}", ckpt_path.display()))?;
    let model = restore(cfg, ckpt)?;
    let all = dataset(cfg)?;
    let all_ids: Vec<String> = all.iter().map(|s| s.id.clone()).collect();
    let split = run_split(cfg, &all_ids)?;
    let chosen: Vec<String> = if !ids.is_empty() {
        ids.to_vec()
    } else {
        match part {
            Part::Train => split.train.clone(),
            Part::Val => split.val.clone(),
            Part::Test => split.test.clone(),
        }
    };
    if !leak_ok {
        if let Some(id) = chosen.iter().find(|id| split.train.contains(id)) {
            return Err(Failure::Usage(format!("{id} was used for training; pass --leak-ok to score it anyway")));
        }
    }
    let subjects: Vec<Subject> = chosen
        .iter()
        .map(|id| {
            all.iter()
                .find(|s| &s.id == id)
                .cloned()
                .ok_or_else(|| Failure::Usage(format!("unknown subject {id}")))
        })
        .collect::<Result<_, _>>()?;
    let report = evaluate(cfg, &model, &subjects)?;
    create_dir(out)?;
    write(&out.join("report.txt"), report.to_record())?;
    print!("{}", report.to_table());
    Ok(())
}
