//! Fraction × fusion mode × seed sweeps.
//!
//! Cell `(fraction, mode, r)` trains with seed `train.seed + r`. The train
//! subset depends only on that seed and the fraction, so the three modes of
//! a replicate see the same subjects; validation and test come from the
//! fixed base split. Every output is ordered by `(fraction, mode, seed)`,
//! never by completion order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{checkpoint, log_text, probe_text, run, ExperimentConfig, ExperimentError, ExperimentRecord, RunOutcome, Subject};
use crate::data::SplitSpec;
use crate::models::{Checkpoint, FusionMode};

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_TXT: &str = "results.txt";
pub const CELLS_TXT: &str = "cells.txt";
pub const FAILURES_TXT: &str = "failures.txt";
pub const TIMING_TXT: &str = "timing.txt";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub fraction: f64,
    pub mode: FusionMode,
    pub seed: u64,
}

impl Cell {
    /// Directory-safe name, e.g. `f0.2_late_s3`.
    pub fn name(&self) -> String {
        format!("f{}_{}_s{}", self.fraction, self.mode, self.seed)
    }
}

/// Every cell of the sweep in canonical order.
pub fn sweep_cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut fractions = cfg.sweep.fractions.clone();
    fractions.sort_by(f64::total_cmp);
    let mut modes = cfg.sweep.modes.clone();
    modes.sort_by_key(|m| FusionMode::ALL.iter().position(|x| x == m));
    let mut cells = Vec::new();
    for &fraction in &fractions {
        for &mode in &modes {
            for r in 0..cfg.sweep.seeds as u64 {
                cells.push(Cell {
                    fraction,
                    mode,
                    seed: cfg.train.seed.wrapping_add(r),
                });
            }
        }
    }
    cells
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task: String,
    pub fraction: f64,
    pub n_train: usize,
    pub mode: FusionMode,
    pub seed: u64,
    pub dice_mean: f64,
    pub dice_lo: f64,
    pub dice_hi: f64,
    pub hd95_mean: f64,
    pub hd95_lo: f64,
    pub hd95_hi: f64,
    pub wall_s: f64,
    pub config_hash: String,
}

impl ResultRow {
    pub fn from_record(r: &ExperimentRecord) -> Self {
        Self {
            task: r.task.clone(),
            fraction: r.fraction,
            n_train: r.n_train,
            mode: r.mode,
            seed: r.seed,
            dice_mean: r.report.dice.mean,
            dice_lo: r.report.dice.low,
            dice_hi: r.report.dice.high,
            hd95_mean: r.report.hd95.mean,
            hd95_lo: r.report.hd95.low,
            hd95_hi: r.report.hd95.high,
            wall_s: r.wall_s,
            config_hash: r.config_hash.clone(),
        }
    }
}

pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| ExperimentError::Io(path.display().to_string(), e))
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

fn csv_error(path: &Path, e: csv::Error) -> ExperimentError {
    ExperimentError::Csv(format!("{}: {e}", path.display()))
}

/// A completed cell: its record, split and training trace.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub record: ExperimentRecord,
    pub split: SplitSpec,
    pub log: String,
    pub probe: Vec<Vec<f64>>,
    pub checkpoint: Checkpoint,
    /// Measured wall time, reported in `timing.txt` whatever the config says.
    pub wall_s: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub results: Vec<CellResult>,
    pub failures: Vec<(Cell, String)>,
}

impl SweepOutcome {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.results.iter().map(|r| ResultRow::from_record(&r.record)).collect()
    }

    /// Median test Dice over seeds for one fraction and mode.
    pub fn median_dice(&self, fraction: f64, mode: FusionMode) -> Option<f64> {
        let v: Vec<f64> = self
            .results
            .iter()
            .filter(|r| r.cell.fraction == fraction && r.cell.mode == mode)
            .map(|r| r.record.report.dice.mean)
            .collect();
        median(&v)
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Trains and evaluates one cell.
pub fn run_cell(cfg: &ExperimentConfig, subjects: &[Subject], cell: Cell) -> Result<CellResult, ExperimentError> {
    let cell_cfg = cfg.for_cell(cell.mode, cell.fraction, cell.seed);
    let start = Instant::now();
    let RunOutcome { split, training, report } = run(&cell_cfg, subjects)?;
    let wall = start.elapsed().as_secs_f64();
    let record = ExperimentRecord {
        task: cell_cfg.data.task.clone(),
        fraction: cell.fraction,
        n_train: split.train.len(),
        mode: cell.mode,
        seed: cell.seed,
        report,
        wall_s: if cfg.sweep.record_wall_time { wall } else { 0.0 },
        checkpoint: Some(PathBuf::from("checkpoints").join(format!("{}.ckpt", cell.name()))),
        config_hash: cell_cfg.hash_hex(),
        epochs: cell_cfg.train.epochs,
        best_epoch: training.best_epoch,
    };
    Ok(CellResult {
        cell,
        record,
        split,
        log: log_text(&training),
        probe: training.probe.clone(),
        checkpoint: checkpoint(&cell_cfg, &training.model),
        wall_s: wall,
    })
}

/// Runs every cell on `cfg.sweep.workers` threads. Failed cells are
/// collected, not fatal.
pub fn run_sweep(cfg: &ExperimentConfig, subjects: &[Subject]) -> SweepOutcome {
    let cells = sweep_cells(cfg);
    let slots: Vec<Mutex<Option<Result<CellResult, String>>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = cfg.sweep.workers.clamp(1, cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&cell) = cells.get(i) else { break };
                let result = run_cell(cfg, subjects, cell).map_err(|e| e.to_string());
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    let mut outcome = SweepOutcome {
        results: Vec::new(),
        failures: Vec::new(),
    };
    for (cell, slot) in cells.into_iter().zip(slots) {
        match slot.into_inner().expect("slot lock").expect("every cell runs") {
            Ok(r) => outcome.results.push(r),
            Err(e) => outcome.failures.push((cell, e)),
        }
    }
    outcome
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|e| ExperimentError::Io(path.display().to_string(), e))
}

fn create_dir(path: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(path).map_err(|e| ExperimentError::Io(path.display().to_string(), e))
}

/// Writes the sweep artifacts under `out`:
///
/// ```text
/// results.csv    one row per cell
/// results.txt    aligned table plus per-mode medians
/// cells.txt      train/val/test ids of every cell
/// failures.txt   failed cells and their errors
/// timing.txt     wall-clock seconds per cell (not reproducible)
/// records/       full per-cell metric records
/// logs/          per-epoch training logs and frequency-error traces
/// checkpoints/   best-validation weights
/// ```
pub fn write_sweep(out: &Path, outcome: &SweepOutcome) -> Result<(), ExperimentError> {
    for sub in ["records", "logs", "checkpoints"] {
        create_dir(&out.join(sub))?;
    }
    write_csv(&out.join(RESULTS_CSV), &outcome.rows())?;
    write(&out.join(RESULTS_TXT), results_table(outcome))?;

    let mut cells = String::new();
    let mut timing = String::new();
    for r in &outcome.results {
        let name = r.cell.name();
        let s = &r.split;
        writeln!(cells, "{name} train={}", s.train.join(",")).expect("string write");
        writeln!(cells, "{name} val={}", s.val.join(",")).expect("string write");
        writeln!(cells, "{name} test={}", s.test.join(",")).expect("string write");
        writeln!(timing, "{name} {:.3}", r.wall_s).expect("string write");
        write(&out.join("records").join(format!("{name}.txt")), r.record.to_text())?;
        write(&out.join("logs").join(format!("{name}.log")), &r.log)?;
        if !r.probe.is_empty() {
            write(&out.join("logs").join(format!("{name}.probe")), probe_text(&r.probe))?;
        }
        let path = out.join("checkpoints").join(format!("{name}.ckpt"));
        r.checkpoint.save(&path)?;
    }
    write(&out.join(CELLS_TXT), cells)?;
    write(&out.join(TIMING_TXT), timing)?;
    let mut failures = String::new();
    for (cell, e) in &outcome.failures {
        writeln!(failures, "{} {e}", cell.name()).expect("string write");
    }
    write(&out.join(FAILURES_TXT), failures)
}

/// Per-cell table in the layout of the results tables, followed by the
/// median Dice over seeds for each fraction and mode.
pub fn results_table(outcome: &SweepOutcome) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<10} {:>8} {:>7} {:<6} {:>6}  {:<24} HD95",
        "task", "fraction", "n_train", "mode", "seed", "Dice (%)"
    )
    .expect("string write");
    for r in &outcome.results {
        let (d, h) = (&r.record.report.dice, &r.record.report.hd95);
        writeln!(
            s,
            "{:<10} {:>8} {:>7} {:<6} {:>6}  {:<24} {:.2} [{:.2},{:.2}]",
            r.record.task,
            r.cell.fraction,
            r.record.n_train,
            r.cell.mode,
            r.cell.seed,
            format!("{:.2} [{:.2},{:.2}]", 100.0 * d.mean, 100.0 * d.low, 100.0 * d.high),
            h.mean,
            h.low,
            h.high
        )
        .expect("string write");
    }
    let mut keys: Vec<(f64, FusionMode)> = Vec::new();
    for r in &outcome.results {
        if !keys.contains(&(r.cell.fraction, r.cell.mode)) {
            keys.push((r.cell.fraction, r.cell.mode));
        }
    }
    writeln!(s, "\nmedian Dice (%) over seeds").expect("string write");
    for (f, m) in keys {
        if let Some(d) = outcome.median_dice(f, m) {
            writeln!(s, "{:>8} {:<6} {:.2}", f, m, 100.0 * d).expect("string write");
        }
    }
    s
}
