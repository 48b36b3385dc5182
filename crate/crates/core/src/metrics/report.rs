//! Per-subject metrics with bootstrap intervals, and their flat text form.
//!
//! The record is one `key = value` pair per line. Aggregates come first,
//! then one `subject = <id> <dice> <hd95>` line per test subject. Floats use
//! the shortest representation that parses back to the same bits.

use std::fmt::Write as _;

use super::{bootstrap_ci, BootstrapCi, MetricError};

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectScore {
    pub id: String,
    pub dice: f64,
    pub hd95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub subjects: Vec<SubjectScore>,
    pub dice: BootstrapCi,
    pub hd95: BootstrapCi,
    pub resamples: usize,
    pub seed: u64,
}

impl MetricReport {
    pub fn from_scores(subjects: Vec<SubjectScore>, resamples: usize, seed: u64) -> Result<Self, MetricError> {
        let dice: Vec<f64> = subjects.iter().map(|s| s.dice).collect();
        let hd: Vec<f64> = subjects.iter().map(|s| s.hd95).collect();
        Ok(Self {
            dice: bootstrap_ci(&dice, resamples, seed)?,
            hd95: bootstrap_ci(&hd, resamples, seed.wrapping_add(1))?,
            subjects,
            resamples,
            seed,
        })
    }

    pub fn n_test(&self) -> usize {
        self.subjects.len()
    }

    pub fn to_record(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        kv("n_test", self.n_test().to_string());
        kv("bootstrap_resamples", self.resamples.to_string());
        kv("bootstrap_seed", self.seed.to_string());
        for (name, ci) in [("dice", &self.dice), ("hd95", &self.hd95)] {
            kv(&format!("{name}_mean"), ci.mean.to_string());
            kv(&format!("{name}_lo"), ci.low.to_string());
            kv(&format!("{name}_hi"), ci.high.to_string());
        }
        for sub in &self.subjects {
            kv("subject", format!("{} {} {}", sub.id, sub.dice, sub.hd95));
        }
        s
    }

    pub fn from_record(text: &str) -> Result<Self, MetricError> {
        let bad = |line: &str| MetricError::Record(line.to_string());
        let mut n_test = None;
        let mut resamples = None;
        let mut seed = None;
        let mut vals = std::collections::HashMap::new();
        let mut subjects = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once(" = ").ok_or_else(|| bad(line))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(line));
            match k {
                "n_test" => n_test = Some(v.parse::<usize>().map_err(|_| bad(line))?),
                "bootstrap_resamples" => resamples = Some(v.parse::<usize>().map_err(|_| bad(line))?),
                "bootstrap_seed" => seed = Some(v.parse::<u64>().map_err(|_| bad(line))?),
                "subject" => {
                    let parts: Vec<&str> = v.split(' ').collect();
                    let [id, d, h] = parts[..] else {
                        return Err(bad(line));
                    };
                    subjects.push(SubjectScore {
                        id: id.to_string(),
                        dice: num(d)?,
                        hd95: num(h)?,
                    });
                }
                _ => {
                    vals.insert(k.to_string(), num(v)?);
                }
            }
        }
        let get = |k: &str| vals.get(k).copied().ok_or_else(|| MetricError::Record(format!("missing {k}")));
        let ci = |p: &str| -> Result<BootstrapCi, MetricError> {
            Ok(BootstrapCi {
                mean: get(&format!("{p}_mean"))?,
                low: get(&format!("{p}_lo"))?,
                high: get(&format!("{p}_hi"))?,
            })
        };
        if n_test != Some(subjects.len()) {
            return Err(MetricError::Record("n_test does not match subject lines".into()));
        }
        Ok(Self {
            dice: ci("dice")?,
            hd95: ci("hd95")?,
            subjects,
            resamples: resamples.ok_or_else(|| MetricError::Record("missing bootstrap_resamples".into()))?,
            seed: seed.ok_or_else(|| MetricError::Record("missing bootstrap_seed".into()))?,
        })
    }

    /// Aligned table: Dice in percent and HD95, each with its interval.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:<14} {:>8} {:>10}", "subject", "Dice (%)", "HD95").unwrap();
        for sub in &self.subjects {
            writeln!(s, "{:<14} {:>8.2} {:>10.2}", sub.id, 100.0 * sub.dice, sub.hd95).unwrap();
        }
        writeln!(
            s,
            "{:<14} {:.2} [{:.2},{:.2}]  {:.2} [{:.2},{:.2}]",
            format!("mean (n={})", self.n_test()),
            100.0 * self.dice.mean,
            100.0 * self.dice.low,
            100.0 * self.dice.high,
            self.hd95.mean,
            self.hd95.low,
            self.hd95.high
        )
        .unwrap();
        s
    }
}
