use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DataError;

/// Independent child seed: the first word of stream `stream` of a ChaCha8
/// generator seeded with `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Subject-level train/validation/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// Validates non-empty, pairwise-disjoint partitions.
    pub fn new(
        train: Vec<String>,
        val: Vec<String>,
        test: Vec<String>,
        train_fraction: f64,
        seed: u64,
    ) -> Result<Self, DataError> {
        for (name, part) in [("train", &train), ("val", &val), ("test", &test)] {
            if part.is_empty() {
                return Err(DataError::EmptyPartition(name));
            }
        }
        if !(train_fraction > 0.0 && train_fraction <= 1.0) {
            return Err(DataError::Fraction(train_fraction));
        }
        let mut seen = std::collections::HashSet::new();
        for id in train.iter().chain(&val).chain(&test) {
            if !seen.insert(id.as_str()) {
                return Err(DataError::Leakage(id.clone()));
            }
        }
        Ok(Self {
            train,
            val,
            test,
            train_fraction,
            seed,
        })
    }
}

/// Partition sizes from fractions: validation and test are rounded, train
/// takes the remainder.
pub fn partition_sizes(n: usize, val_fraction: f64, test_fraction: f64) -> Result<[usize; 3], DataError> {
    for f in [val_fraction, test_fraction] {
        if !(0.0..1.0).contains(&f) {
            return Err(DataError::Fraction(f));
        }
    }
    let val = (val_fraction * n as f64).round() as usize;
    let test = (test_fraction * n as f64).round() as usize;
    let train = n.checked_sub(val + test).ok_or(DataError::EmptyPartition("train"))?;
    Ok([train, val, test])
}

/// Shuffles `ids` with `seed` and cuts them into `[train, val, test]`
/// partitions of the given sizes. Surplus subjects are left out.
pub fn make_split(ids: &[String], sizes: [usize; 3], seed: u64) -> Result<SplitSpec, DataError> {
    let mut unique = ids.to_vec();
    unique.sort();
    unique.dedup();
    if unique.len() != ids.len() {
        return Err(DataError::DuplicateSubject);
    }
    if sizes.iter().sum::<usize>() > ids.len() {
        return Err(DataError::NotEnoughSubjects {
            needed: sizes.iter().sum(),
            available: ids.len(),
        });
    }
    let mut shuffled = unique;
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut it = shuffled.into_iter();
    let mut take = |n: usize| {
        let mut v: Vec<String> = it.by_ref().take(n).collect();
        v.sort();
        v
    };
    let train = take(sizes[0]);
    let val = take(sizes[1]);
    let test = take(sizes[2]);
    SplitSpec::new(train, val, test, 1.0, seed)
}

/// Number of training subjects kept for `fraction`.
pub fn subsample_size(n_train: usize, fraction: f64) -> usize {
    ((fraction * n_train as f64).round() as usize).clamp(1, n_train)
}

/// Keeps a seeded subset of the training subjects; validation and test are
/// untouched.
pub fn subsample_train(split: &SplitSpec, fraction: f64, seed: u64) -> Result<SplitSpec, DataError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DataError::Fraction(fraction));
    }
    let k = subsample_size(split.train.len(), fraction);
    let train = if k == split.train.len() {
        split.train.clone()
    } else {
        let mut pool = split.train.clone();
        pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        pool.truncate(k);
        pool.sort();
        pool
    };
    SplitSpec::new(
        train,
        split.val.clone(),
        split.test.clone(),
        split.train_fraction * fraction,
        seed,
    )
}
