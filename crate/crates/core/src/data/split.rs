use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PouringSequence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<PouringSequence>,
    pub validation: Vec<PouringSequence>,
    pub test: Vec<PouringSequence>,
}

/// `(train, validation, test)` sizes for `n` sequences: 70% train (floored),
/// then 90% of the remainder to validation (floored), the rest to test.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 7 / 10;
    let rest = n - train;
    let validation = rest * 9 / 10;
    (train, validation, rest - validation)
}

/// Seeded shuffle followed by the 70 / 27 / 3 partition of [`split_sizes`].
pub fn split_dataset(sequences: &[PouringSequence], seed: u64) -> Result<DatasetSplit> {
    let n = sequences.len();
    if n < 10 {
        return Err(Error::invalid(format!("need at least 10 sequences to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let (n_train, n_val, _) = split_sizes(n);
    let pick = |idx: &[usize]| idx.iter().map(|&i| sequences[i].clone()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train: pick(&order[..n_train]),
        validation: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}
