use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, stream::SPLIT));
    idx
}

/// Seeded `(train, test)` row indices with `round(n · test_fraction)` test
/// rows.
pub fn train_test_split(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::InvalidInput(format!(
            "splitting {n} rows at {test_fraction} leaves an empty side"
        )));
    }
    let idx = shuffled(n, seed);
    Ok((idx[n_test..].to_vec(), idx[..n_test].to_vec()))
}

/// `folds` seeded `(train, validation)` pairs. Validation folds partition
/// `0..n` and differ in size by at most one, larger folds first.
pub fn k_fold(n: usize, folds: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if folds < 2 {
        return Err(Error::Config(format!("k-fold needs at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(Error::InvalidInput(format!("cannot cut {n} rows into {folds} folds")));
    }
    let idx = shuffled(n, seed);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = n / folds + usize::from(f < n % folds);
        let val = idx[start..start + size].to_vec();
        let train = idx[..start].iter().chain(&idx[start + size..]).copied().collect();
        out.push((train, val));
        start += size;
    }
    Ok(out)
}
