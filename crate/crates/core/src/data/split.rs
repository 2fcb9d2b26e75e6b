use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle followed by a contiguous train/val/test cut.
///
/// Validation and test sizes are `round(n * fraction)`; train takes the rest.
/// A split with a positive fraction that would end up empty is an error.
pub fn split<T>(mut items: Vec<T>, fractions: [f64; 3], seed: u64) -> Result<Split<T>> {
    if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
        return Err(Error::Config(format!("split fractions out of range: {fractions:?}")));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions sum to {sum}, not 1")));
    }
    let n = items.len();
    let n_val = (n as f64 * fractions[1]).round() as usize;
    let n_test = (n as f64 * fractions[2]).round() as usize;
    let n_train = n
        .checked_sub(n_val + n_test)
        .ok_or_else(|| Error::Data("split sizes exceed corpus size".into()))?;
    for (name, f, size) in [
        ("train", fractions[0], n_train),
        ("validation", fractions[1], n_val),
        ("test", fractions[2], n_test),
    ] {
        if f > 0.0 && size == 0 {
            return Err(Error::Data(format!(
                "corpus of {n} items too small for a non-empty {name} split"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
    let test = items.split_off(n_train + n_val);
    let val = items.split_off(n_train);
    Ok(Split {
        train: items,
        val,
        test,
    })
}
