use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Example, Split};
use crate::error::{Error, Result};

/// Default mini-batch size.
pub const DEFAULT_BATCH: usize = 32;

/// Splits `0..len` into consecutive batches of `batch_size` (the last one may
/// be short). With `shuffle = Some((seed, epoch))` the order is a seeded
/// permutation that differs per epoch.
pub fn batch_indices(len: usize, batch_size: usize, shuffle: Option<(u64, u64)>) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Usage("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..len).collect();
    if let Some((seed, epoch)) = shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch + 1);
        order.shuffle(&mut rng);
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Batches of one split. Training batches are shuffled per epoch from `seed`;
/// test batches always come in manifest order.
pub fn batch_iter<'a>(
    dataset: &'a Dataset,
    split: Split,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<&'a Example>>> {
    let items = dataset.split(split);
    if items.is_empty() {
        return Err(Error::EmptySplit(split.to_string()));
    }
    let shuffle = (split == Split::Train).then_some((seed, epoch));
    Ok(batch_indices(items.len(), batch_size, shuffle)?
        .into_iter()
        .map(|b| b.into_iter().map(|i| items[i]).collect())
        .collect())
}
