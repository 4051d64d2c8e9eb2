use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::generate::mix;

/// Index batches over `n` items. With a seed, the order is a deterministic
/// shuffle for that `(seed, epoch)`; without, the natural order.
#[derive(Clone, Debug)]
pub struct BatchIter {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
}

impl BatchIter {
    pub fn new(n: usize, batch_size: usize, shuffle: Option<(u64, u64)>) -> Self {
        assert!(batch_size >= 1, "batch_size must be at least 1");
        let mut order: Vec<usize> = (0..n).collect();
        if let Some((seed, epoch)) = shuffle {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(seed, epoch)));
        }
        Self {
            order,
            pos: 0,
            batch: batch_size,
        }
    }
}

impl Iterator for BatchIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let out = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(out)
    }
}

/// Batches of references into `data`.
pub fn batch_iter<T>(data: &[T], batch_size: usize, shuffle_seed: Option<(u64, u64)>) -> impl Iterator<Item = Vec<&T>> {
    BatchIter::new(data.len(), batch_size, shuffle_seed).map(move |ix| ix.into_iter().map(|i| &data[i]).collect())
}
