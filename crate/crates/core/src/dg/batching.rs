use rand::seq::SliceRandom;
use rand::Rng;

/// Draws mini-batches of indices `0..n` without replacement, reshuffling
/// whenever the current permutation runs out.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    n: usize,
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchSampler {
    pub fn new(n: usize, batch_size: usize) -> Self {
        assert!(batch_size >= 1, "batch size must be >= 1");
        Self {
            n,
            batch_size,
            order: (0..n).collect(),
            cursor: n,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Starts a fresh permutation.
    pub fn reshuffle<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.order.shuffle(rng);
        self.cursor = 0;
    }

    /// Next batch of `min(batch_size, n)` distinct indices. When fewer than
    /// `batch_size` indices remain in the current permutation a new one is
    /// started.
    pub fn next_batch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<usize> {
        if self.n == 0 {
            return Vec::new();
        }
        let size = self.batch_size.min(self.n);
        if self.cursor + size > self.n {
            self.reshuffle(rng);
        }
        let out = self.order[self.cursor..self.cursor + size].to_vec();
        self.cursor += size;
        out
    }
}

/// One full pass over `0..n` in shuffled batches; the last batch holds the
/// remainder.
pub fn epoch_batches<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be >= 1");
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn epoch_covers_every_index_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = epoch_batches(70, 32, &mut rng);
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![32, 32, 6]);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..70).collect::<Vec<_>>());
    }

    #[test]
    fn sampler_is_without_replacement_within_a_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = BatchSampler::new(100, 32);
        s.reshuffle(&mut rng);
        let mut seen: Vec<usize> = (0..3).flat_map(|_| s.next_batch(&mut rng)).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 96);
        assert_eq!(s.next_batch(&mut rng).len(), 32);
    }

    #[test]
    fn small_subject_gives_undersized_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = BatchSampler::new(5, 32);
        let mut b = s.next_batch(&mut rng);
        b.sort_unstable();
        assert_eq!(b, vec![0, 1, 2, 3, 4]);
    }
}
