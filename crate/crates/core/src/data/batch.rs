use rand::seq::SliceRandom;
use rand::Rng;

/// Shuffled index batches covering `0..n`; the last batch may be short.
pub fn batch_iter<R: Rng>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be >= 1");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Endless stream of shuffled batches, reshuffling after each pass.
pub struct BatchIter<R: Rng> {
    n: usize,
    batch_size: usize,
    rng: R,
    pending: std::vec::IntoIter<Vec<usize>>,
}

impl<R: Rng> BatchIter<R> {
    pub fn new(n: usize, batch_size: usize, rng: R) -> Self {
        BatchIter {
            n,
            batch_size,
            rng,
            pending: Vec::new().into_iter(),
        }
    }
}

impl<R: Rng> Iterator for BatchIter<R> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.n == 0 {
            return None;
        }
        if let Some(b) = self.pending.next() {
            return Some(b);
        }
        self.pending = batch_iter(self.n, self.batch_size, &mut self.rng).into_iter();
        self.pending.next()
    }
}

/// Pads with `pad` or truncates to exactly `n` items.
pub fn pad_or_truncate<T: Clone>(items: &[T], n: usize, pad: T) -> Vec<T> {
    let mut out: Vec<T> = items.iter().take(n).cloned().collect();
    out.resize(n, pad);
    out
}
