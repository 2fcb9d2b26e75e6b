use rand::seq::SliceRandom;
use rand::Rng;

/// Endless reshuffled pass over `0..n`.
#[derive(Clone, Debug)]
pub struct Cycler {
    order: Vec<usize>,
    pos: usize,
}

impl Cycler {
    pub fn new<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Self { order, pos: 0 }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Next `b` indices, reshuffling whenever a pass completes. Never repeats an
    /// index within a batch, so a pool smaller than `b` yields a short batch.
    pub fn next_batch<R: Rng + ?Sized>(&mut self, b: usize, rng: &mut R) -> Vec<usize> {
        let n = self.order.len();
        let want = b.min(n);
        let mut out = Vec::with_capacity(want);
        while out.len() < want {
            if self.pos == n {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            let i = self.order[self.pos];
            self.pos += 1;
            if !out.contains(&i) {
                out.push(i);
            }
        }
        out
    }
}
