//! Deterministic ensemble reductions.

/// Samples per reduction chunk. Chunks are merged in index order, so results
/// do not depend on how many workers processed them.
pub(crate) const CHUNK: usize = 32;

/// Running (count, mean, M2) merged with Chan's pairwise update.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    n: f64,
    pub(crate) mean: f64,
    m2: f64,
}

impl Moments {
    pub(crate) fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    pub(crate) fn merge(&mut self, o: &Moments) {
        if o.n == 0.0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n / n;
        self.m2 += o.m2 + d * d * self.n * o.n / n;
        self.n = n;
    }

    /// Standard error of the mean.
    pub(crate) fn stderr(&self) -> f64 {
        if self.n < 2.0 {
            0.0
        } else {
            (self.m2 / (self.n - 1.0) / self.n).sqrt()
        }
    }
}
