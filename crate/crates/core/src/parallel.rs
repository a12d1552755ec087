//! Execution policy for the data-parallel inner loops.
//!
//! With the `parallel` feature the loops run on the rayon pool; without it
//! every policy degrades to the sequential path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecPolicy {
    Sequential,
    Parallel,
}

impl Default for ExecPolicy {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecPolicy::Parallel
        } else {
            ExecPolicy::Sequential
        }
    }
}

/// Below this many elements the parallel path is not worth the split.
pub(crate) const PAR_THRESHOLD: usize = 1 << 12;

impl ExecPolicy {
    #[cfg(feature = "parallel")]
    fn use_pool(self, len: usize) -> bool {
        self == ExecPolicy::Parallel && len >= PAR_THRESHOLD
    }

    /// Writes `f(k)` into `out[k]` for every index.
    pub fn fill<T, F>(self, out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.use_pool(out.len()) {
            out.par_iter_mut().enumerate().for_each(|(k, slot)| *slot = f(k));
            return;
        }
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = f(k);
        }
    }

    /// Maps every item of `items` through `f`, preserving order.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.use_pool(items.len()) {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Applies `f` to consecutive chunks of `items`, returning the partial
    /// results in chunk order so callers can merge them deterministically.
    pub fn map_chunks<T, A, F>(self, items: &[T], chunk: usize, f: F) -> Vec<A>
    where
        T: Sync,
        A: Send,
        F: Fn(&[T]) -> A + Sync + Send,
    {
        let chunk = chunk.max(1);
        #[cfg(feature = "parallel")]
        if self.use_pool(items.len()) {
            return items.par_chunks(chunk).map(f).collect();
        }
        items.chunks(chunk).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree() {
        let items: Vec<u64> = (0..20_000).collect();
        for policy in [ExecPolicy::Sequential, ExecPolicy::Parallel] {
            let mut out = vec![0u64; items.len()];
            policy.fill(&mut out, |k| (k as u64) * 3);
            assert_eq!(out[19_999], 59_997);
            assert_eq!(policy.map(&items, |x| x + 1)[0], 1);
            let parts = policy.map_chunks(&items, 4096, |c| c.iter().sum::<u64>());
            assert_eq!(parts.len(), 5);
            assert_eq!(parts.iter().sum::<u64>(), 19_999 * 20_000 / 2);
        }
    }
}
