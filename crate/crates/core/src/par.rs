//! Execution policy for the data-parallel loops.
//!
//! Work is always split into the same fixed blocks and reduced in block
//! order, so `Sequential` and `Parallel` produce bit-identical results.
//! Without the `parallel` feature, or on a single-thread pool, `Parallel`
//! runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

#[cfg(feature = "parallel")]
fn threaded(exec: Execution) -> bool {
    exec == Execution::Parallel && rayon::current_num_threads() > 1
}

/// `(0..n).map(f)` collected in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if threaded(exec) {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Applies `f(block_index, block)` to consecutive `block_len` chunks of `data`,
/// returning the per-block results in order.
pub fn map_chunks_mut<T, U, F>(exec: Execution, data: &mut [U], block_len: usize, f: F) -> Vec<T>
where
    T: Send,
    U: Send,
    F: Fn(usize, &mut [U]) -> T + Sync + Send,
{
    let block_len = block_len.max(1);
    #[cfg(feature = "parallel")]
    if threaded(exec) {
        use rayon::prelude::*;
        return data
            .par_chunks_mut(block_len)
            .enumerate()
            .map(|(b, chunk)| f(b, chunk))
            .collect();
    }
    let _ = exec;
    data.chunks_mut(block_len)
        .enumerate()
        .map(|(b, chunk)| f(b, chunk))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_policies_agree() {
        let a = map_indexed(Execution::Sequential, 100, |i| (i as f64).sqrt());
        let b = map_indexed(Execution::Parallel, 100, |i| (i as f64).sqrt());
        assert_eq!(a, b);

        let mut xs: Vec<f64> = (0..37).map(|i| i as f64).collect();
        let mut ys = xs.clone();
        let sa = map_chunks_mut(Execution::Sequential, &mut xs, 5, |b, c| {
            c.iter_mut().for_each(|v| *v *= 2.0);
            b
        });
        let sb = map_chunks_mut(Execution::Parallel, &mut ys, 5, |b, c| {
            c.iter_mut().for_each(|v| *v *= 2.0);
            b
        });
        assert_eq!(sa, sb);
        assert_eq!(xs, ys);
    }
}
