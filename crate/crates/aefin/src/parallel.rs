//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (the default) these fan work out over rayon;
//! without it they run plain loops. Both paths combine floating-point partial
//! results in an order fixed by data index, never by thread, so a given input
//! produces bit-identical output regardless of feature flags or thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used when folding per-row results into an accumulator.
/// Fixed so the float association order is independent of thread scheduling.
pub const FOLD_CHUNK: usize = 8;

/// Maps `f` over `0..n`, preserving index order in the output.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Folds `0..n` into an accumulator in `FOLD_CHUNK`-sized index chunks.
///
/// Each chunk is folded sequentially with `fold`, chunks are combined in
/// ascending chunk order with `merge`. The association order is a pure
/// function of `n`, so sequential and parallel builds agree bitwise.
pub fn chunked_fold<A, FI, FF, FM>(n: usize, init: FI, fold: FF, mut merge: FM) -> A
where
    A: Send,
    FI: Fn() -> A + Sync + Send,
    FF: Fn(&mut A, usize) + Sync + Send,
    FM: FnMut(&mut A, A),
{
    if n == 0 {
        return init();
    }
    let n_chunks = n.div_ceil(FOLD_CHUNK);
    let chunk_acc = |ci: usize| {
        let mut acc = init();
        let start = ci * FOLD_CHUNK;
        let end = (start + FOLD_CHUNK).min(n);
        for i in start..end {
            fold(&mut acc, i);
        }
        acc
    };
    let partials: Vec<A> = map_indexed(n_chunks, chunk_acc);
    let mut iter = partials.into_iter();
    let mut total = iter.next().expect("n > 0 implies at least one chunk");
    for p in iter {
        merge(&mut total, p);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let v = map_indexed(100, |i| i * 2);
        assert_eq!(v, (0..100).map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn fold_matches_manual_chunked_sum() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let got = chunked_fold(
            xs.len(),
            || 0.0f64,
            |acc, i| *acc += xs[i],
            |acc, p| *acc += p,
        );
        let mut expect = 0.0;
        for chunk in xs.chunks(FOLD_CHUNK) {
            let mut partial = 0.0;
            for x in chunk {
                partial += x;
            }
            expect += partial;
        }
        assert_eq!(got.to_bits(), expect.to_bits());
    }

    #[test]
    fn fold_empty_is_init() {
        let got = chunked_fold(0, || 42.0f64, |_, _| unreachable!(), |_, _| unreachable!());
        assert_eq!(got, 42.0);
    }
}
