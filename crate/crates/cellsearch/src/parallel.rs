//! Batch mapping over independent work items. With the `parallel` feature
//! (the default) batches fan out on the rayon pool; without it they run as a
//! plain sequential loop. Both paths preserve input order, and every caller
//! in the crate reduces results in canonical cell order anyway, so the two
//! builds produce identical output.

/// Maps `f` over the items, in parallel when built with the `parallel`
/// feature. Output order matches input order.
#[cfg(feature = "parallel")]
pub fn map_batch<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_batch<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    map_batch_sequential(items, f)
}

/// The sequential path, always available; the benchmark suite compares it
/// against the parallel path directly.
pub fn map_batch_sequential<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_and_keep_order() {
        let items: Vec<u64> = (0..256).collect();
        let square = |v: &u64| v * v;
        assert_eq!(map_batch(&items, square), map_batch_sequential(&items, square));
        assert_eq!(map_batch(&items, square)[10], 100);
    }
}
