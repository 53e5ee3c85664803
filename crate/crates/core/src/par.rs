//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these run on rayon; without it they
//! fall back to plain iterators. Results are always returned in input order,
//! so callers see identical output either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Whether this build runs the helpers on rayon.
pub const ENABLED: bool = cfg!(feature = "parallel");

#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_seq(items, f)
}

/// Sequential reference for [`map`].
pub fn map_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n` and sums the results.
#[cfg(feature = "parallel")]
pub fn sum_range<F>(n: usize, f: F) -> u64
where
    F: Fn(usize) -> u64 + Sync + Send,
{
    (0..n).into_par_iter().map(f).sum()
}

#[cfg(not(feature = "parallel"))]
pub fn sum_range<F>(n: usize, f: F) -> u64
where
    F: Fn(usize) -> u64 + Sync + Send,
{
    sum_range_seq(n, f)
}

pub fn sum_range_seq<F>(n: usize, f: F) -> u64
where
    F: Fn(usize) -> u64,
{
    (0..n).map(f).sum()
}

/// Runs `f` over `items` on at most `threads` workers, in no particular
/// order. Used for independent experiment cells.
#[cfg(feature = "parallel")]
pub fn for_each_capped<T, F>(items: Vec<T>, threads: usize, f: F)
where
    T: Send,
    F: Fn(T) + Sync + Send,
{
    if threads <= 1 {
        items.into_iter().for_each(f);
        return;
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| items.into_par_iter().for_each(f)),
        Err(_) => items.into_iter().for_each(f),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_capped<T, F>(items: Vec<T>, _threads: usize, f: F)
where
    T: Send,
    F: Fn(T) + Sync + Send,
{
    items.into_iter().for_each(f);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_sequential() {
        let xs: Vec<u64> = (0..1000).collect();
        assert_eq!(map(&xs, |x| x * x), map_seq(&xs, |x| x * x));
        assert_eq!(sum_range(1000, |i| i as u64), sum_range_seq(1000, |i| i as u64));
    }

    #[test]
    fn capped_visits_everything() {
        let seen = std::sync::Mutex::new(Vec::new());
        for_each_capped((0..50).collect(), 4, |i: i32| seen.lock().unwrap().push(i));
        let mut v = seen.into_inner().unwrap();
        v.sort();
        assert_eq!(v, (0..50).collect::<Vec<_>>());
    }
}
