//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) work items run on the rayon pool;
//! without it they run in order on the calling thread. Results come back in
//! input order either way.

#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// True when compiled with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let v: Vec<u32> = (0..100).collect();
        let out = par_map(&v, |i, x| (i as u32) * 1000 + x);
        assert!(out.iter().enumerate().all(|(i, &o)| o == i as u32 * 1001));
    }
}
