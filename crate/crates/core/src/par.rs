//! Data-parallel helpers. With the `parallel` feature disabled every
//! [`Exec`] runs sequentially.

/// How to run an embarrassingly parallel loop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Exec {
    #[default]
    Parallel,
    Sequential,
}

impl Exec {
    /// Whether this build can actually run loops in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// The result for the first item, in slice order, for which `f` returns
/// `Some`. Deterministic regardless of `exec`.
pub fn find_map_first<T, R, F>(exec: Exec, items: &[T], f: F) -> Option<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Option<R> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Exec::Parallel {
        use rayon::prelude::*;
        return items.par_iter().find_map_first(f);
    }
    let _ = exec;
    items.iter().find_map(f)
}

/// `items.iter().map(f).collect()`, in order.
pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Exec::Parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_match_is_independent_of_execution() {
        let items: Vec<u32> = (0..10_000).collect();
        let pick = |&x: &u32| (x % 997 == 996 || x == 5000).then_some(x);
        assert_eq!(find_map_first(Exec::Parallel, &items, pick), Some(996));
        assert_eq!(find_map_first(Exec::Sequential, &items, pick), Some(996));
        assert_eq!(
            map(Exec::Parallel, &items, |x| x * 2),
            map(Exec::Sequential, &items, |x| x * 2)
        );
    }
}
