//! Order-preserving batch mapping over mentions or entities.
//!
//! With the `parallel` feature the work is spread over the rayon pool;
//! without it every [`Execution`] runs sequentially. Output order always
//! matches input order, so results are identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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

impl Execution {
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    /// Like [`Execution::map`] but stops at the first error in input order.
    pub fn try_map<T, R, E, F>(self, items: &[T], f: F) -> Result<Vec<R>, E>
    where
        T: Sync,
        R: Send,
        E: Send,
        F: Fn(&T) -> Result<R, E> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let f = |x: &u64| x.wrapping_mul(2654435761) % 97;
        assert_eq!(Execution::Sequential.map(&xs, f), Execution::Parallel.map(&xs, f));
    }

    #[test]
    fn try_map_reports_first_error() {
        let xs = [1, 2, -3, 4, -5];
        let r: Result<Vec<i32>, i32> =
            Execution::Parallel.try_map(&xs, |&x| if x < 0 { Err(x) } else { Ok(x) });
        assert_eq!(r, Err(-3));
    }
}
