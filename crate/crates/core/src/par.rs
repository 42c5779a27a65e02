//! Data-parallel execution with a sequential fallback.
//!
//! Every hot loop in the crate (residual evaluation, NCC shift search, oracle
//! grid scans, per-frame scene generation) goes through [`Exec`]. With the
//! `parallel` feature the parallel variant runs on rayon; without it, both
//! variants run the same sequential loop. Results are always collected in
//! index order and reduced sequentially, so the two modes are bit-identical.

/// Execution mode for data-parallel kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// True when this mode will actually fan out over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Map `f` over `0..n`, returning results in index order.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Map `f` over a slice, returning results in element order.
    pub fn map_slice<S, T, F>(self, items: &[S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&S) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Fill `out` in fixed-size chunks; `f(chunk_index, chunk)`.
    pub fn for_each_chunk_mut<T, F>(self, out: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        let chunk = chunk.max(1);
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
            return;
        }
        out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| ((i as f64) * 0.37).sin();
        let a = Exec::Sequential.map_range(1000, f);
        let b = Exec::Parallel.map_range(1000, f);
        assert_eq!(a, b);

        let mut x = vec![0usize; 97];
        let mut y = vec![0usize; 97];
        Exec::Sequential.for_each_chunk_mut(&mut x, 10, |ci, c| {
            for (j, v) in c.iter_mut().enumerate() {
                *v = ci * 10 + j;
            }
        });
        Exec::Parallel.for_each_chunk_mut(&mut y, 10, |ci, c| {
            for (j, v) in c.iter_mut().enumerate() {
                *v = ci * 10 + j;
            }
        });
        assert_eq!(x, y);
        assert_eq!(x[96], 96);
    }
}
