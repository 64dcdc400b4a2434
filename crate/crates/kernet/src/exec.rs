//! Data-parallel loop helpers.
//!
//! Every hot loop in this crate is expressed as an index-ordered map so the
//! parallel and sequential builds produce bit-identical results: each output
//! slot is computed independently and collected in index order, never reduced
//! across threads.

/// Maps `0..len` through `f`, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..len).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..len).map(f).collect()
}

/// Sequential reference path, always available (used by the benches to
/// compare against the rayon path).
pub fn map_indexed_seq<T, F>(len: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..len).map(f).collect()
}
