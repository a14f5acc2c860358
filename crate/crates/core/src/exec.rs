//! Execution-mode switch for the data-parallel loops.
//!
//! Every parallel loop in the crate goes through these helpers so the same
//! code path runs sequentially or on the rayon pool. Results are always
//! collected in input order, which keeps seeded output identical across
//! modes. Without the `parallel` feature, [`ExecMode::Parallel`] falls back
//! to sequential iteration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// How a batch of independent work items is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// True when this build can actually run work on the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Maps `f` over `0..len`, collecting results in index order.
pub fn map_range<T, F>(mode: ExecMode, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..len).map(f).collect()
}

/// Maps `f` over a slice, collecting results in slice order.
pub fn map_slice<S, T, F>(mode: ExecMode, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Maps `f` over mutable references, collecting results in slice order.
pub fn map_slice_mut<S, T, F>(mode: ExecMode, items: &mut [S], f: F) -> Vec<T>
where
    S: Send,
    T: Send,
    F: Fn(&mut S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter_mut().map(f).collect();
    }
    let _ = mode;
    items.iter_mut().map(f).collect()
}

// Domain salts keep streams for different purposes apart under one seed.
pub(crate) const DOMAIN_NODE: u64 = 0x6e6f_6465_5f72_6e67;
pub(crate) const DOMAIN_SCENARIO: u64 = 0x7363_656e_6172_696f;
pub(crate) const DOMAIN_AVALANCHE: u64 = 0x6176_616c_616e_6368;
pub(crate) const DOMAIN_TRACE: u64 = 0x7472_6163_655f_6765;

/// A ChaCha8 generator for `(seed, domain)` positioned on stream `stream`.
///
/// Each node, trial or partition draws from its own stream, so the order in
/// which workers run never changes what any of them sees.
pub fn stream_rng(seed: u64, domain: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain);
    rng.set_stream(stream);
    rng
}
