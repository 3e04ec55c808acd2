//! Execution strategy and seeded random streams.
//!
//! Every data-parallel loop in the crate goes through [`Exec`]. Work is split
//! into fixed-size chunks whose partial results are reduced in chunk order, so
//! the sequential and the rayon paths produce bit-identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Rows per work item for batch reductions. Fixed so that reductions do not
/// depend on the thread count.
pub const CHUNK_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise falls back
    /// to sequential execution.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Order-preserving map over `0..n`.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Order-preserving map over a slice.
    pub fn map_slice<A, T, F>(self, items: &[A], f: F) -> Vec<T>
    where
        A: Sync,
        T: Send,
        F: Fn(&A) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Splits `0..n` into [`CHUNK_ROWS`]-sized ranges and maps each.
    pub fn map_chunks<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
    {
        let chunks = n.div_ceil(CHUNK_ROWS);
        self.map_range(chunks, |c| {
            let start = c * CHUNK_ROWS;
            f(start..(start + CHUNK_ROWS).min(n))
        })
    }
}

/// Derives an independent RNG for a named purpose from the run seed.
///
/// Sub-streams are keyed by name (and an optional discriminator such as a
/// user id) so one stage can be re-seeded without shifting the others.
pub fn stream(seed: u64, name: &str, key: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, name, key))
}

pub fn stream_seed(seed: u64, name: &str, key: &str) -> u64 {
    let mut h = fnv1a(0xcbf2_9ce4_8422_2325, name.as_bytes());
    h = fnv1a(h ^ 0xff, key.as_bytes());
    splitmix(seed ^ splitmix(h))
}

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
