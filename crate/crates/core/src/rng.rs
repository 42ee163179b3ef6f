//! Counter-based random streams.
//!
//! Every draw in a sampler run comes from a ChaCha8 stream keyed by
//! `(seed, lane, run)` and positioned by `(t, d)`. Streams never share state,
//! so the sequence a block sees does not depend on what other runs, sweeps or
//! workers did before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator type handed to every kernel and sampler.
pub type StreamRng = ChaCha8Rng;

/// Separates independent uses of one seed so that, e.g., dataset generation
/// never overlaps with sampler draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Lane {
    Sampler = 1,
    Dataset = 2,
    Surrogate = 3,
    Auxiliary = 4,
    Warmup = 5,
    Reference = 6,
}

/// Address of one stream: a run index plus a `(t, d)` block position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub run: u64,
    pub t: u64,
    pub d: u64,
}

const COORD_BITS: u32 = 20;

/// Root of all streams derived from one 64-bit seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    seed: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        SeedTree { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Opens the stream for `id` within `lane`.
    ///
    /// Coordinates are limited to `2^20` and sweeps to `2^44`.
    pub fn stream(&self, lane: Lane, id: StreamId) -> StreamRng {
        assert!(id.d < (1 << COORD_BITS), "coordinate index {} too large", id.d);
        assert!(id.t < (1 << (64 - COORD_BITS)), "sweep index {} too large", id.t);
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(lane as u64).to_le_bytes());
        key[16..24].copy_from_slice(&id.run.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream((id.t << COORD_BITS) | id.d);
        rng
    }

    /// Per-run view used by the samplers.
    pub fn run(&self, run: u64) -> RunStreams {
        RunStreams {
            tree: *self,
            run,
            lane: Lane::Sampler,
        }
    }
}

/// All sampler streams of a single run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunStreams {
    tree: SeedTree,
    run: u64,
    lane: Lane,
}

impl RunStreams {
    pub fn run_index(&self) -> u64 {
        self.run
    }

    pub fn tree(&self) -> SeedTree {
        self.tree
    }

    /// The same run with block streams taken from `lane`, e.g. for a warm-up
    /// chain that must not reuse the main chain's draws.
    pub fn in_lane(self, lane: Lane) -> Self {
        RunStreams { lane, ..self }
    }

    /// Stream for sweep `t` (1-based) and coordinate `d` (0-based).
    pub fn block(&self, t: usize, d: usize) -> StreamRng {
        self.tree.stream(
            self.lane,
            StreamId {
                run: self.run,
                t: t as u64,
                d: d as u64,
            },
        )
    }

    /// Stream in another lane that still belongs to this run.
    pub fn lane(&self, lane: Lane, t: usize, d: usize) -> StreamRng {
        self.tree.stream(
            lane,
            StreamId {
                run: self.run,
                t: t as u64,
                d: d as u64,
            },
        )
    }
}
