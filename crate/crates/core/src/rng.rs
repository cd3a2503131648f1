//! Seeded random substreams.
//!
//! Every random draw in a run comes from a ChaCha8 stream keyed by
//! `(master seed, agent, iteration, phase)`. The key is folded through a
//! fixed SplitMix64 mixer, so the mapping is stable across platforms and
//! independent of thread scheduling.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Which part of an iteration consumes a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    InitialState = 0,
    Observe = 1,
    Act = 2,
    Transition = 3,
    Marginalize = 4,
    Layout = 5,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::InitialState,
        Phase::Observe,
        Phase::Act,
        Phase::Transition,
        Phase::Marginalize,
        Phase::Layout,
    ];
}

/// Agent slot used for environment-owned draws (initial state, transitions).
pub const ENV: u64 = u64::MAX;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable hash of a substream key.
pub fn substream_id(master: u64, agent: u64, iter: u64, phase: Phase) -> u64 {
    let mut h = splitmix64(master);
    for word in [agent, iter, phase as u64] {
        h = splitmix64(h ^ word);
    }
    h
}

/// Factory for per-(agent, iteration, phase) random streams.
#[derive(Debug, Clone)]
pub struct Streams {
    master: u64,
    counts: Option<Arc<[AtomicU64; 6]>>,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Self { master, counts: None }
    }

    /// Same streams, but every derivation is tallied per phase.
    pub fn with_accounting(master: u64) -> Self {
        Self {
            master,
            counts: Some(Arc::new(Default::default())),
        }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, agent: u64, iter: u64, phase: Phase) -> StreamRng {
        if let Some(c) = &self.counts {
            c[phase as usize].fetch_add(1, Ordering::Relaxed);
        }
        ChaCha8Rng::seed_from_u64(substream_id(self.master, agent, iter, phase))
    }

    pub fn agent(&self, k: usize, iter: u64, phase: Phase) -> StreamRng {
        self.stream(k as u64, iter, phase)
    }

    pub fn env(&self, iter: u64, phase: Phase) -> StreamRng {
        self.stream(ENV, iter, phase)
    }

    /// Number of streams derived so far for `phase`; `None` without accounting.
    pub fn derived(&self, phase: Phase) -> Option<u64> {
        self.counts
            .as_ref()
            .map(|c| c[phase as usize].load(Ordering::Relaxed))
    }
}

/// Draw an index from a discrete distribution by inverse CDF.
///
/// Degenerate distributions return their single support point without
/// touching the stream. Trailing round-off mass falls on the last positive
/// entry.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let mut support = probs.iter().enumerate().filter(|(_, &p)| p > 0.0);
    let first = support.next().map(|(i, _)| i).unwrap_or(0);
    if support.next().is_none() {
        return first;
    }
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut last = first;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}
