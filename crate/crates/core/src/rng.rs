//! Random sources.
//!
//! Every randomized step pulls from a [`RandomSource`]. Any `rand` generator is
//! one; [`ScriptedTape`] replays a fixed sequence of uniforms so a test can
//! force a specific execution.

use std::collections::VecDeque;

use rand::{Rng, RngCore, SeedableRng};

use crate::StreamRng;

pub trait RandomSource {
    /// Uniform in `[0, 1)`.
    fn uniform(&mut self) -> f64;

    /// Uniform index in `[0, n)`. `n` must be positive.
    fn below(&mut self, n: usize) -> usize;

    /// Raw 64 bits, used to seed child streams.
    fn next_seed(&mut self) -> u64;

    /// One draw; true with probability `p` (clamped to `[0, 1]`).
    fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Independent child stream.
    fn split(&mut self) -> StreamRng {
        StreamRng::seed_from_u64(self.next_seed())
    }
}

impl<R: RngCore + ?Sized> RandomSource for R {
    fn uniform(&mut self) -> f64 {
        self.gen::<f64>()
    }

    fn below(&mut self, n: usize) -> usize {
        self.gen_range(0..n)
    }

    fn next_seed(&mut self) -> u64 {
        self.next_u64()
    }
}

/// A fixed tape of uniforms in `[0, 1)`.
///
/// `below(n)` consumes one value `u` and returns `floor(u * n)`. Seeds are
/// taken from the tape as well (the value's bits). Running past the end of the
/// tape panics, which is what a forced-execution test wants.
#[derive(Debug, Clone, Default)]
pub struct ScriptedTape {
    values: VecDeque<f64>,
    consumed: usize,
}

impl ScriptedTape {
    pub fn new(values: impl IntoIterator<Item = f64>) -> Self {
        let values: VecDeque<f64> = values.into_iter().collect();
        assert!(
            values.iter().all(|u| (0.0..1.0).contains(u)),
            "tape values must lie in [0, 1)"
        );
        Self { values, consumed: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn remaining(&self) -> usize {
        self.values.len()
    }

    fn pop(&mut self) -> f64 {
        self.consumed += 1;
        self.values
            .pop_front()
            .unwrap_or_else(|| panic!("scripted tape exhausted after {} draws", self.consumed - 1))
    }
}

impl RandomSource for ScriptedTape {
    fn uniform(&mut self) -> f64 {
        self.pop()
    }

    fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        ((self.pop() * n as f64) as usize).min(n - 1)
    }

    fn next_seed(&mut self) -> u64 {
        self.pop().to_bits()
    }
}
