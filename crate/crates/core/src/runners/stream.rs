use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Derives an independent child seed, e.g. one stream seed per configuration.
pub fn derive_seed(master: u64, salt: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(salt);
    rng.next_u64()
}

/// An instance: a pool entry paired with a run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InstanceDraw {
    pub index: usize,
    pub seed: u64,
}

/// The i.i.d. instance stream `j_1, j_2, ...` seen by one tester.
///
/// Draws are uniform with replacement over the pool. Ordinal `ℓ` always maps
/// to the same draw for a given stream seed, independent of how many draws
/// were taken before it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceStream {
    pool_size: usize,
    seed: u64,
    cursor: u64,
}

impl InstanceStream {
    pub fn new(pool_size: usize, seed: u64) -> Result<Self> {
        if pool_size == 0 {
            return Err(Error::invalid("pool_size", "instance pool is empty"));
        }
        Ok(Self {
            pool_size,
            seed,
            cursor: 0,
        })
    }

    /// The draw for 1-based ordinal `ℓ`.
    pub fn draw(&self, ordinal: u64) -> InstanceDraw {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(ordinal);
        InstanceDraw {
            index: rng.random_range(0..self.pool_size),
            seed: rng.random(),
        }
    }

    /// Draws ordinal `cursor + 1` and advances the cursor.
    pub fn next_instance(&mut self) -> InstanceDraw {
        self.cursor += 1;
        self.draw(self.cursor)
    }

    /// Number of ordinals drawn so far.
    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}
