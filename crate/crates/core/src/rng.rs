//! Replica-addressable random streams.
//!
//! Every stream is derived from `(master_seed, replica, tag)` by hashing, so a
//! replica's randomness does not depend on which worker runs it or in which
//! order replicas are scheduled.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Substream tags. Distinct tags give independent streams for the same replica.
pub mod tags {
    pub const SIMULATION: u64 = 0;
    pub const ORACLE: u64 = 1;
    pub const SYNTHETIC: u64 = 2;
    pub const KILL_RESERVOIR: u64 = 3;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub master_seed: u64,
    pub replica: u64,
    pub tag: u64,
}

impl StreamId {
    fn seed_bytes(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(b"branchsel-stream-v1");
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update(self.replica.to_le_bytes());
        hasher.update(self.tag.to_le_bytes());
        hasher.finalize().into()
    }
}

/// A ChaCha8 generator keyed by a hashed [`StreamId`].
#[derive(Clone, Debug)]
pub struct RngStream {
    id: StreamId,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, replica: u64, tag: u64) -> Self {
        Self::from_id(StreamId {
            master_seed,
            replica,
            tag,
        })
    }

    pub fn from_id(id: StreamId) -> Self {
        Self {
            id,
            inner: ChaCha8Rng::from_seed(id.seed_bytes()),
        }
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    /// Number of 32-bit words drawn so far.
    pub fn words_consumed(&self) -> u128 {
        self.inner.get_word_pos()
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    #[inline]
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
