//! Seeded, splittable randomness.
//!
//! Every stochastic choice in the simulator (timer jitter, walk forwarding
//! coins, carrier bytes, key material) is drawn from a [`SplitMix64`] stream.
//! Streams are derived from the world seed and a `(domain, index)` label, so
//! each node's draws are independent of event interleaving. The generator and
//! its constants are fixed here on purpose: runs must be bit-reproducible
//! across platforms, which rules out library generators whose output may
//! change between versions.

/// Weyl sequence increment (golden-ratio constant).
pub const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

const MIX_M1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_M2: u64 = 0x94D0_49BB_1331_11EB;

/// 64-bit finalizer used by the generator, stream derivation, and the
/// intra-cluster keystream.
#[inline]
pub const fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_M1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_M2);
    z ^ (z >> 31)
}

/// Stream labels. Keeping them in one place avoids accidental collisions
/// between subsystems that derive streams from the same world seed.
pub mod domain {
    pub const NODE: u64 = 0x01;
    pub const CLUSTER_KEY: u64 = 0x02;
    pub const WORLD: u64 = 0x03;
}

/// SplitMix64 generator: a Weyl sequence fed through [`mix64`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Derives an independent stream from `(seed, domain, index)`.
    pub fn stream(seed: u64, domain: u64, index: u64) -> Self {
        Self::new(mix64(seed ^ mix64(domain ^ mix64(index))))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix64(self.state)
    }

    /// Uniform draw in `0..n` via the multiply-high method. `n` must be > 0.
    pub fn gen_range(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Uniform integer jitter on `[0, bound]`, inclusive.
    pub fn jitter(&mut self, bound: u64) -> u64 {
        if bound == 0 {
            0
        } else {
            self.gen_range(bound + 1)
        }
    }

    /// Coin flip with probability `p_micro / 1_000_000` of returning true.
    pub fn coin(&mut self, p_micro: u64) -> bool {
        if p_micro == 0 {
            return false;
        }
        if p_micro >= 1_000_000 {
            return true;
        }
        self.gen_range(1_000_000) < p_micro
    }

    pub fn fill_bytes(&mut self, out: &mut [u8]) {
        for chunk in out.chunks_mut(8) {
            let word = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&word[..chunk.len()]);
        }
    }

    /// Picks one element uniformly; `None` on an empty slice.
    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> Option<&'a T> {
        if items.is_empty() {
            None
        } else {
            Some(&items[self.gen_range(items.len() as u64) as usize])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = SplitMix64::new(7);
        let mut b = SplitMix64::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_are_independent_of_each_other() {
        let mut a = SplitMix64::stream(42, domain::NODE, 1);
        let mut b = SplitMix64::stream(42, domain::NODE, 2);
        let first: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let second: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(first, second);
    }

    #[test]
    fn gen_range_stays_in_bounds() {
        let mut rng = SplitMix64::new(99);
        for _ in 0..10_000 {
            assert!(rng.gen_range(13) < 13);
        }
    }

    #[test]
    fn jitter_zero_bound_is_zero() {
        let mut rng = SplitMix64::new(3);
        assert_eq!(rng.jitter(0), 0);
    }

    #[test]
    fn coin_degenerate_probabilities() {
        let mut rng = SplitMix64::new(5);
        for _ in 0..100 {
            assert!(!rng.coin(0));
            assert!(rng.coin(1_000_000));
        }
    }

    #[test]
    fn fill_bytes_is_deterministic() {
        let mut a = SplitMix64::stream(1, domain::CLUSTER_KEY, 9);
        let mut b = SplitMix64::stream(1, domain::CLUSTER_KEY, 9);
        let mut buf_a = [0u8; 37];
        let mut buf_b = [0u8; 37];
        a.fill_bytes(&mut buf_a);
        b.fill_bytes(&mut buf_b);
        assert_eq!(buf_a, buf_b);
    }
}
