//! Derivation of independent random streams from one run seed.
//!
//! `split_seed(seed, label)` hashes the label with 64-bit FNV-1a, mixes it
//! into the seed and finalizes with SplitMix64. Streams used by the engine:
//! `"db"`, `"generator"`, `"eval"`, `"histogram"`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn split_seed(seed: u64, label: &str) -> u64 {
    splitmix64(seed ^ fnv1a(label.as_bytes()))
}

/// Seed for the `index`-th item of a stream (episode, batch, ...).
pub fn split_index(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Serializable position of a [`ChaCha8Rng`] created with [`rng_from`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    /// Word position in the ChaCha stream, as a decimal string (u128 safe in JSON).
    #[serde(with = "u128_string")]
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(seed: u64, rng: &ChaCha8Rng) -> Self {
        RngState {
            seed,
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = rng_from(self.seed);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

mod u128_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn splitmix_reference_vector() {
        // First output of the reference SplitMix64 generator seeded with 0.
        assert_eq!(splitmix64(0), 0xe220a8397b1dcdaf);
    }

    #[test]
    fn labels_give_distinct_streams() {
        assert_ne!(split_seed(42, "db"), split_seed(42, "generator"));
        assert_eq!(split_seed(42, "db"), split_seed(42, "db"));
        assert_ne!(split_index(1, 0), split_index(1, 1));
    }

    #[test]
    fn rng_state_round_trips() {
        let mut rng = rng_from(9);
        for _ in 0..13 {
            rng.random::<u64>();
        }
        let state = RngState::capture(9, &rng);
        let json = serde_json::to_string(&state).unwrap();
        let mut restored: ChaCha8Rng = serde_json::from_str::<RngState>(&json).unwrap().restore();
        assert_eq!(rng.random::<u64>(), restored.random::<u64>());
    }
}
