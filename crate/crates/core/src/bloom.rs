//! Bloom filter tracking punctured prefixes.
//!
//! The filter is sized from a capacity `n` and a target false-positive rate
//! `pr` using the textbook optima
//!
//! ```text
//! ell = ceil(-n * ln(pr) / (ln 2)^2)        (bits)
//! k   = ceil((ell/n) * ln 2)                (hash functions)
//! ```
//!
//! where `k` is evaluated against the real-valued `ell` before rounding,
//! i.e. `k = ceil(-ln(pr) / ln 2)`. Membership hashing is double hashing:
//! one 384-bit digest of `(seed || item)` is split into two 64-bit lanes
//! `g1, g2`, and probe `j` lands at `(g1 + j*g2) mod ell + 1` for
//! `j = 1..=k`. Positions are therefore 1-based, which matches how the
//! signature scheme indexes its key shares.
//!
//! No false negatives, ever: an inserted item is always found. False
//! positives occur at a rate of roughly `(1 - e^(-k*load/ell))^k` at a
//! given insertion load.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha384};
use thiserror::Error;

/// Width of the filter seed in bytes (two 64-bit hash lanes' worth).
pub const SEED_BYTES: usize = 16;

const MAGIC: &[u8; 4] = b"PSBF";
const VERSION: u16 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParamError {
    #[error("capacity must be at least 1")]
    ZeroCapacity,
    #[error("false-positive rate must lie strictly between 0 and 1")]
    RateOutOfRange,
    #[error("derived filter size exceeds the 2^32-bit limit")]
    TooLarge,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FilterDecodeError {
    #[error("truncated filter encoding")]
    Truncated,
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported filter version {0}")]
    BadVersion(u16),
    #[error("inconsistent filter geometry")]
    BadGeometry,
}

/// Derived filter geometry for a capacity/false-positive-rate pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BloomParams {
    /// Intended insertion capacity.
    pub n: u64,
    /// Target false-positive rate at full load.
    pub pr: f64,
    /// Filter width in bits.
    pub ell: u32,
    /// Number of probe positions per item.
    pub k: u32,
}

/// Compute filter geometry from capacity and target false-positive rate.
pub fn derive_params(n: u64, pr: f64) -> Result<BloomParams, ParamError> {
    if n == 0 {
        return Err(ParamError::ZeroCapacity);
    }
    if !(pr > 0.0 && pr < 1.0) {
        return Err(ParamError::RateOutOfRange);
    }
    let ln2 = std::f64::consts::LN_2;
    let ell_real = -(n as f64) * pr.ln() / (ln2 * ln2);
    let ell = ell_real.ceil();
    if !(ell >= 1.0) || ell > u32::MAX as f64 {
        return Err(ParamError::TooLarge);
    }
    // ceil((ell_real / n) * ln 2) == ceil(-ln(pr) / ln 2)
    let k = (-pr.ln() / ln2).ceil().max(1.0) as u32;
    Ok(BloomParams { n, pr, ell: (ell as u32).max(k), k })
}

/// Expected false-positive rate of a filter with geometry `(ell, k)` after
/// `load` distinct insertions.
pub fn expected_fp_rate(ell: u32, k: u32, load: u64) -> f64 {
    if load == 0 {
        return 0.0;
    }
    let exponent = -((k as f64) * (load as f64)) / ell as f64;
    (1.0 - exponent.exp()).powi(k as i32)
}

/// The position-hashing half of a filter: everything needed to map an item
/// to its probe set, with no bit array attached. Verifiers hold one of
/// these inside the public key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BloomHasher {
    ell: u32,
    k: u32,
    seed: [u8; SEED_BYTES],
}

impl BloomHasher {
    pub fn new(ell: u32, k: u32, seed: [u8; SEED_BYTES]) -> Self {
        assert!(ell >= 1 && k >= 1, "degenerate filter geometry");
        BloomHasher { ell, k, seed }
    }

    pub fn ell(&self) -> u32 {
        self.ell
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn seed(&self) -> &[u8; SEED_BYTES] {
        &self.seed
    }

    /// The deduplicated, ascending set of 1-based probe positions for an
    /// item. At most `k` entries; fewer when probes collide.
    pub fn positions(&self, item: &[u8]) -> Vec<u32> {
        let mut h = Sha384::new();
        h.update(self.seed);
        h.update(item);
        let d = h.finalize();
        let g1 = u64::from_be_bytes(d[0..8].try_into().unwrap());
        let g2 = u64::from_be_bytes(d[8..16].try_into().unwrap());
        let ell = self.ell as u128;
        let mut out: Vec<u32> = (1..=self.k as u128)
            .map(|j| ((g1 as u128 + j * g2 as u128) % ell) as u32 + 1)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// A seeded Bloom filter with an insertion counter.
#[derive(Debug, Clone, PartialEq)]
pub struct BloomFilter {
    params: BloomParams,
    hasher: BloomHasher,
    bits: Vec<u8>,
    inserted: u64,
}

impl BloomFilter {
    /// Fresh all-zero filter for the given geometry and hash seed.
    pub fn new(params: BloomParams, seed: [u8; SEED_BYTES]) -> Self {
        let hasher = BloomHasher::new(params.ell, params.k, seed);
        let bits = vec![0u8; params.ell.div_ceil(8) as usize];
        BloomFilter { params, hasher, bits, inserted: 0 }
    }

    pub fn params(&self) -> &BloomParams {
        &self.params
    }

    pub fn hasher(&self) -> &BloomHasher {
        &self.hasher
    }

    /// Number of insertions performed so far.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// How many insertions remain before the filter exceeds the capacity
    /// its false-positive target was computed for.
    pub fn remaining_capacity(&self) -> u64 {
        self.params.n.saturating_sub(self.inserted)
    }

    pub fn positions(&self, item: &[u8]) -> Vec<u32> {
        self.hasher.positions(item)
    }

    /// Whether the 1-based position's bit is set.
    pub fn is_set(&self, pos: u32) -> bool {
        debug_assert!(pos >= 1 && pos <= self.params.ell);
        let b = (pos - 1) as usize;
        self.bits[b / 8] & (1 << (b % 8)) != 0
    }

    /// Insert an item: set its probe bits and bump the counter.
    pub fn insert(&mut self, item: &[u8]) {
        for pos in self.positions(item) {
            let b = (pos - 1) as usize;
            self.bits[b / 8] |= 1 << (b % 8);
        }
        self.inserted += 1;
    }

    /// Membership probe. `true` means "possibly inserted" (subject to the
    /// false-positive rate); `false` is always definitive.
    pub fn check(&self, item: &[u8]) -> bool {
        self.positions(item).iter().all(|&p| self.is_set(p))
    }

    /// Raw bit array, little-endian bit order within each byte.
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Reassemble a filter from its stored parts (codec use).
    pub fn from_parts(
        params: BloomParams,
        seed: [u8; SEED_BYTES],
        bits: Vec<u8>,
        inserted: u64,
    ) -> Result<Self, FilterDecodeError> {
        if params.ell < 1 || params.k < 1 || bits.len() != params.ell.div_ceil(8) as usize {
            return Err(FilterDecodeError::BadGeometry);
        }
        let hasher = BloomHasher::new(params.ell, params.k, seed);
        Ok(BloomFilter { params, hasher, bits, inserted })
    }

    /// Standalone serialization: fixed header followed by the raw bit
    /// array. All header integers are little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 2 + 8 + 8 + 4 + 4 + SEED_BYTES + 8 + self.bits.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.params.n.to_le_bytes());
        out.extend_from_slice(&self.params.pr.to_le_bytes());
        out.extend_from_slice(&self.params.ell.to_le_bytes());
        out.extend_from_slice(&self.params.k.to_le_bytes());
        out.extend_from_slice(self.hasher.seed());
        out.extend_from_slice(&self.inserted.to_le_bytes());
        out.extend_from_slice(&self.bits);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FilterDecodeError> {
        const HEADER: usize = 4 + 2 + 8 + 8 + 4 + 4 + SEED_BYTES + 8;
        if bytes.len() < HEADER {
            return Err(FilterDecodeError::Truncated);
        }
        if &bytes[0..4] != MAGIC {
            return Err(FilterDecodeError::BadMagic);
        }
        let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
        if version != VERSION {
            return Err(FilterDecodeError::BadVersion(version));
        }
        let n = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
        let pr = f64::from_le_bytes(bytes[14..22].try_into().unwrap());
        let ell = u32::from_le_bytes(bytes[22..26].try_into().unwrap());
        let k = u32::from_le_bytes(bytes[26..30].try_into().unwrap());
        let seed: [u8; SEED_BYTES] = bytes[30..30 + SEED_BYTES].try_into().unwrap();
        let inserted = u64::from_le_bytes(bytes[46..54].try_into().unwrap());
        let bits = bytes[HEADER..].to_vec();
        Self::from_parts(BloomParams { n, pr, ell, k }, seed, bits, inserted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn derive_params_reference_points() {
        let p = derive_params(1_000, 1e-3).unwrap();
        assert_eq!((p.ell, p.k), (14_378, 10));

        let p = derive_params(1, 0.5).unwrap();
        assert_eq!((p.ell, p.k), (2, 1));

        // A million-entry filter at the same rate stays under 2 MB.
        let p = derive_params(1 << 20, 1e-3).unwrap();
        assert_eq!(p.k, 10);
        let bytes = p.ell.div_ceil(8);
        assert!((1_700_000..2_000_000).contains(&bytes), "filter is {bytes} bytes");
    }

    #[test]
    fn derive_params_rejects_degenerate_inputs() {
        assert_eq!(derive_params(0, 0.5), Err(ParamError::ZeroCapacity));
        assert_eq!(derive_params(10, 0.0), Err(ParamError::RateOutOfRange));
        assert_eq!(derive_params(10, 1.0), Err(ParamError::RateOutOfRange));
        assert_eq!(derive_params(10, -0.5), Err(ParamError::RateOutOfRange));
        assert_eq!(derive_params(10, f64::NAN), Err(ParamError::RateOutOfRange));
        assert_eq!(derive_params(u64::MAX, 1e-9), Err(ParamError::TooLarge));
    }

    #[test]
    fn derive_params_always_satisfies_ell_ge_k_ge_one() {
        for &(n, pr) in &[(1u64, 0.99), (1, 0.9), (3, 0.7), (10, 0.5), (100, 1e-4), (1, 1e-6)] {
            let p = derive_params(n, pr).unwrap();
            assert!(p.ell >= p.k && p.k >= 1, "n={n} pr={pr} gave {p:?}");
        }
    }

    #[test]
    fn fresh_filter_is_empty() {
        let params = derive_params(100, 1e-2).unwrap();
        let f = BloomFilter::new(params, [7u8; SEED_BYTES]);
        assert!(!f.check(b"anything"));
        assert!(!f.check(b""));
        assert_eq!(f.inserted(), 0);
        assert_eq!(f.remaining_capacity(), 100);
        assert!(f.bits().iter().all(|&b| b == 0));
    }

    #[test]
    fn positions_are_in_range_sorted_and_seed_dependent() {
        let params = derive_params(100, 1e-2).unwrap();
        let a = BloomHasher::new(params.ell, params.k, [1u8; SEED_BYTES]);
        let b = BloomHasher::new(params.ell, params.k, [2u8; SEED_BYTES]);
        let mut differs = false;
        for i in 0..200u32 {
            let item = i.to_be_bytes();
            let pa = a.positions(&item);
            assert_eq!(pa, a.positions(&item));
            assert!(!pa.is_empty() && pa.len() <= params.k as usize);
            assert!(pa.windows(2).all(|w| w[0] < w[1]), "sorted and deduped");
            assert!(pa.iter().all(|&p| (1..=params.ell).contains(&p)));
            if pa != b.positions(&item) {
                differs = true;
            }
        }
        assert!(differs, "two seeds produced identical probe sets throughout");
    }

    #[test]
    fn inserted_items_are_always_found() {
        let params = derive_params(500, 1e-2).unwrap();
        let mut f = BloomFilter::new(params, [3u8; SEED_BYTES]);
        let items: Vec<Vec<u8>> = (0..500u32).map(|i| format!("item-{i}").into_bytes()).collect();
        for (i, item) in items.iter().enumerate() {
            f.insert(item);
            assert_eq!(f.inserted(), i as u64 + 1);
            for earlier in &items[..=i] {
                assert!(f.check(earlier), "false negative");
            }
        }
        assert_eq!(f.remaining_capacity(), 0);
        f.insert(b"overflow");
        assert_eq!(f.remaining_capacity(), 0, "capacity saturates rather than wrapping");
        assert!(f.check(b"overflow"));
    }

    #[test]
    fn false_positive_rate_tracks_the_target_at_full_load() {
        let params = derive_params(200, 1e-2).unwrap();
        let mut f = BloomFilter::new(params, [9u8; SEED_BYTES]);
        for i in 0..200u32 {
            f.insert(&i.to_le_bytes());
        }
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let probes = 100_000u32;
        let mut hits = 0u32;
        for _ in 0..probes {
            let fresh: [u8; 12] = rng.gen();
            if f.check(&fresh) {
                hits += 1;
            }
        }
        let rate = hits as f64 / probes as f64;
        assert!(
            rate >= params.pr / 3.0 && rate <= params.pr * 3.0,
            "observed {rate}, target {}",
            params.pr
        );
        // And the analytic estimate agrees with the target at full load.
        let est = expected_fp_rate(params.ell, params.k, params.n);
        assert!((est / params.pr) > 0.5 && (est / params.pr) < 2.0);
    }

    #[test]
    fn expected_fp_rate_is_monotone_in_load_and_zero_when_empty() {
        let params = derive_params(100, 1e-3).unwrap();
        assert_eq!(expected_fp_rate(params.ell, params.k, 0), 0.0);
        let mut last = 0.0;
        for load in [1u64, 10, 50, 100, 200] {
            let r = expected_fp_rate(params.ell, params.k, load);
            assert!(r > last);
            last = r;
        }
    }

    #[test]
    fn serialization_round_trips_bit_exactly() {
        let params = derive_params(64, 5e-2).unwrap();
        let mut f = BloomFilter::new(params, [0xAB; SEED_BYTES]);
        for i in 0..40u32 {
            f.insert(&i.to_be_bytes());
        }
        let bytes = f.to_bytes();
        let g = BloomFilter::from_bytes(&bytes).unwrap();
        assert_eq!(f, g);
        assert_eq!(g.to_bytes(), bytes);
    }

    #[test]
    fn decoding_rejects_corruption() {
        let params = derive_params(8, 0.1).unwrap();
        let f = BloomFilter::new(params, [1u8; SEED_BYTES]);
        let bytes = f.to_bytes();

        assert_eq!(BloomFilter::from_bytes(&bytes[..10]), Err(FilterDecodeError::Truncated));

        let mut bad = bytes.clone();
        bad[0] ^= 0xFF;
        assert_eq!(BloomFilter::from_bytes(&bad), Err(FilterDecodeError::BadMagic));

        let mut bad = bytes.clone();
        bad[4] = 0xEE;
        assert!(matches!(BloomFilter::from_bytes(&bad), Err(FilterDecodeError::BadVersion(_))));

        let mut bad = bytes;
        bad.truncate(bad.len() - 1);
        assert_eq!(BloomFilter::from_bytes(&bad), Err(FilterDecodeError::BadGeometry));
    }

    #[test]
    fn distinct_random_seeds_disagree_on_some_probe() {
        let params = derive_params(32, 1e-2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut s1 = [0u8; SEED_BYTES];
        let mut s2 = [0u8; SEED_BYTES];
        rng.fill_bytes(&mut s1);
        rng.fill_bytes(&mut s2);
        let a = BloomHasher::new(params.ell, params.k, s1);
        let b = BloomHasher::new(params.ell, params.k, s2);
        assert!((0..100u32).any(|i| a.positions(&i.to_be_bytes()) != b.positions(&i.to_be_bytes())));
    }

    proptest! {
        #[test]
        fn no_false_negatives_under_random_workloads(
            seed in any::<[u8; SEED_BYTES]>(),
            items in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..32), 1..64),
        ) {
            let params = derive_params(64, 0.05).unwrap();
            let mut f = BloomFilter::new(params, seed);
            for item in &items {
                f.insert(item);
            }
            for item in &items {
                prop_assert!(f.check(item));
            }
        }

        #[test]
        fn round_trip_is_identity_for_random_filters(
            seed in any::<[u8; SEED_BYTES]>(),
            n in 1u64..128,
            items in proptest::collection::vec(any::<u32>(), 0..32),
        ) {
            let params = derive_params(n, 0.02).unwrap();
            let mut f = BloomFilter::new(params, seed);
            for item in &items {
                f.insert(&item.to_le_bytes());
            }
            let g = BloomFilter::from_bytes(&f.to_bytes()).unwrap();
            prop_assert_eq!(f, g);
        }
    }
}
