//! The Bloom-filter puncturable signature scheme.
//!
//! Key generation samples a master scalar `s` and derives one G1 share per
//! filter position, `sk_i = (s / (s + h1(i))) * P1`. Signing a message
//! extracts its prefix, maps the prefix to its filter positions, picks one
//! position whose share is still alive, and produces a Schnorr-style proof
//! tied to that share:
//!
//! ```text
//! x <-$ Z_p*,  r = g^x,  h = h2(m, r),  S = (x - h) * sk_i
//! sigma = (h, S, i)
//! ```
//!
//! Verification recomputes `r' = e(S, h1(i)*P2 + P_pub) * g^h` and accepts
//! iff `h = h2(m, r')`. Puncturing a prefix inserts it into the filter and
//! overwrites the shares at its positions, after which no position the
//! prefix maps to has a live share left — signing for it is gone for good,
//! while signatures made earlier keep verifying.
//!
//! The one-sided error is inherited from the filter: a false positive makes
//! the signer refuse a prefix that was never punctured, at the filter's
//! false-positive rate. Verification has no error in either direction.

use crate::algebra::{
    batch_inversion, g1_fixed_base_mul, gt_exp, gt_mul, h1, h2, pairing, random_scalar,
    AffineRepr, CurveGroup, G1Affine, G2Affine, GroupContext, Gt, Scalar, Zero,
};
use crate::bloom::{self, BloomFilter, BloomHasher, BloomParams, ParamError, SEED_BYTES};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How the punctured prefix is read out of a message. The prefix scheme is
/// fixed at key generation and travels with both halves of the key pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum PrefixExtractor {
    /// The first `len` bytes of the message.
    FixedLength { len: u32 },
    /// Everything strictly before the first occurrence of `byte`.
    Delimiter { byte: u8 },
    /// The explicit byte range `[start, start + len)`.
    Range { start: u32, len: u32 },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("message too short for the configured prefix: need {needed} bytes, have {got}")]
    TooShort { needed: usize, got: usize },
    #[error("prefix delimiter not found in message")]
    DelimiterNotFound,
}

impl PrefixExtractor {
    /// Slice the prefix out of a message.
    pub fn extract<'m>(&self, message: &'m [u8]) -> Result<&'m [u8], ExtractError> {
        match *self {
            PrefixExtractor::FixedLength { len } => {
                let len = len as usize;
                if message.len() < len {
                    return Err(ExtractError::TooShort { needed: len, got: message.len() });
                }
                Ok(&message[..len])
            }
            PrefixExtractor::Delimiter { byte } => message
                .iter()
                .position(|&b| b == byte)
                .map(|i| &message[..i])
                .ok_or(ExtractError::DelimiterNotFound),
            PrefixExtractor::Range { start, len } => {
                let (start, len) = (start as usize, len as usize);
                let end = start + len;
                if message.len() < end {
                    return Err(ExtractError::TooShort { needed: end, got: message.len() });
                }
                Ok(&message[start..end])
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SignError {
    /// The prefix maps only to punctured filter positions. Either it was
    /// punctured, or (at the filter's false-positive rate) it collided with
    /// earlier punctures.
    #[error("prefix unavailable: all of its filter positions are punctured")]
    PrefixUnavailable,
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

/// Outcome of a puncture. Puncturing cannot fail; it can only warn that the
/// filter is now loaded beyond the capacity its false-positive target was
/// derived for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PunctureOutcome {
    /// Total punctures performed on this key, including this one.
    pub punctures: u64,
    /// Set once the puncture count exceeds the rated capacity `n`.
    pub over_capacity: bool,
}

/// Signature: a challenge scalar, a single G1 point, and the filter
/// position whose share produced it. Size is independent of how many
/// punctures the signing key has absorbed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Signature {
    pub h: Scalar,
    pub s: G1Affine,
    pub index: u32,
}

impl Signature {
    /// Serialized payload width: 32-byte scalar, 48-byte compressed G1
    /// point, 4-byte index.
    pub const ENCODED_LEN: usize = 32 + 48 + 4;
}

/// Signing key: the filter tracking punctured prefixes plus one G1 share
/// per filter position. Punctured slots are overwritten with the identity
/// point; dropping the key scrubs the rest.
#[derive(Clone)]
pub struct SecretKey {
    pub(crate) ctx: GroupContext,
    pub(crate) filter: BloomFilter,
    pub(crate) shares: Vec<G1Affine>,
    pub(crate) g: Gt,
    pub(crate) extractor: PrefixExtractor,
}

/// Verification key: `P_pub = s*P2`, the cached pairing `g = e(P1, P_pub)`,
/// and the filter's position-hashing parameters (no bit array — verifiers
/// never learn what was punctured).
#[derive(Debug, Clone, PartialEq)]
pub struct PublicKey {
    pub(crate) ctx: GroupContext,
    pub(crate) p_pub: G2Affine,
    pub(crate) g: Gt,
    pub(crate) params: BloomParams,
    pub(crate) hasher: BloomHasher,
    pub(crate) extractor: PrefixExtractor,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SetupError {
    #[error(transparent)]
    Params(#[from] ParamError),
}

/// Generate a key pair able to absorb `n` punctures at false-positive rate
/// `pr`, with the given prefix scheme.
pub fn setup<R: RngCore>(
    ctx: &GroupContext,
    n: u64,
    pr: f64,
    extractor: PrefixExtractor,
    rng: &mut R,
) -> Result<(SecretKey, PublicKey), SetupError> {
    let params = bloom::derive_params(n, pr)?;
    let mut seed = [0u8; SEED_BYTES];
    rng.fill_bytes(&mut seed);
    let filter = BloomFilter::new(params, seed);

    // Master scalar. Resample in the (negligible-probability) event that
    // some denominator s + h1(i) degenerates to zero.
    let h1_values: Vec<Scalar> = (1..=params.ell).map(h1).collect();
    let (mut s, mut inverses) = loop {
        let s = random_scalar(rng);
        let mut denoms: Vec<Scalar> = h1_values.iter().map(|h| s + h).collect();
        if denoms.iter().any(Scalar::is_zero) {
            continue;
        }
        batch_inversion(&mut denoms);
        break (s, denoms);
    };

    // sk_i = (s / (s + h1(i))) * P1, all off one shared window table.
    for inv in inverses.iter_mut() {
        *inv *= s;
    }
    let shares = g1_fixed_base_mul(&ctx.p1().into_group(), &inverses);

    let p_pub = (ctx.p2() * s).into_affine();
    let g = pairing(ctx.p1(), p_pub);

    // Best-effort scrub of the master scalar and the per-share scalars.
    for inv in inverses.iter_mut() {
        *inv = Scalar::zero();
    }
    s = Scalar::zero();
    let _ = s;

    let sk = SecretKey { ctx: *ctx, filter, shares, g, extractor };
    let vk = PublicKey {
        ctx: *ctx,
        p_pub,
        g,
        params,
        hasher: sk.filter.hasher().clone(),
        extractor,
    };
    debug_assert!(sk.check_invariants());
    Ok((sk, vk))
}

impl SecretKey {
    /// Puncture a prefix: insert it into the filter and destroy the shares
    /// at every position it maps to. Idempotent at the byte level — a
    /// repeat puncture sets no new bits and finds the shares already gone
    /// (only the puncture counter moves).
    pub fn puncture(&mut self, prefix: &[u8]) -> PunctureOutcome {
        for pos in self.filter.positions(prefix) {
            self.shares[(pos - 1) as usize] = G1Affine::identity();
        }
        self.filter.insert(prefix);
        debug_assert!(self.check_invariants());
        PunctureOutcome {
            punctures: self.filter.inserted(),
            over_capacity: self.filter.inserted() > self.filter.params().n,
        }
    }

    /// Sign a message. Fails fast — before touching any curve arithmetic —
    /// when the message's prefix has no live filter position left.
    pub fn sign<R: RngCore>(&self, message: &[u8], rng: &mut R) -> Result<Signature, SignError> {
        let prefix = self.extractor.extract(message)?;
        let live: Vec<u32> = self
            .filter
            .positions(prefix)
            .into_iter()
            .filter(|&p| !self.filter.is_set(p))
            .collect();
        if live.is_empty() {
            return Err(SignError::PrefixUnavailable);
        }
        let index = live[rng.gen_range(0..live.len())];
        let share = self.shares[(index - 1) as usize];
        debug_assert!(!share.is_zero(), "live position holds a destroyed share");

        let x = random_scalar(rng);
        let r = gt_exp(&self.g, &x);
        let h = h2(message, &r);
        let s_point = (share * (x - h)).into_affine();
        Ok(Signature { h, s: s_point, index })
    }

    /// Sign, then immediately puncture the message's prefix, so no second
    /// signature under the same prefix can ever be produced. This is the
    /// composition block-signing relies on.
    pub fn sign_and_puncture<R: RngCore>(
        &mut self,
        message: &[u8],
        rng: &mut R,
    ) -> Result<(Signature, PunctureOutcome), SignError> {
        let sig = self.sign(message, rng)?;
        let prefix = self.extractor.extract(message).expect("extracted during sign");
        let outcome = self.puncture(&prefix.to_vec());
        Ok((sig, outcome))
    }

    /// Whether the filter reports this prefix as punctured (true may be a
    /// false positive at the filter's rate; false is definitive).
    pub fn punctured(&self, prefix: &[u8]) -> bool {
        self.filter.check(prefix)
    }

    /// Punctures absorbed so far.
    pub fn puncture_count(&self) -> u64 {
        self.filter.inserted()
    }

    /// Punctures left before the false-positive target no longer applies.
    pub fn remaining_capacity(&self) -> u64 {
        self.filter.remaining_capacity()
    }

    pub fn params(&self) -> &BloomParams {
        self.filter.params()
    }

    pub fn extractor(&self) -> PrefixExtractor {
        self.extractor
    }

    pub fn context(&self) -> &GroupContext {
        &self.ctx
    }

    /// Read-only view of the puncture-tracking filter.
    pub fn filter(&self) -> &BloomFilter {
        &self.filter
    }

    /// Number of shares not yet destroyed.
    pub fn live_share_count(&self) -> usize {
        (1..=self.filter.params().ell).filter(|&p| !self.filter.is_set(p)).count()
    }

    /// Filter bit set exactly where the share is destroyed, and vice versa.
    pub(crate) fn check_invariants(&self) -> bool {
        self.shares.len() == self.filter.params().ell as usize
            && (1..=self.filter.params().ell)
                .all(|p| self.filter.is_set(p) == self.shares[(p - 1) as usize].is_zero())
    }
}

impl Drop for SecretKey {
    fn drop(&mut self) {
        for share in self.shares.iter_mut() {
            *share = G1Affine::identity();
        }
    }
}

// Never print share material, even in debug output.
impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecretKey")
            .field("curve", &self.ctx.curve())
            .field("params", self.filter.params())
            .field("punctures", &self.filter.inserted())
            .field("extractor", &self.extractor)
            .field("shares", &format_args!("[redacted; {} slots]", self.shares.len()))
            .finish()
    }
}

impl PublicKey {
    /// Verify a signature. Total: any malformed input — wrong prefix
    /// shape, out-of-range index, index outside the prefix's probe set —
    /// is a rejection, never a panic.
    pub fn verify(&self, message: &[u8], sig: &Signature) -> bool {
        let Ok(prefix) = self.extractor.extract(message) else {
            return false;
        };
        if !self.hasher.positions(prefix).contains(&sig.index) {
            return false;
        }
        // r' = e(S, h1(i)*P2 + P_pub) * g^h; accept iff h = h2(m, r').
        let q = (self.ctx.p2() * h1(sig.index) + self.p_pub.into_group()).into_affine();
        let r = gt_mul(&pairing(sig.s, q), &gt_exp(&self.g, &sig.h));
        sig.h == h2(message, &r)
    }

    pub fn params(&self) -> &BloomParams {
        &self.params
    }

    pub fn hasher(&self) -> &BloomHasher {
        &self.hasher
    }

    pub fn extractor(&self) -> PrefixExtractor {
        self.extractor
    }

    pub fn context(&self) -> &GroupContext {
        &self.ctx
    }

    pub fn g(&self) -> &Gt {
        &self.g
    }

    pub fn p_pub(&self) -> &G2Affine {
        &self.p_pub
    }
}

/// Free-function form of [`PublicKey::verify`].
pub fn verify(vk: &PublicKey, message: &[u8], sig: &Signature) -> bool {
    vk.verify(message, sig)
}
