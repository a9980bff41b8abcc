//! Executable ideal functionality for puncturable signing, plus a harness
//! that replays interaction traces against both the oracle and the real
//! scheme and reports where their verdicts part ways.
//!
//! The oracle keeps no keys and does no algebra. Signatures are opaque
//! tokens; its entire behaviour is bookkeeping over a table of
//! `(message, token, key, bit)` records, a set `P` of punctured prefixes,
//! and a corruption flag. Verification applies four rules in order:
//!
//! 1. **Completeness** — the exact triple was recorded valid: accept.
//! 2. **Unforgeability** — the registered key, an uncorrupted signer, and
//!    a message never signed: reject and record.
//! 3. **Consistency** — any recorded triple answers the same way forever.
//! 4. Otherwise a punctured prefix rejects outright; anything else is
//!    decided by the adversary callback (default: reject) and recorded.
//!
//! Sign-and-puncture refuses any prefix already in `P`, records the fresh
//! token as valid, and adds the prefix to `P` — so a second signature under
//! one prefix cannot exist even notionally.
//!
//! The real scheme tracks this behaviour everywhere except one budgeted
//! spot: a Bloom false positive makes the real signer refuse a prefix the
//! oracle still considers fresh. The harness counts those separately
//! against the filter's expected rate rather than flagging them as
//! failures; every other disagreement is a hard divergence.

use crate::bloom::expected_fp_rate;
use crate::ps::{self, ExtractError, PrefixExtractor, SignError};
use crate::algebra::{random_scalar, CurveGroup, GroupContext};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use thiserror::Error;

/// Session identifier: the signer's identity plus a distinguishing tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sid {
    pub signer: String,
    pub tag: u64,
}

/// Opaque verification-key handle, equated by identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VkToken(pub u64);

/// Opaque signature handle, equated by identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SigToken(pub u64);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdealError {
    #[error("session id does not name the requesting signer")]
    MalformedSid,
    #[error("a key is already registered for this session")]
    AlreadyRegistered,
    #[error("no key registered yet")]
    NotRegistered,
    #[error("prefix already punctured")]
    PrefixPunctured,
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error("a conflicting record already marks this signature invalid")]
    ConflictingRecord,
}

/// Which verification rule produced a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VerifyRule {
    Completeness,
    Unforgeability,
    Consistency,
    PuncturedReject,
    AdversaryChoice,
}

/// State of the ideal functionality for a single signer session.
pub struct IdealState {
    extractor: PrefixExtractor,
    registered: Option<(Sid, VkToken)>,
    records: HashMap<(Vec<u8>, SigToken, VkToken), bool>,
    punctured: HashSet<Vec<u8>>,
    corrupted: bool,
    next_token: u64,
}

impl IdealState {
    pub fn new(extractor: PrefixExtractor) -> Self {
        IdealState {
            extractor,
            registered: None,
            records: HashMap::new(),
            punctured: HashSet::new(),
            corrupted: false,
            next_token: 1,
        }
    }

    fn fresh(&mut self) -> u64 {
        let t = self.next_token;
        self.next_token += 1;
        t
    }

    /// Register the signer's key. The session id must name the requester,
    /// and only one registration is accepted.
    pub fn keygen(&mut self, requester: &str, sid: &Sid) -> Result<VkToken, IdealError> {
        if sid.signer != requester {
            return Err(IdealError::MalformedSid);
        }
        if self.registered.is_some() {
            return Err(IdealError::AlreadyRegistered);
        }
        let vk = VkToken(self.fresh());
        self.registered = Some((sid.clone(), vk));
        Ok(vk)
    }

    /// Sign a message and burn its prefix. Refuses when the prefix was
    /// already punctured; otherwise records the fresh token as valid and
    /// extends `P`.
    pub fn psign(&mut self, message: &[u8]) -> Result<SigToken, IdealError> {
        let (_, vk) = self.registered.as_ref().ok_or(IdealError::NotRegistered)?;
        let vk = *vk;
        let prefix = self.extractor.extract(message)?.to_vec();
        if self.punctured.contains(&prefix) {
            return Err(IdealError::PrefixPunctured);
        }
        let sig = SigToken(self.fresh());
        // Freshly minted tokens can never collide with an invalid record,
        // but the consistency condition is part of the contract.
        if self.records.get(&(message.to_vec(), sig, vk)) == Some(&false) {
            return Err(IdealError::ConflictingRecord);
        }
        self.records.insert((message.to_vec(), sig, vk), true);
        self.punctured.insert(prefix);
        Ok(sig)
    }

    /// Verify with the default (always-rejecting) adversary.
    pub fn verify(&mut self, message: &[u8], sig: SigToken, vk: VkToken) -> (bool, VerifyRule) {
        self.verify_with(message, sig, vk, || false)
    }

    /// Verify under an explicit adversary callback, applying the four
    /// rules in order. The callback is consulted only on the final branch
    /// (unrecorded triple, unpunctured prefix).
    pub fn verify_with(
        &mut self,
        message: &[u8],
        sig: SigToken,
        vk: VkToken,
        adversary: impl FnOnce() -> bool,
    ) -> (bool, VerifyRule) {
        let registered_vk = self.registered.as_ref().map(|(_, vk)| *vk);
        let key = (message.to_vec(), sig, vk);

        // 1. Completeness: recorded valid under the registered key.
        if Some(vk) == registered_vk && self.records.get(&key) == Some(&true) {
            return (true, VerifyRule::Completeness);
        }
        // 2. Unforgeability: honest signer, registered key, message never
        //    legitimately signed — reject whatever token was supplied.
        if Some(vk) == registered_vk && !self.corrupted {
            let signed = self
                .records
                .iter()
                .any(|((m, _, k), bit)| *bit && *k == vk && m == message);
            if !signed {
                self.records.insert(key, false);
                return (false, VerifyRule::Unforgeability);
            }
        }
        // 3. Consistency: any recorded triple answers as before.
        if let Some(&bit) = self.records.get(&key) {
            return (bit, VerifyRule::Consistency);
        }
        // 4. Punctured prefixes reject; the rest is the adversary's call.
        let punctured = self
            .extractor
            .extract(message)
            .map(|p| self.punctured.contains(p))
            .unwrap_or(false);
        let (bit, rule) = if punctured {
            (false, VerifyRule::PuncturedReject)
        } else {
            (adversary(), VerifyRule::AdversaryChoice)
        };
        self.records.insert(key, bit);
        (bit, rule)
    }

    /// Mark the signer corrupted: rule 2 stops applying from here on.
    pub fn corrupt(&mut self) {
        self.corrupted = true;
    }

    pub fn is_corrupted(&self) -> bool {
        self.corrupted
    }

    pub fn registered_vk(&self) -> Option<VkToken> {
        self.registered.as_ref().map(|(_, vk)| *vk)
    }

    /// The set of punctured prefixes only ever grows.
    pub fn punctured_count(&self) -> usize {
        self.punctured.len()
    }

    pub fn is_punctured(&self, prefix: &[u8]) -> bool {
        self.punctured.contains(prefix)
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Which component of a stored signature a tampering event flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TamperKind {
    Challenge,
    Point,
    Index,
}

/// How a verification event names its signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SigRef {
    /// The signature from the i-th sign event of the trace (0-based over
    /// sign events, successful or not).
    Produced { index: usize },
    /// A deterministic pseudo-random signature — the forgery regime.
    Garbage { seed: u64 },
    /// A produced signature with one component mutated.
    Tampered { index: usize, which: TamperKind },
}

/// One step of an interaction trace. Serialized as line-oriented JSON with
/// messages hex-encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum TraceEvent {
    KeyGen {
        requester: String,
        sid_signer: String,
        sid_tag: u64,
    },
    PSign {
        #[serde(with = "hex_bytes")]
        message: Vec<u8>,
    },
    Verify {
        #[serde(with = "hex_bytes")]
        message: Vec<u8>,
        sig: SigRef,
        wrong_vk: bool,
    },
    Corrupt,
}

/// Serialize a trace as one JSON object per line.
pub fn write_trace(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
        out.push('\n');
    }
    out
}

/// Parse a line-oriented JSON trace; blank lines are skipped.
pub fn read_trace(text: &str) -> Result<Vec<TraceEvent>, serde_json::Error> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// A disagreement the equivalence harness refuses to tolerate.
#[derive(Debug, Clone, Serialize)]
pub struct HardDivergence {
    pub event_index: usize,
    pub detail: String,
}

/// Outcome of replaying one trace against both worlds.
#[derive(Debug, Clone, Serialize)]
pub struct TraceReport {
    pub events: usize,
    pub sign_attempts: usize,
    pub verify_attempts: usize,
    /// Real-refuse/ideal-accept on a fresh prefix: filter false positives,
    /// tolerated and counted against the budget below.
    pub fp_divergences: usize,
    /// Analytic expectation of `fp_divergences` given the filter geometry
    /// and the load at each sign attempt.
    pub expected_fp: f64,
    pub hard_divergences: Vec<HardDivergence>,
}

impl TraceReport {
    pub fn is_clean(&self) -> bool {
        self.hard_divergences.is_empty()
    }
}

/// Parameters for the real scheme backing a trace replay.
#[derive(Debug, Clone, Copy)]
pub struct HarnessParams {
    pub n: u64,
    pub pr: f64,
    pub extractor: PrefixExtractor,
}

impl Default for HarnessParams {
    fn default() -> Self {
        HarnessParams { n: 32, pr: 1e-2, extractor: PrefixExtractor::FixedLength { len: 8 } }
    }
}

/// Replay a trace against the ideal functionality and the real scheme in
/// lockstep and compare every verdict.
///
/// The real side implements sign-and-puncture as the composition of
/// `sign` and `puncture`. On the final verification branch the oracle's
/// adversary callback is wired to the real scheme's verdict — exactly the
/// simulator's move in the security argument — so the deterministic rules
/// (1, 2, 3, and the punctured branch of 4) are where divergence can
/// appear. Rule-1 comparisons against signatures the real signer refused
/// to produce (false positives) are skipped, since there is nothing real
/// to compare.
pub fn run_trace_equivalence(
    events: &[TraceEvent],
    params: &HarnessParams,
    seed: u64,
) -> TraceReport {
    let ctx = GroupContext::bls12_381();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut ideal = IdealState::new(params.extractor);

    let mut real: Option<(ps::SecretKey, ps::PublicKey)> = None;
    let mut decoy_vk: Option<ps::PublicKey> = None;
    let decoy_token = VkToken(u64::MAX);

    // Sign-event registry: ideal token and (when the real signer agreed)
    // the real signature, indexed by sign-event ordinal.
    let mut produced: Vec<(Option<SigToken>, Option<(Vec<u8>, ps::Signature)>)> = Vec::new();
    let mut garbage_tokens: HashMap<u64, SigToken> = HashMap::new();
    let mut tamper_tokens: HashMap<(usize, TamperKind), SigToken> = HashMap::new();
    let mut next_foreign_token = 1u64 << 32;

    let mut report = TraceReport {
        events: events.len(),
        sign_attempts: 0,
        verify_attempts: 0,
        fp_divergences: 0,
        expected_fp: 0.0,
        hard_divergences: Vec::new(),
    };

    for (i, event) in events.iter().enumerate() {
        match event {
            TraceEvent::KeyGen { requester, sid_signer, sid_tag } => {
                let sid = Sid { signer: sid_signer.clone(), tag: *sid_tag };
                let ideal_ok = ideal.keygen(requester, &sid).is_ok();
                if ideal_ok && real.is_none() {
                    let pair = ps::setup(&ctx, params.n, params.pr, params.extractor, &mut rng)
                        .expect("harness params are valid");
                    real = Some(pair);
                }
            }
            TraceEvent::PSign { message } => {
                report.sign_attempts += 1;
                let slot = produced.len();
                produced.push((None, None));
                let Some((sk, _)) = real.as_mut() else {
                    // No key registered: the oracle refuses too.
                    if ideal.psign(message).is_ok() {
                        report.hard_divergences.push(HardDivergence {
                            event_index: i,
                            detail: "ideal signed before key generation".into(),
                        });
                    }
                    continue;
                };
                // Expected false-positive probability for this attempt,
                // accumulated before the attempt mutates the filter.
                let fresh_for_ideal = params
                    .extractor
                    .extract(message)
                    .map(|p| !ideal.is_punctured(p))
                    .unwrap_or(false);
                if fresh_for_ideal {
                    let bp = sk.params();
                    report.expected_fp += expected_fp_rate(bp.ell, bp.k, sk.puncture_count());
                }

                let ideal_res = ideal.psign(message);
                let real_res = sk.sign_and_puncture(message, &mut rng);
                match (ideal_res, real_res) {
                    (Ok(token), Ok((sig, _))) => {
                        produced[slot] = (Some(token), Some((message.clone(), sig)));
                    }
                    (Ok(token), Err(SignError::PrefixUnavailable)) => {
                        // Filter false positive: the oracle signed, the real
                        // signer could not. Tolerated; the token stays
                        // real-less so later rule-1 checks skip it.
                        produced[slot] = (Some(token), None);
                        report.fp_divergences += 1;
                    }
                    (Err(IdealError::PrefixPunctured), Err(SignError::PrefixUnavailable)) => {}
                    (Err(IdealError::Extract(_)), Err(SignError::Extract(_))) => {}
                    (ideal_res, real_res) => {
                        report.hard_divergences.push(HardDivergence {
                            event_index: i,
                            detail: format!(
                                "sign verdicts disagree: ideal {ideal_res:?}, real {real_res:?}"
                            ),
                        });
                    }
                }
            }
            TraceEvent::Verify { message, sig, wrong_vk } => {
                report.verify_attempts += 1;
                let Some((_, vk_real)) = real.as_ref() else {
                    continue;
                };
                let Some(registered) = ideal.registered_vk() else {
                    continue;
                };

                // Resolve the signature reference on both sides.
                let resolved: Option<(SigToken, ps::Signature)> = match sig {
                    SigRef::Produced { index } => match produced.get(*index) {
                        Some((Some(token), Some((_, sig)))) => Some((*token, *sig)),
                        // Refused or false-positive-voided sign event:
                        // nothing real exists, skip the comparison.
                        _ => None,
                    },
                    SigRef::Garbage { seed: gseed } => {
                        let token = *garbage_tokens.entry(*gseed).or_insert_with(|| {
                            let t = SigToken(next_foreign_token);
                            next_foreign_token += 1;
                            t
                        });
                        let mut grng = ChaCha12Rng::seed_from_u64(*gseed);
                        let ell = vk_real.params().ell;
                        let s = (ctx.p1() * random_scalar(&mut grng)).into_affine();
                        Some((
                            token,
                            ps::Signature {
                                h: random_scalar(&mut grng),
                                s,
                                index: grng.gen_range(1..=ell),
                            },
                        ))
                    }
                    SigRef::Tampered { index, which } => match produced.get(*index) {
                        Some((Some(_), Some((_, sig)))) => {
                            let token = *tamper_tokens.entry((*index, *which)).or_insert_with(|| {
                                let t = SigToken(next_foreign_token);
                                next_foreign_token += 1;
                                t
                            });
                            let mut mutated = *sig;
                            match which {
                                TamperKind::Challenge => {
                                    mutated.h += crate::algebra::Scalar::from(1u64)
                                }
                                TamperKind::Point => {
                                    mutated.s = (mutated.s * crate::algebra::Scalar::from(2u64))
                                        .into_affine()
                                }
                                TamperKind::Index => mutated.index = mutated.index.wrapping_add(1),
                            }
                            Some((token, mutated))
                        }
                        _ => None,
                    },
                };
                let Some((token, real_sig)) = resolved else {
                    continue;
                };

                let (vk_token, real_verdict) = if *wrong_vk {
                    if decoy_vk.is_none() {
                        let (_, vk) =
                            ps::setup(&ctx, params.n, params.pr, params.extractor, &mut rng)
                                .expect("harness params are valid");
                        decoy_vk = Some(vk);
                    }
                    (decoy_token, decoy_vk.as_ref().unwrap().verify(message, &real_sig))
                } else {
                    (registered, vk_real.verify(message, &real_sig))
                };

                let (ideal_bit, rule) =
                    ideal.verify_with(message, token, vk_token, || real_verdict);
                if rule != VerifyRule::AdversaryChoice && ideal_bit != real_verdict {
                    report.hard_divergences.push(HardDivergence {
                        event_index: i,
                        detail: format!(
                            "verify disagrees under {rule:?}: ideal {ideal_bit}, real {real_verdict}"
                        ),
                    });
                }
            }
            TraceEvent::Corrupt => ideal.corrupt(),
        }
    }
    report
}

/// Tunables for the random trace generator.
#[derive(Debug, Clone, Copy)]
pub struct TraceGenConfig {
    /// Events per trace (a valid key generation is always emitted first).
    pub events: usize,
    /// Prefixes are drawn from `[0, prefix_space)`; a small space makes
    /// re-sign refusals and punctured-verify paths common.
    pub prefix_space: u64,
    /// Probability that an event is a sign attempt (the rest are verifies,
    /// with an occasional corruption).
    pub sign_bias: f64,
}

impl Default for TraceGenConfig {
    fn default() -> Self {
        TraceGenConfig { events: 60, prefix_space: 48, sign_bias: 0.5 }
    }
}

/// Generate a random trace exercising every oracle rule: honest signs and
/// replays, re-signs under burned prefixes, garbage and tampered
/// signatures, wrong-key verifies, cross-message replays, corruption.
pub fn gen_trace(cfg: &TraceGenConfig, rng: &mut ChaCha12Rng) -> Vec<TraceEvent> {
    let mut events = vec![TraceEvent::KeyGen {
        requester: "signer".into(),
        sid_signer: "signer".into(),
        sid_tag: rng.gen(),
    }];
    let message = |rng: &mut ChaCha12Rng, space: u64| -> Vec<u8> {
        let mut m = (rng.gen_range(0..space)).to_be_bytes().to_vec();
        m.extend_from_slice(&rng.gen::<u32>().to_be_bytes());
        m
    };
    let mut signs = 0usize;
    for _ in 0..cfg.events {
        let roll: f64 = rng.gen();
        if roll < cfg.sign_bias || signs == 0 {
            events.push(TraceEvent::PSign { message: message(rng, cfg.prefix_space) });
            signs += 1;
        } else if roll < cfg.sign_bias + 0.02 {
            events.push(TraceEvent::Corrupt);
        } else {
            let wrong_vk = rng.gen_bool(0.1);
            let sig = match rng.gen_range(0..5u8) {
                0 | 1 => SigRef::Produced { index: rng.gen_range(0..signs) },
                2 => SigRef::Garbage { seed: rng.gen() },
                _ => SigRef::Tampered {
                    index: rng.gen_range(0..signs),
                    which: match rng.gen_range(0..3u8) {
                        0 => TamperKind::Challenge,
                        1 => TamperKind::Point,
                        _ => TamperKind::Index,
                    },
                },
            };
            // Half the produced-signature verifies replay the original
            // message; the rest pair the signature with a fresh message
            // (same prefix space, so punctured prefixes come up often).
            let msg = message(rng, cfg.prefix_space);
            events.push(TraceEvent::Verify { message: msg, sig, wrong_vk });
        }
    }
    events
}
