//! Discrete-slot proof-of-stake simulator built on the puncturable scheme.
//!
//! Each stakeholder signs blocks with a puncturable key whose prefix is the
//! slot number (or, behind a config switch, the previous block's hash), and
//! punctures that prefix the moment the block is signed. A later key
//! compromise therefore yields nothing that can re-sign an already-used
//! slot: the long-range attack that works by buying up old keys finds the
//! relevant shares already destroyed.
//!
//! Leader election is a local VRF lottery. The VRF here is a keyed-hash
//! stand-in — deterministic, unique and checkable inside the simulation,
//! with a MAC-style proof token, but *not* a cryptographic VRF (the
//! evaluation key doubles as the public handle). A stakeholder with
//! relative stake `alpha` leads a slot when its 64-bit draw falls below
//!
//! ```text
//! T = 2^ell_vrf * (1 - (1 - f)^alpha)
//! ```
//!
//! so the chance that *some* leader exists in a slot is `1-(1-f)^(sum
//! alpha)` — independent of how stake is split, which is what makes the
//! lottery fair under re-division of stake.
//!
//! The network is a synchronous broadcast with a configurable fixed delay
//! (default: next slot). Chain selection is longest-chain with ties broken
//! in favour of the local chain, then by head hash.

use crate::algebra::{g1_to_bytes, scalar_to_bytes};
use crate::bloom::ParamError;
use crate::ps::{self, PrefixExtractor, SignError};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha384};
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use thiserror::Error;

/// Block and genesis hashes are full SHA-384 digests.
pub const HASH_BYTES: usize = 48;
pub type BlockHash = [u8; HASH_BYTES];

// ---------------------------------------------------------------------------
// VRF stand-in and the leadership lottery
// ---------------------------------------------------------------------------

/// Evaluation key of the keyed-hash VRF stand-in. Within the simulation the
/// same bytes act as the public handle; uniqueness and verifiability hold,
/// cryptographic pseudorandomness against the key holder does not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VrfKey(pub [u8; 32]);

/// A VRF draw: the output word and its proof token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VrfOutput {
    pub y: u64,
    pub proof: [u8; 16],
}

/// Evaluate the VRF on an input, keeping the low `ell_vrf` bits.
pub fn vrf_eval(key: &VrfKey, input: &[u8], ell_vrf: u32) -> VrfOutput {
    debug_assert!((1..=64).contains(&ell_vrf));
    let mut h = Sha384::new();
    h.update(b"vrf");
    h.update(key.0);
    h.update(input);
    let d = h.finalize();
    let mut y = u64::from_be_bytes(d[0..8].try_into().unwrap());
    if ell_vrf < 64 {
        y &= (1u64 << ell_vrf) - 1;
    }
    VrfOutput { y, proof: d[8..24].try_into().unwrap() }
}

/// Check a claimed VRF draw by re-evaluation.
pub fn vrf_verify(key: &VrfKey, input: &[u8], ell_vrf: u32, out: &VrfOutput) -> bool {
    vrf_eval(key, input, ell_vrf) == *out
}

/// Leadership threshold `2^ell_vrf * (1 - (1-f)^alpha)`, computed in
/// integer arithmetic after a Q64 fixed-point evaluation of `(1-f)^alpha`
/// so that the comparison against the VRF word is exact.
pub fn leadership_threshold(alpha: f64, f: f64, ell_vrf: u32) -> u128 {
    debug_assert!((0.0..=1.0).contains(&alpha));
    debug_assert!(f > 0.0 && f < 1.0);
    let q = (1.0 - f).powf(alpha);
    let q64 = (q * (u64::MAX as f64 + 1.0)).round() as u128; // q in Q64
    ((1u128 << ell_vrf) * ((1u128 << 64) - q64)) >> 64
}

/// Does a VRF word win the slot lottery at relative stake `alpha`?
pub fn eligible(y: u64, alpha: f64, f: f64, ell_vrf: u32) -> bool {
    (y as u128) < leadership_threshold(alpha, f, ell_vrf)
}

/// Per-slot leadership probability, `phi_f(alpha) = 1 - (1-f)^alpha`.
pub fn leader_probability(alpha: f64, f: f64) -> f64 {
    1.0 - (1.0 - f).powf(alpha)
}

fn vrf_input(eta: &[u8; 32], slot: u64) -> Vec<u8> {
    let mut v = Vec::with_capacity(40);
    v.extend_from_slice(eta);
    v.extend_from_slice(&slot.to_be_bytes());
    v
}

// ---------------------------------------------------------------------------
// Blocks and chains
// ---------------------------------------------------------------------------

/// Leadership proof carried in a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockProof {
    pub creator: u32,
    pub y: u64,
    pub proof: [u8; 16],
}

/// A block: slot, link to the previous block's hash, opaque payload,
/// leadership proof, puncturable signature over all of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub slot: u64,
    pub prev: BlockHash,
    pub payload: Vec<u8>,
    pub proof: BlockProof,
    pub sig: ps::Signature,
}

/// Canonical bytes the block signature covers. The slot comes first as a
/// fixed 8-byte big-endian field, so a fixed-length-8 prefix extractor
/// reads exactly the slot; the previous-block hash sits at bytes [8, 56),
/// which is what the hash-puncturing mode's range extractor targets.
pub fn signing_bytes(slot: u64, prev: &BlockHash, payload: &[u8], proof: &BlockProof) -> Vec<u8> {
    let mut v = Vec::with_capacity(8 + HASH_BYTES + 4 + payload.len() + 4 + 8 + 16);
    v.extend_from_slice(&slot.to_be_bytes());
    v.extend_from_slice(prev);
    v.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    v.extend_from_slice(payload);
    v.extend_from_slice(&proof.creator.to_be_bytes());
    v.extend_from_slice(&proof.y.to_be_bytes());
    v.extend_from_slice(&proof.proof);
    v
}

impl Block {
    pub fn signing_bytes(&self) -> Vec<u8> {
        signing_bytes(self.slot, &self.prev, &self.payload, &self.proof)
    }

    /// Block hash: digest of the signed bytes plus the signature itself.
    pub fn hash(&self) -> BlockHash {
        let mut h = Sha384::new();
        h.update(self.signing_bytes());
        h.update(scalar_to_bytes(&self.sig.h));
        h.update(g1_to_bytes(&self.sig.s));
        h.update(self.sig.index.to_be_bytes());
        h.finalize().into()
    }
}

/// A block paired with its cached hash; chains share these by reference.
#[derive(Debug)]
pub struct SealedBlock {
    pub block: Block,
    pub hash: BlockHash,
}

impl SealedBlock {
    pub fn seal(block: Block) -> Arc<Self> {
        let hash = block.hash();
        Arc::new(SealedBlock { block, hash })
    }
}

/// The stake table and randomness everything is anchored to.
#[derive(Clone)]
pub struct Genesis {
    pub entries: Vec<GenesisEntry>,
    pub eta: [u8; 32],
}

#[derive(Clone)]
pub struct GenesisEntry {
    pub id: u32,
    pub alpha: f64,
    pub vk: ps::PublicKey,
    pub vrf_key: VrfKey,
}

impl Genesis {
    pub fn hash(&self) -> BlockHash {
        let mut h = Sha384::new();
        h.update(b"genesis");
        h.update(self.eta);
        for e in &self.entries {
            h.update(e.id.to_be_bytes());
            h.update(e.alpha.to_bits().to_be_bytes());
            h.update(crate::codec::public_key_bytes(&e.vk));
            h.update(e.vrf_key.0);
        }
        h.finalize().into()
    }

    pub fn entry(&self, id: u32) -> Option<&GenesisEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

/// A chain: the genesis anchor plus shared block references.
#[derive(Clone)]
pub struct Chain {
    genesis_hash: BlockHash,
    blocks: Vec<Arc<SealedBlock>>,
}

impl Chain {
    pub fn new(genesis_hash: BlockHash) -> Self {
        Chain { genesis_hash, blocks: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Arc<SealedBlock>] {
        &self.blocks
    }

    pub fn head_hash(&self) -> BlockHash {
        self.blocks.last().map(|b| b.hash).unwrap_or(self.genesis_hash)
    }

    pub fn head_slot(&self) -> u64 {
        self.blocks.last().map(|b| b.block.slot).unwrap_or(0)
    }

    pub fn push(&mut self, block: Arc<SealedBlock>) {
        debug_assert_eq!(block.block.prev, self.head_hash());
        debug_assert!(block.block.slot > self.head_slot());
        self.blocks.push(block);
    }

    /// Is `self` with its last `k` blocks pruned a prefix of `other`?
    pub fn pruned_is_prefix_of(&self, k: u64, other: &Chain) -> bool {
        let keep = self.blocks.len().saturating_sub(k as usize);
        if keep == 0 {
            return true;
        }
        other.blocks.len() >= keep && other.blocks[keep - 1].hash == self.blocks[keep - 1].hash
    }

    /// Length of the longest common prefix with `other`.
    pub fn common_prefix_len(&self, other: &Chain) -> usize {
        // Hash-chained blocks agree at position i iff they agree at every
        // position up to i, so binary search applies.
        let (mut a, mut b) = (0, self.blocks.len().min(other.blocks.len()));
        while a < b {
            let mid = (a + b) / 2;
            if self.blocks[mid].hash == other.blocks[mid].hash {
                a = mid + 1;
            } else {
                b = mid;
            }
        }
        a
    }
}

/// Longest-chain rule: adopt the longest valid candidate strictly longer
/// than the local chain; among equally long candidates prefer the smallest
/// head hash; never abandon the local chain for an equal-length rival.
pub fn select_chain(local: &Chain, candidates: &[Chain]) -> Chain {
    let best_len = candidates.iter().map(Chain::len).max().unwrap_or(0);
    if best_len <= local.len() {
        return local.clone();
    }
    candidates
        .iter()
        .filter(|c| c.len() == best_len)
        .min_by_key(|c| c.head_hash())
        .cloned()
        .unwrap()
}

// ---------------------------------------------------------------------------
// Stakeholders and the block pipeline
// ---------------------------------------------------------------------------

/// What the block signature's prefix commits to, i.e. what gets punctured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PunctureMode {
    /// Puncture the slot number (default). One signature per slot per key,
    /// whatever the parent block was.
    #[default]
    Slot,
    /// Puncture the previous block's hash. One signature per parent, which
    /// also pins the fork being extended.
    PrevHash,
}

impl PunctureMode {
    pub fn extractor(self) -> PrefixExtractor {
        match self {
            PunctureMode::Slot => PrefixExtractor::FixedLength { len: 8 },
            PunctureMode::PrevHash => PrefixExtractor::Range { start: 8, len: HASH_BYTES as u32 },
        }
    }
}

/// One simulated party: stake, keys, flags.
#[derive(Clone)]
pub struct Stakeholder {
    pub id: u32,
    pub alpha: f64,
    pub sk: ps::SecretKey,
    pub vk: ps::PublicKey,
    pub vrf_key: VrfKey,
    pub dsig_key: [u8; 32],
    pub online: bool,
    pub corrupted: bool,
}

impl Stakeholder {
    /// Keyed-hash MAC standing in for the ordinary (non-puncturable)
    /// signature scheme transactions would use.
    pub fn sign_tx(&self, payload: &[u8]) -> [u8; HASH_BYTES] {
        tx_tag(&self.dsig_key, payload)
    }

    pub fn verify_tx(&self, payload: &[u8], tag: &[u8; HASH_BYTES]) -> bool {
        &tx_tag(&self.dsig_key, payload) == tag
    }
}

fn tx_tag(key: &[u8; 32], payload: &[u8]) -> [u8; HASH_BYTES] {
    let mut h = Sha384::new();
    h.update(b"tx");
    h.update(key);
    h.update(payload);
    h.finalize().into()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MakeBlockError {
    #[error("stakeholder is not eligible to lead this slot")]
    NotEligible,
    #[error(transparent)]
    Sign(#[from] SignError),
}

/// Produce a block for a slot: check eligibility, sign, puncture — the
/// signature and the puncture are one move, so the stakeholder can never
/// sign twice for the same prefix even if crashed and restarted from the
/// returned key state.
pub fn make_block<R: RngCore>(
    holder: &mut Stakeholder,
    slot: u64,
    prev: BlockHash,
    payload: Vec<u8>,
    eta: &[u8; 32],
    f: f64,
    ell_vrf: u32,
    rng: &mut R,
) -> Result<Arc<SealedBlock>, MakeBlockError> {
    let out = vrf_eval(&holder.vrf_key, &vrf_input(eta, slot), ell_vrf);
    if !eligible(out.y, holder.alpha, f, ell_vrf) {
        return Err(MakeBlockError::NotEligible);
    }
    let proof = BlockProof { creator: holder.id, y: out.y, proof: out.proof };
    let bytes = signing_bytes(slot, &prev, &payload, &proof);
    let (sig, _) = holder.sk.sign_and_puncture(&bytes, rng)?;
    Ok(SealedBlock::seal(Block { slot, prev, payload, proof, sig }))
}

/// Why a block failed validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RejectReason {
    BadLink,
    SlotOrder,
    UnknownCreator,
    BadVrf,
    NotEligible,
    BadSignature,
}

/// Content checks that depend only on the block and genesis (creator,
/// VRF, eligibility, signature) — position-independent, so cacheable.
pub fn validate_block_crypto(
    b: &SealedBlock,
    genesis: &Genesis,
    f: f64,
    ell_vrf: u32,
) -> Result<(), RejectReason> {
    let entry = genesis.entry(b.block.proof.creator).ok_or(RejectReason::UnknownCreator)?;
    let out = VrfOutput { y: b.block.proof.y, proof: b.block.proof.proof };
    if !vrf_verify(&entry.vrf_key, &vrf_input(&genesis.eta, b.block.slot), ell_vrf, &out) {
        return Err(RejectReason::BadVrf);
    }
    if !eligible(b.block.proof.y, entry.alpha, f, ell_vrf) {
        return Err(RejectReason::NotEligible);
    }
    if !entry.vk.verify(&b.block.signing_bytes(), &b.block.sig) {
        return Err(RejectReason::BadSignature);
    }
    Ok(())
}

/// Full validation of a block in its chain position.
pub fn validate_block(
    b: &SealedBlock,
    prev_hash: &BlockHash,
    prev_slot: u64,
    genesis: &Genesis,
    f: f64,
    ell_vrf: u32,
) -> Result<(), RejectReason> {
    if b.block.prev != *prev_hash {
        return Err(RejectReason::BadLink);
    }
    if b.block.slot <= prev_slot {
        return Err(RejectReason::SlotOrder);
    }
    validate_block_crypto(b, genesis, f, ell_vrf)
}

/// Walk a whole chain from genesis. On failure reports the offending
/// height (0-based block index) and reason.
pub fn validate_chain(
    chain: &Chain,
    genesis: &Genesis,
    f: f64,
    ell_vrf: u32,
) -> Result<(), (usize, RejectReason)> {
    let mut prev_hash = genesis.hash();
    let mut prev_slot = 0u64;
    for (i, b) in chain.blocks.iter().enumerate() {
        validate_block(b, &prev_hash, prev_slot, genesis, f, ell_vrf).map_err(|r| (i, r))?;
        prev_hash = b.hash;
        prev_slot = b.block.slot;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Simulation configuration
// ---------------------------------------------------------------------------

/// Adversary behaviour during a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum AdversaryScript {
    /// Nobody is corrupted.
    #[default]
    None,
    /// Corrupted stakeholders follow the protocol; their block share is
    /// what the chain-quality metric watches.
    Honest { corrupted: Vec<u32> },
    /// Corrupted stakeholders build privately and release each block's
    /// chain snapshot only `release_after` slots later.
    Withhold { corrupted: Vec<u32>, release_after: u64 },
}

impl AdversaryScript {
    fn corrupted(&self) -> &[u32] {
        match self {
            AdversaryScript::None => &[],
            AdversaryScript::Honest { corrupted } => corrupted,
            AdversaryScript::Withhold { corrupted, .. } => corrupted,
        }
    }
}

fn default_ell_vrf() -> u32 {
    64
}
fn default_bloom_pr() -> f64 {
    1e-3
}
fn default_headroom() -> f64 {
    2.0
}
fn default_delay() -> u64 {
    1
}
fn default_k_cp() -> u64 {
    20
}
fn default_cq_window() -> u64 {
    50
}
fn default_cq_mu() -> f64 {
    0.5
}
fn default_cg_window() -> u64 {
    100
}

/// Everything a simulation run is determined by. `stake` entries are
/// relative weights, normalized to sum to 1 at load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub stake: Vec<f64>,
    /// Active-slots coefficient: chance some leader exists per slot.
    pub f: f64,
    pub total_slots: u64,
    #[serde(default)]
    pub seed: u64,
    /// Epoch length; the run must fit in a single epoch (stake is static).
    #[serde(default)]
    pub epoch_slots: Option<u64>,
    #[serde(default = "default_ell_vrf")]
    pub ell_vrf: u32,
    #[serde(default = "default_bloom_pr")]
    pub bloom_pr: f64,
    /// Signing keys are sized for `headroom ×` the expected leadership
    /// count over the run.
    #[serde(default = "default_headroom")]
    pub key_headroom: f64,
    /// Slots between broadcasting a chain and everyone receiving it.
    #[serde(default = "default_delay")]
    pub broadcast_delay: u64,
    /// Common-prefix depth parameter.
    #[serde(default = "default_k_cp")]
    pub k_cp: u64,
    /// Chain-quality window (blocks) and required honest fraction.
    #[serde(default = "default_cq_window")]
    pub cq_window: u64,
    #[serde(default = "default_cq_mu")]
    pub cq_mu: f64,
    /// Chain-growth window (slots) and required speed (blocks/slot).
    #[serde(default = "default_cg_window")]
    pub cg_window: u64,
    #[serde(default)]
    pub cg_tau: Option<f64>,
    #[serde(default)]
    pub puncture_mode: PunctureMode,
    #[serde(default)]
    pub offline: Vec<u32>,
    #[serde(default)]
    pub adversary: AdversaryScript,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("stake table is empty")]
    EmptyStake,
    #[error("stake weights must be positive and finite")]
    BadStake,
    #[error("active-slots coefficient f must lie strictly between 0 and 1")]
    BadF,
    #[error("ell_vrf must be between 1 and 64")]
    BadEllVrf,
    #[error("total_slots must be at least 1")]
    NoSlots,
    #[error("run does not fit in one epoch (total_slots > epoch_slots)")]
    EpochTooShort,
    #[error("broadcast delay must be at least 1 slot")]
    BadDelay,
    #[error("window/parameter values must be positive")]
    BadWindow,
    #[error("unknown stakeholder id {0} in config")]
    UnknownId(u32),
    #[error("signing-key parameters rejected: {0}")]
    KeyParams(#[from] ParamError),
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.stake.is_empty() {
            return Err(ConfigError::EmptyStake);
        }
        if self.stake.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(ConfigError::BadStake);
        }
        if !(self.f > 0.0 && self.f < 1.0) {
            return Err(ConfigError::BadF);
        }
        if !(1..=64).contains(&self.ell_vrf) {
            return Err(ConfigError::BadEllVrf);
        }
        if self.total_slots == 0 {
            return Err(ConfigError::NoSlots);
        }
        if let Some(epoch) = self.epoch_slots {
            if self.total_slots > epoch {
                return Err(ConfigError::EpochTooShort);
            }
        }
        if self.broadcast_delay == 0 {
            return Err(ConfigError::BadDelay);
        }
        if self.k_cp == 0
            || self.cq_window == 0
            || self.cg_window == 0
            || !(self.cq_mu > 0.0 && self.cq_mu <= 1.0)
            || !(self.bloom_pr > 0.0 && self.bloom_pr < 1.0)
            || !(self.key_headroom >= 1.0)
        {
            return Err(ConfigError::BadWindow);
        }
        let ids = 0..self.stake.len() as u32;
        for &id in self.adversary.corrupted().iter().chain(&self.offline) {
            if !ids.contains(&id) {
                return Err(ConfigError::UnknownId(id));
            }
        }
        Ok(())
    }

    fn normalized_stake(&self) -> Vec<f64> {
        let total: f64 = self.stake.iter().sum();
        self.stake.iter().map(|w| w / total).collect()
    }

    /// Default chain-growth speed requirement: half the active-slots rate.
    pub fn growth_tau(&self) -> f64 {
        self.cg_tau.unwrap_or(self.f / 2.0)
    }
}

// ---------------------------------------------------------------------------
// The simulation loop
// ---------------------------------------------------------------------------

/// Live state handed to instrumentation between slots.
pub struct SimWorld {
    pub genesis: Genesis,
    pub holders: Vec<Stakeholder>,
    pub chains: Vec<Chain>,
}

/// Metrics of one simulation run. Deterministic for a fixed config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub slots: u64,
    pub holders: usize,
    pub total_blocks_produced: u64,
    pub nonempty_slots: u64,
    pub nonempty_slot_fraction: f64,
    /// Signing refusals caused by filter false positives (a leader who
    /// could not sign an honestly fresh prefix).
    pub fp_sign_refusals: u64,
    pub per_holder_blocks: Vec<u64>,
    pub final_chain_len: u64,
    /// Common-prefix violations at depth `k_cp`: pairwise divergence among
    /// honest chains, plus any single chain's reorg deeper than `k_cp`.
    pub common_prefix_violations: u64,
    /// Worst adversarial fraction over any `cq_window`-block window of the
    /// final canonical chain.
    pub max_adversarial_window_fraction: f64,
    pub chain_quality_ok: bool,
    /// Worst growth (blocks/slot) over any `cg_window`-slot span of an
    /// honest chain-length history.
    pub min_window_growth: f64,
    pub chain_growth_ok: bool,
    pub adversarial_block_fraction: f64,
}

/// Run the simulation and return its metrics.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimReport, ConfigError> {
    run_simulation_observed(cfg, |_, _| {}).map(|(report, _)| report)
}

/// As [`run_simulation`], also returning the final world and calling the
/// observer with the world state at the *start* of every slot (before
/// delivery, adoption, or leadership).
pub fn run_simulation_observed(
    cfg: &SimConfig,
    mut observe: impl FnMut(u64, &SimWorld),
) -> Result<(SimReport, SimWorld), ConfigError> {
    cfg.validate()?;
    let ctx = crate::algebra::GroupContext::bls12_381();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let alphas = cfg.normalized_stake();
    let extractor = cfg.puncture_mode.extractor();

    let mut eta = [0u8; 32];
    rng.fill_bytes(&mut eta);

    // Stakeholders. Key capacity: headroom × expected leadership count.
    let mut holders = Vec::with_capacity(alphas.len());
    for (i, &alpha) in alphas.iter().enumerate() {
        let id = i as u32;
        let expected = cfg.total_slots as f64 * leader_probability(alpha, cfg.f);
        let n = (cfg.key_headroom * expected).ceil().max(8.0) as u64;
        let (sk, vk) = ps::setup(&ctx, n, cfg.bloom_pr, extractor, &mut rng)
            .map_err(|ps::SetupError::Params(p)| p)?;
        let mut vrf_seed = [0u8; 32];
        rng.fill_bytes(&mut vrf_seed);
        let mut dsig_key = [0u8; 32];
        rng.fill_bytes(&mut dsig_key);
        holders.push(Stakeholder {
            id,
            alpha,
            sk,
            vk,
            vrf_key: VrfKey(vrf_seed),
            dsig_key,
            online: !cfg.offline.contains(&id),
            corrupted: cfg.adversary.corrupted().contains(&id),
        });
    }
    let genesis = Genesis {
        entries: holders
            .iter()
            .map(|h| GenesisEntry {
                id: h.id,
                alpha: h.alpha,
                vk: h.vk.clone(),
                vrf_key: h.vrf_key,
            })
            .collect(),
        eta,
    };
    let genesis_hash = genesis.hash();
    let mut world = SimWorld {
        genesis,
        holders,
        chains: vec![Chain::new(genesis_hash); alphas.len()],
    };

    let withhold_delay = match &cfg.adversary {
        AdversaryScript::Withhold { release_after, .. } => Some(*release_after),
        _ => None,
    };

    // Broadcast queue: arrival slot -> chains, in sender order.
    let mut inflight: BTreeMap<u64, Vec<(u32, Chain)>> = BTreeMap::new();
    // Objective validity cache for delivered chains, keyed by head hash.
    let mut valid_heads: HashMap<BlockHash, bool> = HashMap::new();
    valid_heads.insert(genesis_hash, true);

    let honest_online: Vec<usize> = world
        .holders
        .iter()
        .enumerate()
        .filter(|(_, h)| h.online && !h.corrupted)
        .map(|(i, _)| i)
        .collect();

    let mut total_blocks = 0u64;
    let mut nonempty = 0u64;
    let mut fp_refusals = 0u64;
    let mut per_holder = vec![0u64; world.holders.len()];
    let mut cp_violations = 0u64;
    // Chain-length history per honest holder, index 0 = before slot 1.
    let mut len_history: Vec<Vec<u64>> =
        vec![vec![0u64]; honest_online.len()];

    for slot in 1..=cfg.total_slots {
        observe(slot, &world);

        // Delivery: validate arriving chains once, globally.
        let mut pool: Vec<Chain> = Vec::new();
        if let Some(arrivals) = inflight.remove(&slot) {
            for (_, chain) in arrivals {
                let head = chain.head_hash();
                let ok = *valid_heads.entry(head).or_insert_with(|| {
                    validate_chain(&chain, &world.genesis, cfg.f, cfg.ell_vrf).is_ok()
                });
                if ok {
                    pool.push(chain);
                }
            }
        }

        // Adoption.
        for i in 0..world.holders.len() {
            if !world.holders[i].online {
                continue;
            }
            let adopted = select_chain(&world.chains[i], &pool);
            if adopted.head_hash() != world.chains[i].head_hash() {
                // A switch abandoning more than k_cp of the holder's own
                // blocks is a common-prefix violation in itself.
                let common = world.chains[i].common_prefix_len(&adopted);
                if !world.holders[i].corrupted
                    && world.chains[i].len() - common > cfg.k_cp as usize
                {
                    cp_violations += 1;
                }
                world.chains[i] = adopted;
            }
        }

        // Leadership.
        let mut produced_this_slot = 0u64;
        for i in 0..world.holders.len() {
            if !world.holders[i].online {
                continue;
            }
            let prev = world.chains[i].head_hash();
            let eta = world.genesis.eta;
            let holder = &mut world.holders[i];
            let body = format!("slot {slot} holder {} nonce {}", holder.id, rng.gen::<u32>());
            let tag = holder.sign_tx(body.as_bytes());
            let mut payload = body.into_bytes();
            payload.extend_from_slice(&tag);
            match make_block(holder, slot, prev, payload, &eta, cfg.f, cfg.ell_vrf, &mut rng) {
                Ok(block) => {
                    produced_this_slot += 1;
                    total_blocks += 1;
                    per_holder[i] += 1;
                    world.chains[i].push(Arc::clone(&block));
                    valid_heads.insert(world.chains[i].head_hash(), true);
                    let arrival = if world.holders[i].corrupted {
                        slot + withhold_delay.unwrap_or(cfg.broadcast_delay)
                    } else {
                        slot + cfg.broadcast_delay
                    };
                    inflight
                        .entry(arrival.max(slot + 1))
                        .or_default()
                        .push((world.holders[i].id, world.chains[i].clone()));
                }
                Err(MakeBlockError::NotEligible) => {}
                Err(MakeBlockError::Sign(SignError::PrefixUnavailable)) => {
                    // An honest leader blocked by its own filter: the
                    // one-sided signing error showing up at consensus level.
                    fp_refusals += 1;
                }
                Err(MakeBlockError::Sign(e)) => {
                    unreachable!("block encoding must always extract: {e}")
                }
            }
        }
        if produced_this_slot > 0 {
            nonempty += 1;
        }

        // Metrics: pairwise common-prefix among honest online holders.
        for (a_idx, &a) in honest_online.iter().enumerate() {
            for &b in &honest_online[a_idx + 1..] {
                let (ca, cb) = (&world.chains[a], &world.chains[b]);
                if !ca.pruned_is_prefix_of(cfg.k_cp, cb) || !cb.pruned_is_prefix_of(cfg.k_cp, ca) {
                    cp_violations += 1;
                }
            }
        }
        for (h_idx, &h) in honest_online.iter().enumerate() {
            len_history[h_idx].push(world.chains[h].len() as u64);
        }
    }

    // Final canonical chain: the first honest online holder's (or holder
    // 0's when everyone is corrupted or offline).
    let canonical = honest_online.first().copied().unwrap_or(0);
    let final_chain = &world.chains[canonical];
    let corrupted_ids = cfg.adversary.corrupted();

    // Chain quality over sliding windows of the canonical chain.
    let adversarial: Vec<bool> = final_chain
        .blocks()
        .iter()
        .map(|b| corrupted_ids.contains(&b.block.proof.creator))
        .collect();
    let window = (cfg.cq_window as usize).min(adversarial.len()).max(1);
    let mut max_adv_fraction = 0.0f64;
    if !adversarial.is_empty() {
        for w in adversarial.windows(window) {
            let frac = w.iter().filter(|&&a| a).count() as f64 / w.len() as f64;
            max_adv_fraction = max_adv_fraction.max(frac);
        }
    }
    let adversarial_total =
        adversarial.iter().filter(|&&a| a).count() as f64 / adversarial.len().max(1) as f64;

    // Chain growth over sliding slot windows of honest length histories.
    let s = cfg.cg_window;
    let mut min_growth = f64::INFINITY;
    for hist in &len_history {
        if hist.len() as u64 > s {
            for t in 0..hist.len() as u64 - s {
                let grew = hist[(t + s) as usize] - hist[t as usize];
                min_growth = min_growth.min(grew as f64 / s as f64);
            }
        }
    }
    if min_growth.is_infinite() {
        // Run shorter than one window: measure the whole run.
        min_growth = len_history
            .iter()
            .map(|h| *h.last().unwrap() as f64 / cfg.total_slots as f64)
            .fold(f64::INFINITY, f64::min);
        if min_growth.is_infinite() {
            min_growth = 0.0;
        }
    }

    let report = SimReport {
        slots: cfg.total_slots,
        holders: world.holders.len(),
        total_blocks_produced: total_blocks,
        nonempty_slots: nonempty,
        nonempty_slot_fraction: nonempty as f64 / cfg.total_slots as f64,
        fp_sign_refusals: fp_refusals,
        per_holder_blocks: per_holder,
        final_chain_len: final_chain.len() as u64,
        common_prefix_violations: cp_violations,
        max_adversarial_window_fraction: max_adv_fraction,
        chain_quality_ok: max_adv_fraction <= 1.0 - cfg.cq_mu,
        min_window_growth: min_growth,
        chain_growth_ok: min_growth >= cfg.growth_tau(),
        adversarial_block_fraction: adversarial_total,
    };
    Ok((report, world))
}

// ---------------------------------------------------------------------------
// The long-range stake-leasing attack scenario
// ---------------------------------------------------------------------------

/// Configuration of the attack experiment: run a simulation, corrupt the
/// leader of a past slot at `corrupt_at_slot`, and try to rewrite that
/// slot with the stolen key material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrslConfig {
    pub sim: SimConfig,
    /// When the adversary obtains the victim's key state.
    pub corrupt_at_slot: u64,
    /// The past slot to rewrite. Defaults to the last slot that produced a
    /// block before `corrupt_at_slot`.
    #[serde(default)]
    pub target_slot: Option<u64>,
    /// Total forgery attempts, split between raw re-signing attempts and
    /// crafted-block submissions.
    #[serde(default = "default_attempts")]
    pub forgery_attempts: u64,
}

fn default_attempts() -> u64 {
    1_000
}

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("corrupt_at_slot must lie within the simulated run")]
    CorruptSlotOutOfRange,
    #[error("no block exists at or before the requested target slot")]
    NoTargetBlock,
    #[error("target slot must precede the corruption slot")]
    TargetNotInPast,
}

/// What happened during the attack run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub corrupt_at_slot: u64,
    pub target_slot: u64,
    pub victim: u32,
    /// Direct re-signing attempts with the stolen (post-puncture) key.
    pub sign_attempts: u64,
    pub sign_refusals: u64,
    /// Crafted blocks submitted to honest validation.
    pub crafted_blocks: u64,
    pub crafted_rejections: u64,
    /// Forgeries that passed honest validation. The scheme's promise is
    /// that this stays zero.
    pub accepted_forgeries: u64,
    /// Control branch: with the key as it stood *before* the target slot,
    /// the same adversary must succeed — showing the puncture, not some
    /// other mechanism, is what blocks the attack.
    pub control_sign_succeeded: bool,
    pub control_block_accepted: bool,
}

/// Run the long-range attack experiment.
pub fn lrsl_scenario(cfg: &LrslConfig) -> Result<AttackReport, AttackError> {
    cfg.sim.validate()?;
    if cfg.corrupt_at_slot == 0 || cfg.corrupt_at_slot > cfg.sim.total_slots {
        return Err(AttackError::CorruptSlotOutOfRange);
    }

    // One simulated run, with key/chain snapshots at every slot start kept
    // for the two slots the attack needs. Which slots those are is only
    // fully known afterwards (the target may be auto-picked), so snapshot
    // lazily: keys are cloned only at the corruption slot and at each
    // slot's start we retain the previous snapshot of the eventual victim
    // range — cheapest is to snapshot all holders at every candidate slot
    // below the corruption point... instead, resolve the target first with
    // a dry run when it is not pinned.
    let canonical_at_end = |world: &SimWorld| -> usize {
        world
            .holders
            .iter()
            .position(|h| h.online && !h.corrupted)
            .unwrap_or(0)
    };

    // Pass 1: plain run to locate the target block and victim.
    let (_, world) = run_simulation_observed(&cfg.sim, |_, _| {})?;
    let chain = &world.chains[canonical_at_end(&world)];
    let target_slot = match cfg.target_slot {
        Some(t) => {
            if t >= cfg.corrupt_at_slot {
                return Err(AttackError::TargetNotInPast);
            }
            t
        }
        None => chain
            .blocks()
            .iter()
            .map(|b| b.block.slot)
            .filter(|&s| s < cfg.corrupt_at_slot)
            .next_back()
            .ok_or(AttackError::NoTargetBlock)?,
    };
    let target_pos = chain
        .blocks()
        .iter()
        .position(|b| b.block.slot == target_slot)
        .ok_or(AttackError::NoTargetBlock)?;
    let target_block = Arc::clone(&chain.blocks()[target_pos]);
    let victim = target_block.block.proof.creator;
    let (parent_hash, parent_slot) = if target_pos == 0 {
        (world.genesis.hash(), 0)
    } else {
        let p = &chain.blocks()[target_pos - 1];
        (p.hash, p.block.slot)
    };

    // Pass 2: identical run (same seed), snapshotting the victim's key at
    // the start of the target slot (control state) and at the corruption
    // slot (attack state).
    let mut pre_key: Option<ps::SecretKey> = None;
    let mut stolen_key: Option<ps::SecretKey> = None;
    let (_, world2) = run_simulation_observed(&cfg.sim, |slot, w| {
        if slot == target_slot {
            pre_key = Some(w.holders[victim as usize].sk.clone());
        }
        if slot == cfg.corrupt_at_slot {
            stolen_key = Some(w.holders[victim as usize].sk.clone());
        }
    })?;
    let genesis = &world2.genesis;
    let pre_key = pre_key.expect("target slot is within the run");
    let stolen_key = stolen_key.expect("corruption slot is within the run");

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.sim.seed ^ 0x4c52534c);
    let proof = target_block.block.proof;
    let f = cfg.sim.f;
    let ell = cfg.sim.ell_vrf;
    let alt_payload = |rng: &mut ChaCha12Rng| -> Vec<u8> {
        let mut p = b"rewritten ".to_vec();
        p.extend_from_slice(&rng.gen::<[u8; 16]>());
        p
    };

    let mut report = AttackReport {
        corrupt_at_slot: cfg.corrupt_at_slot,
        target_slot,
        victim,
        sign_attempts: 0,
        sign_refusals: 0,
        crafted_blocks: 0,
        crafted_rejections: 0,
        accepted_forgeries: 0,
        control_sign_succeeded: false,
        control_block_accepted: false,
    };

    let validate = |b: &Arc<SealedBlock>| -> bool {
        validate_block(b, &parent_hash, parent_slot, genesis, f, ell).is_ok()
    };

    // (a) Re-signing with the stolen key. The VRF proof is the victim's
    // real one — leadership is not in question, only the signature.
    let direct = cfg.forgery_attempts / 2;
    for _ in 0..direct {
        report.sign_attempts += 1;
        let payload = alt_payload(&mut rng);
        let bytes = signing_bytes(target_slot, &parent_hash, &payload, &proof);
        match stolen_key.sign(&bytes, &mut rng) {
            Err(SignError::PrefixUnavailable) => report.sign_refusals += 1,
            Err(_) => report.sign_refusals += 1,
            Ok(sig) => {
                // The scheme failed to stop the signature; see whether the
                // chain would even accept it.
                let b = SealedBlock::seal(Block {
                    slot: target_slot,
                    prev: parent_hash,
                    payload,
                    proof,
                    sig,
                });
                if validate(&b) {
                    report.accepted_forgeries += 1;
                }
            }
        }
    }

    // (b) Crafted blocks against honest validation: garbage signatures,
    // replayed signatures from the victim's other blocks, and mutations of
    // the genuine target signature.
    let crafted = cfg.forgery_attempts - direct;
    let other_sig = world2.chains[canonical_at_end(&world2)]
        .blocks()
        .iter()
        .find(|b| b.block.proof.creator == victim && b.block.slot != target_slot)
        .map(|b| b.block.sig);
    for i in 0..crafted {
        report.crafted_blocks += 1;
        let payload = alt_payload(&mut rng);
        let ell_filter = world2.holders[victim as usize].vk.params().ell;
        let sig = match i % 3 {
            0 => ps::Signature {
                h: crate::algebra::random_scalar(&mut rng),
                s: (crate::algebra::GroupContext::bls12_381().p1()
                    * crate::algebra::random_scalar(&mut rng))
                .into(),
                index: rng.gen_range(1..=ell_filter),
            },
            1 => other_sig.unwrap_or(target_block.block.sig),
            _ => {
                let mut s = target_block.block.sig;
                match i % 9 {
                    2 => s.h += crate::algebra::Scalar::from(1u64),
                    5 => s.index = s.index.wrapping_add(1),
                    _ => s.s = (s.s * crate::algebra::Scalar::from(2u64)).into(),
                }
                s
            }
        };
        let b = SealedBlock::seal(Block { slot: target_slot, prev: parent_hash, payload, proof, sig });
        if validate(&b) {
            report.accepted_forgeries += 1;
        } else {
            report.crafted_rejections += 1;
        }
    }

    // (c) Control: the key as it stood before the victim signed the target
    // slot. The identical attack must go through.
    let payload = alt_payload(&mut rng);
    let bytes = signing_bytes(target_slot, &parent_hash, &payload, &proof);
    if let Ok(sig) = pre_key.sign(&bytes, &mut rng) {
        report.control_sign_succeeded = true;
        let b = SealedBlock::seal(Block { slot: target_slot, prev: parent_hash, payload, proof, sig });
        report.control_block_accepted = validate(&b);
    }

    Ok(report)
}
