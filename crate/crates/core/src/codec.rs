//! Binary container format for keys and signatures.
//!
//! Every artifact — secret key, verification key, signature — shares one
//! header so tools can sanity-check that a signature was made under the
//! same filter geometry and prefix scheme as the key verifying it:
//!
//! ```text
//! "PSIG" | version u16 | curve u8 | kind u8
//!        | n u64 | pr f64 | ell u32 | k u32      (filter geometry)
//!        | seed [16]                             (filter hash seed)
//!        | mode u8 | a u64 | b u64               (prefix extractor)
//! ```
//!
//! Header integers are little-endian; scalars inside payloads are 32-byte
//! big-endian; curve points use compressed encodings. Payloads:
//!
//! * secret key: `g` (576) | puncture counter u64 | filter bit array |
//!   one 48-byte share per *live* position, ascending — so the key file
//!   shrinks as punctures accumulate;
//! * verification key: `P_pub` (96) | `g` (576), with `g = e(P1, P_pub)`
//!   re-checked on load;
//! * signature: `h` (32) | `S` (48) | index u32 — 84 payload bytes,
//!   independent of puncture count.
//!
//! Signatures are also exchanged as a single-line base64 envelope of the
//! full container, for shells and pipes.

use crate::algebra::{
    g1_from_bytes, g1_to_bytes, g2_from_bytes, g2_to_bytes, gt_from_bytes, gt_to_bytes, pairing,
    scalar_from_bytes, scalar_to_bytes, AffineRepr, CurveId, DecodeError, G1Affine, GroupContext,
    G1_BYTES, G2_BYTES, GT_BYTES, SCALAR_BYTES,
};
use crate::bloom::{BloomFilter, BloomParams, FilterDecodeError, SEED_BYTES};
use crate::ps::{PrefixExtractor, PublicKey, SecretKey, Signature};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use thiserror::Error;

/// Magic bytes opening every container file.
pub const MAGIC: &[u8; 4] = b"PSIG";
const VERSION: u16 = 1;

/// Fixed width of the shared container header.
pub const HEADER_LEN: usize = 4 + 2 + 1 + 1 + 8 + 8 + 4 + 4 + SEED_BYTES + 1 + 8 + 8;

/// Serialized width of a complete signature container.
pub const SIGNATURE_LEN: usize = HEADER_LEN + Signature::ENCODED_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    SecretKey = 1,
    PublicKey = 2,
    Signature = 3,
}

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("truncated input")]
    Truncated,
    #[error("not a PSIG container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    BadVersion(u16),
    #[error("unknown curve id {0}")]
    UnknownCurve(u8),
    #[error("wrong container kind: expected {expected}, got {got}")]
    WrongKind { expected: u8, got: u8 },
    #[error("unknown prefix-extractor mode {0}")]
    BadExtractor(u8),
    #[error("filter section rejected: {0}")]
    BadFilter(#[from] FilterDecodeError),
    #[error("group element rejected: {0}")]
    BadElement(#[from] DecodeError),
    #[error("verification key is internally inconsistent (g != e(P1, P_pub))")]
    InconsistentKey,
    #[error("trailing bytes after payload")]
    TrailingBytes,
    #[error("signature envelope is not valid base64")]
    BadEnvelope,
}

/// The header fields every artifact carries: which curve, which filter
/// geometry and seed, which prefix scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyMeta {
    pub curve: CurveId,
    pub params: BloomParams,
    pub seed: [u8; SEED_BYTES],
    pub extractor: PrefixExtractor,
}

impl KeyMeta {
    pub fn of_secret(sk: &SecretKey) -> Self {
        KeyMeta {
            curve: sk.ctx.curve(),
            params: *sk.filter.params(),
            seed: *sk.filter.hasher().seed(),
            extractor: sk.extractor,
        }
    }

    pub fn of_public(vk: &PublicKey) -> Self {
        KeyMeta {
            curve: vk.ctx.curve(),
            params: vk.params,
            seed: *vk.hasher.seed(),
            extractor: vk.extractor,
        }
    }
}

fn extractor_fields(e: PrefixExtractor) -> (u8, u64, u64) {
    match e {
        PrefixExtractor::FixedLength { len } => (1, len as u64, 0),
        PrefixExtractor::Delimiter { byte } => (2, byte as u64, 0),
        PrefixExtractor::Range { start, len } => (3, start as u64, len as u64),
    }
}

fn extractor_from_fields(mode: u8, a: u64, b: u64) -> Result<PrefixExtractor, CodecError> {
    match mode {
        1 => Ok(PrefixExtractor::FixedLength { len: a as u32 }),
        2 if a <= u8::MAX as u64 => Ok(PrefixExtractor::Delimiter { byte: a as u8 }),
        3 => Ok(PrefixExtractor::Range { start: a as u32, len: b as u32 }),
        m => Err(CodecError::BadExtractor(m)),
    }
}

fn write_header(out: &mut Vec<u8>, kind: Kind, meta: &KeyMeta) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(meta.curve.as_byte());
    out.push(kind as u8);
    out.extend_from_slice(&meta.params.n.to_le_bytes());
    out.extend_from_slice(&meta.params.pr.to_le_bytes());
    out.extend_from_slice(&meta.params.ell.to_le_bytes());
    out.extend_from_slice(&meta.params.k.to_le_bytes());
    out.extend_from_slice(&meta.seed);
    let (mode, a, b) = extractor_fields(meta.extractor);
    out.push(mode);
    out.extend_from_slice(&a.to_le_bytes());
    out.extend_from_slice(&b.to_le_bytes());
    debug_assert_eq!(out.len() % HEADER_LEN, 0);
}

/// Bounds-checked reader over a byte slice.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).ok_or(CodecError::Truncated)?;
        if end > self.buf.len() {
            return Err(CodecError::Truncated);
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<(), CodecError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(CodecError::TrailingBytes)
        }
    }
}

fn read_header(c: &mut Cursor, expected: Kind) -> Result<KeyMeta, CodecError> {
    if c.take(4)? != MAGIC {
        return Err(CodecError::BadMagic);
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(CodecError::BadVersion(version));
    }
    let curve_byte = c.u8()?;
    let curve = CurveId::from_byte(curve_byte).ok_or(CodecError::UnknownCurve(curve_byte))?;
    let kind = c.u8()?;
    if kind != expected as u8 {
        return Err(CodecError::WrongKind { expected: expected as u8, got: kind });
    }
    let n = c.u64()?;
    let pr = c.f64()?;
    let ell = c.u32()?;
    let k = c.u32()?;
    let seed: [u8; SEED_BYTES] = c.take(SEED_BYTES)?.try_into().unwrap();
    let mode = c.u8()?;
    let a = c.u64()?;
    let b = c.u64()?;
    Ok(KeyMeta {
        curve,
        params: BloomParams { n, pr, ell, k },
        seed,
        extractor: extractor_from_fields(mode, a, b)?,
    })
}

/// Serialize a secret key. Only live shares are written, so the output
/// shrinks as the key is punctured.
pub fn secret_key_bytes(sk: &SecretKey) -> Vec<u8> {
    let meta = KeyMeta::of_secret(sk);
    let filter = sk.filter.bits();
    let live = sk.live_share_count();
    let mut out =
        Vec::with_capacity(HEADER_LEN + GT_BYTES + 8 + filter.len() + live * G1_BYTES);
    write_header(&mut out, Kind::SecretKey, &meta);
    out.extend_from_slice(&gt_to_bytes(&sk.g));
    out.extend_from_slice(&sk.filter.inserted().to_le_bytes());
    out.extend_from_slice(filter);
    for pos in 1..=meta.params.ell {
        if !sk.filter.is_set(pos) {
            out.extend_from_slice(&g1_to_bytes(&sk.shares[(pos - 1) as usize]));
        }
    }
    out
}

pub fn read_secret_key(bytes: &[u8]) -> Result<SecretKey, CodecError> {
    let mut c = Cursor::new(bytes);
    let meta = read_header(&mut c, Kind::SecretKey)?;
    let g = gt_from_bytes(c.take(GT_BYTES)?)?;
    let inserted = c.u64()?;
    let bits = c.take(meta.params.ell.div_ceil(8) as usize)?.to_vec();
    let filter = BloomFilter::from_parts(meta.params, meta.seed, bits, inserted)?;
    let mut shares = vec![G1Affine::identity(); meta.params.ell as usize];
    for pos in 1..=meta.params.ell {
        if !filter.is_set(pos) {
            let p = g1_from_bytes(c.take(G1_BYTES)?)?;
            if p.is_zero() {
                // A live slot must hold a usable share.
                return Err(CodecError::BadElement(DecodeError::InvalidPoint));
            }
            shares[(pos - 1) as usize] = p;
        }
    }
    c.finish()?;
    let ctx = GroupContext::bls12_381();
    Ok(SecretKey { ctx, filter, shares, g, extractor: meta.extractor })
}

pub fn public_key_bytes(vk: &PublicKey) -> Vec<u8> {
    let meta = KeyMeta::of_public(vk);
    let mut out = Vec::with_capacity(HEADER_LEN + G2_BYTES + GT_BYTES);
    write_header(&mut out, Kind::PublicKey, &meta);
    out.extend_from_slice(&g2_to_bytes(&vk.p_pub));
    out.extend_from_slice(&gt_to_bytes(&vk.g));
    out
}

pub fn read_public_key(bytes: &[u8]) -> Result<PublicKey, CodecError> {
    let mut c = Cursor::new(bytes);
    let meta = read_header(&mut c, Kind::PublicKey)?;
    let p_pub = g2_from_bytes(c.take(G2_BYTES)?)?;
    let g = gt_from_bytes(c.take(GT_BYTES)?)?;
    c.finish()?;
    let ctx = GroupContext::bls12_381();
    // The cached pairing is recomputable; never trust the stored copy.
    if pairing(ctx.p1(), p_pub) != g {
        return Err(CodecError::InconsistentKey);
    }
    Ok(PublicKey {
        ctx,
        p_pub,
        g,
        params: meta.params,
        hasher: crate::bloom::BloomHasher::new(meta.params.ell, meta.params.k, meta.seed),
        extractor: meta.extractor,
    })
}

pub fn signature_bytes(sig: &Signature, meta: &KeyMeta) -> Vec<u8> {
    let mut out = Vec::with_capacity(SIGNATURE_LEN);
    write_header(&mut out, Kind::Signature, meta);
    out.extend_from_slice(&scalar_to_bytes(&sig.h));
    out.extend_from_slice(&g1_to_bytes(&sig.s));
    out.extend_from_slice(&sig.index.to_le_bytes());
    debug_assert_eq!(out.len(), SIGNATURE_LEN);
    out
}

pub fn read_signature(bytes: &[u8]) -> Result<(Signature, KeyMeta), CodecError> {
    let mut c = Cursor::new(bytes);
    let meta = read_header(&mut c, Kind::Signature)?;
    let h = scalar_from_bytes(c.take(SCALAR_BYTES)?)?;
    let s = g1_from_bytes(c.take(G1_BYTES)?)?;
    let index = c.u32()?;
    c.finish()?;
    Ok((Signature { h, s, index }, meta))
}

/// Single-line base64 form of a signature container, for CLI piping.
pub fn signature_envelope(sig: &Signature, meta: &KeyMeta) -> String {
    BASE64.encode(signature_bytes(sig, meta))
}

pub fn read_signature_envelope(line: &str) -> Result<(Signature, KeyMeta), CodecError> {
    let raw = BASE64.decode(line.trim()).map_err(|_| CodecError::BadEnvelope)?;
    read_signature(&raw)
}

/// Exact serialized byte counts for a key pair and its signatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Sizes {
    pub secret_key: usize,
    pub public_key: usize,
    pub signature: usize,
}

/// Measure current serialized sizes. The secret key's count drops as
/// punctures delete shares; the other two are constants of the scheme.
pub fn sizes(sk: &SecretKey, vk: &PublicKey) -> Sizes {
    Sizes {
        secret_key: secret_key_bytes(sk).len(),
        public_key: public_key_bytes(vk).len(),
        signature: SIGNATURE_LEN,
    }
}
