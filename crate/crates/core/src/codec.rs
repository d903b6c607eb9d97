//! Covert-channel embedding and extraction.
//!
//! Two synthetic codecs stand in for real multimedia hiding methods. Both
//! mutate carrier bits in place (an envelope is always exactly as long as
//! its carrier), both authenticate with a method-salted CRC-32, and neither
//! transmits the method id: receivers trial-decode with every method they
//! support, in ascending id order, and accept the first one whose checksum
//! validates.
//!
//! Byte layouts (also documented with test vectors in `CODEC.md`):
//!
//! `HeaderField` - carrier is at least 32 bytes and models a protocol header
//! with an options region:
//!
//! ```text
//! offset  8..12   payload length, u32 BE
//! offset 12..16   CRC-32 of (method byte || length || plaintext), u32 BE
//! offset 16..32   options region: up to 16 payload bytes
//! ```
//!
//! `PayloadLowBits` - carrier is at least `max(32, 8 * payload_len)` bytes;
//! metadata lives in higher bit planes so the low bit of byte `i` is exactly
//! payload bit `i`:
//!
//! ```text
//! bit 0 of byte i            payload bit i (big-endian bit order)
//! bit 1 of bytes 0..32       payload length, u32 BE, one bit per byte
//! bit 2 of the last 32 bytes CRC-32 as above, u32 BE, one bit per byte
//! ```
//!
//! An optional link key XORs a key-derived stream over the payload before
//! embedding; the checksum always covers the plaintext, so decoding with the
//! wrong key fails validation instead of returning garbage.

use thiserror::Error;

use crate::domain::{MethodSet, StegMethodId};
use crate::rng::{mix64, SplitMix64};

/// Domain separator for deriving the payload obfuscation stream.
const KEY_STREAM_DOMAIN: u64 = 0x636f_7665_724b_4559;

const HEADER_REGION: usize = 16;
const HEADER_LEN_AT: usize = 8;
const HEADER_CRC_AT: usize = 12;
const HEADER_PAYLOAD_AT: usize = 16;
const MIN_CARRIER: usize = 32;

/// CRC-32, polynomial 0x04C11DB7 reflected (0xEDB88320), init 0xFFFFFFFF,
/// final xor 0xFFFFFFFF.
pub fn crc32(bytes: &[u8]) -> u32 {
    const TABLE: [u32; 256] = crc32_table();
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc = (crc >> 8) ^ TABLE[((crc ^ b as u32) & 0xFF) as usize];
    }
    crc ^ 0xFFFF_FFFF
}

const fn crc32_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u32;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 1 != 0 { (crc >> 1) ^ 0xEDB8_8320 } else { crc >> 1 };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

/// Which embedding scheme a carrier uses. The kind is overt (it is the shape
/// of the innocuous traffic itself), unlike the method id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CarrierKind {
    HeaderField,
    PayloadLowBits,
}

impl CarrierKind {
    /// Minimum carrier length able to hold `payload_len` bytes, or `None`
    /// when the kind cannot hold that much at any size.
    pub fn required_len(&self, payload_len: usize) -> Option<usize> {
        match self {
            CarrierKind::HeaderField => {
                (payload_len <= HEADER_REGION).then_some(MIN_CARRIER)
            }
            CarrierKind::PayloadLowBits => Some(MIN_CARRIER.max(8 * payload_len)),
        }
    }
}

/// An innocuous-looking carrier message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverCarrier {
    pub kind: CarrierKind,
    pub bytes: Vec<u8>,
}

/// A carrier with a payload embedded in it. The method is held for the
/// sender's bookkeeping only and never appears in the transmitted bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StegEnvelope {
    pub carrier: CoverCarrier,
    pub method: StegMethodId,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("carrier of {actual} bytes cannot hold {payload} payload bytes (needs {needed})")]
    CarrierTooSmall { actual: usize, payload: usize, needed: usize },
    #[error("method id {0} is outside the registry range")]
    UnknownMethod(u8),
}

fn payload_stream(method: StegMethodId, key: &[u8], len: usize) -> Vec<u8> {
    let mut seed = mix64(method.0 as u64 ^ KEY_STREAM_DOMAIN);
    for chunk in key.chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        seed = mix64(seed ^ u64::from_le_bytes(word));
    }
    let mut rng = SplitMix64::new(seed);
    let mut out = vec![0u8; len];
    rng.fill_bytes(&mut out);
    out
}

fn checksum(method: StegMethodId, payload: &[u8]) -> u32 {
    let mut buf = Vec::with_capacity(5 + payload.len());
    buf.push(method.0);
    buf.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    buf.extend_from_slice(payload);
    crc32(&buf)
}

/// Embeds `payload` into `carrier` with `method`, optionally obfuscated
/// under a link key. The carrier length never changes.
pub fn cover(
    payload: &[u8],
    method: StegMethodId,
    mut carrier: CoverCarrier,
    key: Option<&[u8]>,
) -> Result<StegEnvelope, CodecError> {
    if method.0 > StegMethodId::MAX {
        return Err(CodecError::UnknownMethod(method.0));
    }
    let needed = carrier.kind.required_len(payload.len()).unwrap_or(usize::MAX);
    if carrier.bytes.len() < needed {
        return Err(CodecError::CarrierTooSmall {
            actual: carrier.bytes.len(),
            payload: payload.len(),
            needed,
        });
    }
    let crc = checksum(method, payload);
    let mut body = payload.to_vec();
    if let Some(key) = key {
        let stream = payload_stream(method, key, body.len());
        for (b, s) in body.iter_mut().zip(stream) {
            *b ^= s;
        }
    }
    match carrier.kind {
        CarrierKind::HeaderField => {
            let bytes = &mut carrier.bytes;
            bytes[HEADER_LEN_AT..HEADER_LEN_AT + 4]
                .copy_from_slice(&(payload.len() as u32).to_be_bytes());
            bytes[HEADER_CRC_AT..HEADER_CRC_AT + 4].copy_from_slice(&crc.to_be_bytes());
            bytes[HEADER_PAYLOAD_AT..HEADER_PAYLOAD_AT + body.len()].copy_from_slice(&body);
        }
        CarrierKind::PayloadLowBits => {
            let bytes = &mut carrier.bytes;
            for (i, byte) in bytes.iter_mut().enumerate().take(8 * body.len()) {
                let bit = (body[i >> 3] >> (7 - (i & 7))) & 1;
                *byte = (*byte & !0x01) | bit;
            }
            let len_word = (payload.len() as u32).to_be_bytes();
            for j in 0..32 {
                let bit = (len_word[j >> 3] >> (7 - (j & 7))) & 1;
                bytes[j] = (bytes[j] & !0x02) | (bit << 1);
            }
            let crc_word = crc.to_be_bytes();
            let tail = bytes.len() - 32;
            for j in 0..32 {
                let bit = (crc_word[j >> 3] >> (7 - (j & 7))) & 1;
                bytes[tail + j] = (bytes[tail + j] & !0x04) | (bit << 2);
            }
        }
    }
    Ok(StegEnvelope { carrier, method })
}

fn try_decode(
    carrier: &CoverCarrier,
    method: StegMethodId,
    key: Option<&[u8]>,
) -> Option<Vec<u8>> {
    let bytes = &carrier.bytes;
    if bytes.len() < MIN_CARRIER {
        return None;
    }
    let (len, embedded_crc, mut body) = match carrier.kind {
        CarrierKind::HeaderField => {
            let len =
                u32::from_be_bytes(bytes[HEADER_LEN_AT..HEADER_LEN_AT + 4].try_into().unwrap())
                    as usize;
            if len > HEADER_REGION {
                return None;
            }
            let crc =
                u32::from_be_bytes(bytes[HEADER_CRC_AT..HEADER_CRC_AT + 4].try_into().unwrap());
            (len, crc, bytes[HEADER_PAYLOAD_AT..HEADER_PAYLOAD_AT + len].to_vec())
        }
        CarrierKind::PayloadLowBits => {
            let mut len_word = [0u8; 4];
            for j in 0..32 {
                len_word[j >> 3] |= ((bytes[j] >> 1) & 1) << (7 - (j & 7));
            }
            let len = u32::from_be_bytes(len_word) as usize;
            if len > bytes.len() / 8 {
                return None;
            }
            let mut body = vec![0u8; len];
            for i in 0..8 * len {
                body[i >> 3] |= (bytes[i] & 1) << (7 - (i & 7));
            }
            let mut crc_word = [0u8; 4];
            let tail = bytes.len() - 32;
            for j in 0..32 {
                crc_word[j >> 3] |= ((bytes[tail + j] >> 2) & 1) << (7 - (j & 7));
            }
            (len, u32::from_be_bytes(crc_word), body)
        }
    };
    debug_assert_eq!(body.len(), len);
    if let Some(key) = key {
        let stream = payload_stream(method, key, body.len());
        for (b, s) in body.iter_mut().zip(stream) {
            *b ^= s;
        }
    }
    (checksum(method, &body) == embedded_crc).then_some(body)
}

/// Trial-decodes a received carrier with every method in `profile`, in
/// ascending id order. Returns the first method whose checksum validates,
/// with the recovered payload, or `None`. Absence is a normal outcome: a
/// node lacking the embedding method simply cannot see the message.
pub fn find_steg_msg(
    carrier: &CoverCarrier,
    profile: MethodSet,
    key: Option<&[u8]>,
) -> Option<(StegMethodId, Vec<u8>)> {
    profile
        .iter()
        .find_map(|method| try_decode(carrier, method, key).map(|payload| (method, payload)))
}

/// Builds a minimal-size carrier filled with generator bytes, standing in
/// for innocuous traffic.
pub fn make_carrier(kind: CarrierKind, min_payload: usize, rng: &mut SplitMix64) -> CoverCarrier {
    let len = kind.required_len(min_payload).unwrap_or(MIN_CARRIER);
    let mut bytes = vec![0u8; len];
    rng.fill_bytes(&mut bytes);
    CoverCarrier { kind, bytes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn methods(ids: &[u8]) -> MethodSet {
        ids.iter().map(|m| StegMethodId(*m)).collect()
    }

    fn zero_carrier(kind: CarrierKind, len: usize) -> CoverCarrier {
        CoverCarrier { kind, bytes: vec![0u8; len] }
    }

    #[test]
    fn crc32_known_vector() {
        // "123456789" under CRC-32/ISO-HDLC.
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32(b""), 0);
    }

    #[test]
    fn empty_payload_roundtrip() {
        for kind in [CarrierKind::HeaderField, CarrierKind::PayloadLowBits] {
            let mut rng = SplitMix64::new(1);
            let carrier = make_carrier(kind, 0, &mut rng);
            let env = cover(&[], StegMethodId(4), carrier, None).unwrap();
            let (m, p) = find_steg_msg(&env.carrier, methods(&[4]), None).unwrap();
            assert_eq!(m, StegMethodId(4));
            assert!(p.is_empty());
        }
    }

    /// Independent bit-twiddling oracle for the low-bit embedding of
    /// 0xDEADBEEF into a 32-byte zero carrier.
    fn low_bit_oracle(payload: &[u8], carrier_len: usize, method: StegMethodId) -> Vec<u8> {
        let mut out = vec![0u8; carrier_len];
        for i in 0..8 * payload.len() {
            out[i] |= (payload[i / 8] >> (7 - i % 8)) & 1;
        }
        let len_bits = (payload.len() as u32).to_be_bytes();
        for j in 0..32 {
            out[j] |= (((len_bits[j / 8] >> (7 - j % 8)) & 1) << 1) as u8;
        }
        let mut crc_input = vec![method.0];
        crc_input.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        crc_input.extend_from_slice(payload);
        let crc_bits = crc32(&crc_input).to_be_bytes();
        for j in 0..32 {
            out[carrier_len - 32 + j] |= (((crc_bits[j / 8] >> (7 - j % 8)) & 1) << 2) as u8;
        }
        out
    }

    #[test]
    fn low_bits_deadbeef_layout() {
        let payload = [0xDE, 0xAD, 0xBE, 0xEF];
        let env = cover(
            &payload,
            StegMethodId(1),
            zero_carrier(CarrierKind::PayloadLowBits, 32),
            None,
        )
        .unwrap();
        // Low bit of byte i is exactly payload bit i, big-endian bit order.
        for i in 0..32 {
            let expected = (payload[i / 8] >> (7 - i % 8)) & 1;
            assert_eq!(env.carrier.bytes[i] & 1, expected, "payload bit {i}");
        }
        // And the whole carrier matches the independent oracle.
        assert_eq!(env.carrier.bytes, low_bit_oracle(&payload, 32, StegMethodId(1)));
    }

    #[test]
    fn low_bits_size_bound() {
        let err = cover(
            &[1, 2, 3, 4, 5],
            StegMethodId(1),
            zero_carrier(CarrierKind::PayloadLowBits, 32),
            None,
        )
        .unwrap_err();
        assert_eq!(err, CodecError::CarrierTooSmall { actual: 32, payload: 5, needed: 40 });
    }

    #[test]
    fn header_field_region_bound() {
        let err = cover(
            &[0u8; 17],
            StegMethodId(1),
            zero_carrier(CarrierKind::HeaderField, 64),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, CodecError::CarrierTooSmall { payload: 17, .. }));
    }

    #[test]
    fn unknown_method_rejected() {
        let err = cover(&[], StegMethodId(64), zero_carrier(CarrierKind::HeaderField, 32), None)
            .unwrap_err();
        assert_eq!(err, CodecError::UnknownMethod(64));
    }

    #[test]
    fn make_carrier_sizes() {
        let mut rng = SplitMix64::new(7);
        assert_eq!(make_carrier(CarrierKind::PayloadLowBits, 4, &mut rng).bytes.len(), 32);
        assert_eq!(make_carrier(CarrierKind::PayloadLowBits, 5, &mut rng).bytes.len(), 40);
        assert_eq!(make_carrier(CarrierKind::HeaderField, 0, &mut rng).bytes.len(), 32);
    }

    #[test]
    fn make_carrier_deterministic() {
        let mut a = SplitMix64::new(7);
        let mut b = SplitMix64::new(7);
        assert_eq!(
            make_carrier(CarrierKind::PayloadLowBits, 4, &mut a),
            make_carrier(CarrierKind::PayloadLowBits, 4, &mut b)
        );
    }

    #[test]
    fn incapable_receiver_sees_nothing() {
        let mut rng = SplitMix64::new(3);
        let carrier = make_carrier(CarrierKind::PayloadLowBits, 8, &mut rng);
        let env = cover(b"covert!!", StegMethodId(2), carrier, None).unwrap();
        assert_eq!(find_steg_msg(&env.carrier, methods(&[3, 4]), None), None);
    }

    #[test]
    fn trial_decode_picks_the_embedding_method() {
        let mut rng = SplitMix64::new(9);
        let carrier = make_carrier(CarrierKind::HeaderField, 5, &mut rng);
        let env = cover(b"hello", StegMethodId(5), carrier, None).unwrap();
        let (m, p) = find_steg_msg(&env.carrier, methods(&[1, 2, 5, 9]), None).unwrap();
        assert_eq!(m, StegMethodId(5));
        assert_eq!(p, b"hello");
    }

    #[test]
    fn wrong_key_fails_validation() {
        let mut rng = SplitMix64::new(11);
        let carrier = make_carrier(CarrierKind::PayloadLowBits, 12, &mut rng);
        let env = cover(b"keyed bytes!", StegMethodId(3), carrier, Some(b"key-a")).unwrap();
        assert_eq!(find_steg_msg(&env.carrier, methods(&[3]), Some(b"key-b")), None);
        assert_eq!(find_steg_msg(&env.carrier, methods(&[3]), None), None);
        let (_, p) = find_steg_msg(&env.carrier, methods(&[3]), Some(b"key-a")).unwrap();
        assert_eq!(p, b"keyed bytes!");
    }

    #[test]
    fn no_fixed_offset_names_the_method() {
        // Across randomized payloads there must be no carrier offset that
        // always equals the method id.
        let method = StegMethodId(37);
        let mut rng = SplitMix64::new(13);
        let mut always_method: Option<Vec<bool>> = None;
        for i in 0..64 {
            let mut payload = vec![0u8; 16];
            rng.fill_bytes(&mut payload);
            let carrier = make_carrier(CarrierKind::PayloadLowBits, payload.len(), &mut rng);
            let env = cover(&payload, method, carrier, None).unwrap();
            let hits: Vec<bool> = env.carrier.bytes.iter().map(|b| *b == method.0).collect();
            always_method = Some(match always_method {
                None => hits,
                Some(prev) => prev.iter().zip(hits).map(|(a, b)| *a && b).collect(),
            });
            let _ = i;
        }
        assert!(always_method.unwrap().iter().all(|hit| !hit));
    }

    proptest! {
        #[test]
        fn roundtrip_and_length_preservation(
            payload in proptest::collection::vec(any::<u8>(), 0..48),
            method_id in 0u8..=63,
            keyed in any::<bool>(),
            kind_low_bits in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let kind = if kind_low_bits {
                CarrierKind::PayloadLowBits
            } else {
                CarrierKind::HeaderField
            };
            prop_assume!(kind.required_len(payload.len()).is_some());
            let method = StegMethodId(method_id);
            let key = keyed.then_some(&b"link-key-bytes"[..]);
            let mut rng = SplitMix64::new(seed);
            let carrier = make_carrier(kind, payload.len(), &mut rng);
            let original_len = carrier.bytes.len();
            let env = cover(&payload, method, carrier, key).unwrap();
            prop_assert_eq!(env.carrier.bytes.len(), original_len);
            let full_profile: MethodSet = (0..=StegMethodId::MAX).map(StegMethodId).collect();
            let (found, recovered) = find_steg_msg(&env.carrier, full_profile, key).unwrap();
            prop_assert_eq!(found, method);
            prop_assert_eq!(recovered, payload);
        }
    }
}
