//! Intra-cluster security: cluster-wide symmetric keys, member admission and
//! eviction, sealing of intra-cluster traffic, and trust-thresholded gateway
//! eligibility.
//!
//! The cipher is a deterministic simulation stand-in, not security grade: a
//! splitmix keystream XOR with a CRC-32 integrity tag. Constants and the
//! exact ciphertext layout are documented in `CRYPTO.md`; anything deployed
//! for real would swap in an AEAD behind the same seal/open contract.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::codec::crc32;
use crate::domain::{ClusterId, Cost, CostParseError, NodeId, MICRO};
use crate::rng::{mix64, SplitMix64};

/// Tag length appended to every ciphertext.
const TAG_LEN: usize = 4;
/// Nonce length prepended to every ciphertext.
const NONCE_LEN: usize = 8;

/// The cluster-wide symmetric key. `key_id` strictly increases on every
/// re-key; all current members hold the current id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterKey {
    pub key_id: u64,
    pub bytes: [u8; 32],
}

/// Scalar trust in [0, 1], micro-unit fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct TrustValue(pub u64);

impl TrustValue {
    pub fn new(micro: u64) -> Option<Self> {
        (micro <= MICRO).then_some(TrustValue(micro))
    }
}

impl fmt::Display for TrustValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", Cost(self.0))
    }
}

impl FromStr for TrustValue {
    type Err = CostParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let cost: Cost = s.parse()?;
        TrustValue::new(cost.0).ok_or_else(|| CostParseError::Invalid(s.to_string()))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("node {0} is already a member")]
    AlreadyMember(NodeId),
    #[error("node {0} is not a member")]
    NotMember(NodeId),
    #[error("integrity check failed")]
    IntegrityFailure,
}

/// Draws a fresh cluster key from the generator. Deterministic per seed.
pub fn generate_cluster_key(rng: &mut SplitMix64, prev_id: u64) -> ClusterKey {
    let mut bytes = [0u8; 32];
    rng.fill_bytes(&mut bytes);
    ClusterKey { key_id: prev_id + 1, bytes }
}

/// Key material handed to one member over the direct CH-member edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyDelivery {
    pub member: NodeId,
    pub key_id: u64,
    pub key: [u8; 32],
}

/// Membership and key state owned by a cluster's CH.
#[derive(Debug, Clone)]
pub struct ClusterState {
    pub cluster: ClusterId,
    pub members: BTreeSet<NodeId>,
    pub key: ClusterKey,
}

impl ClusterState {
    pub fn new(cluster: ClusterId, rng: &mut SplitMix64) -> Self {
        Self { cluster, members: BTreeSet::new(), key: generate_cluster_key(rng, 0) }
    }

    fn delivery_for(&self, member: NodeId) -> KeyDelivery {
        KeyDelivery { member, key_id: self.key.key_id, key: self.key.bytes }
    }
}

/// Adds a node to the member set and produces the key delivery for it.
pub fn admit_member(
    state: &mut ClusterState,
    node: NodeId,
) -> Result<KeyDelivery, CryptoError> {
    if !state.members.insert(node) {
        return Err(CryptoError::AlreadyMember(node));
    }
    Ok(state.delivery_for(node))
}

/// Removes a member. With `rekey` set, a fresh key is generated and
/// deliveries for every remaining member are returned; the evicted node
/// keeps only the superseded key.
pub fn evict_member(
    state: &mut ClusterState,
    node: NodeId,
    rng: &mut SplitMix64,
    rekey: bool,
) -> Result<Vec<KeyDelivery>, CryptoError> {
    if !state.members.remove(&node) {
        return Err(CryptoError::NotMember(node));
    }
    if !rekey {
        return Ok(Vec::new());
    }
    state.key = generate_cluster_key(rng, state.key.key_id);
    Ok(state.members.iter().map(|m| state.delivery_for(*m)).collect())
}

fn keystream(key: &ClusterKey, nonce: u64, len: usize) -> Vec<u8> {
    let mut seed = nonce;
    for chunk in key.bytes.chunks(8) {
        seed = mix64(seed ^ u64::from_le_bytes(chunk.try_into().unwrap()));
    }
    let mut rng = SplitMix64::new(seed);
    let mut out = vec![0u8; len];
    rng.fill_bytes(&mut out);
    out
}

fn tag(key_nonce: u64, plaintext: &[u8]) -> u32 {
    let mut buf = Vec::with_capacity(NONCE_LEN + plaintext.len());
    buf.extend_from_slice(&key_nonce.to_be_bytes());
    buf.extend_from_slice(plaintext);
    crc32(&buf)
}

/// Seals a payload: `nonce || payload XOR keystream(key, nonce) || tag`.
/// The caller must never reuse a nonce under the same key; the simulator
/// guarantees that with a per-sender counter.
pub fn seal_intra(payload: &[u8], key: &ClusterKey, nonce: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(NONCE_LEN + payload.len() + TAG_LEN);
    out.extend_from_slice(&nonce.to_be_bytes());
    let stream = keystream(key, nonce, payload.len());
    out.extend(payload.iter().zip(stream).map(|(p, s)| p ^ s));
    out.extend_from_slice(&tag(nonce, payload).to_be_bytes());
    out
}

/// Opens a sealed payload; fails on a wrong key, tampering, or truncation.
pub fn open_intra(ciphertext: &[u8], key: &ClusterKey) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.len() < NONCE_LEN + TAG_LEN {
        return Err(CryptoError::IntegrityFailure);
    }
    let nonce = u64::from_be_bytes(ciphertext[..NONCE_LEN].try_into().unwrap());
    let body = &ciphertext[NONCE_LEN..ciphertext.len() - TAG_LEN];
    let embedded =
        u32::from_be_bytes(ciphertext[ciphertext.len() - TAG_LEN..].try_into().unwrap());
    let stream = keystream(key, nonce, body.len());
    let plaintext: Vec<u8> = body.iter().zip(stream).map(|(c, s)| c ^ s).collect();
    if tag(nonce, &plaintext) != embedded {
        return Err(CryptoError::IntegrityFailure);
    }
    Ok(plaintext)
}

/// Border nodes whose trust reaches the threshold get gateway status.
pub fn elect_gateways(
    border_nodes: &[(NodeId, TrustValue)],
    threshold: TrustValue,
) -> BTreeSet<NodeId> {
    border_nodes.iter().filter(|(_, trust)| *trust >= threshold).map(|(id, _)| *id).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn test_key(seed: u64) -> ClusterKey {
        generate_cluster_key(&mut SplitMix64::new(seed), 0)
    }

    #[test]
    fn key_id_increments() {
        let mut rng = SplitMix64::new(1);
        assert_eq!(generate_cluster_key(&mut rng, 0).key_id, 1);
        assert_eq!(generate_cluster_key(&mut rng, 7).key_id, 8);
    }

    #[test]
    fn key_generation_deterministic() {
        assert_eq!(test_key(5), test_key(5));
        assert_ne!(test_key(5).bytes, test_key(6).bytes);
    }

    #[test]
    fn admission_flow() {
        let mut rng = SplitMix64::new(2);
        let mut state = ClusterState::new(ClusterId(1), &mut rng);
        let delivery = admit_member(&mut state, NodeId(5)).unwrap();
        assert_eq!(delivery.key_id, 1);
        assert_eq!(state.members.len(), 1);
        assert_eq!(
            admit_member(&mut state, NodeId(5)),
            Err(CryptoError::AlreadyMember(NodeId(5)))
        );
    }

    #[test]
    fn admission_after_rekey_carries_latest_key() {
        let mut rng = SplitMix64::new(3);
        let mut state = ClusterState::new(ClusterId(1), &mut rng);
        admit_member(&mut state, NodeId(5)).unwrap();
        admit_member(&mut state, NodeId(6)).unwrap();
        let deliveries = evict_member(&mut state, NodeId(5), &mut rng, true).unwrap();
        assert_eq!(deliveries.len(), 1);
        assert_eq!(deliveries[0].key_id, 2);
        let late = admit_member(&mut state, NodeId(7)).unwrap();
        assert_eq!(late.key_id, 2);
    }

    #[test]
    fn empty_payload_roundtrip() {
        let key = test_key(4);
        let ct = seal_intra(&[], &key, 9);
        assert_eq!(ct.len(), 12);
        assert_eq!(open_intra(&ct, &key).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn wrong_key_is_rejected() {
        let key = test_key(4);
        let ct = seal_intra(b"cluster secret", &key, 1);
        for seed in 100..200 {
            assert_eq!(open_intra(&ct, &test_key(seed)), Err(CryptoError::IntegrityFailure));
        }
    }

    #[test]
    fn truncated_ciphertext_is_rejected() {
        let key = test_key(4);
        let ct = seal_intra(b"abc", &key, 1);
        assert_eq!(open_intra(&ct[..ct.len() - 1], &key), Err(CryptoError::IntegrityFailure));
        assert_eq!(open_intra(&ct[..5], &key), Err(CryptoError::IntegrityFailure));
    }

    #[test]
    fn gateway_election_examples() {
        let border = vec![
            (NodeId(1), TrustValue(900_000)),
            (NodeId(2), TrustValue(300_000)),
        ];
        let elected = elect_gateways(&border, TrustValue(500_000));
        assert_eq!(elected, [NodeId(1)].into_iter().collect());
        assert_eq!(elect_gateways(&border, TrustValue(0)).len(), 2);
        assert!(elect_gateways(&[], TrustValue(0)).is_empty());
    }

    #[test]
    fn trust_parsing() {
        assert_eq!("0.5".parse::<TrustValue>().unwrap(), TrustValue(500_000));
        assert_eq!("1".parse::<TrustValue>().unwrap(), TrustValue(MICRO));
        assert!("1.5".parse::<TrustValue>().is_err());
    }

    proptest! {
        #[test]
        fn seal_open_roundtrip(
            payload in proptest::collection::vec(any::<u8>(), 0..128),
            seed in any::<u64>(),
            nonce in any::<u64>(),
        ) {
            let key = test_key(seed);
            let ct = seal_intra(&payload, &key, nonce);
            prop_assert_eq!(ct.len(), payload.len() + 12);
            prop_assert_eq!(open_intra(&ct, &key).unwrap(), payload);
        }

        #[test]
        fn election_monotone_in_threshold(
            trusts in proptest::collection::vec(0u64..=MICRO, 0..16),
            lo in 0u64..=MICRO,
            hi in 0u64..=MICRO,
        ) {
            prop_assume!(lo <= hi);
            let border: Vec<(NodeId, TrustValue)> = trusts
                .iter()
                .enumerate()
                .map(|(i, t)| (NodeId(i as u64), TrustValue(*t)))
                .collect();
            let at_lo = elect_gateways(&border, TrustValue(lo));
            let at_hi = elect_gateways(&border, TrustValue(hi));
            prop_assert!(at_hi.is_subset(&at_lo));
        }
    }
}
