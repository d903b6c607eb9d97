//! Core identifiers, capability model, message vocabulary, and the metric
//! value type shared by every other module.
//!
//! All metric arithmetic is integer fixed point in micro-units (10^-6
//! resolution). There is no floating point anywhere in this crate; that is
//! what makes traces and routing tables byte-comparable across platforms.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CarrierKind, StegEnvelope};

/// Simulation time, in integer ticks.
pub type Tick = u64;

/// One micro-unit short of 1.0 in fixed point.
pub const MICRO: u64 = 1_000_000;

/// Default unreachability cap: any route cost at or above this is treated as
/// infinite. 2^31 micro-units = 2147.483648 cost units.
pub const DEFAULT_INFINITY_COST: u64 = 1 << 31;

/// Hop ceiling that bounds count-to-infinity alongside the cost cap.
pub const MAX_HOPS: u32 = 32;

/// Unique node address. Total order is used for deterministic tie-breaks.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl NodeId {
    pub fn to_be_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }
}

/// Cluster identifier from the scenario.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ClusterId(pub u32);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Role a node plays inside its cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    ClusterHead,
    Gateway,
    Member,
}

impl fmt::Display for NodeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeRole::ClusterHead => write!(f, "ch"),
            NodeRole::Gateway => write!(f, "gw"),
            NodeRole::Member => write!(f, "member"),
        }
    }
}

/// OSI layer a hiding method nominally lives on. Descriptive only; it has no
/// behavioural effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerTag {
    Application,
    Transport,
    DataLink,
}

/// Identifier of one steganographic method, 0..=63.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StegMethodId(pub u8);

impl StegMethodId {
    pub const MAX: u8 = 63;
}

impl fmt::Display for StegMethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Reserved method every node can decode. Discovery walks are embedded with
/// it so that a receiver can read the advertised capability set even when it
/// shares no link method with the origin. It never participates in link
/// negotiation and may not appear in capability profiles.
pub const DISCOVERY_METHOD: StegMethodId = StegMethodId(0);

/// A set of method identifiers, stored as a 64-bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MethodSet(pub u64);

impl MethodSet {
    pub const EMPTY: MethodSet = MethodSet(0);

    pub fn single(id: StegMethodId) -> Self {
        MethodSet(1u64 << id.0)
    }

    pub fn insert(&mut self, id: StegMethodId) {
        self.0 |= 1u64 << id.0;
    }

    pub fn contains(&self, id: StegMethodId) -> bool {
        self.0 & (1u64 << id.0) != 0
    }

    pub fn intersection(&self, other: MethodSet) -> MethodSet {
        MethodSet(self.0 & other.0)
    }

    pub fn union(&self, other: MethodSet) -> MethodSet {
        MethodSet(self.0 | other.0)
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> u32 {
        self.0.count_ones()
    }

    /// Lowest method id in the set, if any. Used wherever the protocol needs
    /// a deterministic representative method.
    pub fn lowest(&self) -> Option<StegMethodId> {
        if self.is_empty() {
            None
        } else {
            Some(StegMethodId(self.0.trailing_zeros() as u8))
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = StegMethodId> + '_ {
        (0..=StegMethodId::MAX).map(StegMethodId).filter(|m| self.contains(*m))
    }
}

impl FromIterator<StegMethodId> for MethodSet {
    fn from_iter<I: IntoIterator<Item = StegMethodId>>(iter: I) -> Self {
        let mut set = MethodSet::EMPTY;
        for id in iter {
            set.insert(id);
        }
        set
    }
}

impl fmt::Display for MethodSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

/// The steganographic methods a node supports. Non-empty for every CH and
/// gateway; enforced at scenario load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CapabilityProfile {
    pub methods: MethodSet,
}

impl CapabilityProfile {
    pub fn new(methods: MethodSet) -> Self {
        Self { methods }
    }

    pub fn from_ids<I: IntoIterator<Item = u8>>(ids: I) -> Self {
        Self { methods: ids.into_iter().map(StegMethodId).collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.methods.is_empty()
    }
}

/// Intersection of two capability sets. Empty means no steg-link may form.
pub fn capability_intersection(a: &CapabilityProfile, b: &CapabilityProfile) -> MethodSet {
    a.methods.intersection(b.methods)
}

/// A covert link between two CHs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StegLink {
    pub local: NodeId,
    pub peer: NodeId,
    /// Negotiated methods; a subset of both endpoint profiles, never empty.
    pub methods: MethodSet,
    /// Bits per tick, >= 1.
    pub capacity: u64,
    /// Delivery delay in ticks, frozen at creation, >= 1.
    pub delay: u64,
    /// Tick of the most recent hello from the peer.
    pub last_hello: Tick,
}

/// Non-negative fixed-point cost in micro-units.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct Cost(pub u64);

impl Cost {
    pub const ZERO: Cost = Cost(0);

    pub const fn from_micros(micros: u64) -> Self {
        Cost(micros)
    }

    pub const fn from_units(units: u64) -> Self {
        Cost(units * MICRO)
    }

    pub fn saturating_add(self, other: Cost, infinity: Cost) -> Cost {
        let sum = self.0.saturating_add(other.0);
        if sum >= infinity.0 {
            infinity
        } else {
            Cost(sum)
        }
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / MICRO, self.0 % MICRO)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CostParseError {
    #[error("empty cost literal")]
    Empty,
    #[error("invalid cost literal: {0}")]
    Invalid(String),
    #[error("more than six fractional digits: {0}")]
    TooPrecise(String),
}

impl FromStr for Cost {
    type Err = CostParseError;

    /// Parses a decimal literal such as `"2.75"` exactly, without going
    /// through floating point.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err(CostParseError::Empty);
        }
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if frac_part.len() > 6 {
            return Err(CostParseError::TooPrecise(s.to_string()));
        }
        let int: u64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| CostParseError::Invalid(s.to_string()))?
        };
        let mut frac: u64 = 0;
        if !frac_part.is_empty() {
            frac = frac_part.parse().map_err(|_| CostParseError::Invalid(s.to_string()))?;
            for _ in frac_part.len()..6 {
                frac *= 10;
            }
        }
        int.checked_mul(MICRO)
            .and_then(|v| v.checked_add(frac))
            .map(Cost)
            .ok_or_else(|| CostParseError::Invalid(s.to_string()))
    }
}

/// Additive path metric: fixed-point cost plus a hop count used for
/// tie-breaking and the count-to-infinity hop ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Metric {
    pub cost: Cost,
    pub hop_count: u32,
}

impl Metric {
    pub const ZERO: Metric = Metric { cost: Cost::ZERO, hop_count: 0 };

    pub fn new(cost: Cost, hop_count: u32) -> Self {
        Self { cost, hop_count }
    }

    pub fn infinite(infinity: Cost) -> Self {
        Metric { cost: infinity, hop_count: 0 }
    }

    pub fn is_infinite(&self, infinity: Cost) -> bool {
        self.cost.0 >= infinity.0 || self.hop_count > MAX_HOPS
    }

    /// Component-wise addition, saturating at the cost cap.
    pub fn add(&self, other: &Metric, infinity: Cost) -> Metric {
        Metric {
            cost: self.cost.saturating_add(other.cost, infinity),
            hop_count: self.hop_count.saturating_add(other.hop_count),
        }
    }
}

/// Weights for the three per-link cost factors, plus the configurable
/// unreachability cap they saturate against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricWeights {
    pub delay: Cost,
    pub capacity: Cost,
    pub methods: Cost,
    pub infinity: Cost,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self {
            delay: Cost::from_units(1),
            capacity: Cost::from_units(1),
            methods: Cost::from_units(1),
            infinity: Cost(DEFAULT_INFINITY_COST),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("link cost {0} exceeds the infinity cap")]
    Overflow(u64),
}

/// Round-half-up division of non-negative integers.
fn div_round_half_up(num: u128, den: u128) -> u128 {
    (2 * num + den) / (2 * den)
}

/// Per-link cost: `w_delay * delay + w_capacity / capacity + w_methods /
/// |methods|`, in micro-units, round-half-up. Hop count of a single link
/// is 1.
pub fn link_cost(link: &StegLink, weights: &MetricWeights) -> Result<Metric, MetricError> {
    debug_assert!(link.capacity >= 1 && link.delay >= 1);
    let delay_term = weights.delay.0 as u128 * link.delay as u128;
    let capacity_term = div_round_half_up(weights.capacity.0 as u128, link.capacity as u128);
    let methods = link.methods.len().max(1) as u128;
    let methods_term = div_round_half_up(weights.methods.0 as u128, methods);
    let total = delay_term + capacity_term + methods_term;
    if total > weights.infinity.0 as u128 {
        return Err(MetricError::Overflow(total.min(u64::MAX as u128) as u64));
    }
    Ok(Metric::new(Cost(total as u64), 1))
}

/// Message kinds on the simulated medium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MessageKind {
    RandomWalkDiscovery,
    Hello,
    RoutingUpdate,
    CreateStegLink,
    Data,
    KeyDelivery,
    IntraCluster,
}

impl MessageKind {
    pub fn tag(&self) -> u8 {
        match self {
            MessageKind::RandomWalkDiscovery => 1,
            MessageKind::Hello => 2,
            MessageKind::RoutingUpdate => 3,
            MessageKind::CreateStegLink => 4,
            MessageKind::Data => 5,
            MessageKind::KeyDelivery => 6,
            MessageKind::IntraCluster => 7,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MessageKind::RandomWalkDiscovery => "walk",
            MessageKind::Hello => "hello",
            MessageKind::RoutingUpdate => "update",
            MessageKind::CreateStegLink => "create_link",
            MessageKind::Data => "data",
            MessageKind::KeyDelivery => "key_delivery",
            MessageKind::IntraCluster => "intra",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Kind-specific message body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageBody {
    /// Steganographically embedded payload inside an innocuous carrier.
    Covered(StegEnvelope),
    /// Cluster key handed to a member over the direct CH-member edge.
    KeyDelivery { member: NodeId, key_id: u64, key: [u8; 32] },
    /// Symmetrically sealed intra-cluster traffic.
    IntraCluster { ciphertext: Vec<u8> },
}

/// A message in flight. `transport_sender` is the immediate radio sender
/// (the previous hop), re-stamped at every forward; the logical origin of a
/// covered message lives only inside its embedded payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub kind: MessageKind,
    pub transport_sender: NodeId,
    pub covered: bool,
    pub body: MessageBody,
}

impl ProtocolMessage {
    pub fn covered(kind: MessageKind, sender: NodeId, envelope: StegEnvelope) -> Self {
        Self { kind, transport_sender: sender, covered: true, body: MessageBody::Covered(envelope) }
    }

    pub fn key_delivery(sender: NodeId, member: NodeId, key_id: u64, key: [u8; 32]) -> Self {
        Self {
            kind: MessageKind::KeyDelivery,
            transport_sender: sender,
            covered: false,
            body: MessageBody::KeyDelivery { member, key_id, key },
        }
    }

    pub fn intra(sender: NodeId, ciphertext: Vec<u8>) -> Self {
        Self {
            kind: MessageKind::IntraCluster,
            transport_sender: sender,
            covered: false,
            body: MessageBody::IntraCluster { ciphertext },
        }
    }

    pub fn envelope(&self) -> Option<&StegEnvelope> {
        match &self.body {
            MessageBody::Covered(env) => Some(env),
            _ => None,
        }
    }

    /// The transmitted frame: kind tag plus body bytes. Transport addressing
    /// is delivery metadata and is not part of the frame, mirroring how a
    /// forwarder re-stamps the radio sender at each hop.
    pub fn wire_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.kind.tag()];
        match &self.body {
            MessageBody::Covered(env) => {
                out.push(match env.carrier.kind {
                    CarrierKind::HeaderField => 0,
                    CarrierKind::PayloadLowBits => 1,
                });
                out.extend_from_slice(&env.carrier.bytes);
            }
            MessageBody::KeyDelivery { member, key_id, key } => {
                out.extend_from_slice(&member.to_be_bytes());
                out.extend_from_slice(&key_id.to_be_bytes());
                out.extend_from_slice(key);
            }
            MessageBody::IntraCluster { ciphertext } => out.extend_from_slice(ciphertext),
        }
        out
    }
}

/// Plaintext schemas carried inside covered envelopes. Fixed-width
/// big-endian fields throughout.
pub mod wire {
    use super::*;

    #[derive(Debug, Error, PartialEq, Eq)]
    #[error("malformed {0} payload")]
    pub struct WireError(pub &'static str);

    fn take8(buf: &[u8], at: usize) -> Option<u64> {
        buf.get(at..at + 8).map(|b| u64::from_be_bytes(b.try_into().unwrap()))
    }

    fn take4(buf: &[u8], at: usize) -> Option<u32> {
        buf.get(at..at + 4).map(|b| u32::from_be_bytes(b.try_into().unwrap()))
    }

    /// Discovery beacon: origin address plus advertised capability set.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub struct Beacon {
        pub origin: NodeId,
        pub profile: CapabilityProfile,
    }

    pub fn encode_beacon(b: &Beacon) -> Vec<u8> {
        let mut out = Vec::with_capacity(16);
        out.extend_from_slice(&b.origin.to_be_bytes());
        out.extend_from_slice(&b.profile.methods.0.to_be_bytes());
        out
    }

    pub fn parse_beacon(buf: &[u8]) -> Result<Beacon, WireError> {
        if buf.len() != 16 {
            return Err(WireError("beacon"));
        }
        Ok(Beacon {
            origin: NodeId(take8(buf, 0).unwrap()),
            profile: CapabilityProfile::new(MethodSet(take8(buf, 8).unwrap())),
        })
    }

    /// Hello bodies: periodic liveness checks carry a digest of the sender's
    /// neighbour table; link setup and its acknowledgement carry the
    /// sender's profile so the responder can negotiate methods.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Hello {
        Liveness { sender: NodeId, digest: u64 },
        LinkSetup { sender: NodeId, profile: CapabilityProfile, ack: bool },
    }

    impl Hello {
        pub fn sender(&self) -> NodeId {
            match self {
                Hello::Liveness { sender, .. } => *sender,
                Hello::LinkSetup { sender, .. } => *sender,
            }
        }
    }

    pub fn encode_hello(h: &Hello) -> Vec<u8> {
        let mut out = Vec::with_capacity(17);
        match h {
            Hello::Liveness { sender, digest } => {
                out.push(0);
                out.extend_from_slice(&sender.to_be_bytes());
                out.extend_from_slice(&digest.to_be_bytes());
            }
            Hello::LinkSetup { sender, profile, ack } => {
                out.push(if *ack { 2 } else { 1 });
                out.extend_from_slice(&sender.to_be_bytes());
                out.extend_from_slice(&profile.methods.0.to_be_bytes());
            }
        }
        out
    }

    pub fn parse_hello(buf: &[u8]) -> Result<Hello, WireError> {
        if buf.len() != 17 {
            return Err(WireError("hello"));
        }
        let sender = NodeId(take8(buf, 1).unwrap());
        let word = take8(buf, 9).unwrap();
        match buf[0] {
            0 => Ok(Hello::Liveness { sender, digest: word }),
            1 | 2 => Ok(Hello::LinkSetup {
                sender,
                profile: CapabilityProfile::new(MethodSet(word)),
                ack: buf[0] == 2,
            }),
            _ => Err(WireError("hello")),
        }
    }

    /// One advertised route.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub struct AdvertisedRoute {
        pub destination: NodeId,
        pub cost: Cost,
        pub hop_count: u32,
        pub methods: MethodSet,
    }

    /// A full-table routing advertisement.
    #[derive(Debug, Clone, PartialEq, Eq)]
    pub struct RoutingAdvertisement {
        pub sender: NodeId,
        pub routes: Vec<AdvertisedRoute>,
    }

    pub fn encode_advertisement(adv: &RoutingAdvertisement) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + adv.routes.len() * 28);
        out.extend_from_slice(&adv.sender.to_be_bytes());
        out.extend_from_slice(&(adv.routes.len() as u32).to_be_bytes());
        for r in &adv.routes {
            out.extend_from_slice(&r.destination.to_be_bytes());
            out.extend_from_slice(&r.cost.0.to_be_bytes());
            out.extend_from_slice(&r.hop_count.to_be_bytes());
            out.extend_from_slice(&r.methods.0.to_be_bytes());
        }
        out
    }

    pub fn parse_advertisement(buf: &[u8]) -> Result<RoutingAdvertisement, WireError> {
        let sender = NodeId(take8(buf, 0).ok_or(WireError("advertisement"))?);
        let count = take4(buf, 8).ok_or(WireError("advertisement"))? as usize;
        if buf.len() != 12 + count * 28 {
            return Err(WireError("advertisement"));
        }
        let mut routes = Vec::with_capacity(count);
        for i in 0..count {
            let at = 12 + i * 28;
            routes.push(AdvertisedRoute {
                destination: NodeId(take8(buf, at).unwrap()),
                cost: Cost(take8(buf, at + 8).unwrap()),
                hop_count: take4(buf, at + 16).unwrap(),
                methods: MethodSet(take8(buf, at + 20).unwrap()),
            });
        }
        Ok(RoutingAdvertisement { sender, routes })
    }

    /// Relay request asking a compatible CH to open a link toward a newly
    /// discovered but locally incompatible CH.
    #[derive(Debug, Clone, PartialEq, Eq)]
    pub struct CreateStegLink {
        pub new_ch: NodeId,
        pub new_profile: CapabilityProfile,
        pub depth: u8,
        pub visited: BTreeSet<NodeId>,
    }

    pub fn encode_create_link(req: &CreateStegLink) -> Vec<u8> {
        let mut out = Vec::with_capacity(18 + req.visited.len() * 8);
        out.extend_from_slice(&req.new_ch.to_be_bytes());
        out.extend_from_slice(&req.new_profile.methods.0.to_be_bytes());
        out.push(req.depth);
        out.push(req.visited.len() as u8);
        for id in &req.visited {
            out.extend_from_slice(&id.to_be_bytes());
        }
        out
    }

    pub fn parse_create_link(buf: &[u8]) -> Result<CreateStegLink, WireError> {
        if buf.len() < 18 {
            return Err(WireError("create_steg_link"));
        }
        let count = buf[17] as usize;
        if buf.len() != 18 + count * 8 {
            return Err(WireError("create_steg_link"));
        }
        let mut visited = BTreeSet::new();
        for i in 0..count {
            visited.insert(NodeId(take8(buf, 18 + i * 8).unwrap()));
        }
        Ok(CreateStegLink {
            new_ch: NodeId(take8(buf, 0).unwrap()),
            new_profile: CapabilityProfile::new(MethodSet(take8(buf, 8).unwrap())),
            depth: buf[16],
            visited,
        })
    }

    /// Application data forwarded hop by hop along steg-links.
    #[derive(Debug, Clone, PartialEq, Eq)]
    pub struct DataPacket {
        pub origin: NodeId,
        pub destination: NodeId,
        pub ttl: u8,
        pub body: Vec<u8>,
    }

    pub fn encode_data(d: &DataPacket) -> Vec<u8> {
        let mut out = Vec::with_capacity(21 + d.body.len());
        out.extend_from_slice(&d.origin.to_be_bytes());
        out.extend_from_slice(&d.destination.to_be_bytes());
        out.push(d.ttl);
        out.extend_from_slice(&(d.body.len() as u32).to_be_bytes());
        out.extend_from_slice(&d.body);
        out
    }

    pub fn parse_data(buf: &[u8]) -> Result<DataPacket, WireError> {
        if buf.len() < 21 {
            return Err(WireError("data"));
        }
        let len = take4(buf, 17).unwrap() as usize;
        if buf.len() != 21 + len {
            return Err(WireError("data"));
        }
        Ok(DataPacket {
            origin: NodeId(take8(buf, 0).unwrap()),
            destination: NodeId(take8(buf, 8).unwrap()),
            ttl: buf[16],
            body: buf[21..].to_vec(),
        })
    }
}
