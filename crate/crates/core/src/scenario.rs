//! Scenario files: parsing, validation, and canonicalization.
//!
//! Scenarios are TOML documents (conventionally `.scn`) described field by
//! field in `SCENARIO.md`. Fixed-point quantities (trust, weights, forward
//! probability) are written as decimal strings so no float ever enters the
//! pipeline. A scenario validates completely before any world is built, and
//! every validation error names the field path that caused it.
//!
//! The canonical form renders the fully resolved spec - defaults applied,
//! collections sorted - as deterministic text; its SHA-256 is the scenario
//! digest reported in run outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto::TrustValue;
use crate::domain::{
    CapabilityProfile, ClusterId, Cost, LayerTag, NodeId, NodeRole, MetricWeights, StegMethodId,
    Tick, DEFAULT_INFINITY_COST,
};
use crate::engine::EngineConfig;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario at {path}: {reason}")]
    Validation { path: String, reason: String },
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation { path: path.into(), reason: reason.into() }
}

/// An injectable fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultSpec {
    BenignChDeparture(NodeId),
    MaliciousChRemoval(NodeId),
    LinkCut(NodeId, NodeId),
    Eavesdropper(NodeId),
}

/// A node joining the world at runtime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmitSpec {
    pub id: NodeId,
    pub role: NodeRole,
    pub cluster: ClusterId,
    pub profile: CapabilityProfile,
    pub trust: Option<TrustValue>,
    /// New underlay edges as (existing peer, delay).
    pub edges: Vec<(NodeId, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScenarioAction {
    Fault(FaultSpec),
    AdmitNode(AdmitSpec),
    EvictNode(NodeId),
    DataSend { from: NodeId, to: NodeId, bytes: u32 },
    IntraSend { from: NodeId, to: NodeId, bytes: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledEvent {
    pub tick: Tick,
    pub action: ScenarioAction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub role: NodeRole,
    pub cluster: ClusterId,
    pub profile: CapabilityProfile,
    pub trust: Option<TrustValue>,
    pub engine: EngineConfig,
}

/// A fully resolved and validated scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioSpec {
    pub name: String,
    pub trust_threshold: TrustValue,
    pub rekey_on_evict: bool,
    pub methods: BTreeMap<StegMethodId, LayerTag>,
    pub defaults: EngineConfig,
    pub nodes: BTreeMap<NodeId, NodeSpec>,
    /// Undirected underlay edges, normalized `(low, high) -> delay`.
    pub edges: BTreeMap<(NodeId, NodeId), u64>,
    pub steglink_default_capacity: u64,
    /// Per-pair capacity overrides, normalized `(low, high)`.
    pub steglink_capacity: BTreeMap<(NodeId, NodeId), u64>,
    pub events: Vec<ScheduledEvent>,
}

pub fn edge_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

// ---------------------------------------------------------------------------
// Raw serde shapes.

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    trust_threshold: Option<String>,
    rekey_on_evict: Option<bool>,
    #[serde(default, rename = "method")]
    methods: Vec<RawMethod>,
    #[serde(default)]
    defaults: RawEngine,
    #[serde(default)]
    metric: RawMetric,
    #[serde(default)]
    steglink: RawStegLink,
    #[serde(default, rename = "node")]
    nodes: Vec<RawNode>,
    #[serde(default, rename = "edge")]
    edges: Vec<RawEdge>,
    #[serde(default, rename = "event")]
    events: Vec<RawEvent>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMethod {
    id: u8,
    layer: LayerTag,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEngine {
    random_walk_period: Option<u64>,
    routing_update_period: Option<u64>,
    hello_period: Option<u64>,
    fluctuation_rw: Option<u64>,
    fluctuation_ru: Option<u64>,
    fluctuation_h: Option<u64>,
    hello_timeout: Option<u64>,
    forward_probability: Option<String>,
    relay_depth: Option<u8>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    w_delay: Option<String>,
    w_capacity: Option<String>,
    w_methods: Option<String>,
    infinity_cost: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStegLink {
    default_capacity: Option<u64>,
    #[serde(default)]
    capacity: Vec<RawCapacity>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCapacity {
    a: u64,
    b: u64,
    capacity: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: u64,
    role: NodeRole,
    cluster: u32,
    #[serde(default)]
    profile: Vec<u8>,
    trust: Option<String>,
    engine: Option<RawEngine>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    a: u64,
    b: u64,
    delay: u64,
}

#[derive(Debug, Deserialize)]
struct RawEvent {
    tick: u64,
    #[serde(flatten)]
    action: RawAction,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
enum RawAction {
    BenignDeparture { node: u64 },
    MaliciousRemoval { node: u64 },
    LinkCut { a: u64, b: u64 },
    Eavesdropper { node: u64 },
    AdmitNode {
        node: u64,
        role: NodeRole,
        cluster: u32,
        #[serde(default)]
        profile: Vec<u8>,
        trust: Option<String>,
        #[serde(default)]
        edges: Vec<[u64; 2]>,
    },
    EvictNode { node: u64 },
    DataSend { from: u64, to: u64, bytes: u32 },
    IntraSend { from: u64, to: u64, bytes: u32 },
}

// ---------------------------------------------------------------------------
// Parsing and resolution.

fn parse_fixed(path: &str, raw: &str) -> Result<Cost, ScenarioError> {
    raw.parse::<Cost>().map_err(|e| invalid(path, e.to_string()))
}

fn parse_trust(path: &str, raw: &str) -> Result<TrustValue, ScenarioError> {
    raw.parse::<TrustValue>().map_err(|e| invalid(path, e.to_string()))
}

fn parse_profile(path: &str, ids: &[u8]) -> Result<CapabilityProfile, ScenarioError> {
    for id in ids {
        if *id == 0 {
            return Err(invalid(path, "method id 0 is reserved for discovery beacons"));
        }
        if *id > StegMethodId::MAX {
            return Err(invalid(path, format!("method id {id} exceeds {}", StegMethodId::MAX)));
        }
    }
    Ok(CapabilityProfile::from_ids(ids.iter().copied()))
}

fn resolve_engine(
    path: &str,
    base: &EngineConfig,
    raw: &RawEngine,
) -> Result<EngineConfig, ScenarioError> {
    let mut config = *base;
    if let Some(v) = raw.random_walk_period {
        config.random_walk_period = v;
    }
    if let Some(v) = raw.routing_update_period {
        config.routing_update_period = v;
    }
    if let Some(v) = raw.hello_period {
        config.hello_period = v;
    }
    if let Some(v) = raw.fluctuation_rw {
        config.fluctuation_rw = v;
    }
    if let Some(v) = raw.fluctuation_ru {
        config.fluctuation_ru = v;
    }
    if let Some(v) = raw.fluctuation_h {
        config.fluctuation_h = v;
    }
    if let Some(v) = raw.hello_timeout {
        config.hello_timeout = v;
    }
    if let Some(v) = &raw.forward_probability {
        config.forward_probability = parse_fixed(&format!("{path}.forward_probability"), v)?.0;
    }
    if let Some(v) = raw.relay_depth {
        config.relay_depth = v;
    }
    config.validate().map_err(|reason| invalid(path, reason))?;
    Ok(config)
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|err| {
        let (line, column) = err
            .span()
            .map(|span| {
                let prefix = &text[..span.start.min(text.len())];
                let line = prefix.lines().count().max(1);
                let column = prefix.lines().last().map(|l| l.len() + 1).unwrap_or(1);
                (line, column)
            })
            .unwrap_or((1, 1));
        ScenarioError::Parse { line, column, message: err.message().to_string() }
    })?;
    resolve(raw)
}

/// Loads a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

fn resolve(raw: RawScenario) -> Result<ScenarioSpec, ScenarioError> {
    let mut methods = BTreeMap::new();
    for (i, m) in raw.methods.iter().enumerate() {
        let path = format!("method[{i}]");
        if m.id == 0 {
            return Err(invalid(path, "method id 0 is reserved for discovery beacons"));
        }
        if m.id > StegMethodId::MAX {
            return Err(invalid(path, format!("method id {} exceeds {}", m.id, StegMethodId::MAX)));
        }
        if methods.insert(StegMethodId(m.id), m.layer).is_some() {
            return Err(invalid(path, format!("duplicate method id {}", m.id)));
        }
    }

    let mut weights = MetricWeights::default();
    if let Some(v) = &raw.metric.w_delay {
        weights.delay = parse_fixed("metric.w_delay", v)?;
    }
    if let Some(v) = &raw.metric.w_capacity {
        weights.capacity = parse_fixed("metric.w_capacity", v)?;
    }
    if let Some(v) = &raw.metric.w_methods {
        weights.methods = parse_fixed("metric.w_methods", v)?;
    }
    if let Some(v) = &raw.metric.infinity_cost {
        weights.infinity = parse_fixed("metric.infinity_cost", v)?;
        if weights.infinity.0 == 0 {
            return Err(invalid("metric.infinity_cost", "must be positive"));
        }
    }

    let mut base = EngineConfig { weights, ..EngineConfig::default() };
    base = resolve_engine("defaults", &base, &raw.defaults)?;

    let mut nodes: BTreeMap<NodeId, NodeSpec> = BTreeMap::new();
    for (i, n) in raw.nodes.iter().enumerate() {
        let path = format!("node[{i}]");
        let id = NodeId(n.id);
        if nodes.contains_key(&id) {
            return Err(invalid(format!("{path}.id"), format!("duplicate node id {id}")));
        }
        let profile = parse_profile(&format!("{path}.profile"), &n.profile)?;
        let trust = match &n.trust {
            Some(t) => Some(parse_trust(&format!("{path}.trust"), t)?),
            None => None,
        };
        let engine = match &n.engine {
            Some(over) => resolve_engine(&format!("{path}.engine"), &base, over)?,
            None => base,
        };
        nodes.insert(id, NodeSpec { id, role: n.role, cluster: ClusterId(n.cluster), profile, trust, engine });
    }

    let mut edges = BTreeMap::new();
    for (i, e) in raw.edges.iter().enumerate() {
        let path = format!("edge[{i}]");
        if e.a == e.b {
            return Err(invalid(path, "self-loop edges are not allowed"));
        }
        if e.delay < 1 {
            return Err(invalid(format!("{path}.delay"), "edge delay must be at least 1"));
        }
        let key = edge_key(NodeId(e.a), NodeId(e.b));
        if edges.insert(key, e.delay).is_some() {
            return Err(invalid(path, format!("duplicate edge {}-{}", e.a, e.b)));
        }
    }

    let steglink_default_capacity = raw.steglink.default_capacity.unwrap_or(8);
    if steglink_default_capacity < 1 {
        return Err(invalid("steglink.default_capacity", "capacity must be at least 1"));
    }
    let mut steglink_capacity = BTreeMap::new();
    for (i, c) in raw.steglink.capacity.iter().enumerate() {
        let path = format!("steglink.capacity[{i}]");
        if c.capacity < 1 {
            return Err(invalid(format!("{path}.capacity"), "capacity must be at least 1"));
        }
        let key = edge_key(NodeId(c.a), NodeId(c.b));
        if steglink_capacity.insert(key, c.capacity).is_some() {
            return Err(invalid(path, format!("duplicate capacity override {}-{}", c.a, c.b)));
        }
    }

    let mut events = Vec::with_capacity(raw.events.len());
    for (i, e) in raw.events.iter().enumerate() {
        let path = format!("event[{i}]");
        let action = match &e.action {
            RawAction::BenignDeparture { node } => {
                ScenarioAction::Fault(FaultSpec::BenignChDeparture(NodeId(*node)))
            }
            RawAction::MaliciousRemoval { node } => {
                ScenarioAction::Fault(FaultSpec::MaliciousChRemoval(NodeId(*node)))
            }
            RawAction::LinkCut { a, b } => {
                if a == b {
                    return Err(invalid(path, "link_cut endpoints must differ"));
                }
                ScenarioAction::Fault(FaultSpec::LinkCut(NodeId(*a), NodeId(*b)))
            }
            RawAction::Eavesdropper { node } => {
                ScenarioAction::Fault(FaultSpec::Eavesdropper(NodeId(*node)))
            }
            RawAction::AdmitNode { node, role, cluster, profile, trust, edges } => {
                let spec = AdmitSpec {
                    id: NodeId(*node),
                    role: *role,
                    cluster: ClusterId(*cluster),
                    profile: parse_profile(&format!("{path}.profile"), profile)?,
                    trust: match trust {
                        Some(t) => Some(parse_trust(&format!("{path}.trust"), t)?),
                        None => None,
                    },
                    edges: edges.iter().map(|[peer, delay]| (NodeId(*peer), *delay)).collect(),
                };
                ScenarioAction::AdmitNode(spec)
            }
            RawAction::EvictNode { node } => ScenarioAction::EvictNode(NodeId(*node)),
            RawAction::DataSend { from, to, bytes } => {
                ScenarioAction::DataSend { from: NodeId(*from), to: NodeId(*to), bytes: *bytes }
            }
            RawAction::IntraSend { from, to, bytes } => {
                ScenarioAction::IntraSend { from: NodeId(*from), to: NodeId(*to), bytes: *bytes }
            }
        };
        events.push(ScheduledEvent { tick: e.tick, action });
    }
    events.sort_by_key(|e| e.tick);

    let spec = ScenarioSpec {
        name: raw.name.unwrap_or_else(|| "unnamed".to_string()),
        trust_threshold: match &raw.trust_threshold {
            Some(t) => parse_trust("trust_threshold", t)?,
            None => TrustValue(500_000),
        },
        rekey_on_evict: raw.rekey_on_evict.unwrap_or(true),
        methods,
        defaults: base,
        nodes,
        edges,
        steglink_default_capacity,
        steglink_capacity,
        events,
    };
    spec.validate()?;
    Ok(spec)
}

impl ScenarioSpec {
    /// Structural validation over the resolved spec. Construction through
    /// [`parse_scenario`] always validates; programmatic builders should
    /// call this too.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.defaults.validate().map_err(|r| invalid("defaults", r))?;
        // Clusters must have exactly one CH each.
        let mut heads: BTreeMap<ClusterId, NodeId> = BTreeMap::new();
        for node in self.nodes.values() {
            let path = format!("node[{}]", node.id);
            for m in node.profile.methods.iter() {
                if !self.methods.contains_key(&m) {
                    return Err(invalid(
                        format!("{path}.profile"),
                        format!("method {m} is not in the registry"),
                    ));
                }
            }
            match node.role {
                NodeRole::ClusterHead => {
                    if node.profile.is_empty() {
                        return Err(invalid(
                            format!("{path}.profile"),
                            "a cluster head needs a non-empty capability profile",
                        ));
                    }
                    if let Some(previous) = heads.insert(node.cluster, node.id) {
                        return Err(invalid(
                            format!("{path}.cluster"),
                            format!(
                                "cluster {} already has cluster head {previous}",
                                node.cluster
                            ),
                        ));
                    }
                }
                NodeRole::Gateway => {
                    if node.profile.is_empty() {
                        return Err(invalid(
                            format!("{path}.profile"),
                            "a gateway needs a non-empty capability profile",
                        ));
                    }
                    if node.trust.is_none() {
                        return Err(invalid(
                            format!("{path}.trust"),
                            "gateway candidates need a trust value",
                        ));
                    }
                }
                NodeRole::Member => {}
            }
            node.engine.validate().map_err(|r| invalid(format!("{path}.engine"), r))?;
        }
        for node in self.nodes.values() {
            if !heads.contains_key(&node.cluster) {
                return Err(invalid(
                    format!("node[{}].cluster", node.id),
                    format!("cluster {} has no cluster head", node.cluster),
                ));
            }
            if node.role == NodeRole::Gateway {
                let borders_other = self.edges.keys().any(|(a, b)| {
                    let peer = if *a == node.id {
                        Some(*b)
                    } else if *b == node.id {
                        Some(*a)
                    } else {
                        None
                    };
                    peer.and_then(|p| self.nodes.get(&p))
                        .map(|p| p.cluster != node.cluster)
                        .unwrap_or(false)
                });
                if !borders_other {
                    return Err(invalid(
                        format!("node[{}]", node.id),
                        "a gateway must border at least one other cluster",
                    ));
                }
            }
        }
        for ((a, b), _) in &self.edges {
            for end in [a, b] {
                if !self.nodes.contains_key(end) {
                    return Err(invalid(
                        format!("edge[{a}-{b}]"),
                        format!("node {end} does not exist"),
                    ));
                }
            }
        }
        // Events are checked against the set of nodes alive at their tick.
        let mut alive: BTreeSet<NodeId> = self.nodes.keys().copied().collect();
        let mut clusters_with_heads: BTreeSet<ClusterId> = heads.keys().copied().collect();
        for (i, event) in self.events.iter().enumerate() {
            let path = format!("event[{i}]");
            let check = |n: &NodeId, alive: &BTreeSet<NodeId>| -> Result<(), ScenarioError> {
                if alive.contains(n) {
                    Ok(())
                } else {
                    Err(invalid(path.clone(), format!("node {n} does not exist at tick")))
                }
            };
            match &event.action {
                ScenarioAction::Fault(FaultSpec::BenignChDeparture(n))
                | ScenarioAction::Fault(FaultSpec::MaliciousChRemoval(n))
                | ScenarioAction::Fault(FaultSpec::Eavesdropper(n))
                | ScenarioAction::EvictNode(n) => check(n, &alive)?,
                ScenarioAction::Fault(FaultSpec::LinkCut(a, b)) => {
                    check(a, &alive)?;
                    check(b, &alive)?;
                }
                ScenarioAction::AdmitNode(spec) => {
                    if alive.contains(&spec.id) {
                        return Err(invalid(path, format!("node {} already exists", spec.id)));
                    }
                    for m in spec.profile.methods.iter() {
                        if !self.methods.contains_key(&m) {
                            return Err(invalid(
                                format!("{path}.profile"),
                                format!("method {m} is not in the registry"),
                            ));
                        }
                    }
                    match spec.role {
                        NodeRole::ClusterHead => {
                            if spec.profile.is_empty() {
                                return Err(invalid(
                                    format!("{path}.profile"),
                                    "a cluster head needs a non-empty capability profile",
                                ));
                            }
                            if clusters_with_heads.contains(&spec.cluster) {
                                return Err(invalid(
                                    format!("{path}.cluster"),
                                    format!("cluster {} already has a cluster head", spec.cluster),
                                ));
                            }
                            clusters_with_heads.insert(spec.cluster);
                        }
                        NodeRole::Member => {
                            if !clusters_with_heads.contains(&spec.cluster) {
                                return Err(invalid(
                                    format!("{path}.cluster"),
                                    format!("cluster {} has no cluster head", spec.cluster),
                                ));
                            }
                        }
                        NodeRole::Gateway => {
                            return Err(invalid(
                                format!("{path}.role"),
                                "gateways cannot be admitted at runtime",
                            ));
                        }
                    }
                    for (peer, delay) in &spec.edges {
                        check(peer, &alive)?;
                        if *delay < 1 {
                            return Err(invalid(
                                format!("{path}.edges"),
                                "edge delay must be at least 1",
                            ));
                        }
                    }
                    alive.insert(spec.id);
                }
                ScenarioAction::DataSend { from, to, .. }
                | ScenarioAction::IntraSend { from, to, .. } => {
                    check(from, &alive)?;
                    check(to, &alive)?;
                }
            }
        }
        Ok(())
    }

    /// Deterministic text rendering of the resolved spec.
    pub fn canonical_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "scenario {}", self.name);
        let _ = writeln!(out, "trust_threshold {}", self.trust_threshold.0);
        let _ = writeln!(out, "rekey_on_evict {}", self.rekey_on_evict);
        let w = &self.defaults.weights;
        let _ = writeln!(
            out,
            "weights {} {} {} infinity {}",
            w.delay.0, w.capacity.0, w.methods.0, w.infinity.0
        );
        for (id, layer) in &self.methods {
            let _ = writeln!(out, "method {} {:?}", id, layer);
        }
        let engine_line = |c: &EngineConfig| {
            format!(
                "rw {} ru {} h {} frw {} fru {} fh {} timeout {} pf {} depth {}",
                c.random_walk_period,
                c.routing_update_period,
                c.hello_period,
                c.fluctuation_rw,
                c.fluctuation_ru,
                c.fluctuation_h,
                c.hello_timeout,
                c.forward_probability,
                c.relay_depth
            )
        };
        let _ = writeln!(out, "defaults {}", engine_line(&self.defaults));
        for node in self.nodes.values() {
            let trust = node.trust.map(|t| t.0.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "node {} {} cluster {} profile {} trust {} {}",
                node.id,
                node.role,
                node.cluster,
                node.profile.methods,
                trust,
                engine_line(&node.engine)
            );
        }
        for ((a, b), delay) in &self.edges {
            let _ = writeln!(out, "edge {a} {b} delay {delay}");
        }
        let _ = writeln!(out, "steglink_default {}", self.steglink_default_capacity);
        for ((a, b), cap) in &self.steglink_capacity {
            let _ = writeln!(out, "steglink {a} {b} capacity {cap}");
        }
        for (i, event) in self.events.iter().enumerate() {
            let _ = writeln!(out, "event {} {} {:?}", event.tick, i, event.action);
        }
        out
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.canonical_text().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_CLUSTERS: &str = r#"
name = "two_clusters"
trust_threshold = "0.5"

[[method]]
id = 1
layer = "application"

[[method]]
id = 2
layer = "transport"

[defaults]
hello_timeout = 90
forward_probability = "0.7"

[metric]
w_delay = "1.0"

[[node]]
id = 1
role = "cluster_head"
cluster = 1
profile = [1, 2]

[[node]]
id = 2
role = "cluster_head"
cluster = 2
profile = [2]

[[node]]
id = 3
role = "gateway"
cluster = 1
profile = [1]
trust = "0.9"

[[node]]
id = 4
role = "member"
cluster = 2

[[edge]]
a = 1
b = 3
delay = 1

[[edge]]
a = 3
b = 2
delay = 2

[[edge]]
a = 2
b = 4
delay = 1

[[event]]
tick = 100
action = "data_send"
from = 1
to = 2
bytes = 16
"#;

    #[test]
    fn parses_the_two_cluster_fixture() {
        let spec = parse_scenario(TWO_CLUSTERS).unwrap();
        assert_eq!(spec.nodes.len(), 4);
        let heads: Vec<_> =
            spec.nodes.values().filter(|n| n.role == NodeRole::ClusterHead).collect();
        assert_eq!(heads.len(), 2);
        assert_eq!(spec.defaults.hello_timeout, 90);
        assert_eq!(spec.defaults.forward_probability, 700_000);
        assert_eq!(spec.trust_threshold, TrustValue(500_000));
        assert_eq!(spec.events.len(), 1);
    }

    #[test]
    fn missing_profile_on_ch_is_rejected() {
        let text = TWO_CLUSTERS.replace("profile = [1, 2]", "profile = []");
        let err = parse_scenario(&text).unwrap_err();
        match err {
            ScenarioError::Validation { path, .. } => assert!(path.contains("profile")),
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn unknown_method_reference_is_rejected() {
        let text = TWO_CLUSTERS.replace("profile = [1, 2]", "profile = [1, 9]");
        let err = parse_scenario(&text).unwrap_err();
        match err {
            ScenarioError::Validation { path, reason } => {
                assert!(path.contains("profile"));
                assert!(reason.contains("registry"));
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn duplicate_node_id_is_rejected() {
        let text = TWO_CLUSTERS.replace("id = 4", "id = 3");
        let err = parse_scenario(&text).unwrap_err();
        match err {
            ScenarioError::Validation { path, reason } => {
                assert!(path.contains("id"), "{path}: {reason}");
                assert!(reason.contains("duplicate"));
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = parse_scenario("name = \"x\"\nbroken ===").unwrap_err();
        match err {
            ScenarioError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn method_zero_is_reserved() {
        let text = TWO_CLUSTERS.replace("id = 1\nlayer = \"application\"", "id = 0\nlayer = \"application\"");
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn gateway_without_trust_is_rejected() {
        let text = TWO_CLUSTERS.replace("trust = \"0.9\"\n", "");
        let err = parse_scenario(&text).unwrap_err();
        match err {
            ScenarioError::Validation { path, .. } => assert!(path.contains("trust")),
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn digest_is_stable_and_input_sensitive() {
        let a = parse_scenario(TWO_CLUSTERS).unwrap();
        let b = parse_scenario(TWO_CLUSTERS).unwrap();
        assert_eq!(a.digest(), b.digest());
        let changed = parse_scenario(&TWO_CLUSTERS.replace("bytes = 16", "bytes = 17")).unwrap();
        assert_ne!(a.digest(), changed.digest());
    }

    #[test]
    fn hello_timeout_must_exceed_period() {
        let text = TWO_CLUSTERS.replace("hello_timeout = 90", "hello_timeout = 10");
        assert!(parse_scenario(&text).is_err());
    }
}
