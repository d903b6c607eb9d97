//! Distance-vector table algebra and steg-path selection.
//!
//! Tables merge full advertisements from neighbours with the classic rules:
//! adopt a strictly cheaper candidate, and always believe the current next
//! hop, including bad news. There is no split horizon and no poisoned
//! reverse because every neighbour receives the entire table unmodified;
//! divergence is bounded by the cost cap plus a hop ceiling instead.
//! Unreachable entries are advertised once at the cap and then pruned.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::domain::{
    link_cost, Cost, CapabilityProfile, Metric, MethodSet, MetricWeights, NodeId, StegLink, Tick,
    MAX_HOPS,
};
use crate::domain::wire::AdvertisedRoute;

/// One routing-table row: the best known steg-path to a destination CH.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteEntry {
    pub destination: NodeId,
    pub next_hop: NodeId,
    pub metric: Metric,
    /// Methods common to every link along the advertised path. May be empty
    /// on multi-hop routes: each hop re-covers traffic with its own link
    /// methods, so an end-to-end common method is preferred but not required.
    pub method_set: MethodSet,
    /// Tick of the last refresh from this entry's next hop.
    pub age: Tick,
    /// Set once the entry has gone unreachable; it is advertised at the cap
    /// one more time and then pruned.
    pub pending_prune: bool,
}

/// Cached most-recent advertisement per neighbour, keyed by destination.
/// This is what makes alternative first hops enumerable for path selection.
pub type AdvertCache = BTreeMap<NodeId, BTreeMap<NodeId, AdvertisedRoute>>;

#[derive(Debug, Clone)]
pub struct RoutingTable {
    self_id: NodeId,
    entries: BTreeMap<NodeId, RouteEntry>,
    /// Bumped on every semantic change; the simulator watches it for
    /// quiescence detection.
    version: u64,
}

impl RoutingTable {
    /// A fresh table holds only the self route at metric zero.
    pub fn new(self_id: NodeId, profile: &CapabilityProfile) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(
            self_id,
            RouteEntry {
                destination: self_id,
                next_hop: self_id,
                metric: Metric::ZERO,
                method_set: profile.methods,
                age: 0,
                pending_prune: false,
            },
        );
        Self { self_id, entries, version: 0 }
    }

    pub fn self_id(&self) -> NodeId {
        self.self_id
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn get(&self, destination: &NodeId) -> Option<&RouteEntry> {
        self.entries.get(destination)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RouteEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The full table as advertised to neighbours, in destination order.
    pub fn advertisement(&self) -> Vec<AdvertisedRoute> {
        self.entries
            .values()
            .map(|e| AdvertisedRoute {
                destination: e.destination,
                cost: e.metric.cost,
                hop_count: e.metric.hop_count,
                methods: e.method_set,
            })
            .collect()
    }

    fn store(&mut self, entry: RouteEntry) -> bool {
        let changed = match self.entries.get(&entry.destination) {
            Some(old) => {
                old.next_hop != entry.next_hop
                    || old.metric != entry.metric
                    || old.method_set != entry.method_set
                    || old.pending_prune != entry.pending_prune
            }
            None => true,
        };
        self.entries.insert(entry.destination, entry);
        changed
    }

    /// Installs or refreshes the one-hop route over a live link.
    pub fn upsert_direct(&mut self, link: &StegLink, weights: &MetricWeights, now: Tick) -> bool {
        let Ok(metric) = link_cost(link, weights) else {
            return false;
        };
        let candidate = RouteEntry {
            destination: link.peer,
            next_hop: link.peer,
            metric,
            method_set: link.methods,
            age: now,
            pending_prune: false,
        };
        let adopt = match self.entries.get(&link.peer) {
            None => true,
            Some(old) => candidate.metric.cost < old.metric.cost || old.next_hop == link.peer,
        };
        if adopt {
            self.store(candidate)
        } else {
            false
        }
    }

    /// Marks every route through `hop` unreachable. Entries stay in the
    /// table until advertised once at the cap.
    pub fn invalidate_via(&mut self, hop: NodeId, infinity: Cost, now: Tick) -> bool {
        let mut changed = false;
        for entry in self.entries.values_mut() {
            if entry.next_hop == hop && entry.destination != self.self_id {
                if !entry.metric.is_infinite(infinity) || !entry.pending_prune {
                    changed = true;
                }
                entry.metric = Metric::infinite(infinity);
                entry.pending_prune = true;
                entry.age = now;
            }
        }
        changed
    }

    /// Garbage-collects entries unrefreshed for longer than `max_age`.
    pub fn invalidate_stale(&mut self, now: Tick, max_age: Tick, infinity: Cost) -> bool {
        let self_id = self.self_id;
        let mut changed = false;
        for entry in self.entries.values_mut() {
            if entry.destination != self_id
                && !entry.pending_prune
                && now.saturating_sub(entry.age) > max_age
            {
                entry.metric = Metric::infinite(infinity);
                entry.pending_prune = true;
                changed = true;
            }
        }
        changed
    }

    /// Drops entries whose unreachability has been advertised. Call after
    /// emitting a full-table update.
    pub fn prune_advertised(&mut self) {
        self.entries.retain(|_, e| !e.pending_prune);
    }
}

/// Bellman-Ford relaxation of one received full-table advertisement.
/// Returns whether anything was added, modified, or invalidated.
pub fn merge_routing_update(
    table: &mut RoutingTable,
    neighbour: NodeId,
    neighbour_link: &StegLink,
    advertised: &[AdvertisedRoute],
    weights: &MetricWeights,
    now: Tick,
) -> bool {
    debug_assert_eq!(neighbour_link.peer, neighbour);
    let Ok(hop_metric) = link_cost(neighbour_link, weights) else {
        return false;
    };
    let infinity = weights.infinity;
    let mut changed = false;
    for adv in advertised {
        if adv.destination == table.self_id {
            continue;
        }
        let adv_metric = Metric::new(adv.cost, adv.hop_count);
        let mut candidate_metric = adv_metric.add(&hop_metric, infinity);
        if adv_metric.is_infinite(infinity) || candidate_metric.is_infinite(infinity) {
            candidate_metric = Metric::infinite(infinity);
        }
        let unreachable = candidate_metric.is_infinite(infinity);
        let candidate = RouteEntry {
            destination: adv.destination,
            next_hop: neighbour,
            metric: candidate_metric,
            method_set: adv.methods.intersection(neighbour_link.methods),
            age: now,
            pending_prune: unreachable,
        };
        let adopt = match table.entries.get(&adv.destination) {
            // Unknown unreachable destinations are not worth a row.
            None => !unreachable,
            Some(old) => {
                candidate.metric.cost < old.metric.cost || old.next_hop == neighbour
            }
        };
        if adopt {
            changed |= table.store(candidate);
        }
    }
    changed
}

/// A first-hop candidate toward a destination: the link to take plus the
/// advertised remainder of the path. The metric is left empty until
/// [`calc_metrics_for_paths`] fills it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub destination: NodeId,
    pub next_hop: NodeId,
    pub link_capacity: u64,
    pub link_delay: u64,
    pub link_methods: MethodSet,
    /// Methods common along the whole candidate path.
    pub bottleneck: MethodSet,
    /// Advertised cost from the next hop onward.
    pub tail: Metric,
    pub metric: Option<Metric>,
}

impl Path {
    fn self_path(destination: NodeId) -> Self {
        Path {
            destination,
            next_hop: destination,
            link_capacity: 1,
            link_delay: 0,
            link_methods: MethodSet::EMPTY,
            bottleneck: MethodSet::EMPTY,
            tail: Metric::ZERO,
            metric: None,
        }
    }

    fn is_self(&self) -> bool {
        self.link_delay == 0
    }

    /// The method used to cover data on the first hop: the lowest common
    /// end-to-end method when one exists, otherwise the lowest method of the
    /// first link.
    pub fn cover_method(&self) -> Option<crate::domain::StegMethodId> {
        self.bottleneck.lowest().or_else(|| self.link_methods.lowest())
    }
}

/// Enumerates candidate first-hop paths toward `destination`: one per
/// neighbour whose most recent advertisement (or identity, when the
/// neighbour is the destination) offers finite-cost reachability.
pub fn find_paths_match(
    table: &RoutingTable,
    neighbour_table: &BTreeMap<NodeId, StegLink>,
    adverts: &AdvertCache,
    destination: NodeId,
    weights: &MetricWeights,
) -> Vec<Path> {
    if destination == table.self_id {
        return vec![Path::self_path(destination)];
    }
    let infinity = weights.infinity;
    let mut paths = Vec::new();
    for (peer, link) in neighbour_table {
        let (tail, bottleneck) = if *peer == destination {
            (Metric::ZERO, link.methods)
        } else {
            match adverts.get(peer).and_then(|table| table.get(&destination)) {
                Some(adv) if !Metric::new(adv.cost, adv.hop_count).is_infinite(infinity) => (
                    Metric::new(adv.cost, adv.hop_count),
                    adv.methods.intersection(link.methods),
                ),
                _ => continue,
            }
        };
        paths.push(Path {
            destination,
            next_hop: *peer,
            link_capacity: link.capacity,
            link_delay: link.delay,
            link_methods: link.methods,
            bottleneck,
            tail,
            metric: None,
        });
    }
    paths
}

/// Fills in each path metric: first-link cost from the three factors plus
/// the advertised remainder.
pub fn calc_metrics_for_paths(paths: &mut [Path], weights: &MetricWeights) {
    for path in paths.iter_mut() {
        if path.is_self() {
            path.metric = Some(Metric::ZERO);
            continue;
        }
        let link = StegLink {
            local: NodeId(0),
            peer: path.next_hop,
            methods: path.link_methods,
            capacity: path.link_capacity,
            delay: path.link_delay,
            last_hello: 0,
        };
        let first = match link_cost(&link, weights) {
            Ok(m) => m,
            Err(_) => Metric::infinite(weights.infinity),
        };
        path.metric = Some(first.add(&path.tail, weights.infinity));
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RoutingError {
    #[error("no candidate paths to choose from")]
    EmptyPathList,
}

/// Minimum-cost path; ties broken by lower hop count, then lower first-hop
/// id. Total and deterministic over any permutation of the input.
pub fn choose_best_path(paths: &[Path]) -> Result<&Path, RoutingError> {
    paths
        .iter()
        .min_by_key(|p| {
            let m = p.metric.expect("path metrics must be populated before choosing");
            (m.cost, m.hop_count, p.next_hop)
        })
        .ok_or(RoutingError::EmptyPathList)
}

/// Outcome of planning a data send.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SendOutcome {
    /// A path was selected. `metric` is populated only when more than one
    /// candidate existed and the metrics were actually compared.
    Sent(Path),
    NoPathFound,
}

/// Path selection for outgoing data: compare metrics only when there is a
/// real choice, send directly on a sole candidate, and report unreachable
/// destinations as an outcome rather than an error.
pub fn plan_data_send(
    table: &RoutingTable,
    neighbour_table: &BTreeMap<NodeId, StegLink>,
    adverts: &AdvertCache,
    destination: NodeId,
    weights: &MetricWeights,
) -> SendOutcome {
    let mut paths = find_paths_match(table, neighbour_table, adverts, destination, weights);
    match paths.len() {
        0 => SendOutcome::NoPathFound,
        1 => SendOutcome::Sent(paths.pop().unwrap()),
        _ => {
            calc_metrics_for_paths(&mut paths, weights);
            let best = choose_best_path(&paths).expect("non-empty path list").clone();
            SendOutcome::Sent(best)
        }
    }
}
