//! Precompute: walk the simulation window tick by tick, snapshot the
//! network, diff consecutive snapshots and keep what the flows touch.

mod bundle;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::geometry::{
    generate_walker, group_orbits, parse_tle, propagate_all, ConstellationGeometry, GeometryError, Keplerian,
    OrbitalElements, Propagator,
};
use crate::link_model::weather::{provider_from_config, WeatherError, WeatherProvider};
use crate::link_model::{characterize, LinkMatrix};
use crate::routing::{build_graph, route_tick, RoutingError, RoutingTable};
use crate::topology::{
    build_connectivity, nominal_isl_edges, Attachment, AttachmentState, ConnectivityMatrix, EdgeKey, NodeIndex,
    TopologyError,
};

pub use bundle::{load_bundle, save_bundle, BundleHeader, ScenarioBundle, BUNDLE_MAGIC, BUNDLE_SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum BackstageError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("cannot read TLE file {path}: {source}")]
    TleFile {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Weather(#[from] WeatherError),
    #[error("tick {tick}: {source}")]
    Topology {
        tick: u64,
        #[source]
        source: TopologyError,
    },
    #[error("tick {tick}: {source}")]
    Routing {
        tick: u64,
        #[source]
        source: RoutingError,
    },
    #[error("snapshot dimensions differ: {0} vs {1} nodes")]
    Dimension(u32, u32),
    #[error("delta at tick {tick} does not apply: {reason}")]
    Replay { tick: u64, reason: String },
    #[error("bundle I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bundle schema version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("bundle checksum mismatch")]
    Checksum,
    #[error("bundle is truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("malformed bundle: {0}")]
    Format(String),
}

/// Full network state at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySnapshot {
    pub tick: u64,
    pub t_ms: u64,
    pub connectivity: ConnectivityMatrix,
    pub latency: LinkMatrix,
    pub capacity: LinkMatrix,
    pub routing: RoutingTable,
    pub attachments: AttachmentState,
}

impl TopologySnapshot {
    /// Links and routing entries limited to the mask; paths and
    /// attachments kept whole.
    pub fn restricted(&self, mask: &RelevanceMask) -> TopologySnapshot {
        let keep = |m: &LinkMatrix| LinkMatrix {
            values: m
                .values
                .iter()
                .filter(|(e, _)| mask.links.contains(e))
                .map(|(e, v)| (*e, *v))
                .collect(),
        };
        let mut out = self.clone();
        out.connectivity.edges.retain(|e| mask.links.contains(e));
        out.latency = keep(&self.latency);
        out.capacity = keep(&self.capacity);
        out.routing.entries.retain(|n, _| mask.nodes.contains(n));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkChange {
    pub edge: EdgeKey,
    pub latency_ms: f64,
    pub capacity_mbps: f64,
}

/// `next_hop: None` deletes the entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteChange {
    pub node: u32,
    pub destination: u32,
    pub next_hop: Option<u32>,
}

/// A flow pair's path before and after; empty means unreachable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathChange {
    pub src: u32,
    pub dst: u32,
    pub old: Vec<u32>,
    pub new: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachmentChange {
    /// Position in the ground segment list.
    pub ground: u32,
    pub attachment: Option<Attachment>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkDelta {
    pub tick: u64,
    pub t_ms: u64,
    pub added: Vec<LinkChange>,
    pub removed: Vec<EdgeKey>,
    pub modified: Vec<LinkChange>,
    pub routing_changes: Vec<RouteChange>,
    pub path_changes: Vec<PathChange>,
    pub attachment_changes: Vec<AttachmentChange>,
    pub warnings: Vec<String>,
}

impl LinkDelta {
    /// True when nothing about the network changed (warnings aside).
    pub fn is_empty(&self) -> bool {
        self.added.is_empty()
            && self.removed.is_empty()
            && self.modified.is_empty()
            && self.routing_changes.is_empty()
            && self.path_changes.is_empty()
            && self.attachment_changes.is_empty()
    }

    /// Added plus removed edges whose endpoints are both satellites.
    pub fn isl_changes(&self, num_satellites: usize) -> usize {
        let n = num_satellites as u32;
        self.added.iter().filter(|c| c.edge.1 < n).count() + self.removed.iter().filter(|e| e.1 < n).count()
    }

    pub fn restricted(&self, mask: &RelevanceMask) -> LinkDelta {
        let mut out = self.clone();
        out.added.retain(|c| mask.links.contains(&c.edge));
        out.modified.retain(|c| mask.links.contains(&c.edge));
        out.removed.retain(|e| mask.links.contains(e));
        out.routing_changes.retain(|r| mask.nodes.contains(&r.node));
        out
    }
}

fn changed(a: f64, b: f64, eps: f64) -> bool {
    if eps == 0.0 {
        a.to_bits() != b.to_bits()
    } else {
        (a - b).abs() > eps
    }
}

/// Edges only in `next` are added, only in `prev` removed; shared edges
/// whose latency or capacity moved by more than the thresholds are
/// modified (with zero thresholds, any bit change counts).
pub fn diff_snapshots(
    prev: &TopologySnapshot,
    next: &TopologySnapshot,
    eps_latency_ms: f64,
    eps_capacity_mbps: f64,
) -> Result<LinkDelta, BackstageError> {
    if prev.connectivity.n != next.connectivity.n {
        return Err(BackstageError::Dimension(prev.connectivity.n, next.connectivity.n));
    }
    let values = |s: &TopologySnapshot, e: &EdgeKey| LinkChange {
        edge: *e,
        latency_ms: s.latency.values.get(e).copied().unwrap_or(0.0),
        capacity_mbps: s.capacity.values.get(e).copied().unwrap_or(0.0),
    };
    let mut delta = LinkDelta {
        tick: next.tick,
        t_ms: next.t_ms,
        ..Default::default()
    };
    for e in next.connectivity.edges.difference(&prev.connectivity.edges) {
        delta.added.push(values(next, e));
    }
    delta.removed = prev.connectivity.edges.difference(&next.connectivity.edges).copied().collect();
    for e in next.connectivity.edges.intersection(&prev.connectivity.edges) {
        let (a, b) = (values(prev, e), values(next, e));
        if changed(a.latency_ms, b.latency_ms, eps_latency_ms) || changed(a.capacity_mbps, b.capacity_mbps, eps_capacity_mbps)
        {
            delta.modified.push(b);
        }
    }

    let keys: BTreeSet<(u32, u32)> = prev
        .routing
        .entries
        .iter()
        .chain(&next.routing.entries)
        .flat_map(|(n, m)| m.keys().map(move |d| (*n, *d)))
        .collect();
    for (node, destination) in keys {
        let (a, b) = (prev.routing.next_hop(node, destination), next.routing.next_hop(node, destination));
        if a != b {
            delta.routing_changes.push(RouteChange {
                node,
                destination,
                next_hop: b,
            });
        }
    }

    let pairs: BTreeSet<(u32, u32)> = prev.routing.paths.keys().chain(next.routing.paths.keys()).copied().collect();
    for (src, dst) in pairs {
        let old = prev.routing.paths.get(&(src, dst)).cloned().unwrap_or_default();
        let new = next.routing.paths.get(&(src, dst)).cloned().unwrap_or_default();
        if old != new {
            delta.path_changes.push(PathChange { src, dst, old, new });
        }
    }

    let slots = prev.attachments.len().max(next.attachments.len());
    for g in 0..slots {
        let a = prev.attachments.get(g).copied().flatten();
        let b = next.attachments.get(g).copied().flatten();
        if a != b {
            delta.attachment_changes.push(AttachmentChange {
                ground: g as u32,
                attachment: b,
            });
        }
    }
    Ok(delta)
}

/// Folds one delta into a snapshot.
pub fn apply_delta(state: &mut TopologySnapshot, delta: &LinkDelta) -> Result<(), BackstageError> {
    let fail = |reason: String| BackstageError::Replay {
        tick: delta.tick,
        reason,
    };
    for e in &delta.removed {
        if !state.connectivity.edges.remove(e) {
            return Err(fail(format!("removing absent link {}-{}", e.0, e.1)));
        }
        state.latency.values.remove(e);
        state.capacity.values.remove(e);
    }
    for c in &delta.added {
        if !state.connectivity.edges.insert(c.edge) {
            return Err(fail(format!("adding present link {}-{}", c.edge.0, c.edge.1)));
        }
        state.latency.values.insert(c.edge, c.latency_ms);
        state.capacity.values.insert(c.edge, c.capacity_mbps);
    }
    for c in &delta.modified {
        if !state.connectivity.edges.contains(&c.edge) {
            return Err(fail(format!("modifying absent link {}-{}", c.edge.0, c.edge.1)));
        }
        state.latency.values.insert(c.edge, c.latency_ms);
        state.capacity.values.insert(c.edge, c.capacity_mbps);
    }
    for r in &delta.routing_changes {
        match r.next_hop {
            Some(n) => {
                state.routing.entries.entry(r.node).or_default().insert(r.destination, n);
            }
            None => {
                if let Some(m) = state.routing.entries.get_mut(&r.node) {
                    m.remove(&r.destination);
                    if m.is_empty() {
                        state.routing.entries.remove(&r.node);
                    }
                }
            }
        }
    }
    for p in &delta.path_changes {
        state.routing.paths.insert((p.src, p.dst), p.new.clone());
    }
    for a in &delta.attachment_changes {
        let g = a.ground as usize;
        if g >= state.attachments.len() {
            state.attachments.resize(g + 1, None);
        }
        state.attachments[g] = a.attachment;
    }
    state.tick = delta.tick;
    state.t_ms = delta.t_ms;
    state.connectivity.t_ms = delta.t_ms;
    state.routing.t_ms = delta.t_ms;
    Ok(())
}

/// Nodes and links that any flow path ever touches, plus flow endpoints.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RelevanceMask {
    pub nodes: BTreeSet<u32>,
    pub links: BTreeSet<EdgeKey>,
}

impl RelevanceMask {
    pub fn add_path(&mut self, path: &[u32]) {
        self.nodes.extend(path.iter().copied());
        for w in path.windows(2) {
            self.links.insert(EdgeKey::new(w[0], w[1]));
        }
    }

    pub fn accumulate(&mut self, routing: &RoutingTable) {
        for (&(src, dst), path) in &routing.paths {
            self.nodes.insert(src);
            self.nodes.insert(dst);
            self.add_path(path);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.links.is_empty()
    }
}

/// Union of flow endpoints and every path in the given routing tables.
pub fn relevant_subset<'a>(
    tables: impl IntoIterator<Item = &'a RoutingTable>,
    endpoints: &[(u32, u32)],
) -> RelevanceMask {
    let mut mask = RelevanceMask::default();
    for &(a, b) in endpoints {
        mask.nodes.insert(a);
        mask.nodes.insert(b);
    }
    for t in tables {
        mask.accumulate(t);
    }
    mask
}

/// Satellite elements in orbit-major order with their grouping.
pub fn load_constellation(config: &ScenarioConfig) -> Result<(ConstellationGeometry, Vec<OrbitalElements>), BackstageError> {
    let elements = if let Some(w) = &config.satellites.walker {
        generate_walker(
            w.orbits,
            w.sats_per_orbit,
            w.altitude_km,
            w.inclination_deg,
            w.phasing,
            config.simulation.start,
        )?
    } else {
        let path = config.satellites.tle_file.as_ref().expect("validated source");
        let text = std::fs::read_to_string(path).map_err(|source| BackstageError::TleFile {
            path: path.display().to_string(),
            source,
        })?;
        parse_tle(&text)?
    };
    let geometry = group_orbits(&elements)?;
    let by_id: BTreeMap<u32, &OrbitalElements> = elements.iter().map(|e| (e.satellite_id, e)).collect();
    let ordered = geometry.satellite_order().iter().map(|id| by_id[id].clone()).collect();
    Ok((geometry, ordered))
}

/// Everything needed to compute any tick from scratch.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub geometry: ConstellationGeometry,
    pub elements: Vec<OrbitalElements>,
    pub index: NodeIndex,
    /// Distinct (src, dst) node pairs of the configured flows.
    pub pairs: Vec<(u32, u32)>,
    /// ISL count of the pattern before feasibility filtering.
    pub isl_total: u32,
}

impl Scenario {
    pub fn new(config: &ScenarioConfig) -> Result<Self, BackstageError> {
        config.validate()?;
        let (geometry, elements) = load_constellation(config)?;
        let index = NodeIndex::new(
            geometry.satellite_order(),
            config.ground_segments.iter().map(|g| g.id.clone()).collect(),
        );
        let pairs: BTreeSet<(u32, u32)> = config
            .applications
            .flows
            .iter()
            .map(|f| {
                (
                    index.ground_node(&f.src).expect("validated endpoint"),
                    index.ground_node(&f.dst).expect("validated endpoint"),
                )
            })
            .collect();
        let isl_total = nominal_isl_edges(&geometry, config.constellation.isl_pattern, config.constellation.cross_orbit_offset)
            .map_err(|source| BackstageError::Topology { tick: 0, source })?
            .len() as u32;
        Ok(Self {
            config: config.clone(),
            geometry,
            elements,
            index,
            pairs: pairs.into_iter().collect(),
            isl_total,
        })
    }

    /// Direct computation of one tick given the previous attachments.
    /// Returns the snapshot and any weather warnings.
    pub fn compute_tick(
        &self,
        tick: u64,
        prior: &AttachmentState,
        propagator: &dyn Propagator,
        weather: &dyn WeatherProvider,
    ) -> Result<(TopologySnapshot, Vec<String>), BackstageError> {
        let cfg = &self.config;
        let t = cfg.tick_time(tick);
        let t_ms = cfg.tick_offset_ms(tick);
        let states = propagate_all(propagator, &self.elements, t);
        let (connectivity, attachments) = build_connectivity(
            t_ms,
            &self.geometry,
            &states,
            &self.index,
            &cfg.ground_segments,
            &cfg.topology_settings(),
            prior,
        )
        .map_err(|source| BackstageError::Topology { tick, source })?;
        let links = characterize(&connectivity, &states, &self.index, &cfg.ground_segments, &cfg.rf, weather, t);
        let graph = build_graph(&links.latency, &links.capacity, self.index.num_nodes(), cfg.applications.routing_metric);
        let routing = route_tick(&graph, &self.pairs, t_ms, cfg.simulation.all_pairs_routing)
            .map_err(|source| BackstageError::Routing { tick, source })?;
        Ok((
            TopologySnapshot {
                tick,
                t_ms,
                connectivity,
                latency: links.latency,
                capacity: links.capacity,
                routing,
                attachments,
            },
            links.warnings,
        ))
    }

    /// Direct snapshots for every tick, in order.
    pub fn direct_snapshots(
        &self,
        propagator: &dyn Propagator,
        weather: &dyn WeatherProvider,
    ) -> Result<Vec<TopologySnapshot>, BackstageError> {
        let mut prior = vec![None; self.config.ground_segments.len()];
        let mut out = Vec::new();
        for tick in 0..self.config.num_ticks() {
            let (snap, _) = self.compute_tick(tick, &prior, propagator, weather)?;
            prior = snap.attachments.clone();
            out.push(snap);
        }
        Ok(out)
    }
}

/// Precompute with Keplerian propagation and the configured weather source.
pub fn precompute(config: &ScenarioConfig) -> Result<ScenarioBundle, BackstageError> {
    let weather = provider_from_config(&config.weather)?;
    precompute_with(config, &Keplerian, weather.as_ref())
}

pub fn precompute_with(
    config: &ScenarioConfig,
    propagator: &dyn Propagator,
    weather: &dyn WeatherProvider,
) -> Result<ScenarioBundle, BackstageError> {
    let scenario = Scenario::new(config)?;
    let sim = &config.simulation;
    let n_ticks = config.num_ticks();
    let mut mask = relevant_subset([], &scenario.pairs);
    let mut prior: AttachmentState = vec![None; config.ground_segments.len()];
    let mut initial = None;
    let mut initial_warnings = Vec::new();
    let mut published: Option<TopologySnapshot> = None;
    let mut deltas = Vec::with_capacity(n_ticks.saturating_sub(1) as usize);
    let report_every = (n_ticks / 20).max(1);

    for tick in 0..n_ticks {
        let (snap, warnings) = scenario.compute_tick(tick, &prior, propagator, weather)?;
        prior = snap.attachments.clone();
        mask.accumulate(&snap.routing);
        match published.as_mut() {
            None => {
                initial_warnings = warnings;
                initial = Some(snap.clone());
                published = Some(snap);
            }
            Some(state) => {
                // diff against what playback will hold, so sub-threshold
                // drift accumulates instead of being lost
                let mut delta = diff_snapshots(state, &snap, sim.eps_latency_ms, sim.eps_capacity_mbps)?;
                delta.warnings = warnings;
                apply_delta(state, &delta)?;
                deltas.push(delta);
            }
        }
        if tick % report_every == 0 || tick + 1 == n_ticks {
            log::info!("precompute: tick {}/{}", tick + 1, n_ticks);
        }
    }

    if sim.relevance_filter {
        deltas = deltas.iter().map(|d| d.restricted(&mask)).collect();
    }
    Ok(ScenarioBundle {
        header: BundleHeader {
            config: config.clone(),
            index: scenario.index,
            isl_total: scenario.isl_total,
            relevance_filtered: sim.relevance_filter,
            mask,
            initial_warnings,
        },
        initial: initial.expect("validated config has at least one tick"),
        deltas,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::config::parse_scenario;
    use crate::geometry::{propagate, SatelliteState};
    use crate::link_model::ClearSky;
    use chrono::{DateTime, Utc};

    pub(crate) fn small_config(duration_s: u32, flows: &str) -> ScenarioConfig {
        parse_scenario(&format!(
            "
schema_version: 1
constellation: {{ name: t, isl_pattern: grid, max_isl_range_km: 4000, min_elevation_deg: 10 }}
satellites: {{ walker: {{ orbits: 16, sats_per_orbit: 12, altitude_km: 550, inclination_deg: 53, phasing: 1 }} }}
ground_segments:
  - {{ id: a, role: terminal, lat_deg: 40.0, lon_deg: -3.0 }}
  - {{ id: b, role: gateway, lat_deg: 48.0, lon_deg: 12.0 }}
  - {{ id: c, role: terminal, lat_deg: 35.0, lon_deg: 20.0 }}
simulation: {{ start: 2024-01-01T00:00:00Z, duration_s: {duration_s}, eps_latency_ms: 0, eps_capacity_mbps: 0 }}
applications:
  flows: {flows}
"
        ))
        .unwrap()
    }

    const ONE_FLOW: &str = "[{ id: f1, src: a, dst: b }]";

    pub(crate) struct Frozen;
    impl Propagator for Frozen {
        fn propagate(&self, el: &OrbitalElements, _: DateTime<Utc>) -> SatelliteState {
            propagate(el, el.epoch)
        }
    }

    #[test]
    fn tick_count() {
        let b = precompute_with(&small_config(10, ONE_FLOW), &Keplerian, &ClearSky).unwrap();
        assert_eq!(b.initial.tick, 0);
        assert_eq!(b.deltas.len(), 9);
        for (i, d) in b.deltas.iter().enumerate() {
            assert_eq!(d.t_ms, (i as u64 + 1) * 1000);
        }
    }

    #[test]
    fn frozen_time_gives_empty_deltas() {
        let b = precompute_with(&small_config(3, ONE_FLOW), &Frozen, &ClearSky).unwrap();
        assert_eq!(b.deltas.len(), 2);
        assert!(b.deltas.iter().all(LinkDelta::is_empty));
    }

    #[test]
    fn identical_snapshots_diff_empty() {
        let sc = Scenario::new(&small_config(2, ONE_FLOW)).unwrap();
        let (s, _) = sc.compute_tick(0, &vec![None; 3], &Keplerian, &ClearSky).unwrap();
        assert!(diff_snapshots(&s, &s, 0.01, 1.0).unwrap().is_empty());
    }

    #[test]
    fn handover_is_one_removed_one_added() {
        let sc = Scenario::new(&small_config(2, "[]")).unwrap();
        let (prev, _) = sc.compute_tick(0, &vec![None; 3], &Keplerian, &ClearSky).unwrap();
        let mut next = prev.clone();
        let g = sc.index.ground_node("a").unwrap();
        let old_sat = prev.attachments[0].unwrap().satellite;
        let new_sat = (0..sc.index.num_satellites() as u32).find(|&s| s != old_sat).unwrap();
        let old = EdgeKey::new(old_sat, g);
        let new = EdgeKey::new(new_sat, g);
        next.connectivity.edges.remove(&old);
        next.connectivity.edges.insert(new);
        let (lat, cap) = (prev.latency.values[&old], prev.capacity.values[&old]);
        next.latency.values.remove(&old);
        next.capacity.values.remove(&old);
        next.latency.values.insert(new, lat);
        next.capacity.values.insert(new, cap);
        let d = diff_snapshots(&prev, &next, 0.01, 1.0).unwrap();
        assert_eq!(d.removed, vec![old]);
        assert_eq!(d.added.len(), 1);
        assert_eq!(d.added[0].edge, new);
        assert!(d.modified.is_empty());
    }

    #[test]
    fn small_drift_below_threshold_not_modified() {
        let sc = Scenario::new(&small_config(2, ONE_FLOW)).unwrap();
        let (prev, _) = sc.compute_tick(0, &vec![None; 3], &Keplerian, &ClearSky).unwrap();
        let mut next = prev.clone();
        let e = *next.latency.values.keys().next().unwrap();
        *next.latency.values.get_mut(&e).unwrap() += 0.001;
        assert!(diff_snapshots(&prev, &next, 0.01, 1.0).unwrap().modified.is_empty());
        assert_eq!(diff_snapshots(&prev, &next, 0.0, 0.0).unwrap().modified.len(), 1);
    }

    #[test]
    fn dimension_mismatch() {
        let sc = Scenario::new(&small_config(2, ONE_FLOW)).unwrap();
        let (prev, _) = sc.compute_tick(0, &vec![None; 3], &Keplerian, &ClearSky).unwrap();
        let mut other = prev.clone();
        other.connectivity.n += 1;
        assert!(matches!(diff_snapshots(&prev, &other, 0.0, 0.0), Err(BackstageError::Dimension(..))));
    }

    fn table_with(paths: &[((u32, u32), Vec<u32>)]) -> RoutingTable {
        RoutingTable {
            paths: paths.iter().cloned().collect(),
            ..Default::default()
        }
    }

    #[test]
    fn relevance_examples() {
        assert!(relevant_subset([], &[]).is_empty());
        let t = table_with(&[((0, 4), vec![0, 1, 2, 3, 4])]);
        let m = relevant_subset([&t, &t], &[(0, 4)]);
        assert_eq!(m.nodes.len(), 5);
        assert_eq!(m.links.len(), 4);
        let u = table_with(&[((0, 4), vec![0, 7, 4])]);
        let m = relevant_subset([&t, &u], &[(0, 4)]);
        assert!(m.nodes.contains(&7) && m.nodes.contains(&2));
        assert!(m.links.contains(&EdgeKey::new(7, 4)) && m.links.contains(&EdgeKey::new(1, 2)));
    }

    #[test]
    fn fold_matches_direct_globally_without_relevance() {
        let mut cfg = small_config(20, ONE_FLOW);
        cfg.simulation.relevance_filter = false;
        let b = precompute_with(&cfg, &Keplerian, &ClearSky).unwrap();
        let direct = Scenario::new(&cfg).unwrap().direct_snapshots(&Keplerian, &ClearSky).unwrap();
        let mut state = b.initial.clone();
        assert_eq!(state, direct[0]);
        for (d, want) in b.deltas.iter().zip(&direct[1..]) {
            apply_delta(&mut state, d).unwrap();
            assert_eq!(&state, want);
        }
    }

    #[test]
    fn fold_matches_direct_on_relevant_subset() {
        let cfg = small_config(20, "[{ id: f1, src: a, dst: b }, { id: f2, src: c, dst: a }]");
        let b = precompute_with(&cfg, &Keplerian, &ClearSky).unwrap();
        let mask = &b.header.mask;
        assert!(!mask.links.is_empty());
        let direct = Scenario::new(&cfg).unwrap().direct_snapshots(&Keplerian, &ClearSky).unwrap();
        let mut state = b.initial.clone();
        for (d, want) in b.deltas.iter().zip(&direct[1..]) {
            apply_delta(&mut state, d).unwrap();
            assert_eq!(state.restricted(mask), want.restricted(mask));
        }
    }

    #[test]
    fn thresholds_do_not_lose_slow_drift() {
        let mut cfg = small_config(30, ONE_FLOW);
        cfg.simulation.relevance_filter = false;
        cfg.simulation.eps_latency_ms = 0.05;
        cfg.simulation.eps_capacity_mbps = 5.0;
        let b = precompute_with(&cfg, &Keplerian, &ClearSky).unwrap();
        let direct = Scenario::new(&cfg).unwrap().direct_snapshots(&Keplerian, &ClearSky).unwrap();
        let mut state = b.initial.clone();
        for (d, want) in b.deltas.iter().zip(&direct[1..]) {
            apply_delta(&mut state, d).unwrap();
            assert_eq!(state.connectivity, want.connectivity);
            assert_eq!(state.routing, want.routing);
            for (e, v) in &want.latency.values {
                assert!((state.latency.values[e] - v).abs() <= 0.05);
            }
            for (e, v) in &want.capacity.values {
                assert!((state.capacity.values[e] - v).abs() <= 5.0);
            }
        }
    }

    #[test]
    fn apply_rejects_inconsistent_delta() {
        let sc = Scenario::new(&small_config(2, ONE_FLOW)).unwrap();
        let (mut s, _) = sc.compute_tick(0, &vec![None; 3], &Keplerian, &ClearSky).unwrap();
        let bogus = LinkDelta {
            tick: 1,
            removed: vec![EdgeKey::new(0, 9999)],
            ..Default::default()
        };
        assert!(matches!(apply_delta(&mut s, &bogus), Err(BackstageError::Replay { tick: 1, .. })));
    }

    #[test]
    fn precompute_is_deterministic() {
        let cfg = small_config(5, ONE_FLOW);
        let a = precompute_with(&cfg, &Keplerian, &ClearSky).unwrap();
        let b = precompute_with(&cfg, &Keplerian, &ClearSky).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }
}
