//! Weighted graphs over link matrices, tie-broken shortest paths,
//! next-hop tables and `ip route` command export.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::link_model::LinkMatrix;

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("inconsistent next hop at node {node} for destination {destination}: {first} vs {second}")]
    Inconsistent {
        node: u32,
        destination: u32,
        first: u32,
        second: u32,
    },
    #[error("cannot write route commands to {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteMetric {
    #[default]
    Latency,
    InverseCapacity,
    HopCount,
}

/// Undirected weighted graph; adjacency lists sorted by neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adj: Vec<Vec<(u32, f64)>>,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Self { adj: vec![Vec::new(); n] }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u32, u32, f64)>) -> Self {
        let mut g = Self::new(n);
        for (a, b, w) in edges {
            g.adj[a as usize].push((b, w));
            g.adj[b as usize].push((a, w));
        }
        for list in &mut g.adj {
            list.sort_by(|x, y| x.0.cmp(&y.0));
        }
        g
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, node: u32) -> &[(u32, f64)] {
        &self.adj[node as usize]
    }

    pub fn weight(&self, a: u32, b: u32) -> Option<f64> {
        self.adj[a as usize].iter().find(|(v, _)| *v == b).map(|(_, w)| *w)
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Edge weights per metric over the latency matrix's support.
pub fn build_graph(latency: &LinkMatrix, capacity: &LinkMatrix, n: usize, metric: RouteMetric) -> Graph {
    let edges = latency.values.iter().filter_map(|(e, &lat)| {
        let w = match metric {
            RouteMetric::Latency => lat,
            RouteMetric::HopCount => 1.0,
            RouteMetric::InverseCapacity => {
                let cap = capacity.values.get(e).copied().unwrap_or(0.0);
                if cap <= 0.0 {
                    return None;
                }
                1.0 / cap
            }
        };
        Some((e.0, e.1, w))
    });
    Graph::from_edges(n, edges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<u32>,
    pub cost: f64,
}

impl Path {
    pub fn hops(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }
}

#[derive(PartialEq)]
struct Entry(f64, u32);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Distances to `target` from every node plus the settling parent (the
/// neighbor through which the distance was first achieved).
fn dijkstra_to(graph: &Graph, target: u32) -> (Vec<f64>, Vec<Option<u32>>) {
    let n = graph.num_nodes();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[target as usize] = 0.0;
    heap.push(Entry(0.0, target));
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u as usize] {
            continue;
        }
        for &(v, w) in graph.neighbors(u) {
            let nd = w + d;
            if nd < dist[v as usize] {
                dist[v as usize] = nd;
                parent[v as usize] = Some(u);
                heap.push(Entry(nd, v));
            }
        }
    }
    (dist, parent)
}

/// Shortest-path oracle for one destination: distances and the
/// deterministic next hop of every node.
pub struct DestinationTree {
    pub destination: u32,
    pub dist: Vec<f64>,
    parent: Vec<Option<u32>>,
}

impl DestinationTree {
    pub fn new(graph: &Graph, destination: u32) -> Self {
        let (dist, parent) = dijkstra_to(graph, destination);
        Self {
            destination,
            dist,
            parent,
        }
    }

    /// Smallest-index neighbor that lies on some shortest path.
    pub fn next_hop(&self, graph: &Graph, node: u32) -> Option<u32> {
        if node == self.destination || !self.dist[node as usize].is_finite() {
            return None;
        }
        let du = self.dist[node as usize];
        graph
            .neighbors(node)
            .iter()
            .find(|&&(v, w)| w + self.dist[v as usize] == du && self.dist[v as usize] < du)
            .map(|&(v, _)| v)
            .or(self.parent[node as usize])
    }

    pub fn path_from(&self, graph: &Graph, src: u32) -> Option<Path> {
        if !self.dist[src as usize].is_finite() {
            return None;
        }
        let mut nodes = vec![src];
        let mut cost = 0.0;
        let mut u = src;
        while u != self.destination {
            let v = self.next_hop(graph, u)?;
            cost += graph.weight(u, v).unwrap_or(0.0);
            nodes.push(v);
            u = v;
            if nodes.len() > graph.num_nodes() {
                return None;
            }
        }
        Some(Path { nodes, cost })
    }
}

/// Minimal-cost path per pair; among equal-cost paths the one whose node
/// sequence is lexicographically smallest. `None` when unreachable.
pub fn shortest_paths(graph: &Graph, pairs: &[(u32, u32)]) -> Vec<Option<Path>> {
    let mut trees: BTreeMap<u32, DestinationTree> = BTreeMap::new();
    pairs
        .iter()
        .map(|&(src, dst)| {
            let tree = trees.entry(dst).or_insert_with(|| DestinationTree::new(graph, dst));
            tree.path_from(graph, src)
        })
        .collect()
}

/// Next hops per node plus the cached path of every routed pair.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoutingTable {
    pub t_ms: u64,
    /// node → destination → next hop
    pub entries: BTreeMap<u32, BTreeMap<u32, u32>>,
    /// (src, dst) → node sequence; empty when unreachable
    pub paths: BTreeMap<(u32, u32), Vec<u32>>,
}

impl RoutingTable {
    pub fn next_hop(&self, node: u32, destination: u32) -> Option<u32> {
        self.entries.get(&node).and_then(|m| m.get(&destination)).copied()
    }

    pub fn num_entries(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    /// Follows next hops from `src`; `None` on a missing entry or loop.
    pub fn walk(&self, src: u32, dst: u32) -> Option<Vec<u32>> {
        let mut out = vec![src];
        let mut u = src;
        while u != dst {
            u = self.next_hop(u, dst)?;
            if out.contains(&u) {
                return None;
            }
            out.push(u);
        }
        Some(out)
    }
}

/// Unrolls pair paths into next-hop entries for the nodes on them.
pub fn build_routing_tables(paths: &[((u32, u32), Option<Path>)], t_ms: u64) -> Result<RoutingTable, RoutingError> {
    let mut table = RoutingTable {
        t_ms,
        ..Default::default()
    };
    for ((src, dst), path) in paths {
        let nodes = path.as_ref().map(|p| p.nodes.clone()).unwrap_or_default();
        for w in nodes.windows(2) {
            let slot = table.entries.entry(w[0]).or_default();
            match slot.insert(*dst, w[1]) {
                Some(prev) if prev != w[1] => {
                    return Err(RoutingError::Inconsistent {
                        node: w[0],
                        destination: *dst,
                        first: prev,
                        second: w[1],
                    })
                }
                _ => {}
            }
        }
        table.paths.insert((*src, *dst), nodes);
    }
    Ok(table)
}

/// Routes for the given pairs, optionally with full next-hop tables toward
/// every node.
pub fn route_tick(graph: &Graph, pairs: &[(u32, u32)], t_ms: u64, all_pairs: bool) -> Result<RoutingTable, RoutingError> {
    let paths = shortest_paths(graph, pairs);
    let zipped: Vec<_> = pairs.iter().copied().zip(paths).collect();
    let mut table = build_routing_tables(&zipped, t_ms)?;
    if all_pairs {
        for dst in 0..graph.num_nodes() as u32 {
            let tree = DestinationTree::new(graph, dst);
            for u in 0..graph.num_nodes() as u32 {
                if let Some(next) = tree.next_hop(graph, u) {
                    let prev = table.entries.entry(u).or_default().insert(dst, next);
                    if let Some(p) = prev.filter(|&p| p != next) {
                        return Err(RoutingError::Inconsistent {
                            node: u,
                            destination: dst,
                            first: p,
                            second: next,
                        });
                    }
                }
            }
        }
    }
    Ok(table)
}

fn address(node: u32) -> String {
    format!("10.{}.{}.1", node / 256, node % 256)
}

/// Writes `routes_<unix_millis>.cmd` into `out_dir`, one `ip route` line per
/// table entry sorted by (node, destination).
pub fn export_route_commands(table: &RoutingTable, unix_millis: i64, out_dir: &FsPath) -> Result<PathBuf, RoutingError> {
    let path = out_dir.join(format!("routes_{unix_millis}.cmd"));
    let io_err = |source| RoutingError::Io {
        path: path.clone(),
        source,
    };
    let mut buf = Vec::new();
    for (u, dests) in &table.entries {
        for (d, n) in dests {
            writeln!(buf, "ip route replace {}/32 via {} # node {u}", address(*d), address(*n)).map_err(io_err)?;
        }
    }
    std::fs::write(&path, buf).map_err(io_err)?;
    Ok(path)
}
