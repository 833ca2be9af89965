//! Undirected spatial multigraph of bicycle infrastructure.

mod simplify;

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::geom::{dedup_consecutive, polyline_length, Coord};
use crate::index::SegmentIndex;
use crate::ingest::rules::{AnyOf, Tags};
use crate::ingest::{EdgeRecord, MappingMethod, Protection};

pub use simplify::{simplify, BreakingAttribute};

pub const DEFAULT_SNAP_TOLERANCE: f64 = 0.001;

/// Which input a network was built from. Only OSM networks carry raw tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetRole {
    Osm,
    Reference,
}

impl DatasetRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetRole::Osm => "osm",
            DatasetRole::Reference => "reference",
        }
    }
}

impl std::fmt::Display for DatasetRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeAttributes {
    pub protection: Protection,
    pub bidirectional: bool,
    pub mapping_method: MappingMethod,
    pub grade_separated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub node_id: usize,
    pub position: Coord,
    pub degree: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub edge_id: usize,
    /// Node at the start of `geometry`.
    pub u: usize,
    /// Node at the end of `geometry`.
    pub v: usize,
    /// Distinguishes parallel edges between the same node pair.
    pub key: usize,
    pub geometry: Vec<Coord>,
    pub attrs: EdgeAttributes,
    /// Infrastructure multiplier, 1 or 2.
    pub multiplier: u8,
    pub geometric_length: f64,
    pub infrastructure_length: f64,
    pub source_ids: Vec<String>,
    /// One tag map per constituent input feature.
    pub tags: Vec<Tags>,
}

impl GraphEdge {
    pub fn is_self_loop(&self) -> bool {
        self.u == self.v
    }

    pub fn other_end(&self, node: usize) -> usize {
        if self.u == node {
            self.v
        } else {
            self.u
        }
    }
}

/// Multiplier applied to geometric length: 2 for bidirectional
/// infrastructure and for centerline geometries standing for both street
/// sides, otherwise 1. The two cases do not stack.
pub fn length_multiplier(bidirectional: bool, mapping: MappingMethod, both_sides: bool) -> u8 {
    if bidirectional || (mapping == MappingMethod::Centerline && both_sides) {
        2
    } else {
        1
    }
}

pub fn infrastructure_length(edge: &GraphEdge) -> f64 {
    edge.geometric_length * f64::from(edge.multiplier)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub snap_tolerance: f64,
    /// Tags marking a centerline edge as infrastructure on both sides.
    pub centerline_both_sides: AnyOf,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            snap_tolerance: DEFAULT_SNAP_TOLERANCE,
            centerline_both_sides: crate::ingest::rules::default_centerline_both_sides(),
        }
    }
}

pub struct NetworkGraph {
    pub role: DatasetRole,
    pub nodes: Vec<Node>,
    pub edges: Vec<GraphEdge>,
    pub simplified: bool,
    index: OnceLock<SegmentIndex>,
}

impl Clone for NetworkGraph {
    fn clone(&self) -> Self {
        NetworkGraph::from_parts(self.role, self.nodes.clone(), self.edges.clone(), self.simplified)
    }
}

impl std::fmt::Debug for NetworkGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NetworkGraph")
            .field("role", &self.role)
            .field("nodes", &self.nodes.len())
            .field("edges", &self.edges.len())
            .field("simplified", &self.simplified)
            .finish()
    }
}

impl NetworkGraph {
    pub fn from_parts(role: DatasetRole, nodes: Vec<Node>, edges: Vec<GraphEdge>, simplified: bool) -> Self {
        NetworkGraph {
            role,
            nodes,
            edges,
            simplified,
            index: OnceLock::new(),
        }
    }

    pub fn empty(role: DatasetRole) -> Self {
        Self::from_parts(role, Vec::new(), Vec::new(), false)
    }

    /// Segment index over edge geometries, built on first use. Entries carry
    /// `(edge_id, segment index)`.
    pub fn edge_index(&self) -> &SegmentIndex {
        self.index
            .get_or_init(|| SegmentIndex::build(self.edges.iter().map(|e| e.geometry.as_slice())))
    }

    /// Incident `(edge_id)` list per node; self-loops appear twice.
    pub fn incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            inc[e.u].push(e.edge_id);
            inc[e.v].push(e.edge_id);
        }
        inc
    }

    pub fn total_geometric_length(&self) -> f64 {
        self.edges.iter().map(|e| e.geometric_length).sum()
    }

    pub fn total_infrastructure_length(&self) -> f64 {
        self.edges.iter().map(|e| e.infrastructure_length).sum()
    }

    pub fn dangling_nodes(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.degree == 1)
            .map(|n| n.node_id)
            .collect()
    }

    /// Converts edges back into records, e.g. to rebuild the graph.
    pub fn to_records(&self) -> Vec<EdgeRecord> {
        self.edges
            .iter()
            .map(|e| EdgeRecord {
                edge_id: e.edge_id,
                source_id: e.source_ids.first().cloned().unwrap_or_default(),
                geometry: e.geometry.clone(),
                protection: e.attrs.protection,
                bidirectional: e.attrs.bidirectional,
                mapping_method: e.attrs.mapping_method,
                grade_separated: e.attrs.grade_separated,
                tags: e.tags.first().cloned().unwrap_or_default(),
            })
            .collect()
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Keeps the smaller root so cluster representatives are the first-seen member.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

pub(crate) fn assign_keys(edges: &mut [GraphEdge]) {
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    for e in edges.iter_mut() {
        let pair = (e.u.min(e.v), e.u.max(e.v));
        let k = seen.entry(pair).or_insert(0);
        e.key = *k;
        *k += 1;
    }
}

pub(crate) fn degrees(node_count: usize, edges: &[GraphEdge]) -> Vec<usize> {
    let mut deg = vec![0; node_count];
    for e in edges {
        deg[e.u] += 1;
        deg[e.v] += 1;
    }
    deg
}

/// Builds the graph by merging polyline endpoints closer than
/// `snap_tolerance`. Interior crossings are left un-noded.
pub fn build_graph(role: DatasetRole, records: &[EdgeRecord], params: &GraphParams) -> NetworkGraph {
    let tol = params.snap_tolerance;
    assert!(tol > 0.0, "snap tolerance must be positive");

    let endpoints: Vec<Coord> = records
        .iter()
        .flat_map(|r| [r.geometry[0], *r.geometry.last().unwrap()])
        .collect();

    // Hash endpoints into tolerance-sized buckets; candidates are in the 3x3 neighbourhood.
    let bucket = |c: &Coord| ((c.x / tol).floor() as i64, (c.y / tol).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, c) in endpoints.iter().enumerate() {
        buckets.entry(bucket(c)).or_default().push(i);
    }
    let mut uf = UnionFind::new(endpoints.len());
    for (i, c) in endpoints.iter().enumerate() {
        let (bx, by) = bucket(c);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = buckets.get(&(bx + dx, by + dy)) {
                    for &j in list {
                        if j > i && c.distance(&endpoints[j]) <= tol {
                            uf.union(i, j);
                        }
                    }
                }
            }
        }
    }

    let mut node_of_root: HashMap<usize, usize> = HashMap::new();
    let mut positions: Vec<Coord> = Vec::new();
    let mut endpoint_node = Vec::with_capacity(endpoints.len());
    for i in 0..endpoints.len() {
        let root = uf.find(i);
        let id = *node_of_root.entry(root).or_insert_with(|| {
            positions.push(endpoints[root]);
            positions.len() - 1
        });
        endpoint_node.push(id);
    }

    let mut edges = Vec::with_capacity(records.len());
    let mut used = vec![false; positions.len()];
    for (i, r) in records.iter().enumerate() {
        let (u, v) = (endpoint_node[2 * i], endpoint_node[2 * i + 1]);
        let mut geometry = r.geometry.clone();
        geometry[0] = positions[u];
        *geometry.last_mut().unwrap() = positions[v];
        dedup_consecutive(&mut geometry);
        let length = polyline_length(&geometry);
        if geometry.len() < 2 || length <= 0.0 {
            continue;
        }
        used[u] = true;
        used[v] = true;
        let both_sides = params.centerline_both_sides.matches(&r.tags);
        let multiplier = length_multiplier(r.bidirectional, r.mapping_method, both_sides);
        edges.push(GraphEdge {
            edge_id: edges.len(),
            u,
            v,
            key: 0,
            geometry,
            attrs: EdgeAttributes {
                protection: r.protection,
                bidirectional: r.bidirectional,
                mapping_method: r.mapping_method,
                grade_separated: r.grade_separated,
            },
            multiplier,
            geometric_length: length,
            infrastructure_length: length * f64::from(multiplier),
            source_ids: vec![r.source_id.clone()],
            tags: vec![r.tags.clone()],
        });
    }

    // Nodes whose only edges collapsed are dropped and ids compacted.
    let mut remap = vec![usize::MAX; positions.len()];
    let mut kept = Vec::new();
    for (old, p) in positions.iter().enumerate() {
        if used[old] {
            remap[old] = kept.len();
            kept.push(*p);
        }
    }
    for e in &mut edges {
        e.u = remap[e.u];
        e.v = remap[e.v];
    }
    assign_keys(&mut edges);
    let deg = degrees(kept.len(), &edges);
    let nodes = kept
        .into_iter()
        .enumerate()
        .map(|(node_id, position)| Node {
            node_id,
            position,
            degree: deg[node_id],
        })
        .collect();
    NetworkGraph::from_parts(role, nodes, edges, false)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub node_count: usize,
    pub edge_count: usize,
    pub total_geometric_length: f64,
    pub total_infrastructure_length: f64,
    pub edges_by_protection: BTreeMap<Protection, usize>,
    pub infrastructure_length_by_protection: BTreeMap<Protection, f64>,
    pub dangling_node_count: usize,
}

pub fn graph_summary(graph: &NetworkGraph) -> GraphSummary {
    let mut s = GraphSummary {
        node_count: graph.nodes.len(),
        edge_count: graph.edges.len(),
        total_geometric_length: graph.total_geometric_length(),
        total_infrastructure_length: graph.total_infrastructure_length(),
        dangling_node_count: graph.nodes.iter().filter(|n| n.degree == 1).count(),
        ..Default::default()
    };
    for e in &graph.edges {
        *s.edges_by_protection.entry(e.attrs.protection).or_default() += 1;
        *s.infrastructure_length_by_protection
            .entry(e.attrs.protection)
            .or_default() += e.infrastructure_length;
    }
    s
}
