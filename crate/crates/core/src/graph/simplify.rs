use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::{assign_keys, degrees, GraphEdge, NetworkGraph, Node};

/// Edge attribute whose change keeps an otherwise removable degree-2 node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakingAttribute {
    Protection,
    Bidirectional,
    MappingMethod,
    GradeSeparated,
}

impl BreakingAttribute {
    pub fn defaults() -> Vec<BreakingAttribute> {
        vec![
            BreakingAttribute::Protection,
            BreakingAttribute::Bidirectional,
            BreakingAttribute::MappingMethod,
        ]
    }

    fn agree(&self, a: &GraphEdge, b: &GraphEdge) -> bool {
        match self {
            BreakingAttribute::Protection => a.attrs.protection == b.attrs.protection,
            BreakingAttribute::Bidirectional => a.attrs.bidirectional == b.attrs.bidirectional,
            BreakingAttribute::MappingMethod => a.attrs.mapping_method == b.attrs.mapping_method,
            BreakingAttribute::GradeSeparated => a.attrs.grade_separated == b.attrs.grade_separated,
        }
    }
}

impl FromStr for BreakingAttribute {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "protection" => Ok(BreakingAttribute::Protection),
            "bidirectional" => Ok(BreakingAttribute::Bidirectional),
            "mapping_method" => Ok(BreakingAttribute::MappingMethod),
            "grade_separated" => Ok(BreakingAttribute::GradeSeparated),
            other => Err(format!("unknown breaking attribute '{other}'")),
        }
    }
}

/// Edges may merge only if they agree on every breaking attribute. The
/// length multiplier and grade separation always break a chain, so merged
/// edges keep a single multiplier and a single bridge/tunnel status.
pub(crate) fn mergeable(a: &GraphEdge, b: &GraphEdge, breaking: &[BreakingAttribute]) -> bool {
    a.multiplier == b.multiplier
        && a.attrs.grade_separated == b.attrs.grade_separated
        && breaking.iter().all(|attr| attr.agree(a, b))
}

/// Merges maximal chains through interstitial degree-2 nodes. Nodes stay
/// at intersections, dead ends and wherever a breaking attribute changes.
/// Isolated cycles collapse to a self-loop on the lower-id endpoint of
/// their lowest-id edge.
pub fn simplify(graph: &NetworkGraph, breaking: &[BreakingAttribute]) -> NetworkGraph {
    let inc = graph.incidence();
    let edges = &graph.edges;

    let is_endpoint = |n: usize| -> bool {
        match inc[n].as_slice() {
            [a, b] => a == b || !mergeable(&edges[*a], &edges[*b], breaking),
            _ => true,
        }
    };
    let endpoint: Vec<bool> = (0..graph.nodes.len()).map(is_endpoint).collect();

    let mut visited = vec![false; edges.len()];
    let mut chains: Vec<(usize, Vec<(usize, bool)>, usize)> = Vec::new();

    // Walks from `start` along `first`, returning the traversed edges with
    // orientation (true if traversed u -> v) and the terminal node.
    let walk = |start: usize, first: usize, visited: &mut Vec<bool>| {
        let mut chain = Vec::new();
        let mut node = start;
        let mut edge = first;
        loop {
            visited[edge] = true;
            let e = &edges[edge];
            let forward = e.u == node;
            chain.push((edge, forward));
            node = if forward { e.v } else { e.u };
            if endpoint[node] || node == start {
                break;
            }
            match inc[node].iter().find(|&&x| x != edge) {
                Some(&next) if !visited[next] => edge = next,
                _ => break,
            }
        }
        (chain, node)
    };

    for n in 0..graph.nodes.len() {
        if !endpoint[n] {
            continue;
        }
        for &e in &inc[n] {
            if visited[e] {
                continue;
            }
            let (chain, end) = walk(n, e, &mut visited);
            chains.push((n, chain, end));
        }
    }
    // What remains are cycles made only of interstitial nodes.
    for e in 0..edges.len() {
        if visited[e] {
            continue;
        }
        let start = edges[e].u.min(edges[e].v);
        let first = inc[start]
            .iter()
            .copied()
            .find(|&x| !visited[x])
            .expect("unvisited edge at cycle node");
        let (chain, end) = walk(start, first, &mut visited);
        chains.push((start, chain, end));
    }

    let mut keep = endpoint.clone();
    for (start, _, end) in &chains {
        keep[*start] = true;
        keep[*end] = true;
    }
    let mut remap = vec![usize::MAX; graph.nodes.len()];
    let mut positions = Vec::new();
    for (old, node) in graph.nodes.iter().enumerate() {
        if keep[old] {
            remap[old] = positions.len();
            positions.push(node.position);
        }
    }

    let mut merged: Vec<GraphEdge> = chains
        .into_iter()
        .map(|(start, chain, end)| merge_chain(edges, start, &chain, end))
        .collect();
    for (i, e) in merged.iter_mut().enumerate() {
        e.edge_id = i;
        e.u = remap[e.u];
        e.v = remap[e.v];
    }
    assign_keys(&mut merged);
    let deg = degrees(positions.len(), &merged);
    let nodes = positions
        .into_iter()
        .enumerate()
        .map(|(node_id, position)| Node {
            node_id,
            position,
            degree: deg[node_id],
        })
        .collect();
    NetworkGraph::from_parts(graph.role, nodes, merged, true)
}

fn merge_chain(edges: &[GraphEdge], start: usize, chain: &[(usize, bool)], end: usize) -> GraphEdge {
    let first = &edges[chain[0].0];
    let mut geometry = Vec::new();
    let mut geometric_length = 0.0;
    let mut infrastructure_length = 0.0;
    let mut source_ids = Vec::new();
    let mut tags = Vec::new();
    for &(id, forward) in chain {
        let e = &edges[id];
        let mut pts = e.geometry.clone();
        if !forward {
            pts.reverse();
        }
        if geometry.is_empty() {
            geometry = pts;
        } else {
            geometry.extend_from_slice(&pts[1..]);
        }
        geometric_length += e.geometric_length;
        infrastructure_length += e.infrastructure_length;
        source_ids.extend(e.source_ids.iter().cloned());
        tags.extend(e.tags.iter().cloned());
    }
    GraphEdge {
        edge_id: 0,
        u: start,
        v: end,
        key: 0,
        geometry,
        attrs: first.attrs,
        multiplier: first.multiplier,
        geometric_length,
        infrastructure_length,
        source_ids,
        tags,
    }
}
