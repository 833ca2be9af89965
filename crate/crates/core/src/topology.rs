//! Topology diagnostics: dangling nodes, over/undershoots, missing
//! intersection nodes, connected components, component gaps and cell
//! reachability.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::{point_polyline_distance, segment_intersection, segment_segment_distance, Coord, SegmentIntersection};
use crate::graph::NetworkGraph;
use crate::grid::{AnalysisGrid, CellMetrics};
use crate::index::segment_rect;

pub const DEFAULT_OVERSHOOT_LENGTH: f64 = 3.0;
pub const DEFAULT_UNDERSHOOT_DISTANCE: f64 = 3.0;
pub const DEFAULT_COMPONENT_GAP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyFlagKind {
    DanglingNode,
    Overshoot,
    Undershoot,
    MissingIntersectionNode,
    ComponentGap,
}

impl TopologyFlagKind {
    pub const ALL: [TopologyFlagKind; 5] = [
        TopologyFlagKind::DanglingNode,
        TopologyFlagKind::Overshoot,
        TopologyFlagKind::Undershoot,
        TopologyFlagKind::MissingIntersectionNode,
        TopologyFlagKind::ComponentGap,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TopologyFlagKind::DanglingNode => "dangling_node",
            TopologyFlagKind::Overshoot => "overshoot",
            TopologyFlagKind::Undershoot => "undershoot",
            TopologyFlagKind::MissingIntersectionNode => "missing_intersection_node",
            TopologyFlagKind::ComponentGap => "component_gap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FlagGeometry {
    Point(Coord),
    Line(Vec<Coord>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyFlag {
    pub kind: TopologyFlagKind,
    pub geometry: FlagGeometry,
    pub node_ids: Vec<usize>,
    pub edge_ids: Vec<usize>,
    pub distance: Option<f64>,
}

/// Nodes of degree one, with per-cell counts.
pub fn dangling_nodes(graph: &NetworkGraph, grid: &AnalysisGrid) -> (Vec<TopologyFlag>, Vec<CellMetrics>) {
    let ids = graph.dangling_nodes();
    let cells = grid.node_cells(graph);
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &n in &ids {
        if let Some(c) = cells[n] {
            *counts.entry(c).or_default() += 1;
        }
    }
    let area = grid.cell_area_km2();
    let metrics = grid
        .cells
        .iter()
        .map(|c| {
            let n = counts.get(&c.cell_id).copied().unwrap_or(0) as f64;
            CellMetrics::new(c.cell_id)
                .with("dangling_node_count", n)
                .with("dangling_node_density_per_km2", n / area)
        })
        .collect();
    let flags = ids
        .into_iter()
        .map(|n| TopologyFlag {
            kind: TopologyFlagKind::DanglingNode,
            geometry: FlagGeometry::Point(graph.nodes[n].position),
            node_ids: vec![n],
            edge_ids: Vec::new(),
            distance: None,
        })
        .collect();
    (flags, metrics)
}

/// Edges with a dangling endpoint and length at most `max_length` (inclusive).
pub fn overshoots(graph: &NetworkGraph, max_length: f64) -> Vec<TopologyFlag> {
    graph
        .edges
        .iter()
        .filter(|e| e.geometric_length <= max_length)
        .filter_map(|e| {
            let mut dangling: Vec<usize> = [e.u, e.v]
                .into_iter()
                .filter(|&n| graph.nodes[n].degree == 1)
                .collect();
            dangling.dedup();
            (!dangling.is_empty()).then(|| TopologyFlag {
                kind: TopologyFlagKind::Overshoot,
                geometry: FlagGeometry::Line(e.geometry.clone()),
                node_ids: dangling,
                edge_ids: vec![e.edge_id],
                distance: Some(e.geometric_length),
            })
        })
        .collect()
}

/// Dangling nodes lying within `max_distance` of an edge they do not
/// connect to. Edges incident to the node or to its neighbours are never
/// candidates. One flag per node, for the nearest edge (lowest id on ties).
pub fn undershoots(graph: &NetworkGraph, max_distance: f64) -> Vec<TopologyFlag> {
    let inc = graph.incidence();
    let index = graph.edge_index();
    graph
        .dangling_nodes()
        .par_iter()
        .filter_map(|&n| {
            let p = graph.nodes[n].position;
            let mut excluded: BTreeSet<usize> = BTreeSet::new();
            for &e in &inc[n] {
                excluded.insert(e);
                let other = graph.edges[e].other_end(n);
                excluded.extend(inc[other].iter().copied());
            }
            let query = crate::geom::Rect::new(p, p).expand(max_distance);
            let mut best: Option<(f64, usize, Coord)> = None;
            for e in index.items_in(&query) {
                if excluded.contains(&e) {
                    continue;
                }
                let (d, closest) = point_polyline_distance(&p, &graph.edges[e].geometry);
                if d > 0.0 && d <= max_distance && best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, e, closest));
                }
            }
            best.map(|(d, e, closest)| TopologyFlag {
                kind: TopologyFlagKind::Undershoot,
                geometry: FlagGeometry::Line(vec![p, closest]),
                node_ids: vec![n],
                edge_ids: vec![e],
                distance: Some(d),
            })
        })
        .collect()
}

fn is_geometry_end(p: &Coord, line: &[Coord]) -> bool {
    p.distance(&line[0]) <= 1e-9 || p.distance(line.last().unwrap()) <= 1e-9
}

/// Points where two edges cross in the interior of both geometries without
/// sharing an endpoint node, unless either edge is a bridge or tunnel.
pub fn missing_intersection_nodes(graph: &NetworkGraph) -> Vec<TopologyFlag> {
    let index = graph.edge_index();
    let edges = &graph.edges;
    let mut flags: Vec<TopologyFlag> = edges
        .par_iter()
        .filter(|a| !a.attrs.grade_separated)
        .flat_map_iter(|a| {
            let mut hits: BTreeMap<usize, Vec<Coord>> = BTreeMap::new();
            for (s, w) in a.geometry.windows(2).enumerate() {
                for (j, t) in index.segments_in(&segment_rect(&a.geometry, s)) {
                    if j <= a.edge_id {
                        continue;
                    }
                    let b = &edges[j];
                    if b.attrs.grade_separated
                        || a.u == b.u
                        || a.u == b.v
                        || a.v == b.u
                        || a.v == b.v
                    {
                        continue;
                    }
                    if let Some(SegmentIntersection::Point { at, .. }) =
                        segment_intersection(&w[0], &w[1], &b.geometry[t], &b.geometry[t + 1])
                    {
                        if is_geometry_end(&at, &a.geometry) || is_geometry_end(&at, &b.geometry) {
                            continue;
                        }
                        let pts = hits.entry(j).or_default();
                        if !pts.iter().any(|q| q.distance(&at) <= 1e-9) {
                            pts.push(at);
                        }
                    }
                }
            }
            let a_id = a.edge_id;
            hits.into_iter().flat_map(move |(j, pts)| {
                pts.into_iter().map(move |at| TopologyFlag {
                    kind: TopologyFlagKind::MissingIntersectionNode,
                    geometry: FlagGeometry::Point(at),
                    node_ids: Vec::new(),
                    edge_ids: vec![a_id, j],
                    distance: None,
                })
            })
        })
        .collect();
    flags.sort_by(|x, y| x.edge_ids.cmp(&y.edge_ids));
    flags
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub component_id: usize,
    pub node_ids: Vec<usize>,
    pub edge_ids: Vec<usize>,
    /// Total infrastructure length, m.
    pub length: f64,
}

/// Connected components sorted by descending length (ties by id).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentSet {
    pub components: Vec<Component>,
    /// Component id of every node.
    pub node_component: Vec<usize>,
    /// Component id of every edge.
    pub edge_component: Vec<usize>,
}

impl ComponentSet {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn largest(&self) -> Option<&Component> {
        self.components.first()
    }
}

/// Component ids follow the lowest node id of each component.
pub fn components(graph: &NetworkGraph) -> ComponentSet {
    let n = graph.nodes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in &graph.edges {
        let (a, b) = (find(&mut parent, e.u), find(&mut parent, e.v));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut id_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut node_component = Vec::with_capacity(n);
    for v in 0..n {
        let r = find(&mut parent, v);
        let next = id_of_root.len();
        node_component.push(*id_of_root.entry(r).or_insert(next));
    }
    let mut comps: Vec<Component> = (0..id_of_root.len())
        .map(|component_id| Component {
            component_id,
            node_ids: Vec::new(),
            edge_ids: Vec::new(),
            length: 0.0,
        })
        .collect();
    for (v, &c) in node_component.iter().enumerate() {
        comps[c].node_ids.push(v);
    }
    let edge_component: Vec<usize> = graph.edges.iter().map(|e| node_component[e.u]).collect();
    for (e, &c) in graph.edges.iter().zip(&edge_component) {
        comps[c].edge_ids.push(e.edge_id);
        comps[c].length += e.infrastructure_length;
    }
    comps.sort_by(|a, b| b.length.total_cmp(&a.length).then(a.component_id.cmp(&b.component_id)));
    ComponentSet {
        components: comps,
        node_component,
        edge_component,
    }
}

/// `(rank, length)` pairs, rank starting at 1.
pub fn zipf_series(components: &ComponentSet) -> Vec<(usize, f64)> {
    components
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| (i + 1, c.length))
        .collect()
}

/// Pairs of edges from different components whose geometries come within
/// `max_distance`, with the shortest connecting line.
pub fn component_gaps(graph: &NetworkGraph, comps: &ComponentSet, max_distance: f64) -> Vec<TopologyFlag> {
    let index = graph.edge_index();
    let edges = &graph.edges;
    graph
        .edges
        .par_iter()
        .flat_map_iter(|a| {
            let ca = comps.edge_component[a.edge_id];
            let mut best: BTreeMap<usize, (f64, Coord, Coord)> = BTreeMap::new();
            for (s, w) in a.geometry.windows(2).enumerate() {
                let query = segment_rect(&a.geometry, s).expand(max_distance);
                for (j, t) in index.segments_in(&query) {
                    if j <= a.edge_id || comps.edge_component[j] == ca {
                        continue;
                    }
                    let b = &edges[j].geometry;
                    let r = segment_segment_distance(&w[0], &w[1], &b[t], &b[t + 1]);
                    if r.0 <= max_distance && best.get(&j).is_none_or(|cur| r.0 < cur.0) {
                        best.insert(j, r);
                    }
                }
            }
            let a_id = a.edge_id;
            best.into_iter().map(move |(j, (d, pa, pb))| TopologyFlag {
                kind: TopologyFlagKind::ComponentGap,
                geometry: if d > 0.0 {
                    FlagGeometry::Line(vec![pa, pb])
                } else {
                    FlagGeometry::Point(pa)
                },
                node_ids: Vec::new(),
                edge_ids: vec![a_id, j],
                distance: Some(d),
            })
        })
        .collect()
}

/// For each cell containing network edges, the set of cells reachable
/// through any component present in it (itself included).
pub fn reachable_cells(
    graph: &NetworkGraph,
    comps: &ComponentSet,
    grid: &AnalysisGrid,
) -> BTreeMap<usize, BTreeSet<usize>> {
    let per_edge = grid.edge_cell_lengths(graph);
    let mut comp_cells: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut cell_comps: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (e, cells) in graph.edges.iter().zip(&per_edge) {
        let c = comps.edge_component[e.edge_id];
        for (&cell, &len) in cells {
            if len > 0.0 {
                comp_cells.entry(c).or_default().insert(cell);
                cell_comps.entry(cell).or_default().insert(c);
            }
        }
    }
    cell_comps
        .into_iter()
        .map(|(cell, cs)| {
            let reach = cs
                .iter()
                .flat_map(|c| comp_cells[c].iter().copied())
                .collect();
            (cell, reach)
        })
        .collect()
}

/// Percentage of nonempty cells reachable from each nonempty cell.
pub fn cell_reachability(graph: &NetworkGraph, comps: &ComponentSet, grid: &AnalysisGrid) -> Vec<CellMetrics> {
    let reach = reachable_cells(graph, comps, grid);
    let total = reach.len() as f64;
    reach
        .into_iter()
        .map(|(cell, r)| {
            CellMetrics::new(cell)
                .with("reachable_cells", r.len() as f64)
                .with("reachable_pct", r.len() as f64 / total * 100.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Polygon;
    use crate::graph::test_support::graph;
    use crate::graph::{build_graph, simplify, BreakingAttribute, DatasetRole, GraphParams};
    use crate::grid::make_grid;
    use crate::ingest::StudyArea;
    use crate::runlog::RunLog;

    fn simple(lines: &[&[(f64, f64)]]) -> NetworkGraph {
        simplify(&graph(lines), &BreakingAttribute::defaults())
    }

    fn grid(w: f64, h: f64, cell: f64) -> AnalysisGrid {
        let area = StudyArea::new(
            Polygon::new(vec![
                Coord::new(0., 0.),
                Coord::new(w, 0.),
                Coord::new(w, h),
                Coord::new(0., h),
            ]),
            "t",
            "meter",
        )
        .unwrap();
        make_grid(&area, cell, &RunLog::new()).unwrap()
    }

    #[test]
    fn dangling_census() {
        let g = simple(&[&[(0., 0.), (10., 0.)]]);
        assert_eq!(dangling_nodes(&g, &grid(100., 100., 100.)).0.len(), 2);
        let tri = simple(&[&[(0., 0.), (10., 0.)], &[(10., 0.), (5., 8.)], &[(5., 8.), (0., 0.)]]);
        assert_eq!(dangling_nodes(&tri, &grid(100., 100., 100.)).0.len(), 0);
        let y = simple(&[&[(50., 50.), (50., 60.)], &[(50., 50.), (40., 40.)], &[(50., 50.), (60., 40.)]]);
        let (flags, metrics) = dangling_nodes(&y, &grid(100., 100., 100.));
        assert_eq!(flags.len(), 3);
        assert_eq!(metrics[0].get("dangling_node_count"), Some(3.0));
    }

    fn cross_with_stub(stub: f64) -> NetworkGraph {
        // Long through street, side street, and a stub past the junction.
        simple(&[
            &[(0., 0.), (100., 0.)],
            &[(100., 0.), (200., 0.)],
            &[(100., 0.), (100., 80.)],
            &[(100., 0.), (100., -stub)],
        ])
    }

    #[test]
    fn overshoot_threshold() {
        assert_eq!(overshoots(&cross_with_stub(2.0), 3.0).len(), 1);
        assert_eq!(overshoots(&cross_with_stub(3.0), 3.0).len(), 1);
        assert_eq!(overshoots(&cross_with_stub(50.0), 3.0).len(), 0);
        let f = &overshoots(&cross_with_stub(2.0), 3.0)[0];
        assert_eq!(f.distance, Some(2.0));
    }

    #[test]
    fn undershoot_to_perpendicular_edge() {
        // Side street ends 2 m short of the through street.
        let g = simple(&[&[(0., 0.), (100., 0.)], &[(50., 2.), (50., 60.)], &[(50., 60.), (0., 60.)], &[(50., 60.), (100., 60.)]]);
        let flags = undershoots(&g, 3.0);
        assert_eq!(flags.len(), 1);
        assert!((flags[0].distance.unwrap() - 2.0).abs() < 1e-12);
        let g = simple(&[&[(0., 0.), (100., 0.)], &[(50., 5.), (50., 60.)], &[(50., 60.), (0., 60.)], &[(50., 60.), (100., 60.)]]);
        assert!(undershoots(&g, 3.0).is_empty());
    }

    #[test]
    fn undershoot_ignores_own_street() {
        // A dead end with a sharp bend: its own edge passes near the node.
        let g = simple(&[&[(0., 0.), (50., 0.), (50., 2.), (1., 2.)]]);
        assert!(undershoots(&g, 3.0).is_empty());
        // Overshoot stub next to the corner: neighbouring edges are excluded.
        assert!(undershoots(&cross_with_stub(2.0), 3.0).is_empty());
    }

    #[test]
    fn missing_intersection() {
        let g = simple(&[&[(0., 5.), (10., 5.)], &[(5., 0.), (5., 10.)]]);
        let flags = missing_intersection_nodes(&g);
        assert_eq!(flags.len(), 1);
        assert_eq!(flags[0].geometry, FlagGeometry::Point(Coord::new(5., 5.)));

        let mut recs = graph(&[&[(0., 5.), (10., 5.)], &[(5., 0.), (5., 10.)]]).to_records();
        recs[1].grade_separated = true;
        let g = build_graph(DatasetRole::Osm, &recs, &GraphParams::default());
        assert!(missing_intersection_nodes(&g).is_empty());

        let g = simple(&[&[(0., 5.), (5., 5.)], &[(5., 5.), (10., 5.)], &[(5., 5.), (5., 10.)]]);
        assert!(missing_intersection_nodes(&g).is_empty());
    }

    #[test]
    fn component_counts_and_order() {
        let tri = simple(&[&[(0., 0.), (10., 0.)], &[(10., 0.), (5., 8.)], &[(5., 8.), (0., 0.)]]);
        assert_eq!(components(&tri).len(), 1);
        let two = simple(&[&[(0., 0.), (10., 0.)], &[(20., 0.), (30., 0.)]]);
        assert_eq!(components(&two).len(), 2);
        let three = simple(&[&[(0., 0.), (5., 0.)], &[(10., 0.), (19., 0.)], &[(30., 0.), (32., 0.)]]);
        let cs = components(&three);
        let lengths: Vec<f64> = cs.components.iter().map(|c| c.length).collect();
        assert_eq!(lengths, vec![9.0, 5.0, 2.0]);
        assert_eq!(zipf_series(&cs), vec![(1, 9.0), (2, 5.0), (3, 2.0)]);
    }

    #[test]
    fn zipf_ties_ordered_by_component_id() {
        let g = simple(&[&[(0., 0.), (5., 0.)], &[(10., 0.), (15., 0.)], &[(20., 0.), (29., 0.)]]);
        let cs = components(&g);
        let ids: Vec<usize> = cs.components.iter().map(|c| c.component_id).collect();
        assert_eq!(ids, vec![2, 0, 1]);
        assert_eq!(zipf_series(&cs), vec![(1, 9.0), (2, 5.0), (3, 5.0)]);
        assert!(zipf_series(&ComponentSet::default()).is_empty());
    }

    #[test]
    fn component_gap_threshold() {
        let g = simple(&[&[(0., 0.), (20., 0.)], &[(0., 4.), (20., 4.)]]);
        let cs = components(&g);
        let flags = component_gaps(&g, &cs, 5.0);
        assert_eq!(flags.len(), 1);
        assert_eq!(flags[0].distance, Some(4.0));
        assert!(component_gaps(&g, &cs, 3.0).is_empty());
        let same = simple(&[&[(0., 0.), (20., 0.)], &[(0., 4.), (20., 4.)], &[(20., 0.), (20., 4.)]]);
        assert!(component_gaps(&same, &components(&same), 5.0).is_empty());
    }

    #[test]
    fn reachability_percentages() {
        let gr = grid(200., 200., 100.);
        let one = simple(&[&[(50., 50.), (150., 50.)], &[(150., 50.), (150., 150.)], &[(150., 150.), (50., 150.)]]);
        let m = cell_reachability(&one, &components(&one), &gr);
        assert_eq!(m.len(), 4);
        assert!(m.iter().all(|c| c.get("reachable_pct") == Some(100.0)));

        let two = simple(&[&[(10., 10.), (60., 10.)], &[(110., 10.), (160., 10.)]]);
        let m = cell_reachability(&two, &components(&two), &gr);
        assert_eq!(m.len(), 2);
        assert!(m.iter().all(|c| c.get("reachable_pct") == Some(50.0)));
        assert!(m.iter().all(|c| c.cell_id < 2));
    }
}
