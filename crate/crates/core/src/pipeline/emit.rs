//! Files written by each stage.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use serde_json::{json, Value};

use super::{Area, GridSignature, InputInfo, IntrinsicAnalysis};
use crate::compare::{largest_component_edges, CellValueDelta, ComparisonResult, DeltaStats, MetricDelta, Presence};
use crate::config::RunConfig;
use crate::error::Result;
use crate::graph::{DatasetRole, GraphSummary, NetworkGraph};
use crate::grid::{AnalysisGrid, CellMetrics, METRIC_INFRA_DENSITY};
use crate::ingest::Protection;
use crate::matching::{Agreement, EdgeMatchSummary, MatchParams, MatchResult, MatchStatus, Segment, SegmentMatch, UnmatchedEdge};
use crate::report::geojson::{collection, feature, flag_geometry, line_string, point, props, rect_polygon};
use crate::report::html::{render_html, Figure, Section, Table};
use crate::report::json::fmt_f64;
use crate::report::svg::{render_svg_map, render_zipf_svg, LayerData, MapLayer};
use crate::report::{csv, num, OutputDir};
use crate::runlog::RunLog;
use crate::tags::{coverage_metric, TagFlag};
use crate::topology::{TopologyFlag, TopologyFlagKind};

#[derive(Serialize)]
struct ToolInfo {
    name: &'static str,
    version: &'static str,
}

const TOOL: ToolInfo = ToolInfo {
    name: env!("CARGO_PKG_NAME"),
    version: env!("CARGO_PKG_VERSION"),
};

fn fmt(v: f64) -> String {
    fmt_f64(v).unwrap_or_default()
}

fn role_title(role: DatasetRole) -> &'static str {
    match role {
        DatasetRole::Osm => "OSM",
        DatasetRole::Reference => "reference",
    }
}

// ---------------------------------------------------------------- intrinsic

#[derive(Serialize)]
struct Parameters<'a> {
    snap_tolerance_m: f64,
    overshoot_m: f64,
    undershoot_m: f64,
    component_gap_m: f64,
    breaking_attributes: &'a [crate::graph::BreakingAttribute],
    cell_size_m: f64,
    density_area: crate::grid::DensityArea,
}

#[derive(Serialize)]
struct NetworkSection<'a> {
    input_features: usize,
    edges_in_study_area: usize,
    raw: &'a GraphSummary,
    simplified: &'a GraphSummary,
}

#[derive(Serialize)]
struct DensitySection {
    study_area_km2: f64,
    infrastructure_density_m_per_km2: f64,
    node_density_per_km2: f64,
}

#[derive(Serialize)]
struct TopologySection {
    dangling_nodes: usize,
    overshoots: usize,
    undershoots: usize,
    missing_intersection_nodes: usize,
    component_gaps: usize,
    component_count: usize,
    largest_component_length_m: f64,
}

#[derive(Serialize)]
struct TagsSection<'a> {
    coverage_pct: &'a BTreeMap<String, f64>,
    missing_tag_flags: usize,
    contradiction_flags: usize,
    pattern_keys: &'a [String],
    cells_with_patterns: usize,
}

#[derive(Serialize)]
struct IntrinsicSummary<'a> {
    tool: ToolInfo,
    role: DatasetRole,
    config_sha256: String,
    inputs: BTreeMap<&'static str, &'a InputInfo>,
    parameters: Parameters<'a>,
    grid: GridSignature,
    network: NetworkSection<'a>,
    density: DensitySection,
    topology: TopologySection,
    tags: Option<TagsSection<'a>>,
    comparison_metrics: &'a BTreeMap<String, f64>,
}

fn intrinsic_summary<'a>(cfg: &'a RunConfig, area: &'a Area, a: &'a IntrinsicAnalysis) -> IntrinsicSummary<'a> {
    let km2 = area.area.boundary.area() / 1e6;
    IntrinsicSummary {
        tool: TOOL,
        role: a.role,
        config_sha256: cfg.digest(),
        inputs: BTreeMap::from([("study_area", &area.info), ("data", &a.input)]),
        parameters: Parameters {
            snap_tolerance_m: cfg.thresholds.snap_tolerance,
            overshoot_m: cfg.thresholds.overshoot,
            undershoot_m: cfg.thresholds.undershoot,
            component_gap_m: cfg.thresholds.component_gap,
            breaking_attributes: &cfg.thresholds.breaking_attributes,
            cell_size_m: cfg.grid.cell_size,
            density_area: cfg.grid.density_area,
        },
        grid: GridSignature::of(&area.grid),
        network: NetworkSection {
            input_features: a.feature_count,
            edges_in_study_area: a.record_count,
            raw: &a.raw_summary,
            simplified: &a.summary,
        },
        density: DensitySection {
            study_area_km2: km2,
            infrastructure_density_m_per_km2: a.summary.total_infrastructure_length / km2,
            node_density_per_km2: a.summary.node_count as f64 / km2,
        },
        topology: TopologySection {
            dangling_nodes: a.dangling.len(),
            overshoots: a.overshoots.len(),
            undershoots: a.undershoots.len(),
            missing_intersection_nodes: a.missing_intersections.len(),
            component_gaps: a.component_gaps.len(),
            component_count: a.components.len(),
            largest_component_length_m: a.components.largest().map_or(0.0, |c| c.length),
        },
        tags: a.tags.as_ref().map(|t| TagsSection {
            coverage_pct: &t.global_coverage,
            missing_tag_flags: t.missing.len(),
            contradiction_flags: t.contradictions.len(),
            pattern_keys: &cfg.tags.analysis.pattern_keys,
            cells_with_patterns: t.patterns.len(),
        }),
        comparison_metrics: &a.bundle.global,
    }
}

fn edges_geojson(graph: &NetworkGraph, component_of: &[usize]) -> Value {
    let features = graph
        .edges
        .iter()
        .map(|e| {
            feature(
                line_string(&e.geometry),
                props([
                    ("edge_id", json!(e.edge_id)),
                    ("u", json!(e.u)),
                    ("v", json!(e.v)),
                    ("key", json!(e.key)),
                    ("protection", json!(e.attrs.protection)),
                    ("bidirectional", json!(e.attrs.bidirectional)),
                    ("mapping_method", json!(e.attrs.mapping_method)),
                    ("grade_separated", json!(e.attrs.grade_separated)),
                    ("multiplier", json!(e.multiplier)),
                    ("geometric_length_m", json!(e.geometric_length)),
                    ("infrastructure_length_m", json!(e.infrastructure_length)),
                    ("component_id", json!(component_of[e.edge_id])),
                    ("source_ids", json!(e.source_ids.join(";"))),
                ]),
            )
        })
        .collect();
    collection(features)
}

fn nodes_geojson(graph: &NetworkGraph, component_of: &[usize]) -> Value {
    let features = graph
        .nodes
        .iter()
        .map(|n| {
            feature(
                point(&n.position),
                props([
                    ("node_id", json!(n.node_id)),
                    ("degree", json!(n.degree)),
                    ("component_id", json!(component_of[n.node_id])),
                ]),
            )
        })
        .collect();
    collection(features)
}

fn topology_flags_geojson(flags: &[TopologyFlag]) -> Value {
    collection(
        flags
            .iter()
            .map(|f| {
                feature(
                    flag_geometry(&f.geometry),
                    props([
                        ("kind", json!(f.kind.as_str())),
                        ("node_ids", json!(f.node_ids)),
                        ("edge_ids", json!(f.edge_ids)),
                        ("distance_m", json!(f.distance)),
                    ]),
                )
            })
            .collect(),
    )
}

fn tag_flags_geojson(graph: &NetworkGraph, flags: &[TagFlag]) -> Value {
    collection(
        flags
            .iter()
            .map(|f| {
                feature(
                    line_string(&graph.edges[f.edge_id].geometry),
                    props([
                        ("edge_id", json!(f.edge_id)),
                        ("kind", json!(f.kind)),
                        ("keys", json!(f.detail)),
                        ("rule_index", json!(f.rule_index)),
                    ]),
                )
            })
            .collect(),
    )
}

/// Grid cells with the union of all metric names; absent values are null.
fn grid_geojson(grid: &AnalysisGrid, layers: &[&[CellMetrics]], extra: &BTreeMap<usize, Vec<(String, Value)>>) -> Value {
    let mut names: BTreeSet<&str> = BTreeSet::new();
    let mut by_cell: BTreeMap<usize, BTreeMap<&str, f64>> = BTreeMap::new();
    for layer in layers {
        for m in layer.iter() {
            for (k, &v) in &m.values {
                names.insert(k);
                by_cell.entry(m.cell_id).or_default().insert(k, v);
            }
        }
    }
    let features = grid
        .cells
        .iter()
        .map(|c| {
            let mut p = props([
                ("cell_id", json!(c.cell_id)),
                ("row", json!(c.row)),
                ("col", json!(c.col)),
                ("clipped_area_m2", json!(c.clipped_area)),
            ]);
            let values = by_cell.get(&c.cell_id);
            for &n in &names {
                p.insert(n.to_string(), json!(values.and_then(|v| v.get(n))));
            }
            if let Some(extra) = extra.get(&c.cell_id) {
                for (k, v) in extra {
                    p.insert(k.clone(), v.clone());
                }
            }
            feature(rect_polygon(&c.bounds), p)
        })
        .collect();
    collection(features)
}

fn cell_layer(grid: &AnalysisGrid, name: &str, metrics: &[CellMetrics], metric: &str) -> MapLayer {
    let values: BTreeMap<usize, f64> = metrics
        .iter()
        .filter_map(|m| m.get(metric).map(|v| (m.cell_id, v)))
        .collect();
    MapLayer::new(
        name,
        LayerData::Cells(grid.cells.iter().map(|c| (c.bounds, values.get(&c.cell_id).copied())).collect()),
    )
}

fn lines_of(graph: &NetworkGraph, edge_ids: impl IntoIterator<Item = usize>) -> Vec<Vec<crate::geom::Coord>> {
    edge_ids.into_iter().map(|e| graph.edges[e].geometry.clone()).collect()
}

fn network_layer(graph: &NetworkGraph, name: &str) -> MapLayer {
    MapLayer::new(name, LayerData::Lines(lines_of(graph, 0..graph.edges.len())))
}

fn flag_layer(name: &str, flags: &[TopologyFlag]) -> MapLayer {
    let points: Vec<_> = flags
        .iter()
        .filter_map(|f| match &f.geometry {
            crate::topology::FlagGeometry::Point(p) => Some(*p),
            _ => None,
        })
        .collect();
    let lines: Vec<_> = flags
        .iter()
        .filter_map(|f| match &f.geometry {
            crate::topology::FlagGeometry::Line(l) => Some(l.clone()),
            _ => None,
        })
        .collect();
    if lines.is_empty() {
        MapLayer::new(name, LayerData::Points(points))
    } else {
        MapLayer::new(name, LayerData::Lines(lines))
    }
}

fn file_stem(key: &str) -> String {
    key.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

/// `(file name, caption, svg)` for every intrinsic plot.
fn intrinsic_plots(grid: &AnalysisGrid, a: &IntrinsicAnalysis) -> Result<Vec<(String, String, String)>> {
    let g = &a.graph;
    let who = role_title(a.role);
    let mut plots = Vec::new();
    let mut map = |file: &str, caption: String, layers: Vec<MapLayer>| -> Result<()> {
        let svg = render_svg_map(&caption, &layers)?;
        plots.push((format!("{file}.svg"), caption, svg));
        Ok(())
    };

    let by_protection = |p: Protection| {
        LayerData::Lines(lines_of(g, g.edges.iter().filter(|e| e.attrs.protection == p).map(|e| e.edge_id)))
    };
    map(
        "network",
        format!("{who} network by protection level"),
        vec![
            MapLayer::new("protected", by_protection(Protection::Protected)),
            MapLayer::new("unprotected", by_protection(Protection::Unprotected)),
        ],
    )?;
    map(
        "density",
        format!("{who} infrastructure density per cell (m/km2)"),
        vec![cell_layer(grid, "infrastructure density (m/km2)", &a.density, METRIC_INFRA_DENSITY)],
    )?;
    map(
        "dangling_nodes",
        format!("{who} dangling nodes per cell"),
        vec![
            cell_layer(grid, "dangling nodes per km2", &a.dangling_cells, "dangling_node_density_per_km2"),
            flag_layer("dangling nodes", &a.dangling),
        ],
    )?;
    map(
        "topology",
        format!("{who} topology flags"),
        vec![
            network_layer(g, "network"),
            flag_layer("overshoots", &a.overshoots),
            flag_layer("undershoots", &a.undershoots),
            flag_layer("missing intersection nodes", &a.missing_intersections),
            flag_layer("component gaps", &a.component_gaps),
        ],
    )?;
    let largest: Vec<usize> = a.components.largest().map(|c| c.edge_ids.clone()).unwrap_or_default();
    let in_largest: BTreeSet<usize> = largest.iter().copied().collect();
    map(
        "components",
        format!("{who} largest component and other components"),
        vec![
            MapLayer::new("largest component", LayerData::Lines(lines_of(g, largest))),
            MapLayer::new(
                "other components",
                LayerData::Lines(lines_of(g, (0..g.edges.len()).filter(|e| !in_largest.contains(e)))),
            ),
        ],
    )?;
    map(
        "reachability",
        format!("{who} percent of cells reachable"),
        vec![cell_layer(grid, "reachable cells (%)", &a.reachability, "reachable_pct")],
    )?;
    if let Some(t) = &a.tags {
        for key in t.global_coverage.keys() {
            map(
                &format!("tag_coverage_{}", file_stem(key)),
                format!("{who} coverage of tag '{key}' (% of length)"),
                vec![cell_layer(grid, &format!("{key} coverage (%)"), &t.coverage, &coverage_metric(key))],
            )?;
        }
    }
    plots.push((
        "zipf.svg".into(),
        format!("{who} component lengths (Zipf plot)"),
        render_zipf_svg(&format!("{who} component lengths"), &[(who, &a.bundle.zipf)]),
    ));
    Ok(plots)
}

fn intrinsic_tables(a: &IntrinsicAnalysis, area_km2: f64) -> Vec<Table> {
    let s = &a.summary;
    let mut network = vec![
        ("input features".into(), a.feature_count.to_string()),
        ("edges in study area".into(), a.record_count.to_string()),
        ("nodes (simplified)".into(), s.node_count.to_string()),
        ("edges (simplified)".into(), s.edge_count.to_string()),
        ("geometric length (m)".into(), fmt(s.total_geometric_length)),
        ("infrastructure length (m)".into(), fmt(s.total_infrastructure_length)),
        (
            "infrastructure density (m/km2)".into(),
            fmt(s.total_infrastructure_length / area_km2),
        ),
    ];
    for (p, len) in &s.infrastructure_length_by_protection {
        network.push((format!("{p} infrastructure length (m)"), fmt(*len)));
    }
    let topo = vec![
        ("dangling nodes".into(), a.dangling.len().to_string()),
        ("overshoots".into(), a.overshoots.len().to_string()),
        ("undershoots".into(), a.undershoots.len().to_string()),
        ("missing intersection nodes".into(), a.missing_intersections.len().to_string()),
        ("component gaps".into(), a.component_gaps.len().to_string()),
        ("components".into(), a.components.len().to_string()),
        (
            "largest component (m)".into(),
            fmt(a.components.largest().map_or(0.0, |c| c.length)),
        ),
    ];
    let mut tables = vec![
        Table::key_values("Network", network),
        Table::key_values("Topology", topo),
    ];
    if let Some(t) = &a.tags {
        let mut rows: Vec<(String, String)> = t
            .global_coverage
            .iter()
            .map(|(k, v)| (format!("coverage of '{k}' (%)"), fmt(*v)))
            .collect();
        rows.push(("missing-tag flags".into(), t.missing.len().to_string()));
        rows.push(("contradiction flags".into(), t.contradictions.len().to_string()));
        tables.push(Table::key_values("Tags", rows));
    }
    tables
}

fn zipf_csv(series: &[(usize, f64)]) -> String {
    csv(&["rank", "length_m"], series.iter().map(|&(r, l)| vec![r.to_string(), fmt(l)]))
}

fn intrinsic_section(a: &IntrinsicAnalysis, area_km2: f64, plots: &[(String, String, String)], prefix: &str) -> Section {
    Section {
        id: format!("intrinsic-{}", a.role),
        title: format!("Intrinsic analysis: {}", role_title(a.role)),
        tables: intrinsic_tables(a, area_km2),
        figures: plots
            .iter()
            .map(|(file, caption, svg)| Figure {
                caption: caption.clone(),
                source: format!("{prefix}{file}"),
                svg: svg.clone(),
            })
            .collect(),
    }
}

pub(super) fn intrinsic(out: &mut OutputDir, cfg: &RunConfig, area: &Area, a: &IntrinsicAnalysis) -> Result<()> {
    let grid = &area.grid;
    let g = &a.graph;
    out.write_json(super::SUMMARY_FILE, &intrinsic_summary(cfg, area, a))?;

    let mut extra: BTreeMap<usize, Vec<(String, Value)>> = BTreeMap::new();
    let mut layers: Vec<&[CellMetrics]> = vec![&a.density, &a.dangling_cells, &a.reachability];
    if let Some(t) = &a.tags {
        layers.push(&t.coverage);
        for p in &t.patterns {
            extra.entry(p.cell_id).or_default().extend([
                ("dominant_pattern".to_string(), json!(p.label())),
                ("dominant_pattern_share_pct".to_string(), json!(p.share_pct)),
                ("pattern_count".to_string(), json!(p.pattern_count)),
            ]);
        }
    }
    out.write_json("grid.geojson", &grid_geojson(grid, &layers, &extra))?;
    out.write_json("network/edges.geojson", &edges_geojson(g, &a.components.edge_component))?;
    out.write_json("network/nodes.geojson", &nodes_geojson(g, &a.components.node_component))?;

    for (kind, flags) in [
        (TopologyFlagKind::DanglingNode, &a.dangling),
        (TopologyFlagKind::Overshoot, &a.overshoots),
        (TopologyFlagKind::Undershoot, &a.undershoots),
        (TopologyFlagKind::MissingIntersectionNode, &a.missing_intersections),
        (TopologyFlagKind::ComponentGap, &a.component_gaps),
    ] {
        out.write_json(&format!("flags/{}.geojson", kind.as_str()), &topology_flags_geojson(flags))?;
    }
    if let Some(t) = &a.tags {
        out.write_json("flags/missing_tag.geojson", &tag_flags_geojson(g, &t.missing))?;
        out.write_json("flags/tag_contradiction.geojson", &tag_flags_geojson(g, &t.contradictions))?;
    }

    out.write("components/zipf.csv", zipf_csv(&a.bundle.zipf).as_bytes())?;
    let comp_rows = a.components.components.iter().enumerate().map(|(i, c)| {
        vec![
            c.component_id.to_string(),
            (i + 1).to_string(),
            c.node_ids.len().to_string(),
            c.edge_ids.len().to_string(),
            fmt(c.length),
        ]
    });
    out.write(
        "components/components.csv",
        csv(&["component_id", "rank", "node_count", "edge_count", "length_m"], comp_rows).as_bytes(),
    )?;

    let plots = intrinsic_plots(grid, a)?;
    for (file, _, svg) in &plots {
        out.write(&format!("plots/{file}"), svg.as_bytes())?;
    }
    let km2 = area.area.boundary.area() / 1e6;
    let html = render_html(
        &format!("Network quality report: {}", role_title(a.role)),
        &[intrinsic_section(a, km2, &plots, "plots/")],
    );
    out.write("report.html", html.as_bytes())
}

// ---------------------------------------------------------------- compare

#[derive(Serialize)]
struct MatchStats {
    segments: usize,
    matched_segments: usize,
    segment_length_m: f64,
    matched_segment_length_m: f64,
    edges: usize,
    matched_edges: usize,
    unmatched_edges: usize,
    unmatched_near_other: usize,
    protection: BTreeMap<&'static str, usize>,
    bidirectional: BTreeMap<&'static str, usize>,
    mapping_method: BTreeMap<&'static str, usize>,
}

fn match_stats(segments: &[Segment], matches: &[SegmentMatch], edges: &[EdgeMatchSummary], unmatched: &[UnmatchedEdge]) -> MatchStats {
    let matched: Vec<&SegmentMatch> = matches.iter().filter(|m| m.target.is_some()).collect();
    let count = |f: fn(&EdgeMatchSummary) -> Agreement| {
        let mut m = BTreeMap::new();
        for a in [Agreement::Agree, Agreement::Disagree, Agreement::Unknown] {
            m.insert(
                a.as_str(),
                edges
                    .iter()
                    .filter(|e| e.status == MatchStatus::Matched && f(e) == a)
                    .count(),
            );
        }
        m
    };
    MatchStats {
        segments: segments.len(),
        matched_segments: matched.len(),
        segment_length_m: segments.iter().map(|s| s.length).sum(),
        matched_segment_length_m: matched.iter().map(|m| segments[m.source].length).sum(),
        edges: edges.len(),
        matched_edges: edges.iter().filter(|e| e.status == MatchStatus::Matched).count(),
        unmatched_edges: unmatched.len(),
        unmatched_near_other: unmatched.iter().filter(|u| u.nearest_other.is_some()).count(),
        protection: count(|e| e.attribute_agreement.protection),
        bidirectional: count(|e| e.attribute_agreement.bidirectional),
        mapping_method: count(|e| e.attribute_agreement.mapping_method),
    }
}

#[derive(Serialize)]
struct ZipfSummary {
    osm_outlier: bool,
    reference_outlier: bool,
    /// Data set whose largest component alone stands out, if any.
    flagged: Option<DatasetRole>,
    outlier_ratio: f64,
}

#[derive(Serialize)]
struct MatchingSection<'a> {
    params: &'a MatchParams,
    osm: MatchStats,
    reference: MatchStats,
}

#[derive(Serialize)]
struct CompareSummary<'a> {
    tool: ToolInfo,
    config_sha256: String,
    inputs: BTreeMap<&'static str, &'a InputInfo>,
    grid: GridSignature,
    /// Differences are OSM minus reference.
    global: &'a BTreeMap<String, MetricDelta>,
    density_delta: &'a DeltaStats,
    reachability_delta: &'a DeltaStats,
    one_sided_cells: BTreeMap<&'static str, usize>,
    zipf: ZipfSummary,
    matching: MatchingSection<'a>,
}

fn presence_str(p: Presence) -> &'static str {
    match p {
        Presence::Both => "both",
        Presence::OnlyA => "osm_only",
        Presence::OnlyB => "reference_only",
        Presence::Neither => "neither",
    }
}

fn delta_props(prefix: &str, d: &CellValueDelta) -> Vec<(String, Value)> {
    vec![
        (format!("{prefix}_osm"), json!(d.a)),
        (format!("{prefix}_reference"), json!(d.b)),
        (format!("{prefix}_delta"), json!(d.difference)),
        (format!("{prefix}_presence"), json!(presence_str(d.presence))),
    ]
}

fn segment_matches_csv(matches: &[SegmentMatch]) -> String {
    csv(
        &["source_id", "target_id", "hausdorff_m", "angle_deg"],
        matches.iter().map(|m| {
            vec![
                m.source.to_string(),
                m.target.map(|t| t.to_string()).unwrap_or_default(),
                num(m.hausdorff),
                num(m.angle),
            ]
        }),
    )
}

fn edge_matches_geojson(graph: &NetworkGraph, edges: &[EdgeMatchSummary]) -> Value {
    collection(
        edges
            .iter()
            .map(|s| {
                let a = &s.attribute_agreement;
                feature(
                    line_string(&graph.edges[s.edge_id].geometry),
                    props([
                        ("edge_id", json!(s.edge_id)),
                        ("matched_fraction", json!(s.matched_fraction)),
                        ("status", json!(s.status)),
                        ("protection_agreement", json!(a.protection)),
                        ("bidirectional_agreement", json!(a.bidirectional)),
                        ("mapping_method_agreement", json!(a.mapping_method)),
                        ("matched_edge_ids", json!(s.matched_edge_ids)),
                    ]),
                )
            })
            .collect(),
    )
}

fn unmatched_geojson(graph: &NetworkGraph, unmatched: &[UnmatchedEdge]) -> Value {
    collection(
        unmatched
            .iter()
            .map(|u| {
                feature(
                    line_string(&graph.edges[u.edge_id].geometry),
                    props([
                        ("edge_id", json!(u.edge_id)),
                        ("matched_fraction", json!(u.matched_fraction)),
                        ("near_other", json!(u.nearest_other.is_some())),
                        ("nearest_other_m", json!(u.nearest_other)),
                    ]),
                )
            })
            .collect(),
    )
}

fn disagreements_geojson(sides: &[(DatasetRole, &NetworkGraph, &[EdgeMatchSummary])]) -> Value {
    let mut features = Vec::new();
    for (role, graph, edges) in sides {
        for s in edges.iter().filter(|s| s.status == MatchStatus::Matched) {
            let a = &s.attribute_agreement;
            let attrs: Vec<&str> = [
                ("protection", a.protection),
                ("bidirectional", a.bidirectional),
                ("mapping_method", a.mapping_method),
            ]
            .into_iter()
            .filter(|(_, v)| *v == Agreement::Disagree)
            .map(|(k, _)| k)
            .collect();
            if attrs.is_empty() {
                continue;
            }
            features.push(feature(
                line_string(&graph.edges[s.edge_id].geometry),
                props([
                    ("role", json!(role)),
                    ("edge_id", json!(s.edge_id)),
                    ("attributes", json!(attrs)),
                    ("matched_edge_ids", json!(s.matched_edge_ids)),
                ]),
            ));
        }
    }
    collection(features)
}

fn largest_geojson(graph: &NetworkGraph, edge_ids: &[usize]) -> Value {
    collection(
        edge_ids
            .iter()
            .map(|&e| {
                feature(
                    line_string(&graph.edges[e].geometry),
                    props([("role", json!(graph.role)), ("edge_id", json!(e))]),
                )
            })
            .collect(),
    )
}

fn delta_layer(grid: &AnalysisGrid, name: &str, values: impl Fn(usize) -> Option<f64>) -> MapLayer {
    MapLayer::new(
        name,
        LayerData::Cells(grid.cells.iter().map(|c| (c.bounds, values(c.cell_id))).collect()),
    )
}

fn matching_layers(graph: &NetworkGraph, edges: &[EdgeMatchSummary]) -> Vec<MapLayer> {
    let by = |st: MatchStatus| lines_of(graph, edges.iter().filter(|e| e.status == st).map(|e| e.edge_id));
    vec![
        MapLayer::new("matched", LayerData::Lines(by(MatchStatus::Matched))),
        MapLayer::new("unmatched", LayerData::Lines(by(MatchStatus::Unmatched))),
    ]
}

#[allow(clippy::too_many_arguments)]
pub(super) fn compare(
    out: &mut OutputDir,
    cfg: &RunConfig,
    area: &Area,
    osm: &IntrinsicAnalysis,
    reference: &IntrinsicAnalysis,
    cmp: &ComparisonResult,
    m: &MatchResult,
    log: &RunLog,
) -> Result<()> {
    let grid = &area.grid;
    let mut one_sided = BTreeMap::new();
    for p in [Presence::OnlyA, Presence::OnlyB] {
        one_sided.insert(presence_str(p), cmp.cells.iter().filter(|c| c.density.presence == p).count());
    }
    let summary = CompareSummary {
        tool: TOOL,
        config_sha256: cfg.digest(),
        inputs: BTreeMap::from([
            ("study_area", &area.info),
            ("osm", &osm.input),
            ("reference", &reference.input),
        ]),
        grid: GridSignature::of(grid),
        global: &cmp.global,
        density_delta: &cmp.density_stats,
        reachability_delta: &cmp.reachability_stats,
        one_sided_cells: one_sided,
        zipf: ZipfSummary {
            osm_outlier: cmp.zipf.a_outlier,
            reference_outlier: cmp.zipf.b_outlier,
            flagged: cmp.zipf.flagged.map(|p| if p == Presence::OnlyA { cmp.a } else { cmp.b }),
            outlier_ratio: cfg.thresholds.zipf_outlier_ratio,
        },
        matching: MatchingSection {
            params: &m.params,
            osm: match_stats(&m.osm_segments, &m.osm_to_reference, &m.osm_edges, &m.osm_unmatched),
            reference: match_stats(
                &m.reference_segments,
                &m.reference_to_osm,
                &m.reference_edges,
                &m.reference_unmatched,
            ),
        },
    };
    out.write_json(super::SUMMARY_FILE, &summary)?;

    let cells: BTreeMap<usize, Vec<(String, Value)>> = cmp
        .cells
        .iter()
        .map(|c| {
            let mut p = delta_props("density_m_per_km2", &c.density);
            p.extend(delta_props("reachable_pct", &c.reachability));
            (c.cell_id, p)
        })
        .collect();
    out.write_json("grid.geojson", &grid_geojson(grid, &[], &cells))?;

    let rows = (0..cmp.zipf.a.len().max(cmp.zipf.b.len())).map(|i| {
        vec![
            (i + 1).to_string(),
            num(cmp.zipf.a.get(i).map(|p| p.1)),
            num(cmp.zipf.b.get(i).map(|p| p.1)),
        ]
    });
    out.write(
        "components/zipf.csv",
        csv(&["rank", "osm_length_m", "reference_length_m"], rows).as_bytes(),
    )?;

    let osm_largest = largest_component_edges(&osm.graph, &osm.components, log);
    let ref_largest = largest_component_edges(&reference.graph, &reference.components, log);
    out.write_json("overlay/osm_largest_component.geojson", &largest_geojson(&osm.graph, &osm_largest))?;
    out.write_json(
        "overlay/reference_largest_component.geojson",
        &largest_geojson(&reference.graph, &ref_largest),
    )?;

    out.write("match/osm_segment_matches.csv", segment_matches_csv(&m.osm_to_reference).as_bytes())?;
    out.write(
        "match/reference_segment_matches.csv",
        segment_matches_csv(&m.reference_to_osm).as_bytes(),
    )?;
    out.write_json("match/osm_edges.geojson", &edge_matches_geojson(&osm.graph, &m.osm_edges))?;
    out.write_json(
        "match/reference_edges.geojson",
        &edge_matches_geojson(&reference.graph, &m.reference_edges),
    )?;
    out.write_json("match/osm_unmatched.geojson", &unmatched_geojson(&osm.graph, &m.osm_unmatched))?;
    out.write_json(
        "match/reference_unmatched.geojson",
        &unmatched_geojson(&reference.graph, &m.reference_unmatched),
    )?;
    out.write_json(
        "match/attribute_disagreement.geojson",
        &disagreements_geojson(&[
            (DatasetRole::Osm, &osm.graph, &m.osm_edges),
            (DatasetRole::Reference, &reference.graph, &m.reference_edges),
        ]),
    )?;

    // Plots: intrinsic copies for the combined report, then extrinsic ones.
    let km2 = area.area.boundary.area() / 1e6;
    let mut sections = Vec::new();
    for a in [osm, reference] {
        let plots = intrinsic_plots(grid, a)?;
        for (file, _, svg) in &plots {
            out.write(&format!("plots/{}/{file}", a.role), svg.as_bytes())?;
        }
        sections.push(intrinsic_section(a, km2, &plots, &format!("plots/{}/", a.role)));
    }

    let by_id: BTreeMap<usize, &crate::compare::CellComparison> = cmp.cells.iter().map(|c| (c.cell_id, c)).collect();
    let mut extrinsic_plots = Vec::new();
    let mut map = |file: &str, caption: &str, layers: Vec<MapLayer>| -> Result<()> {
        extrinsic_plots.push((format!("{file}.svg"), caption.to_string(), render_svg_map(caption, &layers)?));
        Ok(())
    };
    map(
        "density_delta",
        "Infrastructure density difference, OSM minus reference (m/km2)",
        vec![delta_layer(grid, "density difference (m/km2)", |id| by_id[&id].density.difference)],
    )?;
    map(
        "reachability_delta",
        "Reachable cells difference, OSM minus reference (percentage points)",
        vec![delta_layer(grid, "reachability difference (pp)", |id| by_id[&id].reachability.difference)],
    )?;
    map(
        "largest_components",
        "Largest connected components",
        vec![
            MapLayer::new("OSM", LayerData::Lines(lines_of(&osm.graph, osm_largest.iter().copied()))),
            MapLayer::new(
                "reference",
                LayerData::Lines(lines_of(&reference.graph, ref_largest.iter().copied())),
            ),
        ],
    )?;
    extrinsic_plots.push((
        "zipf.svg".into(),
        "Component lengths of both data sets (Zipf plot)".into(),
        render_zipf_svg("Component lengths", &[("OSM", &cmp.zipf.a), ("reference", &cmp.zipf.b)]),
    ));
    let mut match_plots = Vec::new();
    for (a, edges) in [(osm, &m.osm_edges), (reference, &m.reference_edges)] {
        let caption = format!("Matched and unmatched {} edges", role_title(a.role));
        match_plots.push((
            format!("{}_matching.svg", a.role),
            caption.clone(),
            render_svg_map(&caption, &matching_layers(&a.graph, edges))?,
        ));
    }
    let agreement = |want: Agreement| {
        lines_of(
            &osm.graph,
            m.osm_edges
                .iter()
                .filter(|e| e.status == MatchStatus::Matched && e.attribute_agreement.protection == want)
                .map(|e| e.edge_id),
        )
    };
    let caption = "Protection level of matched OSM edges compared with the reference";
    match_plots.push((
        "protection_agreement.svg".into(),
        caption.into(),
        render_svg_map(
            caption,
            &[
                MapLayer::new("same protection", LayerData::Lines(agreement(Agreement::Agree))),
                MapLayer::new("different protection", LayerData::Lines(agreement(Agreement::Disagree))),
            ],
        )?,
    ));
    for (file, _, svg) in extrinsic_plots.iter().chain(&match_plots) {
        out.write(&format!("plots/{file}"), svg.as_bytes())?;
    }

    let figures = |plots: &[(String, String, String)]| -> Vec<Figure> {
        plots
            .iter()
            .map(|(file, caption, svg)| Figure {
                caption: caption.clone(),
                source: format!("plots/{file}"),
                svg: svg.clone(),
            })
            .collect()
    };
    let global_rows = cmp
        .global
        .iter()
        .map(|(k, d)| vec![k.clone(), fmt(d.a), fmt(d.b), fmt(d.difference)])
        .collect();
    let stats_row = |name: &str, s: &DeltaStats| {
        (
            format!("{name} (mean / median over {} cells)", s.cells),
            format!("{} / {}", num(s.mean), num(s.median)),
        )
    };
    sections.push(Section {
        id: "extrinsic".into(),
        title: "Comparison of OSM and reference data".into(),
        tables: vec![
            Table {
                caption: "Global metrics".into(),
                header: vec!["metric".into(), "OSM".into(), "reference".into(), "difference".into()],
                rows: global_rows,
            },
            Table::key_values(
                "Per-cell differences",
                vec![
                    stats_row("density difference (m/km2)", &cmp.density_stats),
                    stats_row("reachability difference (pp)", &cmp.reachability_stats),
                    (
                        "largest component outlier".into(),
                        summary.zipf.flagged.map_or("none".into(), |r| r.to_string()),
                    ),
                ],
            ),
        ],
        figures: figures(&extrinsic_plots),
    });
    let match_rows = |s: &MatchStats| {
        vec![
            s.edges.to_string(),
            s.matched_edges.to_string(),
            s.unmatched_edges.to_string(),
            s.unmatched_near_other.to_string(),
            s.protection["disagree"].to_string(),
        ]
    };
    sections.push(Section {
        id: "matching".into(),
        title: "Feature matching".into(),
        tables: vec![Table {
            caption: "Edge-level matching".into(),
            header: vec![
                "data set".into(),
                "edges".into(),
                "matched".into(),
                "unmatched".into(),
                "unmatched near other data set".into(),
                "protection differs".into(),
            ],
            rows: vec![
                [vec!["OSM".to_string()], match_rows(&summary.matching.osm)].concat(),
                [vec!["reference".to_string()], match_rows(&summary.matching.reference)].concat(),
            ],
        }],
        figures: figures(&match_plots),
    });
    out.write(
        "report.html",
        render_html("Network quality report: OSM and reference", &sections).as_bytes(),
    )
}
