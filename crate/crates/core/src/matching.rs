//! Segment-based feature matching between two networks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{densify, point_polyline_distance, polyline_distance, polyline_length, split_by_length, Coord, Rect};
use crate::graph::{EdgeAttributes, NetworkGraph};
use crate::index::SegmentIndex;

/// Densification spacing for Hausdorff distances, m.
pub const HAUSDORFF_SPACING: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchParams {
    pub segment_length: f64,
    pub buffer_distance: f64,
    pub hausdorff_threshold: f64,
    pub angle_threshold: f64,
    pub min_fraction: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            segment_length: 10.0,
            buffer_distance: 15.0,
            hausdorff_threshold: 12.0,
            angle_threshold: 30.0,
            min_fraction: 0.5,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("segment_length", self.segment_length),
            ("buffer_distance", self.buffer_distance),
            ("hausdorff_threshold", self.hausdorff_threshold),
            ("angle_threshold", self.angle_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("matching.{name} must be positive, got {v}")));
            }
        }
        if !(self.min_fraction > 0.0 && self.min_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "matching.min_fraction must be in (0, 1], got {}",
                self.min_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub segment_id: usize,
    pub edge_id: usize,
    pub part_index: usize,
    pub geometry: Vec<Coord>,
    pub length: f64,
    pub attrs: EdgeAttributes,
}

/// Cuts every edge into pieces of `segment_length`; ids run in edge order.
pub fn segmentize(graph: &NetworkGraph, segment_length: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    for e in &graph.edges {
        for (part_index, geometry) in split_by_length(&e.geometry, segment_length).into_iter().enumerate() {
            out.push(Segment {
                segment_id: out.len(),
                edge_id: e.edge_id,
                part_index,
                length: polyline_length(&geometry),
                geometry,
                attrs: e.attrs,
            });
        }
    }
    out
}

fn directed_hausdorff(from: &[Coord], to: &[Coord]) -> f64 {
    densify(from, HAUSDORFF_SPACING)
        .iter()
        .map(|p| point_polyline_distance(p, to).0)
        .fold(0.0, f64::max)
}

/// Undirected Hausdorff distance between densified polylines.
pub fn undirected_hausdorff(a: &[Coord], b: &[Coord]) -> f64 {
    if a == b || a.iter().eq(b.iter().rev()) {
        return 0.0;
    }
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

/// Acute angle between the chords of two polylines, degrees in [0, 90].
pub fn segment_angle(a: &[Coord], b: &[Coord]) -> Result<f64> {
    let chord = |l: &[Coord]| {
        let (s, e) = (l[0], l[l.len() - 1]);
        (e.x - s.x, e.y - s.y)
    };
    let (ax, ay) = chord(a);
    let (bx, by) = chord(b);
    if (ax == 0.0 && ay == 0.0) || (bx == 0.0 && by == 0.0) {
        return Err(Error::DegenerateSegment);
    }
    let cross = ax * by - ay * bx;
    let dot = ax * bx + ay * by;
    Ok(cross.abs().atan2(dot.abs()).to_degrees())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentMatch {
    pub source: usize,
    pub target: Option<usize>,
    pub hausdorff: Option<f64>,
    pub angle: Option<f64>,
}

/// Orders `(hausdorff, angle, target index)` candidates, best first.
fn candidate_order(a: &(f64, f64, usize), b: &(f64, f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// Best target for every source segment, ordered by source id. Segments
/// with a zero-length chord never match.
pub fn match_segments(source: &[Segment], target: &[Segment], params: &MatchParams) -> Vec<SegmentMatch> {
    let index = SegmentIndex::build(target.iter().map(|s| s.geometry.as_slice()));
    source
        .par_iter()
        .map(|s| {
            let query = Rect::of_points(&s.geometry)
                .expect("segment has points")
                .expand(params.buffer_distance);
            let mut best: Option<(f64, f64, usize)> = None;
            for t in index.items_in(&query) {
                let tg = &target[t].geometry;
                if polyline_distance(&s.geometry, tg).0 > params.buffer_distance {
                    continue;
                }
                let Ok(angle) = segment_angle(&s.geometry, tg) else {
                    continue;
                };
                if angle > params.angle_threshold {
                    continue;
                }
                let h = undirected_hausdorff(&s.geometry, tg);
                if h > params.hausdorff_threshold {
                    continue;
                }
                let cand = (h, angle, t);
                if best.is_none_or(|b| candidate_order(&cand, &b).is_lt()) {
                    best = Some(cand);
                }
            }
            SegmentMatch {
                source: s.segment_id,
                target: best.map(|b| target[b.2].segment_id),
                hausdorff: best.map(|b| b.0),
                angle: best.map(|b| b.1),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStatus {
    Matched,
    Unmatched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agreement {
    Agree,
    Disagree,
    Unknown,
}

impl Agreement {
    pub fn as_str(&self) -> &'static str {
        match self {
            Agreement::Agree => "agree",
            Agreement::Disagree => "disagree",
            Agreement::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeAgreement {
    pub protection: Agreement,
    pub bidirectional: Agreement,
    pub mapping_method: Agreement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeMatchSummary {
    pub edge_id: usize,
    pub matched_fraction: f64,
    pub status: MatchStatus,
    pub attribute_agreement: AttributeAgreement,
    /// Distinct edges of the other data set holding matched segments.
    pub matched_edge_ids: Vec<usize>,
}

fn majority(agree: f64, disagree: f64) -> Agreement {
    if agree > disagree {
        Agreement::Agree
    } else if disagree > agree {
        Agreement::Disagree
    } else {
        Agreement::Unknown
    }
}

/// Rolls segment matches up to the edges of the source graph.
pub fn aggregate_matches(
    matches: &[SegmentMatch],
    source: &[Segment],
    target: &[Segment],
    graph: &NetworkGraph,
    min_fraction: f64,
) -> Vec<EdgeMatchSummary> {
    #[derive(Default, Clone)]
    struct Acc {
        total: f64,
        matched: f64,
        votes: [[f64; 2]; 3],
        edges: Vec<usize>,
    }
    let mut acc = vec![Acc::default(); graph.edges.len()];
    for m in matches {
        let s = &source[m.source];
        let a = &mut acc[s.edge_id];
        a.total += s.length;
        let Some(t) = m.target else { continue };
        let t = &target[t];
        a.matched += s.length;
        let same = [
            s.attrs.protection == t.attrs.protection,
            s.attrs.bidirectional == t.attrs.bidirectional,
            s.attrs.mapping_method == t.attrs.mapping_method,
        ];
        for (v, same) in a.votes.iter_mut().zip(same) {
            v[usize::from(!same)] += s.length;
        }
        a.edges.push(t.edge_id);
    }
    acc.into_iter()
        .enumerate()
        .map(|(edge_id, mut a)| {
            let matched_fraction = if a.total > 0.0 { a.matched / a.total } else { 0.0 };
            a.edges.sort_unstable();
            a.edges.dedup();
            let [p, b, m] = a.votes.map(|v| majority(v[0], v[1]));
            EdgeMatchSummary {
                edge_id,
                matched_fraction,
                status: if matched_fraction >= min_fraction {
                    MatchStatus::Matched
                } else {
                    MatchStatus::Unmatched
                },
                attribute_agreement: AttributeAgreement {
                    protection: p,
                    bidirectional: b,
                    mapping_method: m,
                },
                matched_edge_ids: a.edges,
            }
        })
        .collect()
}

/// Unmatched edge kept for review as a possible omission or commission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmatchedEdge {
    pub edge_id: usize,
    pub matched_fraction: f64,
    /// Distance to the nearest edge of the other data set, if within the
    /// search buffer.
    pub nearest_other: Option<f64>,
}

/// Unmatched edges of `graph`, annotated with their proximity to `other`.
pub fn unmatched_edges(
    summaries: &[EdgeMatchSummary],
    graph: &NetworkGraph,
    other: &NetworkGraph,
    buffer_distance: f64,
) -> Vec<UnmatchedEdge> {
    let index = other.edge_index();
    summaries
        .iter()
        .filter(|s| s.status == MatchStatus::Unmatched)
        .map(|s| {
            let g = &graph.edges[s.edge_id].geometry;
            let query = Rect::of_points(g).expect("edge has points").expand(buffer_distance);
            let nearest_other = index
                .items_in(&query)
                .into_iter()
                .map(|o| polyline_distance(g, &other.edges[o].geometry).0)
                .filter(|&d| d <= buffer_distance)
                .min_by(f64::total_cmp);
            UnmatchedEdge {
                edge_id: s.edge_id,
                matched_fraction: s.matched_fraction,
                nearest_other,
            }
        })
        .collect()
}

/// Matching results in both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub params: MatchParams,
    pub osm_segments: Vec<Segment>,
    pub reference_segments: Vec<Segment>,
    pub osm_to_reference: Vec<SegmentMatch>,
    pub reference_to_osm: Vec<SegmentMatch>,
    pub osm_edges: Vec<EdgeMatchSummary>,
    pub reference_edges: Vec<EdgeMatchSummary>,
    pub osm_unmatched: Vec<UnmatchedEdge>,
    pub reference_unmatched: Vec<UnmatchedEdge>,
}

pub fn match_networks(osm: &NetworkGraph, reference: &NetworkGraph, params: &MatchParams) -> Result<MatchResult> {
    params.validate()?;
    let osm_segments = segmentize(osm, params.segment_length);
    let reference_segments = segmentize(reference, params.segment_length);
    let (osm_to_reference, reference_to_osm) = rayon::join(
        || match_segments(&osm_segments, &reference_segments, params),
        || match_segments(&reference_segments, &osm_segments, params),
    );
    let osm_edges = aggregate_matches(&osm_to_reference, &osm_segments, &reference_segments, osm, params.min_fraction);
    let reference_edges = aggregate_matches(
        &reference_to_osm,
        &reference_segments,
        &osm_segments,
        reference,
        params.min_fraction,
    );
    let osm_unmatched = unmatched_edges(&osm_edges, osm, reference, params.buffer_distance);
    let reference_unmatched = unmatched_edges(&reference_edges, reference, osm, params.buffer_distance);
    Ok(MatchResult {
        params: *params,
        osm_segments,
        reference_segments,
        osm_to_reference,
        reference_to_osm,
        osm_edges,
        reference_edges,
        osm_unmatched,
        reference_unmatched,
    })
}
