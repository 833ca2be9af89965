//! Input parsing and classification of raw features into bicycle
//! infrastructure records.

mod area;
mod geojson;
mod osm;
pub mod rules;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geom::{polyline_length, Coord};
use crate::runlog::RunLog;

pub use area::StudyArea;
pub use geojson::{parse_geojson, AttributeMap, AttributeSource};
pub use osm::{parse_osm_xml, CoordUnits, OsmOptions, Projection};
pub use rules::{ClassificationRuleset, Predicate, Rule, Tags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protection {
    Protected,
    Unprotected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingMethod {
    Centerline,
    TrueGeometry,
}

impl fmt::Display for Protection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protection::Protected => "protected",
            Protection::Unprotected => "unprotected",
        })
    }
}

impl fmt::Display for MappingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MappingMethod::Centerline => "centerline",
            MappingMethod::TrueGeometry => "true_geometry",
        })
    }
}

/// A line feature as read from an input file, before classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawFeature {
    pub source_id: String,
    pub geometry: Vec<Coord>,
    pub tags: Tags,
}

/// Classified bicycle infrastructure polyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub edge_id: usize,
    pub source_id: String,
    pub geometry: Vec<Coord>,
    pub protection: Protection,
    pub bidirectional: bool,
    pub mapping_method: MappingMethod,
    pub grade_separated: bool,
    pub tags: Tags,
}

impl EdgeRecord {
    pub fn length(&self) -> f64 {
        polyline_length(&self.geometry)
    }
}

/// Assigns classification attributes from the first matching rule of each list.
pub fn classify(features: &[RawFeature], ruleset: &ClassificationRuleset) -> Vec<EdgeRecord> {
    features
        .iter()
        .enumerate()
        .map(|(edge_id, f)| {
            let tags = &f.tags;
            EdgeRecord {
                edge_id,
                source_id: f.source_id.clone(),
                geometry: f.geometry.clone(),
                protection: rules::first_match(&ruleset.protection, tags)
                    .copied()
                    .unwrap_or(Protection::Unprotected),
                bidirectional: rules::first_match(&ruleset.bidirectional, tags)
                    .copied()
                    .unwrap_or(false),
                mapping_method: rules::first_match(&ruleset.mapping_method, tags)
                    .copied()
                    .unwrap_or(MappingMethod::TrueGeometry),
                grade_separated: ruleset.grade_separated.iter().any(|p| p.matches(tags)),
                tags: tags.clone(),
            }
        })
        .collect()
}

/// Intersects every edge with the study area. Parts outside are discarded,
/// pieces of split edges keep the parent `source_id`, and edge ids are
/// reassigned in order.
pub fn clip_to_study_area(edges: &[EdgeRecord], area: &StudyArea, log: &RunLog) -> Vec<EdgeRecord> {
    let bbox = area.boundary.bbox();
    let mut out = Vec::with_capacity(edges.len());
    let mut degenerate = 0usize;
    for e in edges {
        let pieces = match crate::geom::Rect::of_points(&e.geometry) {
            Some(r) if !r.intersects(&bbox) => Vec::new(),
            _ => area.boundary.clip_polyline(&e.geometry),
        };
        for piece in pieces {
            if polyline_length(&piece) <= 0.0 {
                degenerate += 1;
                continue;
            }
            out.push(EdgeRecord {
                edge_id: out.len(),
                geometry: piece,
                ..e.clone()
            });
        }
    }
    if degenerate > 0 {
        log.warn("clip", format!("dropped {degenerate} zero-length pieces after clipping"));
    }
    if out.is_empty() {
        log.warn("clip", "no edges inside the study area");
    }
    out
}
