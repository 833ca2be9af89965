//! OSM tag completeness, contradictions and per-cell tagging patterns.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DatasetRole, GraphEdge, NetworkGraph};
use crate::grid::{AnalysisGrid, CellMetrics};
use crate::ingest::rules::{Predicate, Tags};

/// Two predicates that must not both hold on one edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContradictionRule {
    pub a: Predicate,
    pub b: Predicate,
}

/// Missing fields take their values from [`TagAnalysisConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TagAnalysisConfig {
    pub tags_of_interest: Vec<String>,
    pub contradiction_rules: Vec<ContradictionRule>,
    pub pattern_keys: Vec<String>,
}

impl Default for TagAnalysisConfig {
    /// Example settings only; real analyses should list the tags that
    /// matter for the intended use.
    fn default() -> Self {
        TagAnalysisConfig {
            tags_of_interest: vec!["surface".into(), "width".into(), "lit".into()],
            contradiction_rules: vec![
                ContradictionRule {
                    a: Predicate::equals("highway", "cycleway"),
                    b: Predicate::equals("bicycle", "no"),
                },
                ContradictionRule {
                    a: Predicate::equals("cycleway", "track"),
                    b: Predicate::equals("bicycle", "no"),
                },
                ContradictionRule {
                    a: Predicate::equals("cycleway", "lane"),
                    b: Predicate::equals("bicycle", "no"),
                },
            ],
            pattern_keys: vec!["highway".into()],
        }
    }
}

impl TagAnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tags_of_interest.iter().any(|k| k.trim().is_empty()) {
            return Err(Error::Config("empty key in tags_of_interest".into()));
        }
        for (i, r) in self.contradiction_rules.iter().enumerate() {
            if r.a == r.b {
                return Err(Error::Config(format!(
                    "contradiction rule {i} has identical sides"
                )));
            }
            if r.a.key.trim().is_empty() || r.b.key.trim().is_empty() {
                return Err(Error::Config(format!("contradiction rule {i} has an empty key")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagFlagKind {
    MissingTag,
    Contradiction,
    Pattern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagFlag {
    pub edge_id: usize,
    pub kind: TagFlagKind,
    /// Tag keys involved.
    pub detail: Vec<String>,
    /// Index of the key in `tags_of_interest` or of the contradiction rule.
    pub rule_index: usize,
}

fn require_tags(graph: &NetworkGraph) -> Result<()> {
    if graph.role != DatasetRole::Osm {
        return Err(Error::UntaggedInput);
    }
    Ok(())
}

/// A key counts as present on a merged edge only if every constituent has it.
pub fn has_tag(edge: &GraphEdge, key: &str) -> bool {
    !edge.tags.is_empty() && edge.tags.iter().all(|t| t.contains_key(key))
}

pub fn coverage_metric(key: &str) -> String {
    format!("coverage_pct:{key}")
}

pub fn missing_metric(key: &str) -> String {
    format!("missing_pct:{key}")
}

/// Flags every edge lacking a tag of interest and reports, per nonempty
/// cell and key, the infrastructure-length share with and without the tag.
pub fn missing_tags(
    graph: &NetworkGraph,
    config: &TagAnalysisConfig,
    grid: &AnalysisGrid,
) -> Result<(Vec<TagFlag>, Vec<CellMetrics>)> {
    require_tags(graph)?;
    let keys = &config.tags_of_interest;
    let present: Vec<Vec<bool>> = graph
        .edges
        .par_iter()
        .map(|e| keys.iter().map(|k| has_tag(e, k)).collect())
        .collect();

    let mut flags = Vec::new();
    for (e, row) in graph.edges.iter().zip(&present) {
        for (i, (k, &ok)) in keys.iter().zip(row).enumerate() {
            if !ok {
                flags.push(TagFlag {
                    edge_id: e.edge_id,
                    kind: TagFlagKind::MissingTag,
                    detail: vec![k.clone()],
                    rule_index: i,
                });
            }
        }
    }

    // Per cell: total infrastructure length, and per key tagged / untagged length.
    let per_edge = grid.edge_cell_lengths(graph);
    let mut total: BTreeMap<usize, f64> = BTreeMap::new();
    let mut tagged: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut untagged: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for ((e, cells), row) in graph.edges.iter().zip(&per_edge).zip(&present) {
        for (&cell, &len) in cells {
            let infra = len * f64::from(e.multiplier);
            *total.entry(cell).or_default() += infra;
            let t = tagged.entry(cell).or_insert_with(|| vec![0.0; keys.len()]);
            let u = untagged.entry(cell).or_insert_with(|| vec![0.0; keys.len()]);
            for (i, &ok) in row.iter().enumerate() {
                if ok {
                    t[i] += infra;
                } else {
                    u[i] += infra;
                }
            }
        }
    }
    let metrics = total
        .iter()
        .filter(|(_, &t)| t > 0.0)
        .map(|(&cell, &t)| {
            let mut m = CellMetrics::new(cell);
            for (i, k) in keys.iter().enumerate() {
                m = m
                    .with(&coverage_metric(k), tagged[&cell][i] / t * 100.0)
                    .with(&missing_metric(k), untagged[&cell][i] / t * 100.0);
            }
            m
        })
        .collect();
    Ok((flags, metrics))
}

/// One flag per edge and per rule whose two sides both hold. Sides are
/// evaluated against the union of a merged edge's constituent tags.
pub fn contradictions(graph: &NetworkGraph, config: &TagAnalysisConfig) -> Result<Vec<TagFlag>> {
    require_tags(graph)?;
    let flags: Vec<Vec<TagFlag>> = graph
        .edges
        .par_iter()
        .map(|e| {
            config
                .contradiction_rules
                .iter()
                .enumerate()
                .filter(|(_, r)| r.a.matches_any(&e.tags) && r.b.matches_any(&e.tags))
                .map(|(i, r)| TagFlag {
                    edge_id: e.edge_id,
                    kind: TagFlagKind::Contradiction,
                    detail: vec![r.a.key.clone(), r.b.key.clone()],
                    rule_index: i,
                })
                .collect()
        })
        .collect();
    Ok(flags.into_iter().flatten().collect())
}

/// Dominant combination of pattern-key values within one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternCell {
    pub cell_id: usize,
    /// `key=value` per pattern key; absent keys read `key=`.
    pub dominant: Vec<String>,
    /// Share of the cell's infrastructure length, percent.
    pub share_pct: f64,
    pub total_length: f64,
    pub pattern_count: usize,
}

impl PatternCell {
    pub fn label(&self) -> String {
        self.dominant.join(";")
    }
}

fn pattern_of(tags: &[Tags], keys: &[String]) -> Vec<String> {
    keys.iter()
        .map(|k| {
            let values: BTreeSet<&str> = tags
                .iter()
                .filter_map(|t| t.get(k).map(String::as_str))
                .collect();
            let joined: Vec<&str> = values.into_iter().collect();
            format!("{k}={}", joined.join("/"))
        })
        .collect()
}

/// Per cell, groups infrastructure length by the combination of values of
/// `pattern_keys` and reports the dominant combination. Equal shares go to
/// the lexicographically smallest combination. Empty cells get no entry.
pub fn tag_patterns(
    graph: &NetworkGraph,
    pattern_keys: &[String],
    grid: &AnalysisGrid,
) -> Result<Vec<PatternCell>> {
    require_tags(graph)?;
    if pattern_keys.is_empty() {
        return Err(Error::Config("pattern analysis needs at least one key".into()));
    }
    let per_edge = grid.edge_cell_lengths(graph);
    let mut groups: BTreeMap<usize, BTreeMap<Vec<String>, f64>> = BTreeMap::new();
    for (e, cells) in graph.edges.iter().zip(&per_edge) {
        let pattern = pattern_of(&e.tags, pattern_keys);
        for (&cell, &len) in cells {
            *groups
                .entry(cell)
                .or_default()
                .entry(pattern.clone())
                .or_default() += len * f64::from(e.multiplier);
        }
    }
    Ok(groups
        .into_iter()
        .filter_map(|(cell_id, by_pattern)| {
            let total: f64 = by_pattern.values().sum();
            if total <= 0.0 {
                return None;
            }
            let mut best: Option<(&Vec<String>, f64)> = None;
            for (p, &len) in &by_pattern {
                if best.is_none_or(|(_, b)| len > b) {
                    best = Some((p, len));
                }
            }
            let (dominant, len) = best?;
            Some(PatternCell {
                cell_id,
                dominant: dominant.clone(),
                share_pct: len / total * 100.0,
                total_length: total,
                pattern_count: by_pattern.len(),
            })
        })
        .collect())
}
