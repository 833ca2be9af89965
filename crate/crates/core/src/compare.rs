//! Extrinsic comparison of two analysed networks on a shared grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DatasetRole, NetworkGraph};
use crate::grid::{cell_density, AnalysisGrid, DensityArea, METRIC_INFRA_DENSITY, METRIC_INFRA_LENGTH};
use crate::runlog::RunLog;
use crate::topology::{cell_reachability, zipf_series, ComponentSet};

pub const DEFAULT_OUTLIER_RATIO: f64 = 10.0;

pub const GLOBAL_METRICS: [&str; 5] = [
    "total_infrastructure_length_m",
    "node_count",
    "dangling_node_count",
    "component_count",
    "largest_component_share",
];

/// Values of one analysed network needed for comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkBundle {
    pub role: DatasetRole,
    pub cell_ids: Vec<usize>,
    /// Keyed by the names in [`GLOBAL_METRICS`].
    pub global: BTreeMap<String, f64>,
    /// Infrastructure density of cells holding network length, m/km².
    pub density: BTreeMap<usize, f64>,
    /// Reachability percentage of cells holding network length.
    pub reachability: BTreeMap<usize, f64>,
    pub zipf: Vec<(usize, f64)>,
}

pub fn bundle(graph: &NetworkGraph, comps: &ComponentSet, grid: &AnalysisGrid, mode: DensityArea) -> NetworkBundle {
    let total = graph.total_infrastructure_length();
    let largest = comps.largest().map_or(0.0, |c| c.length);
    let values = [
        total,
        graph.nodes.len() as f64,
        graph.dangling_nodes().len() as f64,
        comps.len() as f64,
        if total > 0.0 { largest / total } else { 0.0 },
    ];
    let density = cell_density(graph, grid, mode)
        .into_iter()
        .filter(|m| m.get(METRIC_INFRA_LENGTH).unwrap_or(0.0) > 0.0)
        .map(|m| (m.cell_id, m.get(METRIC_INFRA_DENSITY).unwrap_or(0.0)))
        .collect();
    let reachability = cell_reachability(graph, comps, grid)
        .into_iter()
        .map(|m| (m.cell_id, m.get("reachable_pct").unwrap_or(0.0)))
        .collect();
    NetworkBundle {
        role: graph.role,
        cell_ids: grid.cell_ids(),
        global: GLOBAL_METRICS.iter().map(|k| k.to_string()).zip(values).collect(),
        density,
        reachability,
        zipf: zipf_series(comps),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub a: f64,
    pub b: f64,
    pub difference: f64,
}

impl MetricDelta {
    fn new(a: f64, b: f64) -> Self {
        MetricDelta { a, b, difference: a - b }
    }
}

/// Which side holds a value in a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presence {
    Both,
    OnlyA,
    OnlyB,
    Neither,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellValueDelta {
    pub presence: Presence,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `a - b`, only when both sides are present.
    pub difference: Option<f64>,
}

impl CellValueDelta {
    fn new(a: Option<f64>, b: Option<f64>) -> Self {
        let presence = match (a, b) {
            (Some(_), Some(_)) => Presence::Both,
            (Some(_), None) => Presence::OnlyA,
            (None, Some(_)) => Presence::OnlyB,
            (None, None) => Presence::Neither,
        };
        CellValueDelta {
            presence,
            a,
            b,
            difference: a.zip(b).map(|(a, b)| a - b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellComparison {
    pub cell_id: usize,
    pub density: CellValueDelta,
    pub reachability: CellValueDelta,
}

/// Summary of per-cell differences over two-sided cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaStats {
    pub cells: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
}

fn delta_stats<'a>(deltas: impl Iterator<Item = &'a CellValueDelta>) -> DeltaStats {
    let mut v: Vec<f64> = deltas.filter_map(|d| d.difference).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = (n > 0).then(|| {
        // Pairwise-symmetric summation so that negated inputs give an
        // exactly negated mean.
        let pos: f64 = v.iter().filter(|x| **x > 0.0).sum();
        let neg: f64 = v.iter().rev().filter(|x| **x < 0.0).map(|x| -x).sum();
        (pos - neg) / n as f64
    });
    let median = (n > 0).then(|| {
        if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        }
    });
    DeltaStats { cells: n, mean, median }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipfComparison {
    pub a: Vec<(usize, f64)>,
    pub b: Vec<(usize, f64)>,
    pub a_outlier: bool,
    pub b_outlier: bool,
    /// Set when exactly one side has an outlying largest component.
    pub flagged: Option<Presence>,
}

/// Rank-1 length exceeds `ratio` times the rank-2 length.
pub fn has_outlier(series: &[(usize, f64)], ratio: f64) -> bool {
    match series {
        [first, second, ..] => first.1 > ratio * second.1,
        _ => false,
    }
}

pub fn zipf_compare(a: &[(usize, f64)], b: &[(usize, f64)], ratio: f64) -> ZipfComparison {
    let (a_outlier, b_outlier) = (has_outlier(a, ratio), has_outlier(b, ratio));
    ZipfComparison {
        a: a.to_vec(),
        b: b.to_vec(),
        a_outlier,
        b_outlier,
        flagged: match (a_outlier, b_outlier) {
            (true, false) => Some(Presence::OnlyA),
            (false, true) => Some(Presence::OnlyB),
            _ => None,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub a: DatasetRole,
    pub b: DatasetRole,
    pub global: BTreeMap<String, MetricDelta>,
    pub cells: Vec<CellComparison>,
    pub density_stats: DeltaStats,
    pub reachability_stats: DeltaStats,
    pub zipf: ZipfComparison,
}

pub fn compare_networks(a: &NetworkBundle, b: &NetworkBundle, outlier_ratio: f64) -> Result<ComparisonResult> {
    if a.cell_ids != b.cell_ids {
        return Err(Error::GridMismatch(format!(
            "{} has {} cells, {} has {} cells",
            a.role,
            a.cell_ids.len(),
            b.role,
            b.cell_ids.len()
        )));
    }
    let global = a
        .global
        .iter()
        .map(|(k, &va)| (k.clone(), MetricDelta::new(va, b.global.get(k).copied().unwrap_or(0.0))))
        .collect();
    let cells: Vec<CellComparison> = a
        .cell_ids
        .iter()
        .map(|&id| CellComparison {
            cell_id: id,
            density: CellValueDelta::new(a.density.get(&id).copied(), b.density.get(&id).copied()),
            reachability: CellValueDelta::new(a.reachability.get(&id).copied(), b.reachability.get(&id).copied()),
        })
        .collect();
    Ok(ComparisonResult {
        a: a.role,
        b: b.role,
        global,
        density_stats: delta_stats(cells.iter().map(|c| &c.density)),
        reachability_stats: delta_stats(cells.iter().map(|c| &c.reachability)),
        cells,
        zipf: zipf_compare(&a.zipf, &b.zipf, outlier_ratio),
    })
}

/// Edge ids of the largest component, for overlay display.
pub fn largest_component_edges(graph: &NetworkGraph, comps: &ComponentSet, log: &RunLog) -> Vec<usize> {
    match comps.largest() {
        Some(c) if !c.edge_ids.is_empty() => c.edge_ids.clone(),
        _ => {
            log.warn("compare", format!("{} network has no edges; largest component layer is empty", graph.role));
            Vec::new()
        }
    }
}
