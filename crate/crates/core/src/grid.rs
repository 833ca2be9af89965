//! Square-cell tessellation of the study area and per-cell localisation of
//! network length and nodes.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Coord, Rect};
use crate::graph::NetworkGraph;
use crate::ingest::StudyArea;
use crate::runlog::RunLog;

pub const DEFAULT_CELL_SIZE: f64 = 1000.0;

/// Area used to normalise per-cell densities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityArea {
    #[default]
    FullCell,
    ClippedCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub cell_id: usize,
    pub row: usize,
    pub col: usize,
    pub bounds: Rect,
    pub centroid: Coord,
    /// Area of the cell inside the study area, m².
    pub clipped_area: f64,
}

/// Cells are numbered row-major from the lower-left corner of the study
/// area's bounding box; only cells overlapping the polygon are retained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisGrid {
    pub cell_size: f64,
    pub origin: Coord,
    pub ncols: usize,
    pub nrows: usize,
    pub cells: Vec<Cell>,
    #[serde(skip)]
    slot: HashMap<usize, usize>,
}

/// Named numeric metrics for one cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub cell_id: usize,
    pub values: BTreeMap<String, f64>,
}

impl CellMetrics {
    pub fn new(cell_id: usize) -> Self {
        CellMetrics {
            cell_id,
            values: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

pub fn make_grid(area: &StudyArea, cell_size: f64, log: &RunLog) -> Result<AnalysisGrid> {
    if !(cell_size > 0.0) || !cell_size.is_finite() {
        return Err(Error::Config(format!("cell size must be positive, got {cell_size}")));
    }
    let bbox = area.boundary.bbox();
    if cell_size >= bbox.width() && cell_size >= bbox.height() {
        log.warn(
            "grid",
            format!("cell size {cell_size} m covers the whole study area; using a single cell"),
        );
    }
    let ncols = ((bbox.width() / cell_size).ceil() as usize).max(1);
    let nrows = ((bbox.height() / cell_size).ceil() as usize).max(1);
    let origin = bbox.min;
    let cells: Vec<Cell> = (0..nrows * ncols)
        .into_par_iter()
        .filter_map(|id| {
            let (row, col) = (id / ncols, id % ncols);
            let min = Coord::new(
                origin.x + col as f64 * cell_size,
                origin.y + row as f64 * cell_size,
            );
            let bounds = Rect::new(min, min.translate(cell_size, cell_size));
            let clipped_area = area.boundary.intersection_area_with_rect(&bounds);
            (clipped_area > 0.0).then(|| Cell {
                cell_id: id,
                row,
                col,
                bounds,
                centroid: bounds.center(),
                clipped_area,
            })
        })
        .collect();
    Ok(AnalysisGrid::from_cells(cell_size, origin, ncols, nrows, cells))
}

impl AnalysisGrid {
    pub fn from_cells(cell_size: f64, origin: Coord, ncols: usize, nrows: usize, cells: Vec<Cell>) -> Self {
        let slot = cells.iter().enumerate().map(|(i, c)| (c.cell_id, i)).collect();
        AnalysisGrid {
            cell_size,
            origin,
            ncols,
            nrows,
            cells,
            slot,
        }
    }

    pub fn cell(&self, cell_id: usize) -> Option<&Cell> {
        self.slot.get(&cell_id).map(|&i| &self.cells[i])
    }

    pub fn cell_ids(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c.cell_id).collect()
    }

    pub fn cell_area_km2(&self) -> f64 {
        self.cell_size * self.cell_size / 1e6
    }

    pub fn area_km2(&self, cell: &Cell, mode: DensityArea) -> f64 {
        match mode {
            DensityArea::FullCell => self.cell_area_km2(),
            DensityArea::ClippedCell => cell.clipped_area / 1e6,
        }
    }

    /// Candidate indices along one axis: the containing index, plus the
    /// neighbour below when the coordinate sits exactly on a grid line.
    fn axis_candidates(&self, value: f64, origin: f64, count: usize) -> Vec<usize> {
        let t = (value - origin) / self.cell_size;
        let k = t.floor();
        let mut out = Vec::with_capacity(2);
        if t == k && k >= 1.0 && (k as usize - 1) < count {
            out.push(k as usize - 1);
        }
        if k >= 0.0 && (k as usize) < count {
            out.push(k as usize);
        }
        out
    }

    /// Retained cell owning a point. Points on shared cell edges go to the
    /// lowest cell id.
    pub fn locate(&self, p: &Coord) -> Option<usize> {
        let cols = self.axis_candidates(p.x, self.origin.x, self.ncols);
        let rows = self.axis_candidates(p.y, self.origin.y, self.nrows);
        let mut best: Option<usize> = None;
        for r in &rows {
            for c in &cols {
                let id = r * self.ncols + c;
                if self.slot.contains_key(&id) && best.is_none_or(|b| id < b) {
                    best = Some(id);
                }
            }
        }
        best
    }

    /// Geometric length of a polyline within each retained cell, keyed by
    /// cell id. Each piece between grid-line crossings goes to exactly one
    /// cell, so the parts sum to the length inside retained cells.
    pub fn polyline_cell_lengths(&self, line: &[Coord]) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for w in line.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mut ts = vec![0.0, 1.0];
            for (pa, pb, o) in [(a.x, b.x, self.origin.x), (a.y, b.y, self.origin.y)] {
                if pa == pb {
                    continue;
                }
                let (lo, hi) = if pa < pb { (pa, pb) } else { (pb, pa) };
                let k0 = ((lo - o) / self.cell_size).ceil() as i64;
                let k1 = ((hi - o) / self.cell_size).floor() as i64;
                for k in k0..=k1 {
                    let line_at = o + k as f64 * self.cell_size;
                    let t = (line_at - pa) / (pb - pa);
                    if t > 0.0 && t < 1.0 {
                        ts.push(t);
                    }
                }
            }
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            let seg_len = a.distance(&b);
            for t in ts.windows(2) {
                let piece = seg_len * (t[1] - t[0]);
                if piece <= 0.0 {
                    continue;
                }
                let mid = a.lerp(&b, (t[0] + t[1]) / 2.0);
                if let Some(id) = self.locate(&mid) {
                    *out.entry(id).or_insert(0.0) += piece;
                }
            }
        }
        out
    }

    /// Per-edge geometric length per cell, in edge order.
    pub fn edge_cell_lengths(&self, graph: &NetworkGraph) -> Vec<BTreeMap<usize, f64>> {
        graph
            .edges
            .par_iter()
            .map(|e| self.polyline_cell_lengths(&e.geometry))
            .collect()
    }

    /// Cell id of every node, or `None` outside the retained cells.
    pub fn node_cells(&self, graph: &NetworkGraph) -> Vec<Option<usize>> {
        graph.nodes.iter().map(|n| self.locate(&n.position)).collect()
    }

    /// Infrastructure length per cell: each edge's per-cell geometric length
    /// scaled by its multiplier. Accumulated in edge order.
    pub fn infrastructure_per_cell(&self, graph: &NetworkGraph) -> BTreeMap<usize, f64> {
        let per_edge = self.edge_cell_lengths(graph);
        let mut acc = BTreeMap::new();
        for (e, cells) in graph.edges.iter().zip(&per_edge) {
            for (&cell, &len) in cells {
                *acc.entry(cell).or_insert(0.0) += len * f64::from(e.multiplier);
            }
        }
        acc
    }
}

pub const METRIC_INFRA_LENGTH: &str = "infrastructure_length_m";
pub const METRIC_INFRA_DENSITY: &str = "infrastructure_density_m_per_km2";
pub const METRIC_NODE_COUNT: &str = "node_count";
pub const METRIC_NODE_DENSITY: &str = "node_density_per_km2";

/// Infrastructure density (m/km²) and node density for every retained cell.
pub fn cell_density(graph: &NetworkGraph, grid: &AnalysisGrid, mode: DensityArea) -> Vec<CellMetrics> {
    let lengths = grid.infrastructure_per_cell(graph);
    let mut nodes: BTreeMap<usize, usize> = BTreeMap::new();
    for cell in grid.node_cells(graph).into_iter().flatten() {
        *nodes.entry(cell).or_default() += 1;
    }
    grid.cells
        .iter()
        .map(|c| {
            let area = grid.area_km2(c, mode);
            let len = lengths.get(&c.cell_id).copied().unwrap_or(0.0);
            let n = nodes.get(&c.cell_id).copied().unwrap_or(0) as f64;
            CellMetrics::new(c.cell_id)
                .with(METRIC_INFRA_LENGTH, len)
                .with(METRIC_INFRA_DENSITY, len / area)
                .with(METRIC_NODE_COUNT, n)
                .with(METRIC_NODE_DENSITY, n / area)
        })
        .collect()
}
