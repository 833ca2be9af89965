//! R-tree over polyline segments, used for every threshold search.

use rstar::primitives::{GeomWithData, Rectangle};
use rstar::{RTree, AABB};

use crate::geom::{Coord, Rect};

type Entry = GeomWithData<Rectangle<[f64; 2]>, (usize, usize)>;

/// Index of the individual segments of a set of polylines. Each entry
/// carries `(polyline index, segment index)`.
pub struct SegmentIndex {
    tree: RTree<Entry>,
}

impl SegmentIndex {
    pub fn build<'a, I>(polylines: I) -> Self
    where
        I: IntoIterator<Item = &'a [Coord]>,
    {
        let mut entries = Vec::new();
        for (item, line) in polylines.into_iter().enumerate() {
            for (seg, w) in line.windows(2).enumerate() {
                let rect = Rectangle::from_corners([w[0].x, w[0].y], [w[1].x, w[1].y]);
                entries.push(GeomWithData::new(rect, (item, seg)));
            }
        }
        SegmentIndex {
            tree: RTree::bulk_load(entries),
        }
    }

    /// `(polyline, segment)` pairs whose segment bounding box intersects `query`.
    /// Sorted for deterministic downstream iteration.
    pub fn segments_in(&self, query: &Rect) -> Vec<(usize, usize)> {
        let env = AABB::from_corners([query.min.x, query.min.y], [query.max.x, query.max.y]);
        let mut hits: Vec<(usize, usize)> = self
            .tree
            .locate_in_envelope_intersecting(&env)
            .map(|e| e.data)
            .collect();
        hits.sort_unstable();
        hits
    }

    /// Distinct polyline indices with at least one segment box intersecting `query`.
    pub fn items_in(&self, query: &Rect) -> Vec<usize> {
        let mut items: Vec<usize> = self.segments_in(query).into_iter().map(|(i, _)| i).collect();
        items.dedup();
        items
    }

    pub fn len(&self) -> usize {
        self.tree.size()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.size() == 0
    }
}

/// Bounding box of segment `seg` of `line`.
pub fn segment_rect(line: &[Coord], seg: usize) -> Rect {
    Rect::of_points(&line[seg..seg + 2]).expect("segment has two points")
}
