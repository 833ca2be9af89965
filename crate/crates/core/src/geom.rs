//! Planar geometry primitives in projected meters.
//!
//! Everything here works on plain `Coord` slices. Polylines are `&[Coord]`
//! with at least two vertices; polygons are a single exterior ring stored
//! open (the closing vertex is implied).

use serde::{Deserialize, Serialize};

/// Relative tolerance used when deciding whether a parameter lies on a
/// segment end.
const PARAM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub x: f64,
    pub y: f64,
}

impl Coord {
    pub const fn new(x: f64, y: f64) -> Self {
        Coord { x, y }
    }

    pub fn distance(&self, other: &Coord) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Point at parameter `t` on the segment to `other`; `t == 1` returns
    /// `other` exactly.
    pub fn lerp(&self, other: &Coord, t: f64) -> Coord {
        if t == 1.0 {
            return *other;
        }
        Coord::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Coord {
        Coord::new(self.x + dx, self.y + dy)
    }
}

impl From<(f64, f64)> for Coord {
    fn from((x, y): (f64, f64)) -> Self {
        Coord::new(x, y)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Coord,
    pub max: Coord,
}

impl Rect {
    pub fn new(min: Coord, max: Coord) -> Self {
        Rect { min, max }
    }

    pub fn of_points(points: &[Coord]) -> Option<Rect> {
        let first = points.first()?;
        let mut r = Rect::new(*first, *first);
        for p in &points[1..] {
            r.min.x = r.min.x.min(p.x);
            r.min.y = r.min.y.min(p.y);
            r.max.x = r.max.x.max(p.x);
            r.max.y = r.max.y.max(p.y);
        }
        Some(r)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Coord {
        self.min.lerp(&self.max, 0.5)
    }

    pub fn expand(&self, by: f64) -> Rect {
        Rect::new(
            self.min.translate(-by, -by),
            self.max.translate(by, by),
        )
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect::new(
            Coord::new(self.min.x.min(other.min.x), self.min.y.min(other.min.y)),
            Coord::new(self.max.x.max(other.max.x), self.max.y.max(other.max.y)),
        )
    }

    /// Closed containment test.
    pub fn contains(&self, p: &Coord) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }

    /// Corners in counter-clockwise order starting at `min`.
    pub fn ring(&self) -> [Coord; 4] {
        [
            self.min,
            Coord::new(self.max.x, self.min.y),
            self.max,
            Coord::new(self.min.x, self.max.y),
        ]
    }
}

pub fn polyline_length(line: &[Coord]) -> f64 {
    line.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// Drops consecutive duplicate vertices.
pub fn dedup_consecutive(line: &mut Vec<Coord>) {
    line.dedup_by(|b, a| a.x == b.x && a.y == b.y);
}

/// Distance from `p` to segment `a`–`b`, with the closest point and its
/// parameter along the segment.
pub fn point_segment_distance(p: &Coord, a: &Coord, b: &Coord) -> (f64, Coord, f64) {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return (p.distance(a), *a, 0.0);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    let c = a.lerp(b, t);
    (p.distance(&c), c, t)
}

/// Distance from a point to a polyline and the closest point on it.
pub fn point_polyline_distance(p: &Coord, line: &[Coord]) -> (f64, Coord) {
    let mut best = (f64::INFINITY, line[0]);
    for w in line.windows(2) {
        let (d, c, _) = point_segment_distance(p, &w[0], &w[1]);
        if d < best.0 {
            best = (d, c);
        }
    }
    if line.len() == 1 {
        best = (p.distance(&line[0]), line[0]);
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentIntersection {
    /// Single crossing or touching point with the parameters along each segment.
    Point { at: Coord, ta: f64, tb: f64 },
    /// Collinear overlap between the given parameter ranges on the first segment.
    Overlap { ta0: f64, ta1: f64 },
}

pub fn segment_intersection(
    a0: &Coord,
    a1: &Coord,
    b0: &Coord,
    b1: &Coord,
) -> Option<SegmentIntersection> {
    let r = Coord::new(a1.x - a0.x, a1.y - a0.y);
    let s = Coord::new(b1.x - b0.x, b1.y - b0.y);
    let denom = r.x * s.y - r.y * s.x;
    let qp = Coord::new(b0.x - a0.x, b0.y - a0.y);
    let rr = r.x * r.x + r.y * r.y;
    let scale = rr.max(s.x * s.x + s.y * s.y);
    if denom.abs() <= 1e-14 * scale {
        // Parallel. Collinear only if b0 lies on the carrier of a.
        let qxr = qp.x * r.y - qp.y * r.x;
        if qxr.abs() > 1e-9 * scale.sqrt().max(1.0) || rr == 0.0 {
            return None;
        }
        let t0 = (qp.x * r.x + qp.y * r.y) / rr;
        let t1 = t0 + (s.x * r.x + s.y * r.y) / rr;
        let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        let lo = lo.max(0.0);
        let hi = hi.min(1.0);
        if lo > hi {
            return None;
        }
        if lo == hi {
            let at = a0.lerp(a1, lo);
            let (_, _, tb) = point_segment_distance(&at, b0, b1);
            return Some(SegmentIntersection::Point { at, ta: lo, tb });
        }
        return Some(SegmentIntersection::Overlap { ta0: lo, ta1: hi });
    }
    let ta = (qp.x * s.y - qp.y * s.x) / denom;
    let tb = (qp.x * r.y - qp.y * r.x) / denom;
    if (-PARAM_EPS..=1.0 + PARAM_EPS).contains(&ta) && (-PARAM_EPS..=1.0 + PARAM_EPS).contains(&tb)
    {
        let ta = ta.clamp(0.0, 1.0);
        let tb = tb.clamp(0.0, 1.0);
        Some(SegmentIntersection::Point {
            at: a0.lerp(a1, ta),
            ta,
            tb,
        })
    } else {
        None
    }
}

/// Minimum distance between two segments and the realizing point pair.
pub fn segment_segment_distance(
    a0: &Coord,
    a1: &Coord,
    b0: &Coord,
    b1: &Coord,
) -> (f64, Coord, Coord) {
    match segment_intersection(a0, a1, b0, b1) {
        Some(SegmentIntersection::Point { at, .. }) => return (0.0, at, at),
        Some(SegmentIntersection::Overlap { ta0, .. }) => {
            let at = a0.lerp(a1, ta0);
            return (0.0, at, at);
        }
        None => {}
    }
    let mut best = {
        let (d, c, _) = point_segment_distance(a0, b0, b1);
        (d, *a0, c)
    };
    for (p, on_a) in [(a1, true), (b0, false), (b1, false)] {
        let (d, c, _) = if on_a {
            point_segment_distance(p, b0, b1)
        } else {
            point_segment_distance(p, a0, a1)
        };
        if d < best.0 {
            best = if on_a { (d, *p, c) } else { (d, c, *p) };
        }
    }
    best
}

/// Minimum distance between two polylines and the closest point pair
/// (first on `a`, then on `b`).
pub fn polyline_distance(a: &[Coord], b: &[Coord]) -> (f64, Coord, Coord) {
    let mut best = (f64::INFINITY, a[0], b[0]);
    for wa in a.windows(2) {
        for wb in b.windows(2) {
            let r = segment_segment_distance(&wa[0], &wa[1], &wb[0], &wb[1]);
            if r.0 < best.0 {
                best = r;
                if best.0 == 0.0 {
                    return best;
                }
            }
        }
    }
    best
}

/// Points along `line` no further than `spacing` apart, always including
/// every vertex.
pub fn densify(line: &[Coord], spacing: f64) -> Vec<Coord> {
    let mut out = Vec::with_capacity(line.len());
    for w in line.windows(2) {
        out.push(w[0]);
        let len = w[0].distance(&w[1]);
        let n = (len / spacing).ceil() as usize;
        for k in 1..n {
            out.push(w[0].lerp(&w[1], k as f64 / n as f64));
        }
    }
    if let Some(last) = line.last() {
        out.push(*last);
    }
    out
}

/// Cuts a polyline into consecutive pieces of length `piece_len`; the last
/// piece carries the remainder in `(0, piece_len]`.
pub fn split_by_length(line: &[Coord], piece_len: f64) -> Vec<Vec<Coord>> {
    let total = polyline_length(line);
    let mut n = (total / piece_len).ceil().max(1.0) as usize;
    // A remainder that is only floating-point noise folds into the previous piece.
    if n > 1 && total - (n - 1) as f64 * piece_len <= 1e-9 * piece_len {
        n -= 1;
    }
    if n == 1 {
        return vec![line.to_vec()];
    }
    let cuts: Vec<f64> = (1..n).map(|k| k as f64 * piece_len).collect();
    split_at_distances(line, &cuts)
}

/// Splits a polyline at the given increasing distances from its start.
pub fn split_at_distances(line: &[Coord], cuts: &[f64]) -> Vec<Vec<Coord>> {
    let mut pieces = Vec::with_capacity(cuts.len() + 1);
    let mut current = vec![line[0]];
    let mut walked = 0.0;
    let mut next_cut = cuts.iter().peekable();
    for w in line.windows(2) {
        let seg_len = w[0].distance(&w[1]);
        while let Some(&&cut) = next_cut.peek() {
            if cut >= walked + seg_len || seg_len == 0.0 {
                break;
            }
            let p = w[0].lerp(&w[1], (cut - walked) / seg_len);
            current.push(p);
            dedup_consecutive(&mut current);
            if current.len() >= 2 {
                pieces.push(std::mem::replace(&mut current, vec![p]));
            } else {
                current = vec![p];
            }
            next_cut.next();
        }
        current.push(w[1]);
        walked += seg_len;
    }
    dedup_consecutive(&mut current);
    if current.len() >= 2 {
        pieces.push(current);
    }
    pieces
}

/// Simple polygon given by its exterior ring, stored without the closing vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    ring: Vec<Coord>,
}

impl Polygon {
    /// Builds a polygon from a ring; a repeated closing vertex is removed.
    pub fn new(mut ring: Vec<Coord>) -> Self {
        dedup_consecutive(&mut ring);
        if ring.len() > 1 && ring.first() == ring.last() {
            ring.pop();
        }
        Polygon { ring }
    }

    pub fn from_rect(r: &Rect) -> Self {
        Polygon::new(r.ring().to_vec())
    }

    pub fn ring(&self) -> &[Coord] {
        &self.ring
    }

    pub fn edges(&self) -> impl Iterator<Item = (&Coord, &Coord)> {
        let n = self.ring.len();
        (0..n).map(move |i| (&self.ring[i], &self.ring[(i + 1) % n]))
    }

    pub fn signed_area(&self) -> f64 {
        self.edges().map(|(a, b)| a.x * b.y - b.x * a.y).sum::<f64>() / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn bbox(&self) -> Rect {
        Rect::of_points(&self.ring).unwrap_or(Rect::new(Coord::new(0.0, 0.0), Coord::new(0.0, 0.0)))
    }

    /// True if any two non-adjacent edges touch or any adjacent pair overlaps.
    pub fn is_self_intersecting(&self) -> bool {
        let n = self.ring.len();
        if n < 3 {
            return true;
        }
        for i in 0..n {
            let (a0, a1) = (self.ring[i], self.ring[(i + 1) % n]);
            for j in (i + 1)..n {
                let (b0, b1) = (self.ring[j], self.ring[(j + 1) % n]);
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                match segment_intersection(&a0, &a1, &b0, &b1) {
                    None => {}
                    Some(SegmentIntersection::Overlap { .. }) => return true,
                    Some(SegmentIntersection::Point { .. }) if adjacent => {}
                    Some(SegmentIntersection::Point { .. }) => return true,
                }
            }
        }
        false
    }

    pub fn on_boundary(&self, p: &Coord) -> bool {
        self.edges()
            .any(|(a, b)| point_segment_distance(p, a, b).0 <= 1e-9)
    }

    /// Closed point-in-polygon test (boundary counts as inside).
    pub fn contains(&self, p: &Coord) -> bool {
        if self.on_boundary(p) {
            return true;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Parts of `line` inside the polygon (boundary inclusive), in order.
    pub fn clip_polyline(&self, line: &[Coord]) -> Vec<Vec<Coord>> {
        let mut pieces: Vec<Vec<Coord>> = Vec::new();
        let mut current: Vec<Coord> = Vec::new();
        for w in line.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mut ts = vec![0.0, 1.0];
            for (p, q) in self.edges() {
                match segment_intersection(&a, &b, p, q) {
                    Some(SegmentIntersection::Point { ta, .. }) => ts.push(ta),
                    Some(SegmentIntersection::Overlap { ta0, ta1 }) => {
                        ts.push(ta0);
                        ts.push(ta1);
                    }
                    None => {}
                }
            }
            ts.sort_by(f64::total_cmp);
            ts.dedup_by(|x, y| (*x - *y).abs() <= PARAM_EPS);
            for t in ts.windows(2) {
                let (t0, t1) = (t[0], t[1]);
                let mid = a.lerp(&b, (t0 + t1) / 2.0);
                let p0 = a.lerp(&b, t0);
                let p1 = a.lerp(&b, t1);
                if self.contains(&mid) {
                    if current.last() != Some(&p0) {
                        if current.len() >= 2 {
                            pieces.push(std::mem::take(&mut current));
                        }
                        current = vec![p0];
                    }
                    current.push(p1);
                } else if current.len() >= 2 {
                    pieces.push(std::mem::take(&mut current));
                } else {
                    current.clear();
                }
            }
        }
        if current.len() >= 2 {
            pieces.push(current);
        }
        pieces
            .into_iter()
            .map(|mut p| {
                dedup_consecutive(&mut p);
                p
            })
            .filter(|p| p.len() >= 2 && polyline_length(p) > 0.0)
            .collect()
    }

    /// Area of the intersection with an axis-aligned rectangle.
    pub fn intersection_area_with_rect(&self, rect: &Rect) -> f64 {
        let mut poly = self.ring.clone();
        // Sutherland–Hodgman against each rectangle side; the subject may be
        // concave, the clip window is convex.
        let sides: [(fn(&Coord, &Rect) -> bool, fn(&Coord, &Coord, &Rect) -> Coord); 4] = [
            (
                |p, r| p.x >= r.min.x,
                |a, b, r| a.lerp(b, (r.min.x - a.x) / (b.x - a.x)),
            ),
            (
                |p, r| p.x <= r.max.x,
                |a, b, r| a.lerp(b, (r.max.x - a.x) / (b.x - a.x)),
            ),
            (
                |p, r| p.y >= r.min.y,
                |a, b, r| a.lerp(b, (r.min.y - a.y) / (b.y - a.y)),
            ),
            (
                |p, r| p.y <= r.max.y,
                |a, b, r| a.lerp(b, (r.max.y - a.y) / (b.y - a.y)),
            ),
        ];
        for (inside, cut) in sides {
            if poly.is_empty() {
                break;
            }
            let input = std::mem::take(&mut poly);
            let n = input.len();
            for i in 0..n {
                let cur = input[i];
                let prev = input[(i + n - 1) % n];
                let (ci, pi) = (inside(&cur, rect), inside(&prev, rect));
                if ci {
                    if !pi {
                        poly.push(cut(&prev, &cur, rect));
                    }
                    poly.push(cur);
                } else if pi {
                    poly.push(cut(&prev, &cur, rect));
                }
            }
        }
        if poly.len() < 3 {
            return 0.0;
        }
        Polygon { ring: poly }.area()
    }

    /// Whether the rectangle overlaps the polygon interior with positive area.
    pub fn overlaps_rect(&self, rect: &Rect) -> bool {
        self.bbox().intersects(rect) && self.intersection_area_with_rect(rect) > 0.0
    }
}
