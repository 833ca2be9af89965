//! GeoJSON feature collections as `serde_json` values.

use serde_json::{json, Map, Value};

use crate::geom::{Coord, Rect};
use crate::topology::FlagGeometry;

pub fn position(c: &Coord) -> Value {
    json!([c.x, c.y])
}

pub fn point(c: &Coord) -> Value {
    json!({"type": "Point", "coordinates": position(c)})
}

pub fn line_string(line: &[Coord]) -> Value {
    let coords: Vec<Value> = line.iter().map(position).collect();
    json!({"type": "LineString", "coordinates": coords})
}

/// Counter-clockwise closed ring around a rectangle.
pub fn rect_polygon(r: &Rect) -> Value {
    let mut ring: Vec<Value> = r.ring().iter().map(position).collect();
    ring.push(ring[0].clone());
    json!({"type": "Polygon", "coordinates": [ring]})
}

pub fn flag_geometry(g: &FlagGeometry) -> Value {
    match g {
        FlagGeometry::Point(c) => point(c),
        FlagGeometry::Line(l) => line_string(l),
    }
}

pub fn feature(geometry: Value, properties: Map<String, Value>) -> Value {
    json!({"type": "Feature", "geometry": geometry, "properties": properties})
}

pub fn collection(features: Vec<Value>) -> Value {
    json!({"type": "FeatureCollection", "features": features})
}

/// Builds a property map from `(key, value)` pairs.
pub fn props<I, K>(pairs: I) -> Map<String, Value>
where
    I: IntoIterator<Item = (K, Value)>,
    K: Into<String>,
{
    pairs.into_iter().map(|(k, v)| (k.into(), v)).collect()
}
