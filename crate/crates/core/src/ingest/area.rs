use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geom::{Coord, Polygon};

/// Study area polygon in a projected CRS with meter units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyArea {
    pub boundary: Polygon,
    pub crs_label: String,
    pub declared_unit: String,
}

impl StudyArea {
    pub fn new(boundary: Polygon, crs_label: &str, declared_unit: &str) -> Result<Self> {
        if declared_unit != "meter" {
            return Err(Error::StudyArea(format!(
                "declared unit must be \"meter\", got \"{declared_unit}\""
            )));
        }
        if boundary.ring().len() < 3 || boundary.area() <= 0.0 {
            return Err(Error::StudyArea("polygon has zero area".into()));
        }
        if boundary.is_self_intersecting() {
            return Err(Error::StudyArea("polygon boundary self-intersects".into()));
        }
        Ok(StudyArea {
            boundary,
            crs_label: crs_label.to_string(),
            declared_unit: declared_unit.to_string(),
        })
    }

    /// Reads the polygon from GeoJSON: a Polygon geometry, a Feature holding
    /// one, or a FeatureCollection with exactly one polygon feature.
    pub fn from_geojson(bytes: &[u8], crs_label: &str, declared_unit: &str) -> Result<Self> {
        let doc: Value = serde_json::from_slice(bytes)
            .map_err(|e| Error::StudyArea(format!("not valid JSON: {e}")))?;
        let geometry = find_polygon(&doc)?;
        let rings = geometry
            .get("coordinates")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::StudyArea("polygon without coordinates".into()))?;
        if rings.len() != 1 {
            return Err(Error::StudyArea(
                "polygon must have exactly one ring (holes are not supported)".into(),
            ));
        }
        let ring = parse_ring(&rings[0])?;
        if ring.first() != ring.last() {
            return Err(Error::StudyArea("boundary ring is not closed".into()));
        }
        StudyArea::new(Polygon::new(ring), crs_label, declared_unit)
    }
}

fn find_polygon(doc: &Value) -> Result<&Value> {
    match doc.get("type").and_then(Value::as_str) {
        Some("Polygon") => Ok(doc),
        Some("Feature") => doc
            .get("geometry")
            .ok_or_else(|| Error::StudyArea("feature without geometry".into()))
            .and_then(find_polygon),
        Some("FeatureCollection") => {
            let features = doc
                .get("features")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::StudyArea("collection without features".into()))?;
            match features.as_slice() {
                [one] => find_polygon(one),
                _ => Err(Error::StudyArea(format!(
                    "expected exactly one polygon feature, found {}",
                    features.len()
                ))),
            }
        }
        Some(other) => Err(Error::StudyArea(format!(
            "geometry type {other} is not a Polygon"
        ))),
        None => Err(Error::StudyArea("missing GeoJSON type".into())),
    }
}

fn parse_ring(v: &Value) -> Result<Vec<Coord>> {
    let pts = v
        .as_array()
        .ok_or_else(|| Error::StudyArea("ring is not an array".into()))?;
    pts.iter()
        .map(|p| {
            let xy = p.as_array().filter(|a| a.len() >= 2);
            match xy.map(|a| (a[0].as_f64(), a[1].as_f64())) {
                Some((Some(x), Some(y))) => Ok(Coord::new(x, y)),
                _ => Err(Error::StudyArea("invalid position in ring".into())),
            }
        })
        .collect()
}
