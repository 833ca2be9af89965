use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geom::{dedup_consecutive, Coord};
use crate::ingest::rules::{ClassificationRuleset, Tags};
use crate::ingest::RawFeature;
use crate::runlog::RunLog;

/// Where a target field's value comes from in the GeoJSON properties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttributeSource {
    Property(String),
    WithDefault {
        property: String,
        #[serde(default)]
        default: Option<String>,
    },
}

impl AttributeSource {
    fn property(&self) -> &str {
        match self {
            AttributeSource::Property(p) => p,
            AttributeSource::WithDefault { property, .. } => property,
        }
    }

    fn default_value(&self) -> Option<&str> {
        match self {
            AttributeSource::Property(_) => None,
            AttributeSource::WithDefault { default, .. } => default.as_deref(),
        }
    }
}

/// Target tag key to source property. When empty, every property is copied
/// under its own name.
pub type AttributeMap = BTreeMap<String, AttributeSource>;

fn value_to_string(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        other => Some(other.to_string()),
    }
}

fn feature_name(feature: &Value, index: usize) -> String {
    match feature.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => index.to_string(),
    }
}

fn parse_line(coords: &Value, name: &str) -> Result<Vec<Coord>> {
    let pts = coords.as_array().ok_or_else(|| Error::Feature {
        feature: name.to_string(),
        message: "coordinates are not an array".into(),
    })?;
    pts.iter()
        .map(|p| {
            let a = p.as_array().filter(|a| a.len() >= 2);
            match a.map(|a| (a[0].as_f64(), a[1].as_f64())) {
                Some((Some(x), Some(y))) => Ok(Coord::new(x, y)),
                _ => Err(Error::Feature {
                    feature: name.to_string(),
                    message: "invalid position".into(),
                }),
            }
        })
        .collect()
}

/// Reads a FeatureCollection of LineString/MultiLineString features.
/// MultiLineStrings are split into one feature per part with ids `<id>#<i>`.
pub fn parse_geojson(
    bytes: &[u8],
    attribute_map: &AttributeMap,
    ruleset: &ClassificationRuleset,
    log: &RunLog,
) -> Result<Vec<RawFeature>> {
    let doc: Value =
        serde_json::from_slice(bytes).map_err(|e| Error::Input(format!("invalid GeoJSON: {e}")))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::Input("GeoJSON root must be a FeatureCollection".into()));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Input("FeatureCollection without features array".into()))?;

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (index, feature) in features.iter().enumerate() {
        let name = feature_name(feature, index);
        if !seen.insert(name.clone()) {
            return Err(Error::Feature {
                feature: name,
                message: "duplicate feature id".into(),
            });
        }
        let props = feature
            .get("properties")
            .and_then(Value::as_object)
            .cloned()
            .unwrap_or_default();

        let mut tags = Tags::new();
        if attribute_map.is_empty() {
            for (k, v) in &props {
                if let Some(s) = value_to_string(v) {
                    tags.insert(k.clone(), s);
                }
            }
        } else {
            for (target, source) in attribute_map {
                match props.get(source.property()).and_then(value_to_string) {
                    Some(v) => {
                        tags.insert(target.clone(), v);
                    }
                    None => match source.default_value() {
                        Some(d) => {
                            tags.insert(target.clone(), d.to_string());
                        }
                        None => {
                            return Err(Error::Feature {
                                feature: name,
                                message: format!("missing property '{}'", source.property()),
                            })
                        }
                    },
                }
            }
        }

        let geometry = feature.get("geometry").ok_or_else(|| Error::Feature {
            feature: name.clone(),
            message: "missing geometry".into(),
        })?;
        let gtype = geometry.get("type").and_then(Value::as_str).unwrap_or("");
        let coords = geometry.get("coordinates").unwrap_or(&Value::Null);
        let parts: Vec<(String, Vec<Coord>)> = match gtype {
            "LineString" => vec![(name.clone(), parse_line(coords, &name)?)],
            "MultiLineString" => {
                let lines = coords.as_array().ok_or_else(|| Error::Feature {
                    feature: name.clone(),
                    message: "coordinates are not an array".into(),
                })?;
                lines
                    .iter()
                    .enumerate()
                    .map(|(i, l)| Ok((format!("{name}#{i}"), parse_line(l, &name)?)))
                    .collect::<Result<_>>()?
            }
            other => {
                return Err(Error::Feature {
                    feature: name,
                    message: format!("geometry type '{other}' is not a line"),
                })
            }
        };

        if !ruleset.includes(&tags) {
            continue;
        }
        for (source_id, mut line) in parts {
            dedup_consecutive(&mut line);
            if line.len() < 2 {
                log.warn("ingest", format!("feature {source_id} is degenerate; skipped"));
                continue;
            }
            out.push(RawFeature {
                source_id,
                geometry: line,
                tags: tags.clone(),
            });
        }
    }
    Ok(out)
}
