use std::collections::HashMap;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{dedup_consecutive, Coord};
use crate::ingest::rules::{ClassificationRuleset, Tags};
use crate::ingest::RawFeature;
use crate::runlog::RunLog;

const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordUnits {
    /// `lon`/`lat` attributes already hold projected meters.
    #[default]
    Meters,
    Degrees,
}

/// Transform applied to geographic input before analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Projection {
    /// `x = a*lon + b*lat + c`, `y = d*lon + e*lat + f`.
    Affine {
        a: f64,
        b: f64,
        c: f64,
        d: f64,
        e: f64,
        f: f64,
    },
    /// Equirectangular projection about an origin; adequate for city-sized
    /// study areas.
    LocalTangent { origin_lon: f64, origin_lat: f64 },
}

impl Projection {
    pub fn apply(&self, lon: f64, lat: f64) -> Coord {
        match *self {
            Projection::Affine { a, b, c, d, e, f } => {
                Coord::new(a * lon + b * lat + c, d * lon + e * lat + f)
            }
            Projection::LocalTangent {
                origin_lon,
                origin_lat,
            } => {
                let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
                Coord::new(
                    (lon - origin_lon) * k * origin_lat.to_radians().cos(),
                    (lat - origin_lat) * k,
                )
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OsmOptions {
    #[serde(default)]
    pub units: CoordUnits,
    #[serde(default)]
    pub projection: Option<Projection>,
}

fn line_of(bytes: &[u8], pos: usize) -> usize {
    1 + bytes[..pos.min(bytes.len())]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
}

fn attr(e: &BytesStart, name: &[u8], bytes: &[u8], pos: usize) -> Result<Option<String>> {
    for a in e.attributes() {
        let a = a.map_err(|err| Error::Xml {
            line: line_of(bytes, pos),
            message: err.to_string(),
        })?;
        if a.key.as_ref() == name {
            let v = a.unescape_value().map_err(|err| Error::Xml {
                line: line_of(bytes, pos),
                message: err.to_string(),
            })?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

fn parse_num<T: std::str::FromStr>(
    v: Option<String>,
    what: &str,
    bytes: &[u8],
    pos: usize,
) -> Result<Option<T>> {
    match v {
        None => Ok(None),
        Some(s) => s.trim().parse().map(Some).map_err(|_| Error::Xml {
            line: line_of(bytes, pos),
            message: format!("invalid {what} '{s}'"),
        }),
    }
}

struct Way {
    id: i64,
    refs: Vec<i64>,
    tags: Tags,
}

/// Reads OSM XML and returns one feature per way accepted by the ruleset's
/// include predicates.
pub fn parse_osm_xml(
    bytes: &[u8],
    ruleset: &ClassificationRuleset,
    options: &OsmOptions,
    log: &RunLog,
) -> Result<Vec<RawFeature>> {
    let mut reader = Reader::from_reader(bytes);
    reader.config_mut().check_end_names = true;

    let mut nodes: HashMap<i64, (f64, f64)> = HashMap::new();
    let mut ways: Vec<Way> = Vec::new();
    let mut current: Option<Way> = None;
    let mut depth = 0usize;
    let mut saw_root = false;
    let mut buf = Vec::new();

    loop {
        let pos = reader.buffer_position() as usize;
        let event = reader.read_event_into(&mut buf).map_err(|e| Error::Xml {
            line: line_of(bytes, reader.error_position() as usize),
            message: e.to_string(),
        })?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let empty = matches!(event, Event::Empty(_));
                if !empty {
                    depth += 1;
                }
                match e.name().as_ref() {
                    b"osm" => saw_root = true,
                    b"node" => {
                        let id: Option<i64> = parse_num(attr(e, b"id", bytes, pos)?, "node id", bytes, pos)?;
                        let lat: Option<f64> = parse_num(attr(e, b"lat", bytes, pos)?, "lat", bytes, pos)?;
                        let lon: Option<f64> = parse_num(attr(e, b"lon", bytes, pos)?, "lon", bytes, pos)?;
                        match (id, lon, lat) {
                            (Some(id), Some(lon), Some(lat)) => {
                                nodes.insert(id, (lon, lat));
                            }
                            (None, _, _) => {
                                return Err(Error::Xml {
                                    line: line_of(bytes, pos),
                                    message: "node without id".into(),
                                })
                            }
                            _ => {}
                        }
                    }
                    b"way" => {
                        let id: i64 = parse_num(attr(e, b"id", bytes, pos)?, "way id", bytes, pos)?
                            .ok_or_else(|| Error::Xml {
                                line: line_of(bytes, pos),
                                message: "way without id".into(),
                            })?;
                        let way = Way {
                            id,
                            refs: Vec::new(),
                            tags: Tags::new(),
                        };
                        if empty {
                            ways.push(way);
                        } else {
                            current = Some(way);
                        }
                    }
                    b"nd" => {
                        if let Some(w) = current.as_mut() {
                            let r: i64 = parse_num(attr(e, b"ref", bytes, pos)?, "nd ref", bytes, pos)?
                                .ok_or_else(|| Error::Xml {
                                    line: line_of(bytes, pos),
                                    message: "nd without ref".into(),
                                })?;
                            w.refs.push(r);
                        }
                    }
                    b"tag" => {
                        if let Some(w) = current.as_mut() {
                            let k = attr(e, b"k", bytes, pos)?;
                            let v = attr(e, b"v", bytes, pos)?;
                            if let (Some(k), Some(v)) = (k, v) {
                                w.tags.insert(k, v);
                            }
                        }
                    }
                    _ => {}
                }
            }
            Event::End(ref e) => {
                depth = depth.saturating_sub(1);
                if e.name().as_ref() == b"way" {
                    if let Some(w) = current.take() {
                        ways.push(w);
                    }
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if depth != 0 {
        return Err(Error::Xml {
            line: line_of(bytes, bytes.len()),
            message: "unexpected end of document".into(),
        });
    }
    if !saw_root {
        return Err(Error::Xml {
            line: 1,
            message: "missing <osm> root element".into(),
        });
    }

    let project = |lon: f64, lat: f64| match (options.units, options.projection) {
        (CoordUnits::Degrees, Some(p)) => p.apply(lon, lat),
        _ => Coord::new(lon, lat),
    };
    if options.units == CoordUnits::Degrees && options.projection.is_none() {
        log.warn(
            "ingest",
            "OSM coordinates declared in degrees without a projection; passing through unchanged",
        );
    }

    let mut features = Vec::new();
    for w in ways {
        if !ruleset.includes(&w.tags) {
            continue;
        }
        let mut geometry = Vec::with_capacity(w.refs.len());
        for r in &w.refs {
            let (lon, lat) = nodes.get(r).ok_or(Error::MissingNode {
                way_id: w.id,
                node_id: *r,
            })?;
            geometry.push(project(*lon, *lat));
        }
        dedup_consecutive(&mut geometry);
        if geometry.len() < 2 {
            log.warn("ingest", format!("way {} has fewer than two distinct nodes; skipped", w.id));
            continue;
        }
        features.push(RawFeature {
            source_id: w.id.to_string(),
            geometry,
            tags: w.tags,
        });
    }
    Ok(features)
}
