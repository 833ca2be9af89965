//! Fixture writers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub type Line = Vec<(f64, f64)>;

#[derive(Debug, Clone)]
pub struct Way {
    pub tags: Vec<(String, String)>,
    pub pts: Line,
}

impl Way {
    pub fn new(pts: Line, tags: &[(&str, &str)]) -> Self {
        Way {
            tags: tags.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            pts,
        }
    }

    pub fn cycleway(pts: Line) -> Self {
        Way::new(pts, &[("highway", "cycleway")])
    }
}

/// OSM XML with projected coordinates; equal coordinates share a node.
pub fn osm_xml(ways: &[Way]) -> String {
    let mut ids: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let mut nodes = String::new();
    let mut body = String::new();
    for (i, w) in ways.iter().enumerate() {
        let _ = writeln!(body, "  <way id=\"{}\">", i + 1);
        for &(x, y) in &w.pts {
            let next = ids.len() + 1;
            let id = *ids.entry((x.to_bits(), y.to_bits())).or_insert_with(|| {
                let _ = writeln!(nodes, "  <node id=\"{next}\" lon=\"{x}\" lat=\"{y}\"/>");
                next
            });
            let _ = writeln!(body, "    <nd ref=\"{id}\"/>");
        }
        for (k, v) in &w.tags {
            let _ = writeln!(body, "    <tag k=\"{k}\" v=\"{v}\"/>");
        }
        body.push_str("  </way>\n");
    }
    format!("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm version=\"0.6\">\n{nodes}{body}</osm>\n")
}

/// Reference GeoJSON; the tags become feature properties.
pub fn reference_geojson(ways: &[Way]) -> String {
    let features: Vec<_> = ways
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let props: serde_json::Map<_, _> = w.tags.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
            json!({
                "type": "Feature",
                "id": format!("r{i}"),
                "properties": props,
                "geometry": {
                    "type": "LineString",
                    "coordinates": w.pts.iter().map(|&(x, y)| vec![x, y]).collect::<Vec<_>>(),
                },
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features}).to_string()
}

pub fn rect_area(x0: f64, y0: f64, x1: f64, y1: f64) -> String {
    json!({
        "type": "Polygon",
        "coordinates": [[[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]],
    })
    .to_string()
}

/// Writes the inputs and a config file into `dir`; returns the config path.
pub fn write_run(dir: &Path, area: &str, osm: Option<&[Way]>, reference: Option<&[Way]>, extra: &str) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join("area.geojson"), area).unwrap();
    let mut cfg = String::from("[study_area]\npath = \"area.geojson\"\ncrs = \"EPSG:25832\"\n\n");
    if let Some(w) = osm {
        fs::write(dir.join("osm.osm"), osm_xml(w)).unwrap();
        cfg.push_str("[osm]\npath = \"osm.osm\"\n\n");
    }
    if let Some(w) = reference {
        fs::write(dir.join("reference.geojson"), reference_geojson(w)).unwrap();
        cfg.push_str("[reference]\npath = \"reference.geojson\"\n\n");
    }
    cfg.push_str(extra);
    let path = dir.join("config.toml");
    fs::write(&path, cfg).unwrap();
    path
}

/// Small hand-made network: a connected square with a spur and a loose
/// segment, plus a reference copy shifted by 2 m that lacks the loose one.
pub fn small_pair() -> (String, Vec<Way>, Vec<Way>) {
    let osm = vec![
        Way::new(vec![(100., 100.), (600., 100.)], &[("highway", "cycleway"), ("surface", "asphalt")]),
        Way::new(vec![(600., 100.), (600., 600.)], &[("highway", "cycleway"), ("surface", "asphalt")]),
        Way::new(vec![(600., 600.), (100., 600.)], &[("highway", "residential"), ("cycleway", "lane")]),
        Way::new(vec![(100., 600.), (100., 100.)], &[("highway", "cycleway"), ("surface", "gravel")]),
        Way::cycleway(vec![(600., 600.), (1400., 1400.)]),
        Way::cycleway(vec![(1500., 200.), (1800., 200.)]),
        Way::new(vec![(0., 0.), (50., 50.)], &[("highway", "primary")]),
    ];
    let reference = osm[..5]
        .iter()
        .map(|w| {
            let pts = w.pts.iter().map(|&(x, y)| (x + 2.0, y)).collect();
            Way::new(pts, &[("protection", "protected")])
        })
        .collect();
    (rect_area(0., 0., 2000., 2000.), osm, reference)
}

/// Lattice network of `n * n` nodes with `spacing` m between neighbours.
/// A share of the lattice edges is dropped so that several components,
/// dangling nodes and gaps appear; tags vary by a seeded draw.
pub fn lattice(seed: u64, n: usize, spacing: f64, drop: f64) -> Vec<Way> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ways = Vec::new();
    let at = |i: usize, j: usize| (50.0 + i as f64 * spacing, 50.0 + j as f64 * spacing);
    for i in 0..n {
        for j in 0..n {
            for (di, dj) in [(1, 0), (0, 1)] {
                if i + di >= n || j + dj >= n || rng.gen_bool(drop) {
                    continue;
                }
                let tags: &[(&str, &str)] = match rng.gen_range(0..4) {
                    0 => &[("highway", "cycleway"), ("surface", "asphalt")],
                    1 => &[("highway", "residential"), ("cycleway", "lane")],
                    2 => &[("highway", "path"), ("bicycle", "designated"), ("lit", "yes")],
                    _ => &[("highway", "cycleway"), ("oneway", "yes")],
                };
                ways.push(Way::new(vec![at(i, j), at(i + di, j + dj)], tags));
            }
        }
    }
    ways
}

/// Copy of `ways` shifted by `dx` with a share of features dropped.
pub fn shifted_reference(seed: u64, ways: &[Way], dx: f64, drop: f64) -> Vec<Way> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ways.iter()
        .filter(|_| !rng.gen_bool(drop))
        .map(|w| {
            let protected = w.tags.iter().any(|(k, v)| k == "highway" && v != "residential");
            Way::new(
                w.pts.iter().map(|&(x, y)| (x + dx, y)).collect(),
                &[("protection", if protected { "protected" } else { "none" })],
            )
        })
        .collect()
}
