//! Static SVG maps and Zipf plots.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::geom::{Coord, Rect};

/// Sequential five-class ramp for choropleths, light to dark.
pub const RAMP: [&str; 5] = ["#ffffcc", "#a1dab4", "#41b6c4", "#2c7fb8", "#253494"];
pub const NO_DATA: &str = "#e6e6e6";
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

const MAP_X: f64 = 20.0;
const MAP_Y: f64 = 50.0;
const MAP_SIZE: f64 = 720.0;
const LEGEND_X: f64 = 760.0;
const WIDTH: f64 = 1000.0;
const HEIGHT: f64 = 830.0;

pub enum LayerData {
    /// Grid cells with an optional value for the choropleth.
    Cells(Vec<(Rect, Option<f64>)>),
    Lines(Vec<Vec<Coord>>),
    Points(Vec<Coord>),
}

pub struct MapLayer {
    pub name: String,
    pub data: LayerData,
}

impl MapLayer {
    pub fn new(name: impl Into<String>, data: LayerData) -> Self {
        MapLayer { name: name.into(), data }
    }

    fn extent(&self) -> Option<Rect> {
        let rects: Vec<Rect> = match &self.data {
            LayerData::Cells(c) => c.iter().map(|(r, _)| *r).collect(),
            LayerData::Lines(l) => l.iter().filter_map(|l| Rect::of_points(l)).collect(),
            LayerData::Points(p) => Rect::of_points(p).into_iter().collect(),
        };
        rects.into_iter().reduce(|a, b| a.union(&b))
    }
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Equal-interval class breaks: six bounds for five classes, or two
/// bounds when every value is equal.
pub fn class_breaks(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return Vec::new();
    }
    if lo == hi {
        return vec![lo, hi];
    }
    (0..=RAMP.len())
        .map(|i| lo + (hi - lo) * i as f64 / RAMP.len() as f64)
        .collect()
}

fn class_of(v: f64, breaks: &[f64]) -> usize {
    let (lo, hi) = (breaks[0], breaks[breaks.len() - 1]);
    if hi == lo {
        return 0;
    }
    (((v - lo) / (hi - lo) * RAMP.len() as f64).floor() as usize).min(RAMP.len() - 1)
}

/// Largest 1, 2 or 5 times a power of ten not above `target`.
fn nice_length(target: f64) -> f64 {
    let p = 10f64.powf(target.log10().floor());
    [5.0, 2.0, 1.0].into_iter().map(|m| m * p).find(|&v| v <= target).unwrap_or(p)
}

fn fmt_length(m: f64) -> String {
    if m >= 1000.0 {
        format!("{} km", m / 1000.0)
    } else {
        format!("{m} m")
    }
}

struct Transform {
    min: Coord,
    scale: f64,
    dx: f64,
    dy: f64,
}

impl Transform {
    fn new(extent: Rect) -> Self {
        let w = extent.width().max(1.0);
        let h = extent.height().max(1.0);
        let scale = (MAP_SIZE / w).min(MAP_SIZE / h);
        Transform {
            min: extent.min,
            scale,
            dx: (MAP_SIZE - w * scale) / 2.0,
            dy: (MAP_SIZE - h * scale) / 2.0,
        }
    }

    fn apply(&self, c: &Coord) -> (f64, f64) {
        (
            MAP_X + self.dx + (c.x - self.min.x) * self.scale,
            MAP_Y + MAP_SIZE - self.dy - (c.y - self.min.y) * self.scale,
        )
    }

    fn path(&self, line: &[Coord]) -> String {
        let mut d = String::new();
        for (i, c) in line.iter().enumerate() {
            let (x, y) = self.apply(c);
            let _ = write!(d, "{}{x:.2},{y:.2}", if i == 0 { "M" } else { " L" });
        }
        d
    }
}

/// Renders layers bottom to top on a fixed canvas with legend and scale bar.
pub fn render_svg_map(title: &str, layers: &[MapLayer]) -> Result<String> {
    if layers.is_empty() {
        return Err(Error::Output(format!("map '{title}' has no layers")));
    }
    let extent = layers
        .iter()
        .filter_map(MapLayer::extent)
        .reduce(|a, b| a.union(&b))
        .unwrap_or(Rect::new(Coord::new(0.0, 0.0), Coord::new(1.0, 1.0)));
    let t = Transform::new(extent);
    let mut body = String::new();
    let mut legend = String::new();
    let mut ly = MAP_Y;
    let mut styled = 0;

    for layer in layers {
        let _ = writeln!(
            legend,
            r#"<text x="{LEGEND_X}" y="{:.2}" font-weight="bold">{}</text>"#,
            ly + 12.0,
            escape(&layer.name)
        );
        ly += 20.0;
        match &layer.data {
            LayerData::Cells(cells) => {
                let values: Vec<f64> = cells.iter().filter_map(|(_, v)| *v).collect();
                let breaks = class_breaks(&values);
                let _ = writeln!(body, r#"<g class="cells">"#);
                for (r, v) in cells {
                    let fill = match v {
                        Some(v) => RAMP[class_of(*v, &breaks)],
                        None => NO_DATA,
                    };
                    let (x0, y1) = t.apply(&r.min);
                    let (x1, y0) = t.apply(&r.max);
                    let _ = writeln!(
                        body,
                        r##"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{fill}" stroke="#ffffff" stroke-width="0.5"/>"##,
                        x1 - x0,
                        y1 - y0
                    );
                }
                let _ = writeln!(body, "</g>");
                let classes = if breaks.len() == 2 { 1 } else { breaks.len().saturating_sub(1) };
                for i in 0..classes {
                    let _ = writeln!(
                        legend,
                        r##"<rect x="{LEGEND_X}" y="{ly:.2}" width="16" height="12" fill="{}" stroke="#999999"/><text x="{:.2}" y="{:.2}">{:.1} to {:.1}</text>"##,
                        RAMP[i],
                        LEGEND_X + 22.0,
                        ly + 10.0,
                        breaks[i],
                        breaks[(i + 1).min(breaks.len() - 1)]
                    );
                    ly += 16.0;
                }
                if values.len() < cells.len() {
                    let _ = writeln!(
                        legend,
                        r##"<rect x="{LEGEND_X}" y="{ly:.2}" width="16" height="12" fill="{NO_DATA}" stroke="#999999"/><text x="{:.2}" y="{:.2}">no data</text>"##,
                        LEGEND_X + 22.0,
                        ly + 10.0
                    );
                    ly += 16.0;
                }
            }
            LayerData::Lines(lines) => {
                let color = PALETTE[styled % PALETTE.len()];
                let dash = if styled % 2 == 1 { r#" stroke-dasharray="6,3""# } else { "" };
                styled += 1;
                let _ = writeln!(
                    body,
                    r#"<g fill="none" stroke="{color}" stroke-width="1.5"{dash}>"#
                );
                for l in lines {
                    let _ = writeln!(body, r#"<path d="{}"/>"#, t.path(l));
                }
                let _ = writeln!(body, "</g>");
                let _ = writeln!(
                    legend,
                    r#"<line x1="{LEGEND_X}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{} lines</text>"#,
                    ly + 6.0,
                    LEGEND_X + 16.0,
                    ly + 6.0,
                    LEGEND_X + 22.0,
                    ly + 10.0,
                    lines.len()
                );
                ly += 16.0;
            }
            LayerData::Points(points) => {
                let color = PALETTE[styled % PALETTE.len()];
                styled += 1;
                let _ = writeln!(body, r##"<g fill="{color}" stroke="#000000" stroke-width="0.5">"##);
                for p in points {
                    let (x, y) = t.apply(p);
                    let _ = writeln!(body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3"/>"#);
                }
                let _ = writeln!(body, "</g>");
                let _ = writeln!(
                    legend,
                    r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}" stroke="#000000" stroke-width="0.5"/><text x="{:.2}" y="{:.2}">{} points</text>"##,
                    LEGEND_X + 8.0,
                    ly + 6.0,
                    LEGEND_X + 22.0,
                    ly + 10.0,
                    points.len()
                );
                ly += 16.0;
            }
        }
        ly += 8.0;
    }

    // Scale bar of roughly a fifth of the drawn width.
    let bar_m = nice_length(extent.width().max(1.0) / 5.0);
    let bar_px = bar_m * t.scale;
    let by = MAP_Y + MAP_SIZE + 30.0;
    let scale_bar = format!(
        r##"<g class="scale-bar"><line x1="{MAP_X}" y1="{by:.2}" x2="{:.2}" y2="{by:.2}" stroke="#000000" stroke-width="3"/><text x="{MAP_X}" y="{:.2}">{}</text></g>"##,
        MAP_X + bar_px,
        by + 18.0,
        fmt_length(bar_m)
    );

    Ok(format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="#ffffff"/>
<text x="{MAP_X}" y="30" font-size="16" font-weight="bold">{}</text>
<rect x="{MAP_X}" y="{MAP_Y}" width="{MAP_SIZE}" height="{MAP_SIZE}" fill="none" stroke="#cccccc"/>
{body}{legend}{scale_bar}
</svg>
"##,
        escape(title)
    ))
}

fn decade_label(k: i32) -> String {
    if k >= 0 {
        format!("{}", 10u64.pow(k as u32))
    } else {
        format!("{}", 10f64.powi(k))
    }
}

/// Log-log scatter of component rank against length, one marker style per
/// series.
pub fn render_zipf_svg(title: &str, series: &[(&str, &[(usize, f64)])]) -> String {
    const X0: f64 = 80.0;
    const Y0: f64 = 50.0;
    const W: f64 = 600.0;
    const H: f64 = 400.0;
    let points: Vec<(usize, f64)> = series
        .iter()
        .flat_map(|(_, s)| s.iter().copied())
        .filter(|&(_, l)| l > 0.0)
        .collect();
    let max_rank = points.iter().map(|p| p.0).max().unwrap_or(1).max(1);
    let x_dec = ((max_rank as f64).log10().ceil() as i32).max(1);
    let lmin = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let lmax = points.iter().map(|p| p.1).fold(0.0, f64::max);
    let (y_lo, mut y_hi) = if points.is_empty() {
        (0, 1)
    } else {
        (lmin.log10().floor() as i32, lmax.log10().ceil() as i32)
    };
    if y_hi <= y_lo {
        y_hi = y_lo + 1;
    }
    let px = |r: f64| X0 + r.log10() / x_dec as f64 * W;
    let py = |l: f64| Y0 + H - (l.log10() - y_lo as f64) / (y_hi - y_lo) as f64 * H;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="760" height="520" viewBox="0 0 760 520" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="#ffffff"/>
<text x="{X0}" y="30" font-size="16" font-weight="bold">{}</text>
<rect x="{X0}" y="{Y0}" width="{W}" height="{H}" fill="none" stroke="#000000"/>"##,
        escape(title)
    );
    for k in 0..=x_dec {
        let x = px(10f64.powi(k));
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000000"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            Y0 + H,
            Y0 + H + 5.0,
            Y0 + H + 20.0,
            decade_label(k)
        );
    }
    for k in y_lo..=y_hi {
        let y = Y0 + H - (k - y_lo) as f64 / (y_hi - y_lo) as f64 * H;
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{X0}" y2="{y:.2}" stroke="#000000"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            X0 - 5.0,
            X0 - 8.0,
            y + 4.0,
            decade_label(k)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">component rank</text>
<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">component length (m)</text>"#,
        X0 + W / 2.0,
        Y0 + H + 40.0,
        Y0 + H / 2.0,
        Y0 + H / 2.0
    );
    for (i, (name, data)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, r##"<g class="series" fill="{color}" stroke="#000000" stroke-width="0.5">"##);
        for &(r, l) in data.iter().filter(|p| p.1 > 0.0) {
            let (x, y) = (px(r as f64), py(l));
            if i % 2 == 0 {
                let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4"/>"#);
            } else {
                let _ = writeln!(s, r#"<rect x="{:.2}" y="{:.2}" width="8" height="8"/>"#, x - 4.0, y - 4.0);
            }
        }
        let _ = writeln!(s, "</g>");
        let ly = Y0 + 10.0 + i as f64 * 18.0;
        let marker = if i % 2 == 0 {
            format!(r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}" stroke="#000000"/>"##, X0 + W + 20.0, ly)
        } else {
            format!(r##"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="{color}" stroke="#000000"/>"##, X0 + W + 16.0, ly - 4.0)
        };
        let _ = writeln!(s, r#"{marker}<text x="{:.2}" y="{:.2}">{}</text>"#, X0 + W + 30.0, ly + 4.0, escape(name));
    }
    if points.is_empty() {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">no components</text>"#, X0 + W / 2.0, Y0 + H / 2.0);
    }
    s.push_str("</svg>\n");
    s
}
