//! Self-contained static HTML report.

use std::fmt::Write;

use super::svg::escape;

pub struct Table {
    pub caption: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Two-column metric/value table.
    pub fn key_values(caption: &str, rows: Vec<(String, String)>) -> Self {
        Table {
            caption: caption.into(),
            header: vec!["metric".into(), "value".into()],
            rows: rows.into_iter().map(|(k, v)| vec![k, v]).collect(),
        }
    }
}

pub struct Figure {
    pub caption: String,
    /// Path of the emitted SVG file, relative to the report.
    pub source: String,
    pub svg: String,
}

pub struct Section {
    pub id: String,
    pub title: String,
    pub tables: Vec<Table>,
    pub figures: Vec<Figure>,
}

const STYLE: &str = "body{font-family:sans-serif;margin:2em;max-width:1100px}\
table{border-collapse:collapse;margin:1em 0}\
td,th{border:1px solid #ccc;padding:2px 8px;text-align:left}\
th{background:#f0f0f0}\
figure{margin:1em 0}\
figcaption{font-style:italic}";

pub fn render_html(title: &str, sections: &[Section]) -> String {
    let mut h = String::new();
    let _ = writeln!(
        h,
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n<style>{STYLE}</style>\n</head>\n<body>\n<h1>{}</h1>",
        escape(title),
        escape(title)
    );
    if sections.len() > 1 {
        h.push_str("<nav><ul>\n");
        for s in sections {
            let _ = writeln!(h, "<li><a href=\"#{}\">{}</a></li>", s.id, escape(&s.title));
        }
        h.push_str("</ul></nav>\n");
    }
    for s in sections {
        let _ = writeln!(h, "<section id=\"{}\">\n<h2>{}</h2>", s.id, escape(&s.title));
        for t in &s.tables {
            let _ = writeln!(h, "<table>\n<caption>{}</caption>", escape(&t.caption));
            h.push_str("<tr>");
            for c in &t.header {
                let _ = write!(h, "<th>{}</th>", escape(c));
            }
            h.push_str("</tr>\n");
            for r in &t.rows {
                h.push_str("<tr>");
                for c in r {
                    let _ = write!(h, "<td>{}</td>", escape(c));
                }
                h.push_str("</tr>\n");
            }
            h.push_str("</table>\n");
        }
        for f in &s.figures {
            let _ = writeln!(
                h,
                "<figure data-source=\"{}\">\n{}<figcaption>{}</figcaption>\n</figure>",
                escape(&f.source),
                f.svg,
                escape(&f.caption)
            );
        }
        h.push_str("</section>\n");
    }
    h.push_str("</body>\n</html>\n");
    h
}
