//! Minimal SVG rendering: line charts and categorical cell maps.

use std::fmt::Write as _;

const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#aec7e8", "#ffbb78",
];

pub fn colour(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Shortest decimal form with at most three fractional digits.
fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Line chart with axes, five ticks per axis and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, lines: &[Line]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (70.0, 160.0, 40.0, 50.0);
    let pts = lines.iter().flat_map(|l| l.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" font-size="16" text-anchor="middle" font-family="sans-serif">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle" font-family="sans-serif">{}</text>"#,
            sx(xv),
            top + ph + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end" font-family="sans-serif">{}</text>"#,
            left - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
        let _ = writeln!(out, r##"<line x1="{left}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#dddddd"/>"##, left + pw, sy(yv), sy(yv));
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle" font-family="sans-serif">{}</text>"#,
        left + pw / 2.0,
        h - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(18 {:.1}) rotate(-90)" font-size="12" text-anchor="middle" font-family="sans-serif">{}</text>"#,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, line) in lines.iter().enumerate() {
        let path: Vec<String> = line
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if !path.is_empty() {
            let _ = writeln!(out, r#"<polyline fill="none" stroke="{}" stroke-width="1.8" points="{}"/>"#, colour(i), path.join(" "));
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(out, r#"<rect x="{lx}" y="{:.1}" width="12" height="12" fill="{}"/>"#, ly - 9.0, colour(i));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" font-size="11" font-family="sans-serif">{}</text>"#,
            lx + 18.0,
            ly + 1.0,
            escape(&line.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// A `rows × cols` board of cells coloured by category; `None` cells are drawn dark.
pub fn cell_map(title: &str, rows: usize, cols: usize, cells: &[Option<usize>]) -> String {
    let size = (480.0 / rows.max(cols).max(1) as f64).clamp(4.0, 40.0);
    let (w, h) = (cols as f64 * size + 20.0, rows as f64 * size + 50.0);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="24" font-size="14" text-anchor="middle" font-family="sans-serif">{}</text>"#, w / 2.0, escape(title));
    for r in 0..rows {
        for c in 0..cols {
            let fill = match cells.get(r * cols + c).copied().flatten() {
                Some(label) => colour(label),
                None => "#333333",
            };
            let _ = writeln!(
                out,
                r#"<rect x="{:.1}" y="{:.1}" width="{size:.1}" height="{size:.1}" fill="{fill}" stroke="white" stroke-width="0.5"/>"#,
                10.0 + c as f64 * size,
                40.0 + r as f64 * size
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_short() {
        assert_eq!(tick(0.0), "0");
        assert_eq!(tick(2.5), "2.5");
        assert_eq!(tick(-0.0001), "0");
        assert_eq!(tick(100.0), "100");
    }

    #[test]
    fn svgs_are_well_formed_xml() {
        let lines = vec![
            Line { name: "a<b".into(), points: vec![(0.0, 1.0), (1.0, 2.0)] },
            Line { name: "flat".into(), points: vec![] },
        ];
        for svg in [
            line_chart("reward & success", "episode", "reward", &lines),
            line_chart("empty", "x", "y", &[]),
            cell_map("clusters", 2, 3, &[Some(0), None, Some(1), Some(1), None, Some(13)]),
        ] {
            let doc = roxmltree::Document::parse(&svg).expect("valid xml");
            assert_eq!(doc.root_element().tag_name().name(), "svg");
        }
    }
}
