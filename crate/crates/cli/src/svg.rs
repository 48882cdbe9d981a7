//! Minimal self-contained SVG line charts.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const PANEL: f64 = 220.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 28.0;
const BOTTOM: f64 = 36.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// One panel: a set of series sharing axes, with optional shaded time spans.
#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub shaded: Vec<(f64, f64)>,
    /// Draw a dashed line at y = 0.
    pub zero_line: bool,
}

fn extent(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.filter(|v| v.is_finite()).fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo < 1e-9 {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let raw = (hi - lo) / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

impl Chart {
    fn render(&self, out: &mut String, y0: f64) {
        let xs = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
        let ys = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
        let (x_lo, x_hi) = extent(xs).map_or((0.0, 1.0), |(a, b)| if b > a { (a, b) } else { (a, a + 1.0) });
        let (mut y_lo, mut y_hi) = extent(ys).unwrap_or((0.0, 1.0));
        if self.zero_line {
            y_lo = y_lo.min(0.0);
            y_hi = y_hi.max(0.0);
        }
        let (y_lo, y_hi) = padded(y_lo, y_hi);
        let w = WIDTH - LEFT - RIGHT;
        let h = PANEL - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * w;
        let sy = |y: f64| y0 + TOP + (y_hi - y) / (y_hi - y_lo) * h;

        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="13" font-weight="bold">{}</text>"#,
            LEFT,
            y0 + 18.0,
            escape(&self.title)
        );
        for &(a, b) in &self.shaded {
            let (a, b) = (a.max(x_lo), b.min(x_hi));
            if b > a {
                let _ = writeln!(
                    out,
                    r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#fdd49e" opacity="0.5"/>"##,
                    sx(a),
                    y0 + TOP,
                    sx(b) - sx(a),
                    h
                );
            }
        }
        let _ = writeln!(
            out,
            r##"<rect x="{LEFT:.1}" y="{:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#444"/>"##,
            y0 + TOP
        );
        for t in ticks(x_lo, x_hi, 8) {
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{yb:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/><text x="{x:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"##,
                y0 + TOP + h + 4.0,
                y0 + TOP + h + 15.0,
                format_tick(t),
                x = sx(t),
                yb = y0 + TOP + h,
            );
        }
        for t in ticks(y_lo, y_hi, 4) {
            let _ = writeln!(
                out,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="#444"/><text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"##,
                LEFT - 4.0,
                LEFT - 6.0,
                sy(t) + 3.0,
                format_tick(t),
                y = sy(t),
            );
        }
        if self.zero_line {
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
                LEFT + w,
                y = sy(0.0)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
            LEFT + w / 2.0,
            y0 + PANEL - 4.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.1}" font-size="11" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
            y0 + TOP + h / 2.0,
            y0 + TOP + h / 2.0,
            escape(&self.y_label)
        );
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut d = String::new();
            let mut pen_down = false;
            for &(x, y) in &s.points {
                if !(x.is_finite() && y.is_finite()) {
                    pen_down = false;
                    continue;
                }
                let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { 'L' } else { 'M' }, sx(x), sy(y));
                pen_down = true;
            }
            let _ = writeln!(
                out,
                r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.4"/>"#,
                d.trim_end()
            );
            if self.series.len() > 1 {
                let ly = y0 + TOP + 12.0 + 13.0 * i as f64;
                let _ = writeln!(
                    out,
                    r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#,
                    LEFT + w - 110.0,
                    LEFT + w - 92.0,
                    LEFT + w - 88.0,
                    ly + 3.5,
                    escape(&s.label)
                );
            }
        }
    }
}

fn format_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Stacks the charts vertically into one SVG document.
pub fn render(charts: &[Chart]) -> String {
    let height = PANEL * charts.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, c) in charts.iter().enumerate() {
        c.render(&mut out, i as f64 * PANEL);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn document_is_self_contained() {
        let chart = Chart {
            title: "u(t) <m/s²>".into(),
            x_label: "t [s]".into(),
            y_label: "u".into(),
            series: vec![Series {
                label: "1".into(),
                points: vec![(0.0, -0.05), (26.0, 0.0)],
            }],
            shaded: vec![(3.0, 5.0)],
            zero_line: true,
        };
        let svg = render(&[chart.clone(), chart]);
        assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(!svg.contains("href"));
        assert!(svg.contains("&lt;m/s²&gt;"));
        assert_eq!(svg.matches("<path").count(), 2);
    }

    #[test]
    fn tick_steps_are_round() {
        assert_eq!(ticks(0.0, 26.0, 8), vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0]);
        assert_eq!(format_tick(0.30000000000000004), "0.3");
        assert_eq!(format_tick(-0.0), "0");
    }
}
