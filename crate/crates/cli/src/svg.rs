//! Static error-versus-step-size chart.

use std::fmt::Write;

use crate::format::sig12;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

/// One plotted estimate: relative error in percent with its CI whisker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorPoint {
    pub log10_delta: f64,
    pub err_pct: f64,
    pub lo_pct: f64,
    pub hi_pct: f64,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Range padded by 5%, widened to unit length around a single value.
fn span(lo: f64, hi: f64) -> (f64, f64) {
    if !(hi > lo) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Renders the chart; `metadata` is embedded verbatim (escaped) so the file
/// carries its own provenance.
pub fn render(points: &[ErrorPoint], title: &str, metadata: &str) -> String {
    let finite: Vec<_> = points
        .iter()
        .filter(|p| p.log10_delta.is_finite() && p.err_pct.is_finite())
        .collect();
    let (x_lo, x_hi) = span(
        finite.iter().map(|p| p.log10_delta).fold(f64::INFINITY, f64::min),
        finite.iter().map(|p| p.log10_delta).fold(f64::NEG_INFINITY, f64::max),
    );
    // zero is always in range so the reference line is drawn
    let (y_lo, y_hi) = span(
        finite.iter().map(|p| p.lo_pct.min(p.err_pct)).fold(0.0, f64::min),
        finite.iter().map(|p| p.hi_pct.max(p.err_pct)).fold(0.0, f64::max),
    );
    let (x_lo, x_hi) = if finite.is_empty() { (-3.5, -0.5) } else { (x_lo, x_hi) };
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * (WIDTH - LEFT - RIGHT);
    let sy = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * (HEIGHT - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, "<metadata>{}</metadata>", escape(metadata));
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (bx0, bx1, by0, by1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        s,
        r#"<rect x="{bx0}" y="{by0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        bx1 - bx0,
        by1 - by0
    );
    let _ = writeln!(
        s,
        r#"<line id="zero" x1="{bx0}" y1="{z:.2}" x2="{bx1}" y2="{z:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        z = sy(0.0)
    );
    for (v, label) in [(x_lo, x_lo), (x_hi, x_hi)] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            sx(v),
            by1 + 16.0,
            sig12((label * 100.0).round() / 100.0)
        );
    }
    for v in [y_lo, 0.0, y_hi] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            bx0 - 6.0,
            sy(v) + 4.0,
            sig12((v * 100.0).round() / 100.0)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">log10(delta)</text>"#,
        (bx0 + bx1) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{y}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {y})">Err (%)</text>"#,
        y = (by0 + by1) / 2.0
    );
    for p in &finite {
        let x = sx(p.log10_delta);
        let _ = writeln!(
            s,
            r#"<line class="whisker" x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="steelblue"/>"#,
            sy(p.lo_pct),
            sy(p.hi_pct)
        );
        let _ = writeln!(
            s,
            r#"<circle class="point" cx="{x:.2}" cy="{:.2}" r="3.5" fill="steelblue"/>"#,
            sy(p.err_pct)
        );
    }
    s.push_str("</svg>\n");
    s
}
