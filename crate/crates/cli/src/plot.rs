//! Log–log SVG plot of an error report.

use std::fmt::Write;

use tamed_sde::ErrorReport;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Error against `Δt` per `p` on log2 axes, with a dashed slope-½ guide
/// through the first point of the lowest `p`.
pub fn error_plot(report: &ErrorReport) -> String {
    let pts: Vec<(f64, f64)> = report
        .rows
        .iter()
        .filter(|r| r.error > 0.0 && r.error.is_finite())
        .map(|r| (r.dt.log2(), r.error.log2()))
        .collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (mut x0, mut x1, mut y0, mut y1) = pts.iter().fold(
        (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    x0 = x0.floor() - 0.5;
    x1 = x1.ceil() + 0.5;
    y0 = y0.floor() - 0.5;
    y1 = y1.ceil() + 0.5;
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let (w, h) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let _ = writeln!(
        svg,
        r#"<clipPath id="frame"><rect x="{MARGIN}" y="{MARGIN}" width="{w}" height="{h}"/></clipPath>"#
    );
    let _ = writeln!(
        svg,
        r#"<g stroke="black" fill="none"><rect x="{MARGIN}" y="{MARGIN}" width="{w}" height="{h}"/></g>"#
    );
    let _ = writeln!(
        svg,
        r#"<g font-family="sans-serif" font-size="11" fill="black">"#
    );
    for e in (x0.ceil() as i32)..=(x1.floor() as i32) {
        let x = sx(f64::from(e));
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">2^{e}</text>"#,
            HEIGHT - MARGIN + 16.0
        );
    }
    for e in (y0.ceil() as i32)..=(y1.floor() as i32) {
        let y = sy(f64::from(e));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{y:.1}" text-anchor="end">2^{e}</text>"#,
            MARGIN - 6.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Δt</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">strong error</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    svg.push_str("</g>\n");

    let mut ps: Vec<f64> = report.rows.iter().map(|r| r.p).collect();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    let mut anchor = None;
    for (i, &p) in ps.iter().enumerate() {
        let line: Vec<(f64, f64)> = report
            .rows_for(p)
            .filter(|r| r.error > 0.0 && r.error.is_finite())
            .map(|r| (r.dt.log2(), r.error.log2()))
            .collect();
        if line.is_empty() {
            continue;
        }
        anchor.get_or_insert(line[0]);
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = line
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        for &(x, y) in &line {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" fill="{color}">p = {p}</text>"#,
            WIDTH - MARGIN - 70.0,
            MARGIN + 18.0 + 16.0 * i as f64
        );
    }
    if let Some((ax, ay)) = anchor {
        let y_at = |x: f64| ay + 0.5 * (x - ax);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="6 4" clip-path="url(#frame)"/>"#,
            sx(x0),
            sy(y_at(x0)),
            sx(x1),
            sy(y_at(x1))
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" fill="gray">slope 1/2</text>"#,
            MARGIN + 8.0,
            HEIGHT - MARGIN - 8.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}
