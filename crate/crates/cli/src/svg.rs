//! Minimal SVG scatter plot of ratio columns against degree.

use std::fmt::Write;

use crate::table::Table;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 48.0;

/// `transferred_ratio` and `plain_ratio` against `degree`, with the
/// reference line at 3.
pub fn ratio_scatter(table: &Table) -> String {
    let degrees = table.numbers("degree");
    let series = [("transferred_ratio", "#1f77b4"), ("plain_ratio", "#d62728")];
    let x_max = degrees.iter().copied().fold(1.0, f64::max);
    let y_max = series
        .iter()
        .flat_map(|(c, _)| table.numbers(c))
        .fold(3.5f64, f64::max);
    let sx = |x: f64| PAD + (W - 2.0 * PAD) * x / x_max;
    let sy = |y: f64| H - PAD - (H - 2.0 * PAD) * y / y_max;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        H - PAD,
        W - PAD,
        H - PAD
    );
    let _ = writeln!(s, r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#, H - PAD);
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="gray" stroke-dasharray="4 4"/>"#,
        W - PAD,
        y = sy(3.0)
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">degree</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">norm / sup |f|</text>"#, H / 2.0, H / 2.0);
    for (k, (col, color)) in series.iter().enumerate() {
        for (x, y) in degrees.iter().zip(table.numbers(col)) {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" fill-opacity="0.7"/>"#, sx(*x), sy(y));
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{col}</text>"#,
            W - PAD - 130.0,
            PAD + 16.0 * k as f64
        );
    }
    s.push_str("</svg>\n");
    s
}
