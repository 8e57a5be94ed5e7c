use std::fmt::Write as _;

use crate::ensemble::{CurvePoint, FusionMethod};
use crate::Label;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

/// Two side-by-side panels of F1 against ensemble size, one per class, with
/// a shaded band of one standard deviation around each method's mean.
pub fn f1_curve_svg(curves: &[(FusionMethod, Vec<CurvePoint>)]) -> String {
    let max_m = curves
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.machines))
        .max()
        .unwrap_or(1)
        .max(2) as f64;
    let panel_w = (WIDTH - 3.0 * MARGIN) / 2.0;
    let panel_h = HEIGHT - 2.0 * MARGIN;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    for (panel, label) in [Label::Depressed, Label::NonDepressed].into_iter().enumerate() {
        let x0 = MARGIN + panel as f64 * (panel_w + MARGIN);
        let y0 = MARGIN;
        let px = |m: f64| x0 + (m - 1.0) / (max_m - 1.0) * panel_w;
        let py = |f: f64| y0 + (1.0 - f.clamp(0.0, 1.0)) * panel_h;
        writeln!(
            s,
            r##"<rect x="{x0}" y="{y0}" width="{panel_w}" height="{panel_h}" fill="none" stroke="#444"/>"##
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">F1 ({})</text>"#,
            x0 + panel_w / 2.0,
            y0 - 12.0,
            label.name().replace('_', "-")
        )
        .unwrap();
        for tick in 0..=4 {
            let f = tick as f64 / 4.0;
            writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{f:.2}</text>"#,
                x0 - 4.0,
                py(f) + 4.0
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">M (1 to {max_m})</text>"#,
            x0 + panel_w / 2.0,
            y0 + panel_h + 24.0
        )
        .unwrap();
        for (i, (method, pts)) in curves.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let mean = |p: &CurvePoint| *p.f1_mean.get(label);
            let std = |p: &CurvePoint| *p.f1_std.get(label);
            let upper = pts.iter().map(|p| format!("{:.2},{:.2}", px(p.machines as f64), py(mean(p) + std(p))));
            let lower = pts
                .iter()
                .rev()
                .map(|p| format!("{:.2},{:.2}", px(p.machines as f64), py(mean(p) - std(p))));
            let band: Vec<String> = upper.chain(lower).collect();
            writeln!(
                s,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
                band.join(" ")
            )
            .unwrap();
            let line: Vec<String> = pts
                .iter()
                .map(|p| format!("{:.2},{:.2}", px(p.machines as f64), py(mean(p))))
                .collect();
            writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                line.join(" ")
            )
            .unwrap();
            if panel == 0 {
                let ly = y0 + 16.0 + 16.0 * i as f64;
                writeln!(
                    s,
                    r#"<text x="{}" y="{ly}" fill="{color}">Method {}</text>"#,
                    x0 + 10.0,
                    method.number()
                )
                .unwrap();
            }
        }
    }
    s.push_str("</svg>\n");
    s
}
