//! SVG heatmaps of risk fields.

use std::fmt::Write;

use crate::risk::RiskField;

/// Renders `field` as one rectangle per grid cell, `+x` to the right and
/// `+y` up, coloured from blue (zero) to red (the field maximum).
pub fn risk_field_svg(field: &RiskField, cell_px: f64) -> String {
    let g = &field.grid;
    let (w, h) = (g.nx as f64 * cell_px, g.ny as f64 * cell_px);
    let max = field.max().max(f64::MIN_POSITIVE);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let v = (field.value(i, j) / max).clamp(0.0, 1.0);
            let red = (255.0 * v).round() as u8;
            let blue = 255 - red;
            let x = i as f64 * cell_px;
            let y = (g.ny - 1 - j) as f64 * cell_px;
            let _ = writeln!(
                svg,
                r#"<rect x="{x}" y="{y}" width="{cell_px}" height="{cell_px}" fill="rgb({red},0,{blue})"/>"#
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
