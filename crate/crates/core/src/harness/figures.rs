//! Hand-written SVG figures for attention tables and t-SNE scatters.

use std::fmt::Write;

use super::explain::AttentionExplanation;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// White to red ramp for a value in [0,1].
fn heat(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let g = (255.0 * (1.0 - v)).round() as u8;
    format!("#ff{g:02x}{g:02x}")
}

/// One row of cells per drug, shaded by the within-drug motif weight.
pub fn attention_svg(exp: &AttentionExplanation) -> String {
    let cell_w = 150.0;
    let cell_h = 36.0;
    let left = 110.0;
    let top = 40.0;
    let cols = [0u32, 1]
        .iter()
        .map(|s| exp.motifs.iter().filter(|m| m.segment == *s).count())
        .max()
        .unwrap_or(0)
        .max(1);
    let width = left + cols as f64 * cell_w + 20.0;
    let height = top + 2.0 * cell_h + 50.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="10" y="20" font-size="13">{} + {} (predicted event {})</text>"#,
        escape(&exp.drug_x),
        escape(&exp.drug_y),
        exp.predicted_event
    );
    for (row, (seg, name)) in [(0u32, &exp.drug_x), (1, &exp.drug_y)].into_iter().enumerate() {
        let y = top + row as f64 * cell_h;
        let _ = writeln!(
            s,
            r#"<text x="10" y="{:.1}">{}</text>"#,
            y + cell_h / 2.0 + 4.0,
            escape(name)
        );
        for (col, m) in exp.motifs.iter().filter(|m| m.segment == seg).enumerate() {
            let x = left + col as f64 * cell_w;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cell_w}" height="{cell_h}" fill="{}" stroke="gray"/>"#,
                heat(m.block_weight)
            );
            let label: String = m.motif.chars().take(20).collect();
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
                x + 4.0,
                y + 15.0,
                escape(&label)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}">{:.3}</text>"#,
                x + 4.0,
                y + 29.0,
                m.block_weight
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="10" y="{:.1}">cell value: share of the drug's final-layer attention mass</text>"#,
        top + 2.0 * cell_h + 30.0
    );
    s.push_str("</svg>\n");
    s
}

/// Scatter coloured by label, with a legend.
pub fn scatter_svg(points: &[[f64; 2]], labels: &[usize], title: &str) -> String {
    let size = 600.0;
    let pad = 40.0;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let sx = if x1 > x0 { (size - 2.0 * pad) / (x1 - x0) } else { 1.0 };
    let sy = if y1 > y0 { (size - 2.0 * pad) / (y1 - y0) } else { 1.0 };
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let color = |l: usize| {
        let k = distinct.iter().position(|d| *d == l).unwrap_or(0);
        PALETTE[k % PALETTE.len()]
    };
    let legend_w = 120.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{size}" font-family="monospace" font-size="11">"#,
        size + legend_w
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="10" y="20" font-size="13">{}</text>"#, escape(title));
    for (p, &l) in points.iter().zip(labels) {
        let x = pad + (p[0] - x0) * sx;
        let y = size - pad - (p[1] - y0) * sy;
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{}" fill-opacity="0.8"/>"#,
            color(l)
        );
    }
    for (k, l) in distinct.iter().enumerate().take(40) {
        let y = 40.0 + k as f64 * 14.0;
        let _ = writeln!(
            s,
            r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{}"/><text x="{:.1}" y="{:.1}">event {l}</text>"#,
            size + 10.0,
            y - 4.0,
            color(*l),
            size + 20.0,
            y
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b&\"c\">"), "a&lt;b&amp;&quot;c&quot;&gt;");
    }

    #[test]
    fn scatter_has_one_circle_per_point_plus_legend() {
        let svg = scatter_svg(&[[0.0, 0.0], [1.0, 2.0], [3.0, 1.0]], &[4, 4, 9], "t");
        assert_eq!(svg.matches("<circle").count(), 3 + 2);
        assert!(svg.starts_with("<svg"));
    }
}
