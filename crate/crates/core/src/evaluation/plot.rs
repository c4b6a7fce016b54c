use std::fmt::Write as _;

use crate::baseline::pca_reduce;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

const SIZE: f64 = 640.0;
const MARGIN: f64 = 40.0;

/// Scatter plot of the first two principal components, one colour per label.
pub fn scatter_svg(x: &FeatureMatrix, labels: &[usize], title: &str) -> Result<String> {
    if labels.len() != x.nrows() {
        return Err(Error::shape(format!("{} labels", x.nrows()), labels.len()));
    }
    if x.nrows() == 0 {
        return Err(Error::invalid("nothing to plot"));
    }
    let pts: Vec<(f64, f64)> = if x.ncols() > 2 && x.nrows() > 2 {
        let p = pca_reduce(x, 2)?;
        p.rows().map(|r| (r[0], r[1])).collect()
    } else {
        x.rows()
            .map(|r| (r.first().copied().unwrap_or(0.0), r.get(1).copied().unwrap_or(0.0)))
            .collect()
    };
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(a, b) in &pts {
        x0 = x0.min(a);
        x1 = x1.max(a);
        y0 = y0.min(b);
        y1 = y1.max(b);
    }
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let (sx, sy) = (span(x0, x1), span(y0, y1));
    let inner = SIZE - 2.0 * MARGIN;
    let k = labels.iter().max().map_or(1, |m| m + 1);

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        SIZE / 2.0,
        escape(title)
    )
    .unwrap();
    for (&(a, b), &l) in pts.iter().zip(labels) {
        let cx = MARGIN + (a - x0) / sx * inner;
        let cy = SIZE - MARGIN - (b - y0) / sy * inner;
        let hue = (l as f64 * 360.0 / k as f64 + 17.0) % 360.0;
        writeln!(
            svg,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2" fill="hsl({hue:.0},70%,45%)" fill-opacity="0.7"/>"#
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
