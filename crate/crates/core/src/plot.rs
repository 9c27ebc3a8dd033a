//! Static SVG scatter plots of a layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{NomadError, Result};
use crate::io::LayoutMatrix;

/// Categorical palette, cycled when there are more labels than colors.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const MARGIN: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub width: u32,
    pub height: u32,
    pub radius: f64,
    pub opacity: f64,
    pub background: String,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            width: 800,
            height: 800,
            radius: 1.0,
            opacity: 0.8,
            background: "#ffffff".into(),
        }
    }
}

/// Maps each distinct label to a palette color, in sorted label order.
pub fn label_colors(labels: &[String]) -> BTreeMap<&str, &'static str> {
    let mut colors = BTreeMap::new();
    for l in labels {
        colors.entry(l.as_str()).or_insert("");
    }
    for (i, c) in colors.values_mut().enumerate() {
        *c = PALETTE[i % PALETTE.len()];
    }
    colors
}

fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    (lo - MARGIN * span, hi + MARGIN * span)
}

/// Renders one circle per point over the data bounding box padded by 2%
/// on every side. Points are colored by label when labels are given.
pub fn render_svg(layout: &LayoutMatrix, labels: Option<&[String]>, style: &PlotStyle) -> Result<String> {
    if layout.n() == 0 {
        return Err(NomadError::Dimension("layout has no points".into()));
    }
    for (row, p) in layout.positions.iter().enumerate() {
        if let Some(column) = p.iter().position(|v| !v.is_finite()) {
            return Err(NomadError::Validation {
                row,
                column,
                message: "non-finite coordinate".into(),
            });
        }
    }
    if let Some(l) = labels {
        if l.len() != layout.n() {
            return Err(NomadError::Dimension(format!(
                "{} labels for {} points",
                l.len(),
                layout.n()
            )));
        }
    }
    let (x0, x1) = axis_range(layout.positions.iter().map(|p| p[0]));
    let (y0, y1) = axis_range(layout.positions.iter().map(|p| p[1]));
    let (w, h) = (f64::from(style.width), f64::from(style.height));
    let colors = labels.map(label_colors);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        style.width, style.height, style.width, style.height
    );
    let _ = writeln!(
        svg,
        r##"<rect x="0" y="0" width="{}" height="{}" fill="{}" stroke="#000000" stroke-width="1"/>"##,
        style.width, style.height, style.background
    );
    for (i, p) in layout.positions.iter().enumerate() {
        let cx = (p[0] - x0) / (x1 - x0) * w;
        let cy = (y1 - p[1]) / (y1 - y0) * h;
        let fill = match (&colors, labels) {
            (Some(c), Some(l)) => c[l[i].as_str()],
            _ => PALETTE[0],
        };
        let _ = writeln!(
            svg,
            r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="{}" fill="{fill}" fill-opacity="{}"/>"#,
            style.radius, style.opacity
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_svg(
    layout: &LayoutMatrix,
    labels: Option<&[String]>,
    style: &PlotStyle,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let svg = render_svg(layout, labels, style)?;
    std::fs::write(path, svg).map_err(|e| NomadError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> LayoutMatrix {
        LayoutMatrix::new(vec![[0.0, 0.0], [1.0, 2.0], [-3.0, 0.5]])
    }

    #[test]
    fn one_circle_per_point() {
        let svg = render_svg(&three(), None, &PlotStyle::default()).unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
    }

    #[test]
    fn two_labels_two_colors() {
        let labels: Vec<String> = ["b", "a", "b"].iter().map(|s| s.to_string()).collect();
        let svg = render_svg(&three(), Some(&labels), &PlotStyle::default()).unwrap();
        let fills: std::collections::BTreeSet<&str> = svg
            .lines()
            .filter(|l| l.starts_with("<circle"))
            .map(|l| l.split("fill=\"").nth(1).unwrap().split('"').next().unwrap())
            .collect();
        assert_eq!(fills.len(), 2);
        // sorted label order: "a" gets the first color
        assert!(svg.lines().nth(3).unwrap().contains(PALETTE[0]));
    }

    #[test]
    fn extremes_sit_inside_margin() {
        let svg = render_svg(&three(), None, &PlotStyle::default()).unwrap();
        // x spans [-3, 1]; padded range is [-3.08, 1.08], so x=-3 lands at
        // 0.08 / 4.16 * 800
        assert!(svg.contains(r#"cx="15.385""#), "{svg}");
    }

    #[test]
    fn empty_layout_rejected() {
        assert!(render_svg(&LayoutMatrix::new(vec![]), None, &PlotStyle::default()).is_err());
    }

    #[test]
    fn output_is_deterministic() {
        let a = render_svg(&three(), None, &PlotStyle::default()).unwrap();
        let b = render_svg(&three(), None, &PlotStyle::default()).unwrap();
        assert_eq!(a, b);
    }
}
