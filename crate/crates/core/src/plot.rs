//! Standalone SVG plots with the plotted values embedded as coordinates.

use std::fmt::Write as _;

use crate::curvefit::BoundaryCurve;
use crate::preprocess::FeatureCloud;
use crate::segnet::Detection;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Axes {
    x: (f64, f64),
    y: (f64, f64),
}

impl Axes {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let range = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), t| (l.min(t), h.max(t)));
            if lo.is_finite() && hi > lo {
                (lo, hi)
            } else if lo.is_finite() {
                (lo - 1.0, lo + 1.0)
            } else {
                (0.0, 1.0)
            }
        };
        Self {
            x: range(&mut xs.clone()),
            y: range(&mut ys.clone()),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn frame(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            out,
            r##"<rect x="{m}" y="{m}" width="{w}" height="{h}" fill="none" stroke="#444"/>"##,
            m = MARGIN,
            w = WIDTH - 2.0 * MARGIN,
            h = HEIGHT - 2.0 * MARGIN
        );
        let _ = writeln!(out, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{} [{:.2}, {:.2}]</text>"#,
            WIDTH / 2.0,
            HEIGHT - 10.0,
            escape(xlabel),
            self.x.0,
            self.x.1
        );
        let _ = writeln!(
            out,
            r#"<text x="12" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {})">{} [{:.2}, {:.2}]</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(ylabel),
            self.y.0,
            self.y.1
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open() -> String {
    format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="100%" height="100%" fill="white"/>
"#
    )
}

/// Ground-plane view of one frame: all points in grey, detected boundary
/// points in red, fitted curves with their 95% bands.
pub fn top_view_svg(cloud: &FeatureCloud, det: &Detection, curves: &[BoundaryCurve], title: &str) -> String {
    let curve_x = curves
        .iter()
        .flat_map(|c| c.mean_x.iter().zip(&c.ci_half_width).flat_map(|(m, w)| [m - w, m + w]));
    let xs = cloud.points.iter().map(|p| p.x).chain(curve_x.clone());
    let ys = cloud.points.iter().map(|p| p.y);
    let axes = Axes::fit(xs, ys);
    let mut out = open();
    axes.frame(&mut out, title, "x (m)", "y (m)");
    for (i, p) in cloud.points.iter().enumerate() {
        let boundary = det.labels.get(i) == Some(&1);
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{}" fill="{}" data-x="{}" data-y="{}"/>"#,
            axes.px(p.x),
            axes.py(p.y),
            if boundary { 2.5 } else { 1.5 },
            if boundary { "#d62728" } else { "#999999" },
            p.x,
            p.y
        );
    }
    for c in curves {
        let color = PALETTE[c.cluster_id % PALETTE.len()];
        let line = |off: f64| -> String {
            c.y_grid
                .iter()
                .zip(&c.mean_x)
                .zip(&c.ci_half_width)
                .map(|((y, m), w)| format!("{:.2},{:.2}", axes.px(m + off * w), axes.py(*y)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line(0.0));
        for off in [-1.0, 1.0] {
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-dasharray="4 3"/>"#,
                line(off)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Metric-vs-frame traces, one polyline per named series.
pub fn trace_svg(series: &[(String, Vec<(f64, f64)>)], title: &str, ylabel: &str) -> String {
    let xs = series.iter().flat_map(|s| s.1.iter().map(|p| p.0));
    let ys = series.iter().flat_map(|s| s.1.iter().map(|p| p.1));
    let axes = Axes::fit(xs, ys);
    let mut out = open();
    axes.frame(&mut out, title, "frame", ylabel);
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", axes.px(*x), axes.py(*y)))
            .collect();
        let values: Vec<String> = pts.iter().map(|(_, y)| format!("{y}")).collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5" data-values="{}"/>"#,
            coords.join(" "),
            values.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{}</text>"#,
            MARGIN + 8.0,
            MARGIN + 16.0 + 14.0 * k as f64,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}
