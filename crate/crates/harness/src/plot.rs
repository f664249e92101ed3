//! Minimal SVG emission: enough lines, rectangles, polygons and text for
//! box/strip plots and survival-curve overlays, with no plotting
//! dependency.

use std::fmt::Write;

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Svg {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="{width}"/>"#
        );
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64) {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            pts.join(" ")
        );
    }

    pub fn polygon(&mut self, points: &[(f64, f64)], fill: &str, opacity: f64) {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            r#"<polygon points="{}" fill="{fill}" fill-opacity="{opacity}" stroke="none"/>"#,
            pts.join(" ")
        );
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}" stroke="{stroke}"/>"#
        );
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{fill}"/>"#);
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        let escaped = content
            .replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;");
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" font-family="sans-serif" text-anchor="{anchor}">{escaped}</text>"#
        );
    }

    pub fn render(&self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{body}</svg>\n",
            w = self.width,
            h = self.height,
            body = self.body
        )
    }
}

const MARGIN_LEFT: f64 = 70.0;
const MARGIN_BOTTOM: f64 = 90.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_RIGHT: f64 = 20.0;

/// Box plot with overlaid per-seed points, one group per configuration.
pub fn box_strip_plot(title: &str, groups: &[(String, Vec<f64>)]) -> String {
    let width = (groups.len() as f64 * 46.0 + MARGIN_LEFT + MARGIN_RIGHT).max(320.0);
    let height = 360.0;
    let mut svg = Svg::new(width, height);
    let plot_w = width - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = height - MARGIN_TOP - MARGIN_BOTTOM;

    let all: Vec<f64> = groups.iter().flat_map(|(_, v)| v.iter().cloned()).collect();
    let (mut lo, mut hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-9 {
        lo -= 0.05;
        hi += 0.05;
    }
    let pad = (hi - lo) * 0.08;
    let (lo, hi) = (lo - pad, hi + pad);
    let y_of = |v: f64| MARGIN_TOP + plot_h * (1.0 - (v - lo) / (hi - lo));

    svg.text(width / 2.0, 20.0, 14.0, "middle", title);
    // axes and ticks
    svg.line(MARGIN_LEFT, MARGIN_TOP, MARGIN_LEFT, MARGIN_TOP + plot_h, "black", 1.0);
    svg.line(
        MARGIN_LEFT,
        MARGIN_TOP + plot_h,
        MARGIN_LEFT + plot_w,
        MARGIN_TOP + plot_h,
        "black",
        1.0,
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = y_of(v);
        svg.line(MARGIN_LEFT - 4.0, y, MARGIN_LEFT, y, "black", 1.0);
        svg.text(MARGIN_LEFT - 8.0, y + 4.0, 10.0, "end", &format!("{v:.3}"));
    }

    let slot = plot_w / groups.len() as f64;
    for (g, (name, values)) in groups.iter().enumerate() {
        let cx = MARGIN_LEFT + slot * (g as f64 + 0.5);
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if let (Some(q25), Some(median), Some(q75)) = (
            survbench_core::metrics::quantile_sorted(&sorted, 0.25),
            survbench_core::metrics::quantile_sorted(&sorted, 0.5),
            survbench_core::metrics::quantile_sorted(&sorted, 0.75),
        ) {
            let half = (slot * 0.35).min(14.0);
            svg.rect(
                cx - half,
                y_of(q75),
                2.0 * half,
                (y_of(q25) - y_of(q75)).max(0.5),
                "#cfe2f3",
                "#30557f",
            );
            svg.line(cx - half, y_of(median), cx + half, y_of(median), "#30557f", 2.0);
            if let (Some(&min), Some(&max)) = (sorted.first(), sorted.last()) {
                svg.line(cx, y_of(q75), cx, y_of(max), "#30557f", 1.0);
                svg.line(cx, y_of(min), cx, y_of(q25), "#30557f", 1.0);
            }
        }
        for (i, &v) in values.iter().enumerate() {
            // deterministic horizontal jitter by index
            let dx = ((i as f64 * 2654435761.0) % 17.0 - 8.0) * 0.8;
            svg.circle(cx + dx, y_of(v), 2.2, "#c0392b");
        }
        // rotated-ish label: stack words vertically instead
        for (row, part) in name.split('/').enumerate() {
            svg.text(
                cx,
                MARGIN_TOP + plot_h + 14.0 + row as f64 * 11.0,
                8.5,
                "middle",
                part,
            );
        }
    }
    svg.render()
}

/// Observed survival overlaid with the bootstrap band of the mean
/// predicted curve, plus at-risk counts along the bottom.
#[allow(clippy::too_many_arguments)]
pub fn km_overlay_plot(
    title: &str,
    grid_points: &[f64],
    band: &[(f64, f64, f64)],
    km: &[f64],
    at_risk: &[usize],
) -> String {
    let width = 640.0;
    let height = 420.0;
    let mut svg = Svg::new(width, height);
    let plot_w = width - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = height - MARGIN_TOP - MARGIN_BOTTOM;
    let t_max = grid_points.last().copied().unwrap_or(1.0).max(1e-9);
    let x_of = |t: f64| MARGIN_LEFT + plot_w * t / t_max;
    let min_s = band
        .iter()
        .map(|&(_, lo, _)| lo)
        .chain(km.iter().cloned())
        .fold(1.0f64, f64::min)
        .min(0.99);
    let lo_axis = (min_s - 0.02).max(0.0);
    let y_of = |s: f64| MARGIN_TOP + plot_h * (1.0 - (s - lo_axis) / (1.0 - lo_axis));

    svg.text(width / 2.0, 20.0, 14.0, "middle", title);
    svg.line(MARGIN_LEFT, MARGIN_TOP, MARGIN_LEFT, MARGIN_TOP + plot_h, "black", 1.0);
    svg.line(
        MARGIN_LEFT,
        MARGIN_TOP + plot_h,
        MARGIN_LEFT + plot_w,
        MARGIN_TOP + plot_h,
        "black",
        1.0,
    );
    for k in 0..=4 {
        let s = lo_axis + (1.0 - lo_axis) * k as f64 / 4.0;
        let y = y_of(s);
        svg.line(MARGIN_LEFT - 4.0, y, MARGIN_LEFT, y, "black", 1.0);
        svg.text(MARGIN_LEFT - 8.0, y + 4.0, 10.0, "end", &format!("{s:.3}"));
        let t = t_max * k as f64 / 4.0;
        let x = x_of(t);
        svg.line(x, MARGIN_TOP + plot_h, x, MARGIN_TOP + plot_h + 4.0, "black", 1.0);
        svg.text(x, MARGIN_TOP + plot_h + 16.0, 10.0, "middle", &format!("{t:.0}"));
    }
    svg.text(width / 2.0, MARGIN_TOP + plot_h + 32.0, 11.0, "middle", "time (days)");

    // confidence band
    let mut poly: Vec<(f64, f64)> = grid_points
        .iter()
        .zip(band)
        .map(|(&t, &(_, lo, _))| (x_of(t), y_of(lo)))
        .collect();
    for (&t, &(_, _, hi)) in grid_points.iter().zip(band).rev() {
        poly.push((x_of(t), y_of(hi)));
    }
    svg.polygon(&poly, "#e74c3c", 0.2);
    // median predicted population survival
    let median_line: Vec<(f64, f64)> = grid_points
        .iter()
        .zip(band)
        .map(|(&t, &(med, _, _))| (x_of(t), y_of(med)))
        .collect();
    svg.polyline(&median_line, "#e74c3c", 1.8);
    // observed Kaplan-Meier as a step curve
    let mut km_line = Vec::new();
    for (i, (&t, &s)) in grid_points.iter().zip(km).enumerate() {
        if i > 0 {
            km_line.push((x_of(t), km_line.last().map(|&(_, y)| y).unwrap_or(y_of(1.0))));
        }
        km_line.push((x_of(t), y_of(s)));
    }
    svg.polyline(&km_line, "#2c3e50", 1.8);
    // at-risk counts under the axis
    let step = (grid_points.len() / 8).max(1);
    for (i, &n) in at_risk.iter().enumerate().step_by(step) {
        svg.text(
            x_of(grid_points[i]),
            MARGIN_TOP + plot_h + 50.0,
            9.0,
            "middle",
            &n.to_string(),
        );
    }
    svg.text(MARGIN_LEFT, MARGIN_TOP + plot_h + 64.0, 9.0, "start", "at risk");
    // legend
    svg.line(width - 220.0, 34.0, width - 195.0, 34.0, "#2c3e50", 1.8);
    svg.text(width - 190.0, 38.0, 10.0, "start", "observed survival");
    svg.line(width - 220.0, 50.0, width - 195.0, 50.0, "#e74c3c", 1.8);
    svg.text(width - 190.0, 54.0, 10.0, "start", "predicted population mean");
    svg.render()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_plot_renders_valid_svg() {
        let groups = vec![
            ("a/x".to_string(), vec![0.7, 0.72, 0.74]),
            ("b/y".to_string(), vec![0.6, 0.65, 0.61]),
        ];
        let svg = box_strip_plot("test", &groups);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("polyline") || svg.contains("rect"));
    }

    #[test]
    fn km_overlay_renders_valid_svg() {
        let grid: Vec<f64> = (0..100).map(|i| i as f64 * 10.0).collect();
        let band: Vec<(f64, f64, f64)> = (0..100)
            .map(|i| {
                let s = 1.0 - i as f64 * 0.003;
                (s, s - 0.01, s + 0.01)
            })
            .collect();
        let km: Vec<f64> = (0..100).map(|i| 1.0 - i as f64 * 0.0028).collect();
        let at_risk: Vec<usize> = (0..100).map(|i| 500 - i * 4).collect();
        let svg = km_overlay_plot("overlay", &grid, &band, &km, &at_risk);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polygon"));
        assert!(svg.contains("at risk"));
    }
}
