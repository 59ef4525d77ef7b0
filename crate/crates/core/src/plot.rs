//! Dependency-free SVG line plots for explanations and depth sweeps.

use std::fmt::Write as _;

use crate::explain::Segment;
use crate::train::SweepRow;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// One polyline; `axis` 1 is drawn against the right-hand scale.
#[derive(Clone, Debug)]
pub struct Line {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub axis: u8,
}

impl Line {
    pub fn new(name: &str, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.to_string(), points, axis: 0 }
    }

    fn from_values(name: &str, values: &[f64], axis: u8) -> Self {
        Self { name: name.to_string(), points: values.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect(), axis }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub lines: Vec<Line>,
    /// Shaded x intervals, e.g. extracted segments.
    pub bands: Vec<(f64, f64)>,
}

fn extent<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    pub fn to_svg(&self) -> String {
        let (x0, x1) = extent(self.lines.iter().flat_map(|l| l.points.iter().map(|p| &p.0)));
        let y_range = |axis: u8| extent(self.lines.iter().filter(|l| l.axis == axis).flat_map(|l| l.points.iter().map(|p| &p.1)));
        let ranges = [y_range(0), y_range(1)];
        let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64, axis: u8| {
            let (lo, hi) = ranges[axis as usize];
            MARGIN + ph - (y - lo) / (hi - lo) * ph
        };

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for &(a, b) in &self.bands {
            let (l, r) = (sx(a.max(x0)), sx(b.min(x1)));
            let _ = writeln!(s, r##"<rect x="{l:.2}" y="{MARGIN}" width="{:.2}" height="{ph}" fill="#ffcc00" fill-opacity="0.3"/>"##, (r - l).max(1.0));
        }
        let _ = writeln!(s, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        for (i, line) in self.lines.iter().enumerate() {
            let pts: Vec<String> = line
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y, line.axis)))
                .collect();
            let color = PALETTE[i % PALETTE.len()];
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" fill="{color}">{}</text>"#, MARGIN + 8.0, MARGIN + 16.0 + 14.0 * i as f64, escape(&line.name));
        }
        let _ = writeln!(s, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&self.title));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 10.0, escape(&self.x_label));
        let _ = writeln!(s, r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#, HEIGHT / 2.0, HEIGHT / 2.0, escape(&self.y_label));
        for (x, anchor) in [(x0, "start"), (x1, "end")] {
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}">{}</text>"#, sx(x), MARGIN + ph + 14.0, trim(x));
        }
        let (lo, hi) = ranges[0];
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, MARGIN - 4.0, MARGIN + ph, trim(lo));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, MARGIN - 4.0, MARGIN + 10.0, trim(hi));
        s.push_str("</svg>\n");
        s
    }
}

fn trim(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// A series with its relevance frequency (right scale) and shaded segments.
pub fn explanation_plot(title: &str, values: &[f64], freq: &[u32], segments: &[Segment]) -> Plot {
    let freq: Vec<f64> = freq.iter().map(|&f| f64::from(f)).collect();
    Plot {
        title: title.to_string(),
        x_label: "time step".into(),
        y_label: "normalised strength".into(),
        lines: vec![Line::from_values("signal", values, 0), Line::from_values("relevance frequency", &freq, 1)],
        bands: segments.iter().map(|s| (s.start as f64, s.end as f64)).collect(),
    }
}

/// Mean relevance frequency per class.
pub fn class_frequency_plot(title: &str, classes: &[(&str, Vec<f64>)]) -> Plot {
    Plot {
        title: title.to_string(),
        x_label: "time step".into(),
        y_label: "mean relevance frequency".into(),
        lines: classes.iter().map(|(name, v)| Line::from_values(name, v, 0)).collect(),
        bands: vec![],
    }
}

/// Accuracy against depth, one line per variant.
pub fn depth_sweep_plot(rows: &[SweepRow]) -> Plot {
    let mut lines: Vec<Line> = Vec::new();
    for row in rows {
        let name = row.variant.name();
        let point = (row.depth as f64, row.accuracy_mean);
        match lines.iter_mut().find(|l| l.name == name) {
            Some(l) => l.points.push(point),
            None => lines.push(Line::new(name, vec![point])),
        }
    }
    Plot { title: "accuracy by depth".into(), x_label: "hidden layers".into(), y_label: "mean accuracy".into(), lines, bands: vec![] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    #[test]
    fn explanation_svg_is_well_formed() {
        let svg = explanation_plot("P000-00 <x>", &[0.0, 0.5, 1.0, 0.2], &[0, 2, 3, 1], &[Segment { start: 1, end: 2 }]).to_svg();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("&lt;x&gt;"));
        assert!(svg.contains("fill-opacity"));
    }

    #[test]
    fn constant_and_empty_lines_do_not_produce_nan() {
        let p = class_frequency_plot("flat", &[("healthy", vec![1.0; 5]), ("patient", vec![])]);
        assert!(!p.to_svg().contains("NaN"));
    }

    #[test]
    fn sweep_groups_by_variant() {
        let row = |variant, depth, acc| SweepRow { variant, depth, accuracy_mean: acc, accuracy_std: 0.0, f1_mean: acc, total_seconds: 1.0 };
        let p = depth_sweep_plot(&[row(Variant::Hatcn, 2, 0.9), row(Variant::Hatcn, 4, 0.92), row(Variant::Tcn, 2, 0.7)]);
        assert_eq!(p.lines.len(), 2);
        assert_eq!(p.lines[0].points, vec![(2.0, 0.9), (4.0, 0.92)]);
    }
}
