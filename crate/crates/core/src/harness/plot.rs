//! Small deterministic SVG renderer: the same data always yields the same
//! bytes, since every number is printed with fixed precision and series keep
//! their input order.

use std::fmt::Write as _;

use crate::pathworld::{Point, TaskSpec};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let (mut x, mut y) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
        for (px, py) in points.filter(|(a, b)| a.is_finite() && b.is_finite()) {
            x = (x.0.min(px), x.1.max(px));
            y = (y.0.min(py), y.1.max(py));
        }
        let widen = |(lo, hi): (f64, f64)| {
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        Self { x: widen(x), y: widen(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(out, r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" fill="none" stroke="black"/>"#);
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = f.x.0 + t * (f.x.1 - f.x.0);
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let (px, py) = (f.px(xv), f.py(yv));
        let _ = writeln!(out, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{xv:.3}</text>"#, y0 + 16.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#, x0 - 6.0, py + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 14.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, names: impl Iterator<Item = String>) {
    for (i, name) in names.enumerate() {
        let y = MARGIN + 4.0 + 16.0 * i as f64;
        let x = WIDTH - MARGIN - 110.0;
        let _ = writeln!(out, r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{}"/>"#, y - 9.0, color(i));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{y:.1}">{}</text>"#, x + 14.0, escape(&name));
    }
}

/// Line chart with markers, one polyline per series.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let f = Frame::fit(series.iter().flat_map(|s| s.points.iter().copied()));
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, x_label, y_label);
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", f.px(x), f.py(y))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#, pts.join(" "), color(i));
        for &(x, y) in &s.points {
            let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{}"/>"#, f.px(x), f.py(y), color(i));
        }
    }
    legend(&mut out, series.iter().map(|s| s.name.clone()));
    out.push_str("</svg>\n");
    out
}

/// Waypoint paths of `tasks` in the unit square, overlaid with generated
/// states (`(task, state)` pairs) drawn as dots in the task's colour.
pub fn path_plot(title: &str, tasks: &[TaskSpec], states: &[(usize, Point)]) -> String {
    let f = Frame { x: (0.0, 1.0), y: (0.0, 1.0) };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, "x", "y");
    for &(task, [x, y]) in states {
        let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="1.5" fill="{}" fill-opacity="0.5"/>"#, f.px(x), f.py(y), color(task));
    }
    for (i, t) in tasks.iter().enumerate() {
        let pts: Vec<String> = t.waypoints.iter().map(|&[x, y]| format!("{:.1},{:.1}", f.px(x), f.py(y))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5" stroke-dasharray="4 3"/>"#, pts.join(" "), color(i));
        for (k, &[x, y]) in t.waypoints.iter().enumerate() {
            let r = f.px(t.capture_radius) - f.px(0.0);
            let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="{r:.1}" fill="none" stroke="{}"/>"#, f.px(x), f.py(y), color(i));
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="10">{k}</text>"#, f.px(x) + 5.0, f.py(y) - 5.0);
        }
    }
    legend(&mut out, tasks.iter().map(|t| format!("task {}", t.id)));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series() -> Vec<Series> {
        vec![
            Series { name: "task 0".into(), points: vec![(0.0, 0.4), (1.0, 0.5), (2.0, 0.7)] },
            Series { name: "task <1>".into(), points: vec![(1.0, 0.3), (2.0, 0.35)] },
        ]
    }

    #[test]
    fn line_plot_is_deterministic_and_complete() {
        let a = line_plot("quality", "bucket", "L1", &series());
        assert_eq!(a, line_plot("quality", "bucket", "L1", &series()));
        assert_eq!(a.matches("<polyline").count(), 2);
        assert_eq!(a.matches("<circle").count(), 5);
        assert!(a.contains("task &lt;1&gt;"));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
    }

    #[test]
    fn degenerate_ranges_do_not_produce_nan() {
        let s = [Series { name: "flat".into(), points: vec![(3.0, 1.0)] }];
        assert!(!line_plot("t", "x", "y", &s).contains("NaN"));
        assert!(!line_plot("t", "x", "y", &[]).contains("NaN"));
    }

    #[test]
    fn path_plot_overlays_waypoints_and_states() {
        let task = TaskSpec {
            id: 0,
            waypoints: vec![[0.1, 0.1], [0.5, 0.5], [0.9, 0.1]],
            speed: 0.03,
            noise: 0.005,
            capture_radius: 0.05,
            horizon: 100,
        };
        let svg = path_plot("paths", &[task], &[(0, [0.2, 0.2]), (0, [0.3, 0.3])]);
        assert_eq!(svg.matches("stroke-dasharray").count(), 1);
        assert_eq!(svg.matches("fill-opacity").count(), 2);
        assert_eq!(svg.matches(r##"fill="none" stroke="#1f77b4"/>"##).count(), 3);
    }
}
