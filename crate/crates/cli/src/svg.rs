//! Deterministic 800×800 SVG plots of planar curves.

use std::fmt::Write as _;

pub const CANVAS: f64 = 800.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub points: Vec<[f64; 2]>,
}

fn escape(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '&' => "&amp;".into(),
            '<' => "&lt;".into(),
            '>' => "&gt;".into(),
            '"' => "&quot;".into(),
            c => c.to_string(),
        })
        .collect()
}

/// Square data window `(cx, cy, half)` covering every finite point, and the
/// closed unit disk when it is drawn.
fn window(curves: &[Curve], unit_disk: bool) -> (f64, f64, f64) {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    let mut grow = |p: [f64; 2]| {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    };
    if unit_disk {
        grow([-1.0, -1.0]);
        grow([1.0, 1.0]);
    }
    curves
        .iter()
        .flat_map(|c| &c.points)
        .filter(|p| p[0].is_finite() && p[1].is_finite())
        .for_each(|&p| grow(p));
    if !lo[0].is_finite() {
        return (0.0, 0.0, 1.0);
    }
    let half = 0.5 * (hi[0] - lo[0]).max(hi[1] - lo[1]) * 1.05;
    (0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), if half > 0.0 { half } else { 1.0 })
}

pub fn render(curves: &[Curve], unit_disk: bool) -> String {
    let (cx, cy, half) = window(curves, unit_disk);
    let scale = (CANVAS - 2.0 * MARGIN) / (2.0 * half);
    let px = |p: [f64; 2]| (CANVAS / 2.0 + (p[0] - cx) * scale, CANVAS / 2.0 - (p[1] - cy) * scale);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="800" viewBox="0 0 800 800">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="800" height="800" fill="white"/>"#);
    if unit_disk {
        let (ox, oy) = px([0.0, 0.0]);
        let _ = writeln!(
            s,
            r##"<circle cx="{ox:.3}" cy="{oy:.3}" r="{:.3}" fill="none" stroke="#555555" stroke-width="1.5"/>"##,
            scale
        );
    }
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = String::new();
        for &p in c.points.iter().filter(|p| p[0].is_finite() && p[1].is_finite()) {
            let (x, y) = px(p);
            if !pts.is_empty() {
                pts.push(' ');
            }
            let _ = write!(pts, "{x:.3},{y:.3}");
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>"#
        );
    }
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = 20.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="12" y1="{:.1}" x2="32" y2="{:.1}" stroke="{color}" stroke-width="3"/>"#,
            y - 4.0,
            y - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="38" y="{y:.1}" font-family="monospace" font-size="12">{}</text>"#,
            escape(&c.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle() -> Curve {
        Curve {
            label: "a<b>".into(),
            points: (0..50)
                .map(|k| {
                    let t = k as f64 * 0.1;
                    [0.5 * t.cos(), 0.5 * t.sin()]
                })
                .collect(),
        }
    }

    #[test]
    fn deterministic_and_well_formed() {
        let a = render(&[circle()], true);
        assert_eq!(a, render(&[circle()], true));
        assert!(a.contains(r#"width="800" height="800""#));
        assert!(a.contains("<circle"));
        assert!(a.contains("a&lt;b&gt;"));
        assert!(a.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn unit_disk_fits_canvas() {
        let s = render(&[], true);
        // Disk radius in pixels: (800 − 80) / (2 · 1.05).
        assert!(s.contains(r#"r="342.857""#), "{s}");
    }
}
