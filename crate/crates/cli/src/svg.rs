//! Minimal standalone SVG plots: polylines, contour segments, covariance
//! ellipses, axes and a legend.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;

pub type Segment = ((f64, f64), (f64, f64));

pub struct Plot {
    x: [f64; 2],
    y: [f64; 2],
    body: String,
    legend: Vec<(String, String, bool)>,
    title: String,
}

impl Plot {
    pub fn new(title: &str, x: [f64; 2], y: [f64; 2]) -> Self {
        Self { x, y, body: String::new(), legend: Vec::new(), title: title.into() }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x[0]) / (self.x[1] - self.x[0]) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y[0]) / (self.y[1] - self.y[0]) * (HEIGHT - 2.0 * MARGIN)
    }

    fn stroke(color: &str, dashed: bool) -> String {
        let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
        format!(r#"fill="none" stroke="{color}" stroke-width="1.6"{dash}"#)
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], color: &str, dashed: bool) -> &mut Self {
        let pts: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        let _ = writeln!(self.body, r#"<polyline points="{}" {}/>"#, pts.join(" "), Self::stroke(color, dashed));
        self
    }

    pub fn segments(&mut self, segs: &[Segment], color: &str, dashed: bool) -> &mut Self {
        if segs.is_empty() {
            return self;
        }
        let mut d = String::new();
        for &((x0, y0), (x1, y1)) in segs {
            let _ = write!(d, "M{:.2} {:.2}L{:.2} {:.2}", self.px(x0), self.py(y0), self.px(x1), self.py(y1));
        }
        let _ = writeln!(self.body, r#"<path d="{d}" {}/>"#, Self::stroke(color, dashed));
        self
    }

    pub fn vline(&mut self, x: f64, color: &str) -> &mut Self {
        let (y0, y1) = (self.y[0], self.y[1]);
        self.polyline(&[(x, y0), (x, y1)], color, true)
    }

    /// Ellipse `{μ + k·L·(cos t, sin t)}` with `LLᵀ` the 2×2 covariance
    /// `[c00, c01, c11]`.
    pub fn ellipse(&mut self, mean: [f64; 2], cov: [f64; 3], k: f64, color: &str, dashed: bool) -> &mut Self {
        let l00 = cov[0].sqrt();
        let l10 = cov[1] / l00;
        let l11 = (cov[2] - l10 * l10).max(0.0).sqrt();
        let pts: Vec<(f64, f64)> = (0..=120)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / 120.0;
                let (c, s) = (k * t.cos(), k * t.sin());
                (mean[0] + l00 * c, mean[1] + l10 * c + l11 * s)
            })
            .collect();
        self.polyline(&pts, color, dashed)
    }

    pub fn legend(&mut self, label: &str, color: &str, dashed: bool) -> &mut Self {
        self.legend.push((label.into(), color.into(), dashed));
        self
    }

    fn axes(&self) -> String {
        let mut s = String::new();
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(s, r##"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="#444444"/>"##, r - l, b - t);
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = self.x[0] + f * (self.x[1] - self.x[0]);
            let yv = self.y[0] + f * (self.y[1] - self.y[0]);
            let (xp, yp) = (self.px(xv), self.py(yv));
            let _ = writeln!(s, r#"<text x="{xp:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#, b + 16.0, tick(xv));
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#, l - 6.0, yp + 4.0, tick(yv));
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle">{}</text>"#, WIDTH / 2.0, t - 18.0, escape(&self.title));
        s
    }

    pub fn finish(&self) -> String {
        let mut s = format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
        );
        s.push('\n');
        s.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
        s.push('\n');
        let _ = writeln!(
            s,
            r#"<clipPath id="plot"><rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}"/></clipPath>"#,
            WIDTH - 2.0 * MARGIN,
            HEIGHT - 2.0 * MARGIN
        );
        let _ = writeln!(s, r#"<g clip-path="url(#plot)">"#);
        s.push_str(&self.body);
        s.push_str("</g>\n");
        s.push_str(&self.axes());
        for (i, (label, color, dashed)) in self.legend.iter().enumerate() {
            let y = MARGIN + 14.0 + 16.0 * i as f64;
            let x = WIDTH - MARGIN - 150.0;
            let _ = writeln!(s, r#"<path d="M{x} {y}h22" {}/>"#, Self::stroke(color, *dashed));
            let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11">{}</text>"#, x + 28.0, y + 4.0, escape(label));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Marching-squares segments of `{v = level}` on an `n × n` grid with
/// values `v[i * n + j]` at `(nodes[i], nodes[j])`. Saddle cells are
/// resolved by pairing crossings in edge order.
pub fn contour(values: &[f64], nodes: &[f64], level: f64) -> Vec<Segment> {
    let n = nodes.len();
    let at = |i: usize, j: usize| values[i * n + j];
    let cross = |(i0, j0): (usize, usize), (i1, j1): (usize, usize)| -> Option<(f64, f64)> {
        let (a, b) = (at(i0, j0), at(i1, j1));
        if (a < level) == (b < level) {
            return None;
        }
        let t = (level - a) / (b - a);
        Some((nodes[i0] + t * (nodes[i1] - nodes[i0]), nodes[j0] + t * (nodes[j1] - nodes[j0])))
    };
    let mut out = Vec::new();
    for i in 0..n.saturating_sub(1) {
        for j in 0..n - 1 {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let pts: Vec<(f64, f64)> = (0..4).filter_map(|e| cross(corners[e], corners[(e + 1) % 4])).collect();
            for pair in pts.chunks_exact(2) {
                out.push((pair[0], pair[1]));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_contour_sits_on_the_circle() {
        let nodes: Vec<f64> = (0..81).map(|k| -2.0 + 0.05 * k as f64).collect();
        let vals: Vec<f64> = (0..81 * 81).map(|k| nodes[k / 81].powi(2) + nodes[k % 81].powi(2)).collect();
        let segs = contour(&vals, &nodes, 1.0);
        assert!(segs.len() > 100);
        for ((x0, y0), (x1, y1)) in segs {
            assert!(((x0 * x0 + y0 * y0).sqrt() - 1.0).abs() < 0.01);
            assert!(((x1 * x1 + y1 * y1).sqrt() - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn document_is_closed_and_escaped() {
        let mut p = Plot::new("a < b", [0.0, 1.0], [0.0, 1.0]);
        p.polyline(&[(0.0, 0.0), (1.0, 1.0)], "black", false).legend("x & y", "black", true);
        let s = p.finish();
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a &lt; b") && s.contains("x &amp; y"));
    }
}
