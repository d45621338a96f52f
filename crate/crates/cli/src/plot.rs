//! Minimal SVG line charts: one mean curve and a one-std band per series.

use std::fmt::Write;

use hrlmppi::analysis::{mean_std, resample_curve, Curve};

const W: f64 = 800.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Series {
    /// Resamples each curve onto a shared grid of `points` steps and takes
    /// the across-curve mean and std wherever at least one curve has data.
    pub fn from_curves(name: &str, curves: &[Curve], points: usize) -> Self {
        let end = curves.iter().flat_map(|c| c.steps.last().copied()).fold(0.0, f64::max);
        let points = points.max(1);
        let window = (end / points as f64).max(1.0);
        let grid: Vec<f64> = (1..=points).map(|i| end * i as f64 / points as f64).collect();
        let sampled: Vec<Vec<f64>> = curves.iter().map(|c| resample_curve(c, &grid, window)).collect();
        let mut s = Series { name: name.to_string(), x: Vec::new(), mean: Vec::new(), std: Vec::new() };
        for (i, &g) in grid.iter().enumerate() {
            let vals: Vec<f64> = sampled.iter().map(|v| v[i]).filter(|v| v.is_finite()).collect();
            if vals.is_empty() {
                continue;
            }
            let (m, sd) = mean_std(&vals);
            s.x.push(g);
            s.mean.push(m);
            s.std.push(sd);
        }
        s
    }
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

pub fn render(series: &[Series], xlabel: &str, ylabel: &str) -> String {
    let xs = series.iter().flat_map(|s| s.x.iter().copied());
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let ys = series.iter().flat_map(|s| s.mean.iter().zip(&s.std).flat_map(|(m, d)| [m - d, m + d]));
    let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (x0, x1) = if x0.is_finite() { (x0.min(0.0), x1.max(x0 + 1.0)) } else { (0.0, 1.0) };
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if y1 - y0 < 1e-12 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut o = String::new();
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(o, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        o,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for t in ticks(x0, x1, 5) {
        let x = px(t);
        let _ = writeln!(
            o,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#,
            TOP + ph,
            TOP + ph + 5.0
        );
        let _ = writeln!(o, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, TOP + ph + 20.0, label(t));
    }
    for t in ticks(y0, y1, 5) {
        let y = py(t);
        let _ = writeln!(o, r#"<line x1="{:.1}" y1="{y:.1}" x2="{LEFT}" y2="{y:.1}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(o, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, label(t));
    }
    let _ = writeln!(o, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xlabel}</text>"#, LEFT + pw / 2.0, H - 15.0);
    let _ = writeln!(
        o,
        r#"<text x="20" y="{:.1}" text-anchor="middle" transform="rotate(-90 20 {:.1})">{ylabel}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        if !s.x.is_empty() {
            let upper = s.x.iter().zip(s.mean.iter().zip(&s.std)).map(|(x, (m, d))| (px(*x), py(m + d)));
            let lower = s.x.iter().zip(s.mean.iter().zip(&s.std)).rev().map(|(x, (m, d))| (px(*x), py(m - d)));
            let band: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
            let _ =
                writeln!(o, r#"<polygon points="{}" fill="{c}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
            let line: Vec<String> =
                s.x.iter().zip(&s.mean).map(|(x, m)| format!("{:.1},{:.1}", px(*x), py(*m))).collect();
            let _ = writeln!(o, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, line.join(" "));
        }
        let ly = TOP + 15.0 + 20.0 * i as f64;
        let lx = W - RIGHT + 15.0;
        let _ =
            writeln!(o, r#"<line x1="{lx}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{c}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(o, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.name));
    }
    o.push_str("</svg>\n");
    o
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_brackets_mean() {
        let a = Curve { steps: vec![10.0, 20.0], values: vec![1.0, 3.0] };
        let b = Curve { steps: vec![10.0, 20.0], values: vec![3.0, 5.0] };
        let s = Series::from_curves("m", &[a, b], 2);
        assert_eq!(s.x, vec![10.0, 20.0]);
        assert_eq!(s.mean, vec![2.0, 4.0]);
        assert!((s.std[0] - 2f64.sqrt()).abs() < 1e-12);
        let svg = render(&[s], "x", "y");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn empty_series_renders() {
        let s = Series::from_curves("none", &[], 10);
        assert!(render(&[s], "x", "y").contains("</svg>"));
    }
}
