//! Closed racing track: a Catmull-Rom centreline through waypoints, resampled
//! densely for arc-length lookup and projection.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub x: f64,
    pub y: f64,
}

/// Result of projecting a point onto the centreline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length in `[0, length)`.
    pub s: f64,
    /// Signed lateral offset, positive to the left of the driving direction.
    pub lateral: f64,
    /// Centreline heading at `s`.
    pub heading: f64,
}

#[derive(Debug, Clone)]
pub struct Track {
    pts: Vec<TrackPoint>,
    /// Cumulative arc length at each dense point; `cum[0] = 0`.
    cum: Vec<f64>,
    length: f64,
    pub half_width: f64,
}

const SAMPLES_PER_SEGMENT: usize = 40;
/// Half-width of the window searched around a hint during projection.
const WINDOW: f64 = 25.0;

fn catmull_rom(p0: TrackPoint, p1: TrackPoint, p2: TrackPoint, p3: TrackPoint, t: f64) -> TrackPoint {
    let t2 = t * t;
    let t3 = t2 * t;
    let f = |a: f64, b: f64, c: f64, d: f64| {
        0.5 * (2.0 * b + (-a + c) * t + (2.0 * a - 5.0 * b + 4.0 * c - d) * t2 + (-a + 3.0 * b - 3.0 * c + d) * t3)
    };
    TrackPoint { x: f(p0.x, p1.x, p2.x, p3.x), y: f(p0.y, p1.y, p2.y, p3.y) }
}

impl Track {
    pub fn from_waypoints(way: &[TrackPoint], half_width: f64) -> Result<Self> {
        if way.len() < 4 {
            return Err(Error::invalid(format!("track needs at least 4 waypoints, got {}", way.len())));
        }
        if !(half_width > 0.0) {
            return Err(Error::invalid("track half-width must be positive"));
        }
        let n = way.len();
        let mut pts = Vec::with_capacity(n * SAMPLES_PER_SEGMENT);
        for i in 0..n {
            let (p0, p1, p2, p3) = (way[(i + n - 1) % n], way[i], way[(i + 1) % n], way[(i + 2) % n]);
            for k in 0..SAMPLES_PER_SEGMENT {
                pts.push(catmull_rom(p0, p1, p2, p3, k as f64 / SAMPLES_PER_SEGMENT as f64));
            }
        }
        let mut cum = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        for i in 0..pts.len() {
            cum.push(acc);
            let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
            acc += (b.x - a.x).hypot(b.y - a.y);
        }
        if !(acc > 0.0) {
            return Err(Error::invalid("degenerate track"));
        }
        Ok(Self { pts, cum, length: acc, half_width })
    }

    /// Reads one `x y` pair per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str, half_width: f64) -> Result<Self> {
        let mut way = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let nums: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Config { line: i + 1, msg: format!("bad coordinate {s:?}") })
            };
            if nums.len() != 2 {
                return Err(Error::Config { line: i + 1, msg: format!("expected \"x y\", got {line:?}") });
            }
            way.push(TrackPoint { x: parse(nums[0])?, y: parse(nums[1])? });
        }
        Self::from_waypoints(&way, half_width)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, RACING_HALF_WIDTH)
    }

    /// An ellipse of roughly 300 m with a gentle S on the long sides.
    pub fn default_circuit() -> Self {
        let n = 24;
        let way: Vec<TrackPoint> = (0..n)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                TrackPoint { x: 60.0 * th.cos(), y: 35.0 * th.sin() + 4.0 * (3.0 * th).sin() }
            })
            .collect();
        Self::from_waypoints(&way, RACING_HALF_WIDTH).expect("built-in track is valid")
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn wrap_s(&self, s: f64) -> f64 {
        s.rem_euclid(self.length)
    }

    fn segment(&self, i: usize) -> (TrackPoint, TrackPoint, f64) {
        let a = self.pts[i];
        let b = self.pts[(i + 1) % self.pts.len()];
        let len = (b.x - a.x).hypot(b.y - a.y);
        (a, b, len)
    }

    fn index_at(&self, s: f64) -> usize {
        let s = self.wrap_s(s);
        match self.cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    /// Centreline point and heading at arc length `s`.
    pub fn point_at(&self, s: f64) -> (f64, f64, f64) {
        let s = self.wrap_s(s);
        let i = self.index_at(s);
        let (a, b, len) = self.segment(i);
        let f = if len > 0.0 { (s - self.cum[i]) / len } else { 0.0 };
        (a.x + f * (b.x - a.x), a.y + f * (b.y - a.y), (b.y - a.y).atan2(b.x - a.x))
    }

    fn project_segments(&self, x: f64, y: f64, indices: impl Iterator<Item = usize>) -> Projection {
        let mut best = (f64::INFINITY, Projection { s: 0.0, lateral: 0.0, heading: 0.0 });
        for i in indices {
            let (a, b, len) = self.segment(i);
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let f = if len > 0.0 { (((x - a.x) * dx + (y - a.y) * dy) / (len * len)).clamp(0.0, 1.0) } else { 0.0 };
            let (qx, qy) = (a.x + f * dx, a.y + f * dy);
            let d2 = (x - qx).powi(2) + (y - qy).powi(2);
            if d2 < best.0 {
                let heading = dy.atan2(dx);
                let lateral = if len > 0.0 { (dx * (y - a.y) - dy * (x - a.x)) / len } else { 0.0 };
                best = (d2, Projection { s: self.wrap_s(self.cum[i] + f * len), lateral, heading });
            }
        }
        best.1
    }

    /// Global nearest-point projection.
    pub fn project(&self, x: f64, y: f64) -> Projection {
        self.project_segments(x, y, 0..self.pts.len())
    }

    /// Projection restricted to a window of arc length around `s_hint`.
    pub fn project_near(&self, x: f64, y: f64, s_hint: f64) -> Projection {
        let n = self.pts.len();
        let mean_seg = self.length / n as f64;
        let half = (WINDOW / mean_seg).ceil() as usize + 1;
        let c = self.index_at(s_hint);
        let count = (2 * half + 1).min(n);
        self.project_segments(x, y, (0..count).map(|k| (c + n - half.min(n / 2) + k) % n))
    }

    /// Normalised boundary distance `|lateral| / half_width`.
    pub fn boundary_progress(&self, lateral: f64) -> f64 {
        lateral.abs() / self.half_width
    }

    /// Signed arc-length difference `b - a` wrapped into `(-L/2, L/2]`.
    pub fn ds(&self, a: f64, b: f64) -> f64 {
        let mut d = (b - a).rem_euclid(self.length);
        if d > 0.5 * self.length {
            d -= self.length;
        }
        d
    }

    pub fn waypoints_dense(&self) -> &[TrackPoint] {
        &self.pts
    }
}

pub const RACING_HALF_WIDTH: f64 = 6.0;
