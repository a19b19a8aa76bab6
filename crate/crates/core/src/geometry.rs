//! Planar geometry: vectors, poses and arc-length parameterised polylines.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Vec2::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Left-hand normal (rotated +90°).
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(p: [f64; 2]) -> Self {
        Vec2::new(p[0], p[1])
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose { x, y, heading }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Expresses a world point in this pose's frame (x forward, y left).
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.position()).rotate(-self.heading)
    }

    pub fn to_world(&self, p: Vec2) -> Vec2 {
        p.rotate(self.heading) + self.position()
    }
}

/// Closest-point projection of a query onto a [`Polyline`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point.
    pub s: f64,
    /// Signed offset, positive to the left of the direction of travel.
    pub lateral: f64,
    pub distance: f64,
    pub segment: usize,
}

/// Polyline with cached cumulative arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
}

impl Polyline {
    /// Builds a polyline, dropping consecutive duplicate points.
    /// Returns `None` with fewer than two distinct points.
    pub fn new(points: impl IntoIterator<Item = Vec2>) -> Option<Self> {
        let mut pts: Vec<Vec2> = Vec::new();
        for p in points {
            if pts.last().is_none_or(|q| q.dist(p) > 1e-12) {
                pts.push(p);
            }
        }
        if pts.len() < 2 {
            return None;
        }
        let mut cumulative = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in pts.windows(2) {
            acc += w[0].dist(w[1]);
            cumulative.push(acc);
        }
        Some(Polyline {
            points: pts,
            cumulative,
        })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn segment_at(&self, s: f64) -> usize {
        let n = self.points.len() - 1;
        match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        }
    }

    /// Unit tangent of segment `i`.
    pub fn segment_direction(&self, i: usize) -> Vec2 {
        let d = self.points[i + 1] - self.points[i];
        d * (1.0 / d.norm())
    }

    /// Point at arc length `s`; linearly extrapolated beyond either end.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let i = self.segment_at(s.clamp(0.0, self.length()));
        let i = if s < 0.0 {
            0
        } else if s > self.length() {
            self.points.len() - 2
        } else {
            i
        };
        self.points[i] + self.segment_direction(i) * (s - self.cumulative[i])
    }

    /// Tangent heading at arc length `s` (segment direction).
    pub fn heading_at(&self, s: f64) -> f64 {
        let i = self.segment_at(s.clamp(0.0, self.length()));
        let d = self.segment_direction(i);
        d.y.atan2(d.x)
    }

    /// Signed curvature estimate at `s` from the heading change across ±`half_window` metres.
    pub fn curvature_at(&self, s: f64, half_window: f64) -> f64 {
        let a = (s - half_window).max(0.0);
        let b = (s + half_window).min(self.length());
        if b - a < 1e-9 {
            return 0.0;
        }
        wrap_angle(self.heading_at(b) - self.heading_at(a)) / (b - a)
    }

    pub fn project(&self, p: Vec2) -> Projection {
        let mut best = Projection {
            s: 0.0,
            lateral: 0.0,
            distance: f64::INFINITY,
            segment: 0,
        };
        for i in 0..self.points.len() - 1 {
            let a = self.points[i];
            let d = self.points[i + 1] - a;
            let len2 = d.dot(d);
            let u = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
            let foot = a + d * u;
            let dist = p.dist(foot);
            if dist < best.distance - 1e-12 {
                let dir = d * (1.0 / len2.sqrt());
                best = Projection {
                    s: self.cumulative[i] + u * len2.sqrt(),
                    lateral: dir.cross(p - a),
                    distance: dist,
                    segment: i,
                };
            }
        }
        best
    }

    /// Walks the polyline from arc length `start_s`, emitting `count` points each at
    /// Euclidean distance exactly `step` from its predecessor (the first from `origin`).
    /// Points past the end continue along the final segment direction.
    pub fn chord_walk(&self, origin: Vec2, start_s: f64, step: f64, count: usize) -> Vec<Vec2> {
        let mut out = Vec::with_capacity(count);
        let mut current = origin;
        let mut seg = self.segment_at(start_s.clamp(0.0, self.length()));
        let last = self.points.len() - 2;
        // Parametric position on the current segment below which no intersection is accepted.
        let mut u_min = ((start_s - self.cumulative[seg]) / self.segment_len(seg)).clamp(0.0, 1.0);
        while out.len() < count {
            let a = self.points[seg];
            let d = self.points[seg + 1] - a;
            let unbounded = seg == last;
            match circle_segment_exit(current, step, a, d, u_min, unbounded) {
                Some(u) => {
                    let p = a + d * u;
                    out.push(p);
                    current = p;
                    u_min = u;
                }
                None if seg == last => {
                    current = current + self.segment_direction(last) * step;
                    out.push(current);
                }
                None => {
                    seg += 1;
                    u_min = 0.0;
                }
            }
        }
        out
    }

    fn segment_len(&self, i: usize) -> f64 {
        self.cumulative[i + 1] - self.cumulative[i]
    }
}

/// Largest-forward intersection parameter `u ≥ u_min` of the circle centred at `c`
/// with the segment `a + u·d`, `u ≤ 1` unless `unbounded`.
fn circle_segment_exit(c: Vec2, r: f64, a: Vec2, d: Vec2, u_min: f64, unbounded: bool) -> Option<f64> {
    let f = a - c;
    let qa = d.dot(d);
    let qb = 2.0 * f.dot(d);
    let qc = f.dot(f) - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let u = (-qb + disc.sqrt()) / (2.0 * qa);
    let within = u >= u_min - 1e-12 && (unbounded || u <= 1.0);
    within.then_some(u.max(u_min))
}

/// Separating-axis overlap test for two oriented rectangles.
pub fn boxes_overlap(a: &Pose, a_half: [f64; 2], b: &Pose, b_half: [f64; 2]) -> bool {
    let axes = [
        Vec2::from_angle(a.heading),
        Vec2::from_angle(a.heading).perp(),
        Vec2::from_angle(b.heading),
        Vec2::from_angle(b.heading).perp(),
    ];
    let delta = b.position() - a.position();
    let (ax, ay) = (axes[0], axes[1]);
    let (bx, by) = (axes[2], axes[3]);
    for axis in axes {
        let ra = a_half[0] * ax.dot(axis).abs() + a_half[1] * ay.dot(axis).abs();
        let rb = b_half[0] * bx.dot(axis).abs() + b_half[1] * by.dot(axis).abs();
        if delta.dot(axis).abs() > ra + rb {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        for k in -20..20 {
            let w = wrap_angle(k as f64 * 0.7);
            assert!((-PI..PI).contains(&w));
        }
        assert_eq!(wrap_angle(PI), -PI);
    }

    #[test]
    fn projection_on_straight_line() {
        let line = Polyline::new([Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)]).unwrap();
        let p = line.project(Vec2::new(40.0, 3.0));
        assert!((p.s - 40.0).abs() < 1e-12);
        assert!((p.lateral - 3.0).abs() < 1e-12);
        let p = line.project(Vec2::new(40.0, -3.0));
        assert!((p.lateral + 3.0).abs() < 1e-12);
    }

    #[test]
    fn chord_walk_spacing_on_corner() {
        let line = Polyline::new([
            Vec2::new(0.0, 0.0),
            Vec2::new(5.5, 0.0),
            Vec2::new(5.5, 30.0),
        ])
        .unwrap();
        let pts = line.chord_walk(Vec2::ZERO, 0.0, 1.0, 20);
        let mut prev = Vec2::ZERO;
        for p in pts {
            assert!((p.dist(prev) - 1.0).abs() < 1e-9, "{p:?}");
            prev = p;
        }
    }

    #[test]
    fn chord_walk_extrapolates() {
        let line = Polyline::new([Vec2::new(0.0, 0.0), Vec2::new(3.0, 0.0)]).unwrap();
        let pts = line.chord_walk(Vec2::ZERO, 0.0, 1.0, 6);
        assert!((pts[5].x - 6.0).abs() < 1e-12);
    }

    #[test]
    fn box_overlap() {
        let a = Pose::new(0.0, 0.0, 0.0);
        assert!(boxes_overlap(&a, [2.0, 1.0], &Pose::new(3.9, 0.0, 0.0), [2.0, 1.0]));
        assert!(!boxes_overlap(&a, [2.0, 1.0], &Pose::new(4.1, 0.0, 0.0), [2.0, 1.0]));
        assert!(boxes_overlap(&a, [2.0, 1.0], &Pose::new(0.0, 2.5, 1.5), [2.0, 1.0]));
    }
}
