//! Planar primitives used by the track model: points, segments and
//! oriented rectangles (vehicle footprints).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn from_angle(radians: f64) -> Self {
        Self::new(radians.cos(), radians.sin())
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn length(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub const fn new(a: Vec2, b: Vec2) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).length()
    }

    /// Point at parameter `s` in [0, 1].
    pub fn at(&self, s: f64) -> Vec2 {
        self.a + (self.b - self.a) * s
    }
}

/// Rectangle of `length` x `width` centred on `center`, long axis along `heading`.
///
/// Zero extents are allowed; a rectangle with both extents zero is a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            heading,
            length: length.max(0.0),
            width: width.max(0.0),
        }
    }

    fn axes(&self) -> (Vec2, Vec2) {
        let u = Vec2::from_angle(self.heading);
        (u, u.perp())
    }

    fn half_extents(&self) -> (f64, f64) {
        (self.length * 0.5, self.width * 0.5)
    }

    /// Coordinates of `p` in the rectangle's local frame.
    fn local(&self, p: Vec2) -> Vec2 {
        let (u, v) = self.axes();
        let d = p - self.center;
        Vec2::new(d.dot(u), d.dot(v))
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let (u, v) = self.axes();
        let (hl, hw) = self.half_extents();
        [
            self.center + u * hl + v * hw,
            self.center - u * hl + v * hw,
            self.center - u * hl - v * hw,
            self.center + u * hl - v * hw,
        ]
    }

    /// Closed containment: boundary points are inside.
    pub fn contains(&self, p: Vec2) -> bool {
        let local = self.local(p);
        let (hl, hw) = self.half_extents();
        local.x.abs() <= hl + EPS && local.y.abs() <= hw + EPS
    }

    /// Closed intersection test against a segment.
    ///
    /// The segment is clipped against the rectangle's slab in local
    /// coordinates (Liang-Barsky); a non-empty parameter interval means
    /// the two share at least one point.
    pub fn intersects_segment(&self, seg: &Segment) -> bool {
        let p0 = self.local(seg.a);
        let p1 = self.local(seg.b);
        let d = p1 - p0;
        let (hl, hw) = self.half_extents();
        let mut t_min = 0.0_f64;
        let mut t_max = 1.0_f64;
        for (start, delta, half) in [(p0.x, d.x, hl + EPS), (p0.y, d.y, hw + EPS)] {
            if delta.abs() < 1e-15 {
                if start.abs() > half {
                    return false;
                }
                continue;
            }
            let mut t0 = (-half - start) / delta;
            let mut t1 = (half - start) / delta;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_min = t_min.max(t0);
            t_max = t_max.min(t1);
            if t_min > t_max {
                return false;
            }
        }
        true
    }
}

/// Tolerance absorbing rounding in the local-frame transform.
const EPS: f64 = 1e-12;
