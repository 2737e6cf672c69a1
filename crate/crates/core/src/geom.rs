//! Planar points and a few segment primitives shared by the interface and
//! front-tracking code.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    #[inline]
    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-D cross product.
    #[inline]
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    /// Rotation by -90 degrees. For a counter-clockwise curve this turns the
    /// tangent into the outward normal.
    #[inline]
    pub fn rot_cw(self) -> Point {
        Point::new(self.y, -self.x)
    }

    pub fn normalized(self) -> Point {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            self
        }
    }
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    #[inline]
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    #[inline]
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Closest point to `q` on the segment `[a, b]`, with the segment parameter.
#[inline]
pub fn closest_on_segment(q: Point, a: Point, b: Point) -> (Point, f64) {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return (a, 0.0);
    }
    let t = ((q - a).dot(ab) / len2).clamp(0.0, 1.0);
    (a + ab * t, t)
}

#[inline]
pub fn segment_distance(q: Point, a: Point, b: Point) -> f64 {
    q.dist(closest_on_segment(q, a, b).0)
}

/// Proper or touching intersection test for two closed segments.
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = (q2 - q1).cross(p1 - q1);
    let d2 = (q2 - q1).cross(p2 - q1);
    let d3 = (p2 - p1).cross(q1 - p1);
    let d4 = (p2 - p1).cross(q2 - p1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: Point, b: Point, c: Point, d: f64| {
        d == 0.0
            && c.x >= a.x.min(b.x)
            && c.x <= a.x.max(b.x)
            && c.y >= a.y.min(b.y)
            && c.y <= a.y.max(b.y)
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

/// Parameter `s` along the ray `origin + s * dir` where it meets segment
/// `[a, b]`, restricted to `|s| <= reach`.
pub fn ray_segment_hit(origin: Point, dir: Point, reach: f64, a: Point, b: Point) -> Option<f64> {
    let e = b - a;
    let denom = dir.cross(e);
    if denom == 0.0 {
        return None;
    }
    let w = a - origin;
    let s = w.cross(e) / denom;
    let t = w.cross(dir) / denom;
    if (0.0..=1.0).contains(&t) && s.abs() <= reach {
        Some(s)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closest_point_clamps_to_endpoints() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(1.0, 0.0);
        assert_eq!(closest_on_segment(Point::new(-1.0, 1.0), a, b).0, a);
        assert_eq!(closest_on_segment(Point::new(2.0, 1.0), a, b).0, b);
        assert!((segment_distance(Point::new(0.5, 2.0), a, b) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn crossing_and_disjoint_segments() {
        let o = Point::new(0.0, 0.0);
        assert!(segments_intersect(
            o,
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 0.0)
        ));
        assert!(!segments_intersect(
            o,
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0)
        ));
        // shared endpoint counts as touching
        assert!(segments_intersect(
            o,
            Point::new(1.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 1.0)
        ));
    }

    #[test]
    fn ray_hits_segment() {
        let s = ray_segment_hit(
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            2.0,
            Point::new(1.5, -1.0),
            Point::new(1.5, 1.0),
        );
        assert_eq!(s, Some(1.5));
        let miss = ray_segment_hit(
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            1.0,
            Point::new(1.5, -1.0),
            Point::new(1.5, 1.0),
        );
        assert_eq!(miss, None);
    }
}
