//! Level-set extraction, distances between curves and grid fields, and the
//! statistics that compare a diffuse layer with a reference interface.

use std::f64::consts::PI;

use thiserror::Error;

use crate::geom::{closest_on_segment, ray_segment_hit, segments_intersect, Point};
use crate::grid::{GridGeometry, ScalarField};
use crate::profile::LayerProfile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterfaceError {
    #[error("closed curve needs at least {min} points, got {got}")]
    TooFewPoints { got: usize, min: usize },
    #[error("non-finite curve point at index {0}")]
    NonFinite(usize),
    #[error("curve self-intersects between segments {0} and {1}")]
    SelfIntersection(usize, usize),
    #[error("marching squares could not chain the segment through cell ({i}, {j})")]
    Unchainable { i: usize, j: usize },
    #[error("level set is empty")]
    EmptyLevelSet,
    #[error("level set has a component leaving the domain")]
    OpenContour,
    #[error("graph property fails at reference vertex {vertex} ({x}, {y}): {hits} intersections within the tube")]
    GraphProperty {
        vertex: usize,
        x: f64,
        y: f64,
        hits: usize,
    },
    #[error("tube radius must be positive, got {0}")]
    BadTube(f64),
}

/// Minimum vertex count of a closed curve.
pub const MIN_POINTS: usize = 8;

/// Polyline with the region `u < level` on its left. Closed curves around a
/// sublevel region therefore run counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub points: Vec<Point>,
    pub closed: bool,
}

impl Curve {
    /// Closed curve, validated.
    pub fn closed(points: Vec<Point>) -> Result<Self, InterfaceError> {
        let c = Curve {
            points,
            closed: true,
        };
        c.validate()?;
        Ok(c)
    }

    /// Counter-clockwise regular polygon inscribed in a circle.
    pub fn circle(center: Point, r: f64, n: usize) -> Self {
        Self::ellipse(center, r, r, n)
    }

    pub fn ellipse(center: Point, rx: f64, ry: f64, n: usize) -> Self {
        let points = (0..n)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / n as f64;
                Point::new(center.x + rx * a.cos(), center.y + ry * a.sin())
            })
            .collect();
        Curve {
            points,
            closed: true,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn segment_count(&self) -> usize {
        match (self.closed, self.points.len()) {
            (_, 0 | 1) => 0,
            (true, n) => n,
            (false, n) => n - 1,
        }
    }

    #[inline]
    pub fn segment(&self, k: usize) -> (Point, Point) {
        let n = self.points.len();
        (self.points[k], self.points[(k + 1) % n])
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        (0..self.segment_count()).map(|k| self.segment(k))
    }

    pub fn validate(&self) -> Result<(), InterfaceError> {
        if let Some(k) = self
            .points
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite()))
        {
            return Err(InterfaceError::NonFinite(k));
        }
        let min = if self.closed { MIN_POINTS } else { 2 };
        if self.points.len() < min {
            return Err(InterfaceError::TooFewPoints {
                got: self.points.len(),
                min,
            });
        }
        match self.self_intersection() {
            Some((a, b)) => Err(InterfaceError::SelfIntersection(a, b)),
            None => Ok(()),
        }
    }

    /// First pair of non-adjacent intersecting segments, found with a
    /// uniform hash grid.
    pub fn self_intersection(&self) -> Option<(usize, usize)> {
        let m = self.segment_count();
        if m < 3 {
            return None;
        }
        let cell = median_segment_length(self).max(1e-12) * 2.0;
        let (lo, _) = self.bounds();
        let bin = |v: f64, o: f64| ((v - o) / cell).floor() as i64;
        let mut bins: std::collections::HashMap<(i64, i64), Vec<usize>> = Default::default();
        let boxes: Vec<(Point, Point)> = self
            .segments()
            .map(|(a, b)| {
                (
                    Point::new(a.x.min(b.x), a.y.min(b.y)),
                    Point::new(a.x.max(b.x), a.y.max(b.y)),
                )
            })
            .collect();
        for (k, (bl, bh)) in boxes.iter().enumerate() {
            for bx in bin(bl.x, lo.x)..=bin(bh.x, lo.x) {
                for by in bin(bl.y, lo.y)..=bin(bh.y, lo.y) {
                    bins.entry((bx, by)).or_default().push(k);
                }
            }
        }
        let adjacent = |a: usize, b: usize| b == a + 1 || (self.closed && a == 0 && b == m - 1);
        let mut found: Option<(usize, usize)> = None;
        for (&(bx, by), members) in &bins {
            for (x, &a) in members.iter().enumerate() {
                for &b in &members[x + 1..] {
                    let (a, b) = (a.min(b), a.max(b));
                    if a == b || adjacent(a, b) {
                        continue;
                    }
                    // test each pair once: in the bin holding the overlap corner
                    let corner = Point::new(
                        boxes[a].0.x.max(boxes[b].0.x),
                        boxes[a].0.y.max(boxes[b].0.y),
                    );
                    if (bin(corner.x, lo.x), bin(corner.y, lo.y)) != (bx, by) {
                        continue;
                    }
                    let (p1, p2) = self.segment(a);
                    let (q1, q2) = self.segment(b);
                    if segments_intersect(p1, p2, q1, q2) && found.is_none_or(|f| (a, b) < f) {
                        found = Some((a, b));
                    }
                }
            }
        }
        found
    }

    pub fn bounds(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.points {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }

    /// Shoelace area; positive for counter-clockwise closed curves.
    pub fn signed_area(&self) -> f64 {
        if !self.closed {
            return 0.0;
        }
        0.5 * self.segments().map(|(a, b)| a.cross(b)).sum::<f64>()
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| a.dist(b)).sum()
    }

    /// Area centroid for closed curves, vertex mean otherwise.
    pub fn centroid(&self) -> Point {
        let area = self.signed_area();
        if self.closed && area.abs() > 0.0 {
            let (mut cx, mut cy) = (0.0, 0.0);
            for (a, b) in self.segments() {
                let w = a.cross(b);
                cx += (a.x + b.x) * w;
                cy += (a.y + b.y) * w;
            }
            return Point::new(cx / (6.0 * area), cy / (6.0 * area));
        }
        let n = self.points.len().max(1) as f64;
        let s = self.points.iter().fold(Point::ORIGIN, |acc, &p| acc + p);
        s * (1.0 / n)
    }

    /// Unit tangent at each vertex from the neighbouring vertices.
    pub fn tangents(&self) -> Vec<Point> {
        let n = self.points.len();
        (0..n)
            .map(|k| {
                let prev = if k > 0 {
                    self.points[k - 1]
                } else if self.closed {
                    self.points[n - 1]
                } else {
                    self.points[0]
                };
                let next = if k + 1 < n {
                    self.points[k + 1]
                } else if self.closed {
                    self.points[0]
                } else {
                    self.points[n - 1]
                };
                (next - prev).normalized()
            })
            .collect()
    }

    /// Normals pointing to the right of the direction of travel: outward for
    /// a counter-clockwise curve.
    pub fn normals(&self) -> Vec<Point> {
        self.tangents().into_iter().map(Point::rot_cw).collect()
    }

    /// Cumulative arclength at each vertex, starting from zero.
    pub fn arclength(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.points.len());
        let mut acc = 0.0;
        s.push(0.0);
        for w in self.points.windows(2) {
            acc += w[0].dist(w[1]);
            s.push(acc);
        }
        s.truncate(self.points.len());
        s
    }

    /// `n` points equally spaced in arclength, starting at the first vertex.
    pub fn resample(&self, n: usize) -> Curve {
        let total = self.length();
        let m = self.segment_count();
        if n == 0 || m == 0 || total == 0.0 {
            return self.clone();
        }
        let denom = if self.closed {
            n as f64
        } else {
            (n - 1).max(1) as f64
        };
        let mut out = Vec::with_capacity(n);
        let mut seg = 0;
        let mut before = 0.0;
        let mut len = self.segment(0).0.dist(self.segment(0).1);
        for k in 0..n {
            let target = total * k as f64 / denom;
            while before + len < target && seg + 1 < m {
                before += len;
                seg += 1;
                let (a, b) = self.segment(seg);
                len = a.dist(b);
            }
            let (a, b) = self.segment(seg);
            let t = if len > 0.0 {
                ((target - before) / len).clamp(0.0, 1.0)
            } else {
                0.0
            };
            out.push(a + (b - a) * t);
        }
        Curve {
            points: out,
            closed: self.closed,
        }
    }
}

fn median_segment_length(c: &Curve) -> f64 {
    let mut l: Vec<f64> = c.segments().map(|(a, b)| a.dist(b)).collect();
    if l.is_empty() {
        return 0.0;
    }
    l.sort_by(f64::total_cmp);
    l[l.len() / 2]
}

/// Marching squares on the node grid.
///
/// Crossing points are interpolated linearly along cell edges, saddle cells
/// are resolved by the average of the four corners, and segments are chained
/// through shared edges. Closed components come back with `u < level` on
/// the left; components that run into the domain boundary come back with
/// `closed == false`. Returns an empty list when `level` is not strictly
/// between the field's extremes.
pub fn extract_level_set(f: &ScalarField, level: f64) -> Result<Vec<Curve>, InterfaceError> {
    if !(f.min() < level && level < f.max()) {
        return Ok(Vec::new());
    }
    let g = f.geom;
    let (nx, ny) = (g.nx, g.ny);
    // edge key: 2 * node + 0 for the edge to (i+1, j), + 1 for the edge to (i, j+1)
    let h_key = |i: usize, j: usize| 2 * (j * nx + i);
    let v_key = |i: usize, j: usize| 2 * (j * nx + i) + 1;
    const NONE: u32 = u32::MAX;
    let mut next = vec![NONE; 2 * g.len()];
    let mut is_end = vec![false; 2 * g.len()];
    let mut cell_of = vec![(0u32, 0u32); 0];
    cell_of.resize(2 * g.len(), (0, 0));
    let mut segments = 0usize;

    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let v = [
                f.get(i, j),
                f.get(i + 1, j),
                f.get(i + 1, j + 1),
                f.get(i, j + 1),
            ];
            let below = v.map(|x| x < level);
            let edges = [h_key(i, j), v_key(i + 1, j), h_key(i, j + 1), v_key(i, j)];
            let starts: Vec<usize> = (0..4)
                .filter(|&k| below[k] && !below[(k + 1) % 4])
                .collect();
            if starts.is_empty() {
                continue;
            }
            let ends: Vec<usize> = (0..4)
                .filter(|&k| !below[k] && below[(k + 1) % 4])
                .collect();
            let pairs: Vec<(usize, usize)> = if starts.len() == 1 {
                vec![(starts[0], ends[0])]
            } else {
                let avg = 0.25 * (v[0] + v[1] + v[2] + v[3]);
                // centre below: cut off the above corners, else the below ones
                let step = if avg < level { 1 } else { 3 };
                starts.iter().map(|&k| (k, (k + step) % 4)).collect()
            };
            for (s, e) in pairs {
                let (ks, ke) = (edges[s], edges[e]);
                if next[ks] != NONE || is_end[ke] {
                    return Err(InterfaceError::Unchainable { i, j });
                }
                next[ks] = ke as u32;
                is_end[ke] = true;
                cell_of[ks] = (i as u32, j as u32);
                segments += 1;
            }
        }
    }

    let crossing = |key: usize| -> Point {
        let node = key / 2;
        let (i, j) = (node % nx, node / nx);
        let (i2, j2) = if key.is_multiple_of(2) {
            (i + 1, j)
        } else {
            (i, j + 1)
        };
        let (va, vb) = (f.get(i, j), f.get(i2, j2));
        let t = (level - va) / (vb - va);
        if key.is_multiple_of(2) {
            Point::new(g.x(i) + g.h * t, g.y(j))
        } else {
            Point::new(g.x(i), g.y(j) + g.h * t)
        }
    };

    let mut used = vec![false; 2 * g.len()];
    let mut curves = Vec::new();
    let trace =
        |start: usize, closed: bool, used: &mut Vec<bool>| -> Result<Curve, InterfaceError> {
            let mut pts = Vec::new();
            let mut key = start;
            let mut count = 0;
            loop {
                pts.push(crossing(key));
                used[key] = true;
                let nk = next[key];
                if nk == NONE {
                    break;
                }
                count += 1;
                if count > segments {
                    let (i, j) = cell_of[start];
                    return Err(InterfaceError::Unchainable {
                        i: i as usize,
                        j: j as usize,
                    });
                }
                key = nk as usize;
                if closed && key == start {
                    break;
                }
                if !closed && next[key] == NONE {
                    pts.push(crossing(key));
                    used[key] = true;
                    break;
                }
                if used[key] {
                    let (i, j) = cell_of[key];
                    return Err(InterfaceError::Unchainable {
                        i: i as usize,
                        j: j as usize,
                    });
                }
            }
            pts.dedup();
            if closed && pts.len() > 1 && pts.first() == pts.last() {
                pts.pop();
            }
            Ok(Curve {
                points: pts,
                closed,
            })
        };

    for key in 0..next.len() {
        if next[key] != NONE && !is_end[key] && !used[key] {
            curves.push(trace(key, false, &mut used)?);
        }
    }
    for key in 0..next.len() {
        if next[key] != NONE && !used[key] {
            curves.push(trace(key, true, &mut used)?);
        }
    }
    Ok(curves)
}

/// Signed distance from a point to a curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedDistanceResult {
    pub query: Point,
    /// Negative inside (the `u < level` side).
    pub distance: f64,
    pub foot: Point,
}

#[inline]
fn crossing_x(a: Point, b: Point, y: f64) -> Option<f64> {
    if (a.y > y) != (b.y > y) {
        Some(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y))
    } else {
        None
    }
}

/// Ray-cast parity towards `+x` over every closed curve in the set.
pub fn is_inside(q: Point, curves: &[Curve]) -> bool {
    let mut odd = false;
    for c in curves.iter().filter(|c| c.closed) {
        for (a, b) in c.segments() {
            if let Some(x) = crossing_x(a, b, q.y) {
                if x > q.x {
                    odd = !odd;
                }
            }
        }
    }
    odd
}

/// Brute-force minimum over all segments; sign by ray-cast parity. Open
/// curves take the sign from the side of the nearest segment.
pub fn signed_distance(q: Point, c: &Curve) -> SignedDistanceResult {
    signed_distance_to_set(q, std::slice::from_ref(c))
}

pub fn signed_distance_to_set(q: Point, curves: &[Curve]) -> SignedDistanceResult {
    let mut best = f64::INFINITY;
    let mut foot = q;
    let mut side = 0.0;
    for c in curves {
        for (a, b) in c.segments() {
            let (p, _) = closest_on_segment(q, a, b);
            let d = q.dist(p);
            if d < best {
                best = d;
                foot = p;
                side = (b - a).cross(q - a);
            }
        }
    }
    let inside = if curves.iter().all(|c| c.closed) {
        is_inside(q, curves)
    } else {
        side > 0.0
    };
    SignedDistanceResult {
        query: q,
        distance: if inside { -best } else { best },
        foot,
    }
}

/// Nearest segment per grid node, computed only within `cap` of the curves.
#[derive(Debug, Clone)]
pub struct DistanceBand {
    pub geom: GridGeometry,
    pub cap: f64,
    /// Unsigned distance, `cap` where no segment is within reach.
    pub dist: Vec<f64>,
    /// `(curve, segment, t)` of the foot; `None` beyond the cap.
    pub foot: Vec<Option<(u32, u32, f64)>>,
}

impl DistanceBand {
    pub fn new(geom: GridGeometry, curves: &[Curve], cap: f64) -> Self {
        let mut d2 = vec![cap * cap; geom.len()];
        let mut foot = vec![None; geom.len()];
        let clamp = |v: f64, n: usize| v.max(0.0).min((n - 1) as f64) as usize;
        for (ci, c) in curves.iter().enumerate() {
            for (k, (a, b)) in c.segments().enumerate() {
                let (lo_x, hi_x) = (a.x.min(b.x) - cap, a.x.max(b.x) + cap);
                let (lo_y, hi_y) = (a.y.min(b.y) - cap, a.y.max(b.y) + cap);
                let fx = |x: f64| (x - geom.origin.x) / geom.h;
                let fy = |y: f64| (y - geom.origin.y) / geom.h;
                if fx(hi_x) < 0.0 || fy(hi_y) < 0.0 {
                    continue;
                }
                let (i0, i1) = (
                    clamp(fx(lo_x).ceil(), geom.nx),
                    clamp(fx(hi_x).floor(), geom.nx),
                );
                let (j0, j1) = (
                    clamp(fy(lo_y).ceil(), geom.ny),
                    clamp(fy(hi_y).floor(), geom.ny),
                );
                let ab = b - a;
                let len2 = ab.dot(ab);
                for j in j0..=j1 {
                    let y = geom.y(j);
                    for i in i0..=i1 {
                        let q = Point::new(geom.x(i), y);
                        let t = if len2 > 0.0 {
                            ((q - a).dot(ab) / len2).clamp(0.0, 1.0)
                        } else {
                            0.0
                        };
                        let p = a + ab * t;
                        let dd = (q - p).dot(q - p);
                        let idx = geom.index(i, j);
                        if dd < d2[idx] || (foot[idx].is_none() && dd <= d2[idx]) {
                            d2[idx] = dd;
                            foot[idx] = Some((ci as u32, k as u32, t));
                        }
                    }
                }
            }
        }
        DistanceBand {
            geom,
            cap,
            dist: d2.into_iter().map(f64::sqrt).collect(),
            foot,
        }
    }

    /// Signed distance field with the sign from [`inside_mask`].
    pub fn signed(&self, curves: &[Curve]) -> ScalarField {
        let mask = inside_mask(&self.geom, curves);
        let values = self
            .dist
            .iter()
            .zip(&mask)
            .map(|(&d, &inside)| if inside { -d } else { d })
            .collect();
        ScalarField {
            geom: self.geom,
            values,
        }
    }
}

/// Scanline version of [`is_inside`] for every grid node.
pub fn inside_mask(geom: &GridGeometry, curves: &[Curve]) -> Vec<bool> {
    let mut mask = vec![false; geom.len()];
    let mut xs = Vec::new();
    for j in 0..geom.ny {
        let y = geom.y(j);
        xs.clear();
        for c in curves.iter().filter(|c| c.closed) {
            for (a, b) in c.segments() {
                if let Some(x) = crossing_x(a, b, y) {
                    xs.push(x);
                }
            }
        }
        if xs.is_empty() {
            continue;
        }
        xs.sort_by(f64::total_cmp);
        for i in 0..geom.nx {
            let x = geom.x(i);
            let right = xs.len() - xs.partition_point(|&c| c <= x);
            mask[geom.index(i, j)] = right % 2 == 1;
        }
    }
    mask
}

/// Directed Hausdorff distance from samples of `a` to the polyline `b`.
fn directed_hausdorff(a: &Curve, b: &Curve, spacing: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let near = |q: Point| {
        b.segments()
            .map(|(s, e)| q.dist(closest_on_segment(q, s, e).0))
            .fold(f64::INFINITY, f64::min)
    };
    if a.segment_count() == 0 {
        for &p in &a.points {
            worst = worst.max(near(p));
        }
        return worst;
    }
    for (s, e) in a.segments() {
        let n = (s.dist(e) / spacing).ceil().max(1.0) as usize;
        for k in 0..n {
            worst = worst.max(near(s + (e - s) * (k as f64 / n as f64)));
        }
    }
    if !a.closed {
        worst = worst.max(near(*a.points.last().expect("nonempty")));
    }
    worst
}

/// Symmetric Hausdorff distance, sampling each polyline at half the smaller
/// median segment length.
pub fn hausdorff(a: &Curve, b: &Curve) -> f64 {
    if a == b {
        return 0.0;
    }
    let spacing = 0.5 * median_segment_length(a).min(median_segment_length(b));
    let spacing = if spacing > 0.0 {
        spacing
    } else {
        f64::INFINITY
    };
    directed_hausdorff(a, b, spacing).max(directed_hausdorff(b, a, spacing))
}

/// Hausdorff distance between two sets of curves, taking the nearest point
/// over all curves of the other set.
pub fn hausdorff_sets(a: &[Curve], b: &[Curve]) -> f64 {
    let spacing = 0.5
        * a.iter()
            .chain(b)
            .map(median_segment_length)
            .filter(|&m| m > 0.0)
            .fold(f64::INFINITY, f64::min);
    let directed = |from: &[Curve], to: &[Curve]| {
        let near = |q: Point| {
            to.iter()
                .flat_map(|t| t.segments())
                .map(|(u, v)| q.dist(closest_on_segment(q, u, v).0))
                .fold(f64::INFINITY, f64::min)
        };
        let mut worst: f64 = 0.0;
        for c in from {
            for (s, e) in c.segments() {
                let n = (s.dist(e) / spacing).ceil().max(1.0) as usize;
                for k in 0..n {
                    worst = worst.max(near(s + (e - s) * (k as f64 / n as f64)));
                }
            }
        }
        worst
    };
    directed(a, b).max(directed(b, a))
}

/// `max |u - U0(d / eps)|` over all grid nodes, `d` the signed distance to
/// the extracted `a`-level set of `u`.
pub fn layer_error(
    u: &ScalarField,
    profile: &LayerProfile,
    eps: f64,
) -> Result<f64, InterfaceError> {
    let level = profile.nonlinearity().zeros().mid;
    let curves = extract_level_set(u, level)?;
    layer_error_with(u, profile, eps, &curves)
}

/// As [`layer_error`], with the level set supplied by the caller.
pub fn layer_error_with(
    u: &ScalarField,
    profile: &LayerProfile,
    eps: f64,
    curves: &[Curve],
) -> Result<f64, InterfaceError> {
    if curves.is_empty() {
        return Err(InterfaceError::EmptyLevelSet);
    }
    if curves.iter().any(|c| !c.closed) {
        return Err(InterfaceError::OpenContour);
    }
    let cap = profile.z_max() * eps;
    let d = DistanceBand::new(u.geom, curves, cap).signed(curves);
    Ok(u.values
        .iter()
        .zip(&d.values)
        .map(|(&v, &dd)| (v - profile.evaluate(dd / eps)).abs())
        .fold(0.0, f64::max))
}

/// A reference vertex with its outward normal and the offset `s` along the
/// normal at which the target curve is met.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphSample {
    pub point: Point,
    pub normal: Point,
    pub s: f64,
}

/// Represents `target` as a normal graph over `reference`: for each
/// reference vertex `p` the segment `p + s n(p)`, `|s| <= tube`, must meet
/// the target exactly once.
pub fn graph_over(
    reference: &Curve,
    target: &Curve,
    tube: f64,
) -> Result<Vec<GraphSample>, InterfaceError> {
    if !(tube > 0.0) {
        return Err(InterfaceError::BadTube(tube));
    }
    let normals = reference.normals();
    let (lo, hi) = target.bounds();
    let mut out = Vec::with_capacity(reference.len());
    let mut hits = Vec::new();
    for (k, (&p, &n)) in reference.points.iter().zip(&normals).enumerate() {
        hits.clear();
        let reach_box =
            p.x + tube < lo.x || p.x - tube > hi.x || p.y + tube < lo.y || p.y - tube > hi.y;
        if !reach_box {
            for (a, b) in target.segments() {
                if let Some(s) = ray_segment_hit(p, n, tube, a, b) {
                    hits.push(s);
                }
            }
        }
        hits.sort_by(f64::total_cmp);
        // a ray through a shared vertex hits both segments
        let tol = 1e-12 * tube.max(1.0);
        hits.dedup_by(|x, y| (*x - *y).abs() <= tol);
        if hits.len() != 1 {
            return Err(InterfaceError::GraphProperty {
                vertex: k,
                x: p.x,
                y: p.y,
                hits: hits.len(),
            });
        }
        out.push(GraphSample {
            point: p,
            normal: n,
            s: hits[0],
        });
    }
    Ok(out)
}

/// Minimum over grid nodes within `tube` of the reference of the central
/// difference gradient of `u` dotted with the reference normal at the
/// nearest point. Zero when no node lies in the tube.
pub fn transversality(
    u: &ScalarField,
    reference: &Curve,
    tube: f64,
) -> Result<f64, InterfaceError> {
    if !(tube > 0.0) {
        return Err(InterfaceError::BadTube(tube));
    }
    let g = u.geom;
    let band = DistanceBand::new(g, std::slice::from_ref(reference), tube);
    let normals = reference.normals();
    let n = reference.len();
    let mut worst = f64::INFINITY;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let idx = g.index(i, j);
            let Some((_, seg, t)) = band.foot[idx] else {
                continue;
            };
            if band.dist[idx] > tube {
                continue;
            }
            let seg = seg as usize;
            let normal = (normals[seg] * (1.0 - t) + normals[(seg + 1) % n] * t).normalized();
            let dx = central(i, g.nx, g.h, |ii| u.get(ii, j));
            let dy = central(j, g.ny, g.h, |jj| u.get(i, jj));
            worst = worst.min(dx * normal.x + dy * normal.y);
        }
    }
    Ok(if worst.is_finite() { worst } else { 0.0 })
}

fn central(k: usize, n: usize, h: f64, f: impl Fn(usize) -> f64) -> f64 {
    if k == 0 {
        (f(1) - f(0)) / h
    } else if k == n - 1 {
        (f(n - 1) - f(n - 2)) / h
    } else {
        (f(k + 1) - f(k - 1)) / (2.0 * h)
    }
}

/// Index of the curve in `candidates` whose centroid is nearest to that of
/// `c`.
pub fn nearest_by_centroid(c: &Curve, candidates: &[Curve]) -> Option<usize> {
    let z = c.centroid();
    candidates
        .iter()
        .enumerate()
        .map(|(k, d)| (k, d.centroid().dist(z)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::make_cubic;
    use crate::profile::{profile_slope, solve_profile};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn square(h: f64) -> GridGeometry {
        GridGeometry::from_box(Point::new(-1.0, -1.0), Point::new(1.0, 1.0), h).unwrap()
    }

    fn profile() -> &'static LayerProfile {
        static P: OnceLock<LayerProfile> = OnceLock::new();
        P.get_or_init(|| solve_profile(&make_cubic(), 12.0, 4000).unwrap())
    }

    /// `U0(d / eps)` for the exact circle distance.
    fn synthetic_circle(g: GridGeometry, r: f64, eps: f64, shift: f64) -> ScalarField {
        let p = profile();
        ScalarField::from_fn(g, |q| p.evaluate((q.norm() - r) / eps) + shift)
    }

    #[test]
    fn vertical_line_is_open() {
        let g = square(0.1);
        let f = ScalarField::from_fn(g, |p| p.x);
        let curves = extract_level_set(&f, 0.0).unwrap();
        assert_eq!(curves.len(), 1);
        let c = &curves[0];
        assert!(!c.closed);
        assert_eq!(c.len(), g.ny);
        assert!(c.points.iter().all(|p| p.x.abs() < 1e-15));
        // u < 0 (x < 0) on the left: the line runs upwards
        assert!(c.points[0].y < c.points[c.len() - 1].y);
    }

    #[test]
    fn constant_field_gives_nothing() {
        let f = ScalarField::constant(square(0.1), 1.0);
        assert!(extract_level_set(&f, 0.0).unwrap().is_empty());
    }

    #[test]
    fn radial_level_set_is_circle() {
        let h = 0.02;
        let g = square(h);
        let f = ScalarField::from_fn(g, |p| p.norm() - 0.5);
        let curves = extract_level_set(&f, 0.0).unwrap();
        assert_eq!(curves.len(), 1);
        let c = &curves[0];
        assert!(c.closed);
        c.validate().unwrap();
        assert!(
            c.signed_area() > 0.0,
            "interior u < 0 on the left means counter-clockwise"
        );
        for p in &c.points {
            assert!((p.norm() - 0.5).abs() <= 5.0 * h * h, "{}", p.norm());
        }
    }

    #[test]
    fn vertices_interpolate_to_level() {
        let g = square(0.05);
        let f = ScalarField::from_fn(g, |p| {
            (3.0 * p.x).sin() * (2.0 * p.y).cos() + 0.3 * p.x * p.y
        });
        for level in [-0.4, 0.0, 0.25] {
            for c in extract_level_set(&f, level).unwrap() {
                for p in &c.points {
                    assert!((f.bilinear(*p).unwrap() - level).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn saddle_follows_centre_average() {
        // cell (0, 0) has corners (-, +, -, +) counter-clockwise; the rest is above
        let g = GridGeometry::new(3, 3, 1.0, Point::ORIGIN).unwrap();
        let run = |side: f64| {
            let mut v = vec![1.5; 9];
            v[0] = -1.0;
            v[4] = -1.0;
            v[1] = side;
            v[3] = side;
            extract_level_set(&ScalarField::new(g, v).unwrap(), 0.0).unwrap()
        };
        // centre average above: the two below corners are cut off separately
        let apart = run(1.5);
        assert_eq!(apart.len(), 2);
        assert_eq!(apart.iter().filter(|c| c.closed).count(), 1);
        // centre average below: one region through the cell
        let joined = run(0.5);
        assert_eq!(joined.len(), 1);
        assert!(!joined[0].closed);
    }

    #[test]
    fn signed_distance_examples() {
        let c = Curve::circle(Point::ORIGIN, 1.0, 4096);
        let centre = signed_distance(Point::ORIGIN, &c);
        assert!((centre.distance + 1.0).abs() < 1e-6);
        let far = signed_distance(Point::new(2.0, 0.0), &c);
        assert!((far.distance - 1.0).abs() < 1e-12);
        assert_eq!(far.foot, Point::new(1.0, 0.0));
        let on = signed_distance(c.points[17], &c);
        assert!(on.distance.abs() < 1e-12);
    }

    #[test]
    fn hausdorff_examples() {
        let n = |r: f64| (2.0 * PI * r / 1e-3).ceil() as usize;
        let a = Curve::circle(Point::ORIGIN, 0.3, n(0.3));
        let b = Curve::circle(Point::ORIGIN, 0.4, n(0.4));
        assert!((hausdorff(&a, &b) - 0.1).abs() < 1e-6);
        assert_eq!(hausdorff(&a, &b), hausdorff(&b, &a));
        assert_eq!(hausdorff(&a, &a), 0.0);
    }

    #[test]
    fn hausdorff_triangle_inequality() {
        let a = Curve::circle(Point::ORIGIN, 0.3, 600);
        let b = Curve::ellipse(Point::new(0.05, 0.0), 0.35, 0.3, 700);
        let c = Curve::circle(Point::new(0.0, 0.1), 0.32, 500);
        let (ab, bc, ac) = (hausdorff(&a, &b), hausdorff(&b, &c), hausdorff(&a, &c));
        assert!(ac <= ab + bc + 1e-6);
        assert!(ab <= ac + bc + 1e-6);
        assert!(bc <= ab + ac + 1e-6);
    }

    #[test]
    fn graph_over_examples() {
        let r = Curve::circle(Point::ORIGIN, 0.4, 1000);
        let t = Curve::circle(Point::ORIGIN, 0.42, 1000);
        let g = graph_over(&r, &t, 0.05).unwrap();
        assert!(g.iter().all(|s| (s.s - 0.02).abs() < 1e-12));
        let off = Curve::circle(Point::ORIGIN, 0.42, 777);
        assert!(graph_over(&r, &off, 0.05)
            .unwrap()
            .iter()
            .all(|s| (s.s - 0.02).abs() < 1e-5));
        assert!(graph_over(&r, &r, 0.05)
            .unwrap()
            .iter()
            .all(|s| s.s.abs() < 1e-12));
        let far = Curve::circle(Point::ORIGIN, 0.5, 1000);
        assert!(matches!(
            graph_over(&r, &far, 0.05),
            Err(InterfaceError::GraphProperty { hits: 0, .. })
        ));
    }

    #[test]
    fn graph_over_refinements() {
        // polygonization error of an n-gon of radius r is r (1 - cos(pi / n))
        let coarse = Curve::circle(Point::ORIGIN, 0.4, 200);
        let fine = Curve::circle(Point::ORIGIN, 0.4, 400);
        let err = 0.4 * (1.0 - (PI / 200.0).cos());
        let g = graph_over(&coarse, &fine, 0.05).unwrap();
        assert!(g.iter().all(|s| s.s.abs() <= 2.0 * err));
    }

    #[test]
    fn layer_error_examples() {
        let eps = 0.08;
        let g = square(eps / 8.0);
        let u = synthetic_circle(g, 0.5, eps, 0.0);
        let e = layer_error(&u, profile(), eps).unwrap();
        assert!(e <= 5e-3, "{e}");
        let shifted = synthetic_circle(g, 0.5, eps, 0.05);
        let e = layer_error(&shifted, profile(), eps).unwrap();
        assert!((0.045..=0.055).contains(&e), "{e}");
        let flat = ScalarField::constant(g, 1.0);
        assert_eq!(
            layer_error(&flat, profile(), eps),
            Err(InterfaceError::EmptyLevelSet)
        );
    }

    #[test]
    fn transversality_examples() {
        let eps = 0.08;
        let g = square(eps / 8.0);
        let u = synthetic_circle(g, 0.5, eps, 0.0);
        let reference = Curve::circle(Point::ORIGIN, 0.5, 800);
        let tube = 2.0 * eps;
        let m = transversality(&u, &reference, tube).unwrap();
        let expected = profile_slope(profile(), 2.0) / eps;
        assert!(m > 0.0);
        assert!((m - expected).abs() / expected < 0.05, "{m} vs {expected}");
        let flat = ScalarField::constant(g, 0.3);
        assert_eq!(transversality(&flat, &reference, tube).unwrap(), 0.0);
        let flipped = ScalarField {
            geom: g,
            values: u.values.iter().map(|v| -v).collect(),
        };
        assert!(transversality(&flipped, &reference, tube).unwrap() < 0.0);
    }

    #[test]
    fn curve_measures() {
        let c = Curve::circle(Point::new(0.2, -0.1), 0.5, 4000);
        assert!((c.signed_area() - PI * 0.25).abs() < 1e-5);
        assert!((c.length() - PI).abs() < 1e-5);
        assert!(c.centroid().dist(Point::new(0.2, -0.1)) < 1e-12);
        let n = c.normals();
        assert!((n[0].x - 1.0).abs() < 1e-12);
        let r = c.resample(100);
        assert_eq!(r.len(), 100);
        let seg: Vec<f64> = r.segments().map(|(a, b)| a.dist(b)).collect();
        assert!(seg.iter().all(|s| (s - seg[0]).abs() < 1e-6));
    }

    #[test]
    fn self_intersection_detected() {
        let mut pts = Curve::circle(Point::ORIGIN, 1.0, 12).points;
        pts.swap(2, 8);
        assert!(matches!(
            Curve::closed(pts),
            Err(InterfaceError::SelfIntersection(..))
        ));
        assert!(matches!(
            Curve::closed(Curve::circle(Point::ORIGIN, 1.0, 5).points),
            Err(InterfaceError::TooFewPoints { .. })
        ));
        Curve::closed(Curve::circle(Point::ORIGIN, 1.0, 64).points).unwrap();
    }

    #[test]
    fn multiple_components_and_holes() {
        let g = square(0.02);
        // below inside two disjoint discs
        let f = ScalarField::from_fn(g, |p| {
            let a = p.dist(Point::new(-0.5, 0.0)) - 0.25;
            let b = p.dist(Point::new(0.5, 0.0)) - 0.25;
            a.min(b)
        });
        let curves = extract_level_set(&f, 0.0).unwrap();
        assert_eq!(curves.len(), 2);
        assert!(curves.iter().all(|c| c.closed && c.signed_area() > 0.0));
        // annulus: below between radii 0.3 and 0.6; inner boundary runs clockwise
        let ring = ScalarField::from_fn(g, |p| (p.norm() - 0.45).abs() - 0.15);
        let curves = extract_level_set(&ring, 0.0).unwrap();
        assert_eq!(curves.len(), 2);
        let mut areas: Vec<f64> = curves.iter().map(Curve::signed_area).collect();
        areas.sort_by(f64::total_cmp);
        assert!(areas[0] < 0.0 && areas[1] > 0.0);
        assert!(is_inside(Point::new(0.45, 0.0), &curves));
        assert!(!is_inside(Point::ORIGIN, &curves));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn sign_agrees_with_field(
            cx in -0.2f64..0.2, cy in -0.2f64..0.2, rx in 0.2f64..0.5, ry in 0.2f64..0.5, level in -0.3f64..0.3
        ) {
            let g = square(0.04);
            let f = ScalarField::from_fn(g, |p| {
                let q = p - Point::new(cx, cy);
                (q.x / rx).powi(2) + (q.y / ry).powi(2) - 1.0
            });
            let curves = extract_level_set(&f, level).unwrap();
            let band = DistanceBand::new(g, &curves, 10.0);
            let sd = band.signed(&curves);
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let q = g.node(i, j);
                    let brute = signed_distance_to_set(q, &curves);
                    prop_assert!((brute.distance - sd.get(i, j)).abs() < 1e-12);
                    if brute.distance.abs() <= g.h * std::f64::consts::SQRT_2 {
                        continue;
                    }
                    let v = f.get(i, j) - level;
                    prop_assert_eq!(brute.distance < 0.0, v < 0.0);
                }
            }
        }

        #[test]
        fn hausdorff_symmetric(r1 in 0.1f64..0.5, r2 in 0.1f64..0.5, n1 in 16usize..200, n2 in 16usize..200, dx in -0.2f64..0.2) {
            let a = Curve::circle(Point::ORIGIN, r1, n1);
            let b = Curve::circle(Point::new(dx, 0.0), r2, n2);
            prop_assert_eq!(hausdorff(&a, &b), hausdorff(&b, &a));
        }
    }
}
