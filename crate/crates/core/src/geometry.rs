//! Convex geometry for oriented rectangles.
//!
//! Boxes are parameterized by center, size and a rotation angle normalized to
//! `[-pi/2, pi/2)`. Polygons are counterclockwise in the usual `x`-right,
//! `y`-up orientation, i.e. their shoelace area is positive. Image
//! coordinates (`y` down) simply mirror that convention; nothing here depends
//! on which way the `y` axis points.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, Mul, Sub};

use serde::Serialize;

use crate::error::{Error, Result};

/// Two vertices closer than this are treated as the same point.
pub const VERTEX_EPS: f64 = 1e-9;
/// Polygons with less area than this (px^2) are treated as empty.
pub const AREA_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

/// Reduces an angle modulo pi into `[-pi/2, pi/2)`.
///
/// A rectangle rotated by pi is the same rectangle, so this never touches the
/// box size. Use [`RotatedBox::quarter_turned`] for the `w`/`h` swapping form.
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = (angle + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    // rem_euclid can round up to exactly PI for tiny negative inputs.
    if a >= FRAC_PI_2 {
        a -= PI;
    }
    if a < -FRAC_PI_2 {
        a = -FRAC_PI_2;
    }
    a
}

/// An oriented rectangle: center `(cx, cy)`, size `w x h`, rotation `angle`
/// (radians, counterclockwise, `w` measured along the rotated x axis).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RotatedBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    angle: f64,
}

impl RotatedBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, angle: f64) -> Result<Self> {
        if ![cx, cy, w, h, angle].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "non-finite parameters ({cx}, {cy}, {w}, {h}, {angle})"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox(format!("non-positive size {w}x{h}")));
        }
        Ok(RotatedBox {
            cx,
            cy,
            w,
            h,
            angle: normalize_angle(angle),
        })
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// The same rectangle described with `w`/`h` swapped and the angle
    /// advanced by a quarter turn.
    pub fn quarter_turned(&self) -> RotatedBox {
        RotatedBox {
            cx: self.cx,
            cy: self.cy,
            w: self.h,
            h: self.w,
            angle: normalize_angle(self.angle + FRAC_PI_2),
        }
    }

    /// Applies a rigid motion: rotate by `theta` about the origin, then
    /// translate by `(dx, dy)`.
    pub fn transformed(&self, theta: f64, dx: f64, dy: f64) -> RotatedBox {
        let (s, c) = theta.sin_cos();
        RotatedBox {
            cx: c * self.cx - s * self.cy + dx,
            cy: s * self.cx + c * self.cy + dy,
            w: self.w,
            h: self.h,
            angle: normalize_angle(self.angle + theta),
        }
    }

    /// Corners in counterclockwise order, starting from the local
    /// `(-w/2, -h/2)` corner.
    pub fn corners(&self) -> [Point; 4] {
        let (s, c) = self.angle.sin_cos();
        let (hw, hh) = (self.w / 2.0, self.h / 2.0);
        [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)].map(|(lx, ly)| {
            Point::new(self.cx + lx * c - ly * s, self.cy + lx * s + ly * c)
        })
    }

    /// Closed point-in-rectangle test.
    pub fn contains(&self, p: Point) -> bool {
        let (s, c) = self.angle.sin_cos();
        let d = p - self.center();
        let u = d.x * c + d.y * s;
        let v = -d.x * s + d.y * c;
        u.abs() <= self.w / 2.0 && v.abs() <= self.h / 2.0
    }

    /// True when both boxes describe the same rectangle within `tol`,
    /// allowing the quarter-turn reparameterization.
    pub fn same_rectangle(&self, other: &RotatedBox, tol: f64) -> bool {
        let close = |a: &RotatedBox, b: &RotatedBox| {
            let dang = normalize_angle(a.angle - b.angle).abs();
            (a.cx - b.cx).abs() <= tol
                && (a.cy - b.cy).abs() <= tol
                && (a.w - b.w).abs() <= tol
                && (a.h - b.h).abs() <= tol
                && dang <= tol
        };
        close(self, other) || close(&self.quarter_turned(), other)
    }

    fn total_key_cmp(&self, other: &RotatedBox) -> Ordering {
        self.cx
            .total_cmp(&other.cx)
            .then(self.cy.total_cmp(&other.cy))
            .then(self.w.total_cmp(&other.w))
            .then(self.h.total_cmp(&other.h))
            .then(self.angle.total_cmp(&other.angle))
    }
}

/// Signed shoelace area; positive for counterclockwise vertex order.
pub fn signed_area(points: &[Point]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| points[i].cross(points[(i + 1) % n]))
        .sum();
    twice / 2.0
}

/// A convex, counterclockwise quadrilateral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadPolygon {
    vertices: [Point; 4],
}

impl QuadPolygon {
    /// Validates four vertices given in either winding; clockwise input is
    /// reversed so the stored order is counterclockwise.
    pub fn new(mut vertices: [Point; 4]) -> Result<Self> {
        if vertices
            .iter()
            .any(|p| !(p.x.is_finite() && p.y.is_finite()))
        {
            return Err(Error::InvalidBox("non-finite quad vertex".into()));
        }
        let area = signed_area(&vertices);
        if area.abs() < AREA_EPS {
            return Err(Error::DegenerateQuad { area: area.abs() });
        }
        for i in 0..4 {
            for j in i + 1..4 {
                if vertices[i].distance(vertices[j]) <= VERTEX_EPS {
                    return Err(Error::DegenerateQuad { area: area.abs() });
                }
            }
        }
        if area < 0.0 {
            vertices.reverse();
        }
        for i in 0..4 {
            let e0 = vertices[(i + 1) % 4] - vertices[i];
            let e1 = vertices[(i + 2) % 4] - vertices[(i + 1) % 4];
            if e0.cross(e1) <= 0.0 {
                return Err(Error::NonConvexQuad);
            }
        }
        Ok(QuadPolygon { vertices })
    }

    pub fn vertices(&self) -> &[Point; 4] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }
}

/// A convex counterclockwise polygon, the result of clipping two quads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl ConvexPolygon {
    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        polygon_area(self)
    }
}

pub fn quad_from_rbox(b: &RotatedBox) -> QuadPolygon {
    QuadPolygon {
        vertices: b.corners(),
    }
}

/// Minimum-area enclosing rectangle of a quad; inverse of [`quad_from_rbox`]
/// on exact rectangles.
pub fn rbox_from_quad(quad: &QuadPolygon) -> Result<RotatedBox> {
    min_area_rect(quad.vertices())
}

/// Minimum-area enclosing rotated rectangle of a point set, by rotating
/// calipers over the convex hull's edge directions.
///
/// Among rectangles whose areas agree to 1e-9 relative, the one with the
/// smallest `|angle|` wins, then the smallest signed angle.
pub fn min_area_rect(points: &[Point]) -> Result<RotatedBox> {
    let hull = convex_hull(points);
    let hull_area = signed_area(&hull);
    if hull.len() < 3 || hull_area < AREA_EPS {
        return Err(Error::DegenerateQuad {
            area: hull_area.abs(),
        });
    }

    let mut best: Option<(f64, RotatedBox)> = None;
    for i in 0..hull.len() {
        let edge = hull[(i + 1) % hull.len()] - hull[i];
        let len = edge.norm();
        if len <= VERTEX_EPS {
            continue;
        }
        let u = edge * (1.0 / len);
        let v = Point::new(-u.y, u.x);
        let (mut umin, mut umax, mut vmin, mut vmax) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let (pu, pv) = (p.dot(u), p.dot(v));
            umin = umin.min(pu);
            umax = umax.max(pu);
            vmin = vmin.min(pv);
            vmax = vmax.max(pv);
        }
        let (w, h) = (umax - umin, vmax - vmin);
        let area = w * h;
        let center = u * ((umin + umax) / 2.0) + v * ((vmin + vmax) / 2.0);
        let candidate = RotatedBox::new(center.x, center.y, w, h, u.y.atan2(u.x))?;

        best = match best {
            None => Some((area, candidate)),
            Some((best_area, current)) => {
                let tie = (area - best_area).abs() <= 1e-9 * best_area.max(area);
                let better = if tie {
                    let (a, b) = (candidate.angle, current.angle);
                    a.abs() < b.abs() || (a.abs() == b.abs() && a < b)
                } else {
                    area < best_area
                };
                if better {
                    Some((area.min(best_area), candidate))
                } else {
                    Some((best_area, current))
                }
            }
        };
    }
    best.map(|(_, b)| b).ok_or(Error::DegenerateQuad { area: hull_area })
}

/// Andrew's monotone chain; counterclockwise, collinear points dropped.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| a.distance(*b) <= VERTEX_EPS);
    if pts.len() < 3 {
        return pts;
    }
    let turn = |o: Point, a: Point, b: Point| (a - o).cross(b - o);
    let mut hull: Vec<Point> = Vec::with_capacity(pts.len() * 2);
    for &p in &pts {
        while hull.len() >= 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len
            && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Sutherland-Hodgman clip of `a` against `b`.
///
/// Returns `None` when the overlap has less than [`AREA_EPS`] area, which
/// covers disjoint quads and contact along an edge or at a vertex.
pub fn convex_intersection(a: &QuadPolygon, b: &QuadPolygon) -> Option<ConvexPolygon> {
    let clipped = clip_convex(a.vertices(), b.vertices());
    let vertices = simplify(clipped);
    if vertices.len() < 3 || signed_area(&vertices) < AREA_EPS {
        return None;
    }
    Some(ConvexPolygon { vertices })
}

fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let (e0, e1) = (clip[i], clip[(i + 1) % clip.len()]);
        let dir = e1 - e0;
        let side = |p: Point| dir.cross(p - e0);
        let input = std::mem::take(&mut output);
        let mut prev = input[input.len() - 1];
        let mut prev_side = side(prev);
        for &cur in &input {
            let cur_side = side(cur);
            if cur_side >= 0.0 {
                if prev_side < 0.0 {
                    output.push(crossing(prev, cur, prev_side, cur_side));
                }
                output.push(cur);
            } else if prev_side >= 0.0 {
                output.push(crossing(prev, cur, prev_side, cur_side));
            }
            prev = cur;
            prev_side = cur_side;
        }
    }
    output
}

fn crossing(p: Point, q: Point, dp: f64, dq: f64) -> Point {
    let t = dp / (dp - dq);
    p + (q - p) * t
}

/// Drops repeated and collinear vertices left behind by clipping.
fn simplify(mut pts: Vec<Point>) -> Vec<Point> {
    pts.dedup_by(|a, b| a.distance(*b) <= VERTEX_EPS);
    while pts.len() > 1 && pts[0].distance(pts[pts.len() - 1]) <= VERTEX_EPS {
        pts.pop();
    }
    let mut changed = true;
    while changed && pts.len() >= 3 {
        changed = false;
        for i in 0..pts.len() {
            let n = pts.len();
            let prev = pts[(i + n - 1) % n];
            let next = pts[(i + 1) % n];
            let (e0, e1) = (pts[i] - prev, next - pts[i]);
            if e0.cross(e1).abs() <= 1e-12 * e0.norm() * e1.norm() && e0.dot(e1) >= 0.0 {
                pts.remove(i);
                changed = true;
                break;
            }
        }
    }
    pts
}

/// Shoelace area of a convex polygon.
pub fn polygon_area(p: &ConvexPolygon) -> f64 {
    signed_area(&p.vertices).abs()
}

/// Area of the overlap between two rotated boxes.
pub fn intersection_area(a: &RotatedBox, b: &RotatedBox) -> f64 {
    let reach = (a.w.hypot(a.h) + b.w.hypot(b.h)) / 2.0;
    if a.center().distance(b.center()) > reach {
        return 0.0;
    }
    convex_intersection(&quad_from_rbox(a), &quad_from_rbox(b))
        .map(|p| p.area())
        .unwrap_or(0.0)
}

/// Rotated IoU, `area(a & b) / area(a | b)`.
///
/// Exactly 1 for identical boxes and exactly symmetric in its arguments.
pub fn rotated_iou(a: &RotatedBox, b: &RotatedBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let (a, b) = match a.total_key_cmp(b) {
        Ordering::Greater => (b, a),
        _ => (a, b),
    };
    let (area_a, area_b) = (a.area(), b.area());
    let inter = intersection_area(a, b).min(area_a).min(area_b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = area_a + area_b - inter;
    (inter / union).clamp(0.0, 1.0)
}
