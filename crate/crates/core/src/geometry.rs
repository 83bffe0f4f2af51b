//! Planar geometry helpers used by partitions, doors and indoor points.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Footprint of a partition on its floor plane.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// `[min_x, min_y, max_x, max_y]`
    BBox([f64; 4]),
    Polygon(Vec<Point>),
}

impl Shape {
    pub fn bounds(&self) -> [f64; 4] {
        match self {
            Shape::BBox(b) => *b,
            Shape::Polygon(pts) => pts.iter().fold(
                [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
                |b, p| [b[0].min(p.x), b[1].min(p.y), b[2].max(p.x), b[3].max(p.y)],
            ),
        }
    }

    /// Boundary points count as inside.
    pub fn contains(&self, p: &Point) -> bool {
        match self {
            Shape::BBox([x0, y0, x1, y1]) => p.x >= *x0 && p.x <= *x1 && p.y >= *y0 && p.y <= *y1,
            Shape::Polygon(pts) => on_boundary(pts, p) || winding_contains(pts, p),
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            Shape::BBox([x0, y0, x1, y1]) => {
                [x0, y0, x1, y1].iter().all(|v| v.is_finite()) && x0 < x1 && y0 < y1
            }
            Shape::Polygon(pts) => {
                pts.len() >= 3 && pts.iter().all(|p| p.x.is_finite() && p.y.is_finite())
            }
        }
    }
}

fn winding_contains(pts: &[Point], p: &Point) -> bool {
    let mut inside = false;
    let n = pts.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (pts[i], pts[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn on_boundary(pts: &[Point], p: &Point) -> bool {
    const EPS: f64 = 1e-9;
    let n = pts.len();
    (0..n).any(|i| {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        cross.abs() <= EPS * (1.0 + a.distance(&b))
            && p.x >= a.x.min(b.x) - EPS
            && p.x <= a.x.max(b.x) + EPS
            && p.y >= a.y.min(b.y) - EPS
            && p.y <= a.y.max(b.y) + EPS
    })
}
