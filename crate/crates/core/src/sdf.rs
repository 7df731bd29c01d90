//! Signed-distance primitives in pixel units (negative inside) and the
//! one-pixel smoothstep coverage used by every rasterizer in the crate.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    fn len(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Rotate by `angle` radians about `center`.
    pub fn rotate_about(self, center: Point, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        let d = self.sub(center);
        Point::new(center.x + c * d.x - s * d.y, center.y + s * d.x + c * d.y)
    }
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Fraction of a pixel covered by a shape at signed distance `d`.
pub fn coverage(d: f64) -> f64 {
    1.0 - smoothstep(-0.5, 0.5, d)
}

pub fn disc(p: Point, center: Point, radius: f64) -> f64 {
    p.sub(center).len() - radius
}

pub fn ring(p: Point, center: Point, radius: f64, half_width: f64) -> f64 {
    (p.sub(center).len() - radius).abs() - half_width
}

/// Unsigned distance to the segment `a`–`b`.
pub fn segment(p: Point, a: Point, b: Point) -> f64 {
    let pa = p.sub(a);
    let ba = b.sub(a);
    let denom = ba.dot(ba);
    let h = if denom > 0.0 {
        (pa.dot(ba) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Point::new(pa.x - ba.x * h, pa.y - ba.y * h).len()
}

/// Axis-aligned box of half extent `half`.
pub fn square(p: Point, center: Point, half: f64) -> f64 {
    let dx = (p.x - center.x).abs() - half;
    let dy = (p.y - center.y).abs() - half;
    let outside = Point::new(dx.max(0.0), dy.max(0.0)).len();
    outside + dx.max(dy).min(0.0)
}

/// Filled triangle.
pub fn triangle(p: Point, v: [Point; 3]) -> f64 {
    let edge = (0..3)
        .map(|i| segment(p, v[i], v[(i + 1) % 3]))
        .fold(f64::INFINITY, f64::min);
    let cross = |a: Point, b: Point| {
        let (ab, ap) = (b.sub(a), p.sub(a));
        ab.x * ap.y - ab.y * ap.x
    };
    let s = [cross(v[0], v[1]), cross(v[1], v[2]), cross(v[2], v[0])];
    let inside = s.iter().all(|&c| c >= 0.0) || s.iter().all(|&c| c <= 0.0);
    if inside {
        -edge
    } else {
        edge
    }
}

/// Unsigned distance to a quadratic Bézier, via a 24-segment polyline.
pub fn quad_bezier(p: Point, p0: Point, p1: Point, p2: Point) -> f64 {
    const SEGMENTS: usize = 24;
    let at = |t: f64| {
        let u = 1.0 - t;
        Point::new(
            u * u * p0.x + 2.0 * u * t * p1.x + t * t * p2.x,
            u * u * p0.y + 2.0 * u * t * p1.y + t * t * p2.y,
        )
    };
    let mut prev = p0;
    let mut best = f64::INFINITY;
    for i in 1..=SEGMENTS {
        let next = at(i as f64 / SEGMENTS as f64);
        best = best.min(segment(p, prev, next));
        prev = next;
    }
    best
}

/// Centre of pixel `(x, y)`.
pub fn pixel_center(x: usize, y: usize) -> Point {
    Point::new(x as f64 + 0.5, y as f64 + 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coverage_is_one_inside_zero_outside() {
        assert_eq!(coverage(-1.0), 1.0);
        assert_eq!(coverage(1.0), 0.0);
        assert!((coverage(0.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn primitive_signs() {
        let c = Point::new(5.0, 5.0);
        assert!(disc(c, c, 2.0) < 0.0);
        assert!(square(Point::new(9.0, 5.0), c, 2.0) > 0.0);
        let tri = [Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(0.0, 10.0)];
        assert!(triangle(Point::new(2.0, 2.0), tri) < 0.0);
        assert!(triangle(Point::new(8.0, 8.0), tri) > 0.0);
        assert!(ring(c, c, 3.0, 0.5) > 0.0);
        let straight = quad_bezier(Point::new(5.0, 1.0), Point::new(0.0, 0.0), Point::new(5.0, 0.0), Point::new(10.0, 0.0));
        assert!((straight - 1.0).abs() < 1e-9);
    }
}
