use serde::{Deserialize, Serialize};

pub type Vec2 = [f64; 2];

pub fn dist(a: Vec2, b: Vec2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub fn clamp_arena(p: Vec2) -> Vec2 {
    [p[0].clamp(-1.0, 1.0), p[1].clamp(-1.0, 1.0)]
}

/// Angle wrapped into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut w = a.rem_euclid(tau);
    if w > std::f64::consts::PI {
        w -= tau;
    }
    w
}

/// A wall.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        Segment { a, b }
    }

    /// True when the closed segments `self` and `p -> q` share a point.
    pub fn crosses(&self, p: Vec2, q: Vec2) -> bool {
        let d1 = cross(sub(self.b, self.a), sub(p, self.a));
        let d2 = cross(sub(self.b, self.a), sub(q, self.a));
        let d3 = cross(sub(q, p), sub(self.a, p));
        let d4 = cross(sub(q, p), sub(self.b, p));
        if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
            && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
        {
            return true;
        }
        let on = |a: Vec2, b: Vec2, c: Vec2, d: f64| {
            d == 0.0
                && c[0] >= a[0].min(b[0])
                && c[0] <= a[0].max(b[0])
                && c[1] >= a[1].min(b[1])
                && c[1] <= a[1].max(b[1])
        };
        on(self.a, self.b, p, d1)
            || on(self.a, self.b, q, d2)
            || on(p, q, self.a, d3)
            || on(p, q, self.b, d4)
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        point_segment_distance(p, self.a, self.b)
    }
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_and_touching() {
        let w = Segment::new([-1.0, 0.0], [1.0, 0.0]);
        assert!(w.crosses([0.0, -0.1], [0.0, 0.1]));
        assert!(!w.crosses([0.0, 0.1], [0.0, 0.2]));
        assert!(w.crosses([0.0, -0.1], [0.0, 0.0]));
        assert!(!w.crosses([1.5, -0.1], [1.5, 0.1]));
    }

    #[test]
    fn wrap() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn segment_distance() {
        assert!((point_segment_distance([0.0, 1.0], [-1.0, 0.0], [1.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((point_segment_distance([2.0, 0.0], [-1.0, 0.0], [1.0, 0.0]) - 1.0).abs() < 1e-15);
    }
}
