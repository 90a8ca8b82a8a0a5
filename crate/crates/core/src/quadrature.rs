//! Quadrature rules on triangles and segments.

use crate::mesh::{signed_area, Point};

/// Degree of exactness of [`triangle`].
pub const TRIANGLE_ORDER: usize = 2;

/// Barycentric coordinates of the three nodes of [`triangle`].
pub const TRIANGLE_NODES: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

/// Three interior points with weight `|T|/3`, exact for quadratics.
pub fn triangle(p: [Point; 3]) -> [(Point, f64); 3] {
    let w = signed_area(p[0], p[1], p[2]) / 3.0;
    TRIANGLE_NODES.map(|b| {
        (
            [
                b[0] * p[0][0] + b[1] * p[1][0] + b[2] * p[2][0],
                b[0] * p[0][1] + b[1] * p[1][1] + b[2] * p[2][1],
            ],
            w,
        )
    })
}

/// Two-point Gauss rule on the segment `[a, b]`, exact for cubics.
pub fn edge(a: Point, b: Point) -> [(Point, f64); 2] {
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    let s = 0.5 / 3f64.sqrt();
    [0.5 - s, 0.5 + s].map(|t| ([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], 0.5 * len))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_rule_integrates_quadratics() {
        let p = [[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]];
        let q = triangle(p);
        let int = |f: &dyn Fn(Point) -> f64| q.iter().map(|(x, w)| w * f(*x)).sum::<f64>();
        // ∫ 1 = 1, ∫ x = 2/3, ∫ x² = 2/3, ∫ xy = 1/6 over this triangle
        assert!((int(&|_| 1.0) - 1.0).abs() < 1e-15);
        assert!((int(&|x| x[0]) - 2.0 / 3.0).abs() < 1e-15);
        assert!((int(&|x| x[0] * x[0]) - 2.0 / 3.0).abs() < 1e-15);
        assert!((int(&|x| x[0] * x[1]) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn edge_rule_integrates_cubics() {
        let q = edge([0.0, 0.0], [0.0, 2.0]);
        let int: f64 = q.iter().map(|(x, w)| w * x[1].powi(3)).sum();
        assert!((int - 4.0).abs() < 1e-14);
    }
}
