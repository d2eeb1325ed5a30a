//! Quadrature rules, polynomial bases on triangles and edges, and the local
//! L2 projections built on them.

mod basis;
mod projection;
mod quadrature;

pub use basis::{monomial_exponents, EdgeBasis, TriBasis};
pub use projection::{
    project_edge, project_edge_vector, project_element, EdgeProjection, ElementProjection, ProjectionError,
};
pub use quadrature::{
    edge_quadrature, gauss_legendre, triangle_quadrature, EdgeRule, QuadError, QuadratureRule, TriangleRule,
    MAX_RULE_DEGREE,
};

use crate::mesh::Point2;

/// Dimension of `P_degree` on a triangle.
pub const fn tri_dim(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Maps reference coordinates on the unit triangle to the physical element.
pub fn map_to_physical(tri: &[Point2; 3], xi: [f64; 2]) -> Point2 {
    let [a, b, c] = *tri;
    Point2::new(
        a.x + xi[0] * (b.x - a.x) + xi[1] * (c.x - a.x),
        a.y + xi[0] * (b.y - a.y) + xi[1] * (c.y - a.y),
    )
}

/// Physical quadrature points and weights of `rule` on `tri`.
pub fn physical_points(tri: &[Point2; 3], rule: &TriangleRule) -> Vec<(Point2, f64)> {
    let area = crate::mesh::signed_area(tri[0], tri[1], tri[2]).abs();
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(xi, w)| (map_to_physical(tri, *xi), 2.0 * area * w))
        .collect()
}

/// Physical quadrature points of `rule` on the segment `a -> b`, returned as
/// `(t, x, w)` with `t` in [0, 1] the affine parameter and `w` the weight
/// with respect to arc length.
pub fn edge_points(a: Point2, b: Point2, rule: &EdgeRule) -> Vec<(f64, Point2, f64)> {
    let len = a.dist(b);
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(s, w)| {
            let t = 0.5 * (s + 1.0);
            let x = Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
            (t, x, 0.5 * len * w)
        })
        .collect()
}
