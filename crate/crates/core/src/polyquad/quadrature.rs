use std::f64::consts::PI;
use std::sync::OnceLock;

use thiserror::Error;

pub const MAX_RULE_DEGREE: usize = 25;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QuadError {
    #[error("no quadrature rule of exactness degree {0} (supported: 0..={max})", max = MAX_RULE_DEGREE)]
    UnsupportedDegree(usize),
}

#[derive(Debug, Clone)]
pub struct QuadratureRule<P> {
    pub points: Vec<P>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

/// Rule on the reference triangle (0,0), (1,0), (0,1); weights sum to 1/2.
pub type TriangleRule = QuadratureRule<[f64; 2]>;
/// Rule on [-1, 1]; weights sum to 2.
pub type EdgeRule = QuadratureRule<f64>;

/// `n`-point Gauss-Legendre nodes and weights on [-1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and P_{n-1}
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn build_edge_rule(degree: usize) -> EdgeRule {
    let n = degree / 2 + 1;
    let (points, weights) = gauss_legendre(n);
    EdgeRule {
        points,
        weights,
        exact_degree: degree,
    }
}

/// Collapsed (Duffy) product rule: x = u, y = (1-u) v on the unit square.
/// The Jacobian (1-u) raises the u-degree by one.
fn build_triangle_rule(degree: usize) -> TriangleRule {
    let nu = (degree + 3) / 2;
    let nv = degree / 2 + 1;
    let (xu, wu) = gauss_legendre(nu);
    let (xv, wv) = gauss_legendre(nv);
    let mut points = Vec::with_capacity(nu * nv);
    let mut weights = Vec::with_capacity(nu * nv);
    for (su, au) in xu.iter().zip(&wu) {
        let u = 0.5 * (su + 1.0);
        for (sv, av) in xv.iter().zip(&wv) {
            let v = 0.5 * (sv + 1.0);
            points.push([u, (1.0 - u) * v]);
            weights.push(0.25 * au * av * (1.0 - u));
        }
    }
    TriangleRule {
        points,
        weights,
        exact_degree: degree,
    }
}

fn tri_table() -> &'static [TriangleRule] {
    static TABLE: OnceLock<Vec<TriangleRule>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=MAX_RULE_DEGREE).map(build_triangle_rule).collect())
}

fn edge_table() -> &'static [EdgeRule] {
    static TABLE: OnceLock<Vec<EdgeRule>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=MAX_RULE_DEGREE).map(build_edge_rule).collect())
}

/// Triangle rule exact for total degree `exact_degree`. All points are
/// strictly interior and all weights positive.
pub fn triangle_quadrature(exact_degree: usize) -> Result<&'static TriangleRule, QuadError> {
    tri_table()
        .get(exact_degree)
        .ok_or(QuadError::UnsupportedDegree(exact_degree))
}

/// Gauss-Legendre rule on [-1, 1] exact for `exact_degree`.
pub fn edge_quadrature(exact_degree: usize) -> Result<&'static EdgeRule, QuadError> {
    edge_table()
        .get(exact_degree)
        .ok_or(QuadError::UnsupportedDegree(exact_degree))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    // closed form over the reference triangle: a! b! / (a+b+2)!
    fn monomial_integral(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn reference_area() {
        for d in 0..=MAX_RULE_DEGREE {
            let r = triangle_quadrature(d).unwrap();
            let s: f64 = r.weights.iter().sum();
            assert!((s - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn x2_y3_closed_form() {
        let r = triangle_quadrature(5).unwrap();
        let q: f64 = r
            .points
            .iter()
            .zip(&r.weights)
            .map(|(p, w)| w * p[0].powi(2) * p[1].powi(3))
            .sum();
        assert!((q - 1.0 / 420.0).abs() < 1e-16);
        assert!((monomial_integral(2, 3) - 1.0 / 420.0).abs() < 1e-18);
    }

    #[test]
    fn monomial_sweep_triangle() {
        for d in 0..=MAX_RULE_DEGREE {
            let r = triangle_quadrature(d).unwrap();
            for n in 0..=d as u32 {
                for b in 0..=n {
                    let a = n - b;
                    let q: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let exact = monomial_integral(a, b);
                    assert!(
                        ((q - exact) / exact).abs() <= 1e-13,
                        "degree {d}: x^{a} y^{b}: {q} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn interior_points_positive_weights() {
        for d in 0..=MAX_RULE_DEGREE {
            let r = triangle_quadrature(d).unwrap();
            for (p, w) in r.points.iter().zip(&r.weights) {
                assert!(*w > 0.0);
                assert!(p[0] > 0.0 && p[1] > 0.0 && p[0] + p[1] < 1.0);
            }
            let e = edge_quadrature(d).unwrap();
            assert!(e.points.iter().all(|s| s.abs() < 1.0));
            assert!(e.weights.iter().all(|w| *w > 0.0));
        }
    }

    #[test]
    fn edge_monomials() {
        let one = edge_quadrature(0).unwrap();
        assert!((one.weights.iter().sum::<f64>() - 2.0).abs() < 1e-15);
        for n in 1..=12usize {
            let (x, w) = gauss_legendre(n);
            for p in 0..=(2 * n - 1) as i32 {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
                let exact = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
                assert!((q - exact).abs() < 1e-14, "n={n} p={p}");
            }
            // and not exact one degree higher
            let p = 2 * n as i32;
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            assert!((q - 2.0 / (p as f64 + 1.0)).abs() > 1e-10);
        }
    }

    #[test]
    fn unsupported_degree() {
        assert_eq!(triangle_quadrature(26).unwrap_err(), QuadError::UnsupportedDegree(26));
        assert!(edge_quadrature(40).is_err());
    }
}
