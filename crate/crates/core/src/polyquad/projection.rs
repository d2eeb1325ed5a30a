use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::{edge_points, edge_quadrature, physical_points, triangle_quadrature};
use super::{EdgeBasis, QuadError, TriBasis};
use crate::mesh::Point2;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("singular Gram matrix (degenerate element)")]
    SingularGram,
    #[error("non-finite data value at {0}")]
    NonFinite(Point2),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// L2 projection onto `P_degree(T)`, stored in the element's orthonormal basis.
#[derive(Debug, Clone)]
pub struct ElementProjection {
    pub basis: TriBasis,
    pub coeffs: Vec<f64>,
}

impl ElementProjection {
    pub fn eval(&self, p: Point2) -> f64 {
        self.basis.eval(&self.coeffs, p)
    }
}

/// L2 projection onto `P_degree(e)` for the segment `a -> b`.
#[derive(Debug, Clone)]
pub struct EdgeProjection {
    pub basis: EdgeBasis,
    pub coeffs: Vec<f64>,
}

impl EdgeProjection {
    /// Value at affine parameter `t` in [0, 1].
    pub fn eval(&self, t: f64) -> f64 {
        self.basis.eval(&self.coeffs, t)
    }
}

fn solve_spd(gram: DMatrix<f64>, rhs: DVector<f64>) -> Result<Vec<f64>, ProjectionError> {
    let chol = gram.cholesky().ok_or(ProjectionError::SingularGram)?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// Solves `Gram(T) c = moments(f)` with the orthonormal basis of
/// `P_degree(T)`, integrating with a rule exact to `rule_degree`.
pub fn project_element<F: Fn(Point2) -> f64>(
    f: F,
    degree: usize,
    tri: &[Point2; 3],
    rule_degree: usize,
) -> Result<ElementProjection, ProjectionError> {
    let basis = TriBasis::orthonormal(tri, degree).ok_or(ProjectionError::SingularGram)?;
    let rule = triangle_quadrature(rule_degree.max(2 * degree))?;
    let n = basis.dim();
    let mut gram = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (p, w) in physical_points(tri, rule) {
        let fv = f(p);
        if !fv.is_finite() {
            return Err(ProjectionError::NonFinite(p));
        }
        let v = basis.values(p);
        for i in 0..n {
            rhs[i] += w * fv * v[i];
            for j in 0..n {
                gram[(i, j)] += w * v[i] * v[j];
            }
        }
    }
    let coeffs = solve_spd(gram, rhs)?;
    Ok(ElementProjection { basis, coeffs })
}

fn edge_moments<F: Fn(Point2) -> [f64; N], const N: usize>(
    f: F,
    degree: usize,
    a: Point2,
    b: Point2,
    rule_degree: usize,
) -> Result<[EdgeProjection; N], ProjectionError> {
    let length = a.dist(b);
    if length <= 0.0 {
        return Err(ProjectionError::SingularGram);
    }
    let basis = EdgeBasis::Orthonormal { degree, length };
    let rule = edge_quadrature(rule_degree.max(2 * degree))?;
    let n = basis.dim();
    let mut gram = DMatrix::<f64>::zeros(n, n);
    let mut rhs = vec![DVector::<f64>::zeros(n); N];
    for (t, x, w) in edge_points(a, b, rule) {
        let fv = f(x);
        if fv.iter().any(|v| !v.is_finite()) {
            return Err(ProjectionError::NonFinite(x));
        }
        let v = basis.values(t);
        for i in 0..n {
            for c in 0..N {
                rhs[c][i] += w * fv[c] * v[i];
            }
            for j in 0..n {
                gram[(i, j)] += w * v[i] * v[j];
            }
        }
    }
    let mut out = Vec::with_capacity(N);
    for r in rhs {
        out.push(EdgeProjection {
            basis,
            coeffs: solve_spd(gram.clone(), r)?,
        });
    }
    Ok(out.try_into().expect("N projections"))
}

/// Scalar L2 projection onto `P_degree(e)` of the edge `a -> b`.
pub fn project_edge<F: Fn(Point2) -> f64>(
    f: F,
    degree: usize,
    a: Point2,
    b: Point2,
    rule_degree: usize,
) -> Result<EdgeProjection, ProjectionError> {
    let [p] = edge_moments(|x| [f(x)], degree, a, b, rule_degree)?;
    Ok(p)
}

/// Componentwise L2 projection onto `[P_degree(e)]^2`.
pub fn project_edge_vector<F: Fn(Point2) -> [f64; 2]>(
    f: F,
    degree: usize,
    a: Point2,
    b: Point2,
    rule_degree: usize,
) -> Result<[EdgeProjection; 2], ProjectionError> {
    edge_moments(f, degree, a, b, rule_degree)
}
