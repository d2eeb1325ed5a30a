use nalgebra::DMatrix;

use super::{physical_points, quadrature::triangle_quadrature, tri_dim};
use crate::mesh::Point2;

/// Exponent pairs `(a, b)` of the monomials of total degree `<= degree`,
/// ordered by total degree, then by increasing `b`.
pub fn monomial_exponents(degree: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(tri_dim(degree));
    for n in 0..=degree {
        for b in 0..=n {
            out.push((n - b, b));
        }
    }
    out
}

/// A basis of `P_degree(T)` written as `phi_i = sum_m C[i, m] * X^a_m Y^b_m`
/// with scaled local coordinates `X = (x - xc) / s`, `Y = (y - yc) / s`.
#[derive(Debug, Clone)]
pub struct TriBasis {
    center: Point2,
    scale: f64,
    degree: usize,
    exps: Vec<(usize, usize)>,
    coeffs: DMatrix<f64>,
}

impl TriBasis {
    fn frame(tri: &[Point2; 3]) -> (Point2, f64) {
        let c = Point2::new(
            (tri[0].x + tri[1].x + tri[2].x) / 3.0,
            (tri[0].y + tri[1].y + tri[2].y) / 3.0,
        );
        let s = tri[0].dist(tri[1]).max(tri[1].dist(tri[2])).max(tri[2].dist(tri[0]));
        (c, s)
    }

    /// Scaled monomials themselves.
    pub fn monomial(tri: &[Point2; 3], degree: usize) -> TriBasis {
        let (center, scale) = Self::frame(tri);
        let n = tri_dim(degree);
        TriBasis {
            center,
            scale,
            degree,
            exps: monomial_exponents(degree),
            coeffs: DMatrix::identity(n, n),
        }
    }

    /// L2-orthonormal basis on `tri`, by Cholesky-based Gram-Schmidt over the
    /// scaled monomials. Returns `None` when the Gram matrix is singular.
    pub fn orthonormal(tri: &[Point2; 3], degree: usize) -> Option<TriBasis> {
        let mono = Self::monomial(tri, degree);
        let n = mono.dim();
        let rule = triangle_quadrature(2 * degree).expect("degree within table");
        let mut gram = DMatrix::<f64>::zeros(n, n);
        for (p, w) in physical_points(tri, rule) {
            let v = mono.monomials(p);
            for i in 0..n {
                for j in 0..=i {
                    gram[(i, j)] += w * v[i] * v[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                gram[(j, i)] = gram[(i, j)];
            }
        }
        let chol = gram.cholesky()?;
        let l_inv = chol.l().solve_lower_triangular(&DMatrix::identity(n, n))?;
        if l_inv.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(TriBasis { coeffs: l_inv, ..mono })
    }

    /// Lagrange basis of degree `degree >= 1` at the equispaced lattice
    /// nodes returned by [`lagrange_nodes`](Self::lagrange_nodes).
    pub fn nodal(tri: &[Point2; 3], degree: usize) -> Option<TriBasis> {
        let mono = Self::monomial(tri, degree);
        let nodes = Self::lagrange_nodes(tri, degree);
        let n = mono.dim();
        let mut vt = DMatrix::<f64>::zeros(n, n);
        for (j, p) in nodes.iter().enumerate() {
            for (m, v) in mono.monomials(*p).into_iter().enumerate() {
                vt[(m, j)] = v;
            }
        }
        let inv = vt.try_inverse()?;
        Some(TriBasis { coeffs: inv, ..mono })
    }

    /// Equispaced nodes of `P_degree`: the three vertices, then the interior
    /// points of each local edge `i` (running from vertex `i+1` to `i+2`),
    /// then the element-interior points.
    pub fn lagrange_nodes(tri: &[Point2; 3], degree: usize) -> Vec<Point2> {
        assert!(degree >= 1);
        let k = degree as f64;
        let bary = |l: [f64; 3]| {
            Point2::new(
                l[0] * tri[0].x + l[1] * tri[1].x + l[2] * tri[2].x,
                l[0] * tri[0].y + l[1] * tri[1].y + l[2] * tri[2].y,
            )
        };
        let mut out = tri.to_vec();
        for i in 0..3 {
            let (p, q) = ((i + 1) % 3, (i + 2) % 3);
            for j in 1..degree {
                let mut l = [0.0; 3];
                l[q] = j as f64 / k;
                l[p] = 1.0 - l[q];
                out.push(bary(l));
            }
        }
        for b in 1..degree {
            for c in 1..degree - b {
                let a = degree - b - c;
                out.push(bary([a as f64 / k, b as f64 / k, c as f64 / k]));
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.exps.len()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    fn local(&self, p: Point2) -> (f64, f64) {
        ((p.x - self.center.x) / self.scale, (p.y - self.center.y) / self.scale)
    }

    fn powers(&self, t: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.degree + 1);
        let mut acc = 1.0;
        for _ in 0..=self.degree {
            v.push(acc);
            acc *= t;
        }
        v
    }

    fn monomials(&self, p: Point2) -> Vec<f64> {
        let (x, y) = self.local(p);
        let (px, py) = (self.powers(x), self.powers(y));
        self.exps.iter().map(|&(a, b)| px[a] * py[b]).collect()
    }

    fn combine(&self, mono: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|m| self.coeffs[(i, m)] * mono[m]).sum())
            .collect()
    }

    pub fn values(&self, p: Point2) -> Vec<f64> {
        self.combine(&self.monomials(p))
    }

    pub fn gradients(&self, p: Point2) -> Vec<[f64; 2]> {
        let (x, y) = self.local(p);
        let (px, py) = (self.powers(x), self.powers(y));
        let s = self.scale;
        let dx: Vec<f64> = self
            .exps
            .iter()
            .map(|&(a, b)| if a == 0 { 0.0 } else { a as f64 * px[a - 1] * py[b] / s })
            .collect();
        let dy: Vec<f64> = self
            .exps
            .iter()
            .map(|&(a, b)| if b == 0 { 0.0 } else { b as f64 * px[a] * py[b - 1] / s })
            .collect();
        let gx = self.combine(&dx);
        let gy = self.combine(&dy);
        gx.into_iter().zip(gy).map(|(a, b)| [a, b]).collect()
    }

    /// Second derivatives `[d_xx, d_xy, d_yy]` of every basis function.
    pub fn hessians(&self, p: Point2) -> Vec<[f64; 3]> {
        let (x, y) = self.local(p);
        let (px, py) = (self.powers(x), self.powers(y));
        let s2 = self.scale * self.scale;
        let mut hxx = vec![0.0; self.dim()];
        let mut hxy = vec![0.0; self.dim()];
        let mut hyy = vec![0.0; self.dim()];
        for (m, &(a, b)) in self.exps.iter().enumerate() {
            if a >= 2 {
                hxx[m] = (a * (a - 1)) as f64 * px[a - 2] * py[b] / s2;
            }
            if a >= 1 && b >= 1 {
                hxy[m] = (a * b) as f64 * px[a - 1] * py[b - 1] / s2;
            }
            if b >= 2 {
                hyy[m] = (b * (b - 1)) as f64 * px[a] * py[b - 2] / s2;
            }
        }
        let (hxx, hxy, hyy) = (self.combine(&hxx), self.combine(&hxy), self.combine(&hyy));
        (0..self.dim()).map(|i| [hxx[i], hxy[i], hyy[i]]).collect()
    }

    /// Evaluates `sum_i c_i phi_i(p)`.
    pub fn eval(&self, c: &[f64], p: Point2) -> f64 {
        self.values(p).iter().zip(c).map(|(a, b)| a * b).sum()
    }
}

/// Polynomial basis on an edge in the affine parameter `t` in [0, 1].
#[derive(Debug, Clone, Copy)]
pub enum EdgeBasis {
    /// Legendre polynomials normalized in L2 with respect to arc length.
    Orthonormal { degree: usize, length: f64 },
    /// Lagrange basis at `t_j = j / degree` (the single constant for degree 0).
    Nodal { degree: usize },
}

impl EdgeBasis {
    pub fn dim(&self) -> usize {
        match *self {
            EdgeBasis::Orthonormal { degree, .. } | EdgeBasis::Nodal { degree } => degree + 1,
        }
    }

    pub fn values(&self, t: f64) -> Vec<f64> {
        match *self {
            EdgeBasis::Orthonormal { degree, length } => {
                let s = 2.0 * t - 1.0;
                let mut out = Vec::with_capacity(degree + 1);
                let (mut p0, mut p1) = (1.0, s);
                for n in 0..=degree {
                    let pn = match n {
                        0 => 1.0,
                        1 => s,
                        _ => {
                            let p2 = ((2 * n - 1) as f64 * s * p1 - (n - 1) as f64 * p0) / n as f64;
                            p0 = p1;
                            p1 = p2;
                            p2
                        }
                    };
                    out.push(pn * ((2 * n + 1) as f64 / length).sqrt());
                }
                out
            }
            EdgeBasis::Nodal { degree } => {
                if degree == 0 {
                    return vec![1.0];
                }
                let m = degree as f64;
                (0..=degree)
                    .map(|i| {
                        let ti = i as f64 / m;
                        (0..=degree)
                            .filter(|&j| j != i)
                            .map(|j| {
                                let tj = j as f64 / m;
                                (t - tj) / (ti - tj)
                            })
                            .product()
                    })
                    .collect()
            }
        }
    }

    pub fn eval(&self, c: &[f64], t: f64) -> f64 {
        self.values(t).iter().zip(c).map(|(a, b)| a * b).sum()
    }

    /// Node parameters for the nodal variant.
    pub fn nodes(degree: usize) -> Vec<f64> {
        if degree == 0 {
            return vec![0.5];
        }
        (0..=degree).map(|j| j as f64 / degree as f64).collect()
    }
}
