//! Global assembly of the stabilizer, the constraint operator and the load,
//! and the Dirichlet-reduced saddle-point system.

use std::io::{self, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::{Mesh, Point2};
use crate::polyquad::{edge_points, edge_quadrature, physical_points, project_edge, triangle_quadrature};
use crate::problems::Problem;
use crate::wgspace::{build_dof_map, weak_hessian_local, DofMap, ElementData, SpaceConfig, SpaceError};

/// Degree of the rule used for rough coefficients and loads.
pub const ROUGH_DATA_RULE_DEGREE: usize = 20;

/// Diffusion tensor `a(x)`, evaluated per element so that piecewise data can
/// use the element's region tag instead of the sign of a coordinate.
pub trait CoefficientField: Send + Sync {
    fn eval(&self, p: Point2, region: i32) -> [[f64; 2]; 2];

    /// Uniform ellipticity bounds `(alpha, beta)`, when known.
    fn ellipticity_bounds(&self) -> Option<(f64, f64)> {
        None
    }
}

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("non-finite {what} at {point} (element {element})")]
    NonFinite {
        what: &'static str,
        element: usize,
        point: Point2,
    },
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Compressed sparse row matrix with summed duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Duplicates are summed in input order, so equal input gives equal bits.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> CsrMatrix {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&i| (triplets[i].0, triplets[i].1));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for i in order {
            let (r, c, v) = triplets[i];
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let s = self.indptr[r]..self.indptr[r + 1];
        self.indices[s.clone()]
            .iter()
            .copied()
            .zip(self.values[s].iter().copied())
    }

    /// `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|(j, _)| *j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn matvec_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for (r, c, v) in self.triplets() {
            out[c] += v * y[r];
        }
        out
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }
}

/// Local stabilizer `s_T` on the element layout of `config`.
pub fn stabilizer_local(el: &ElementData, config: &SpaceConfig) -> DMatrix<f64> {
    let n = config.n_local();
    let mut s = DMatrix::zeros(n, n);
    let rule = edge_quadrature(config.edge_rule_degree()).expect("rule");
    let w0 = el.h.powi(-3);
    let w1 = el.h.recip();
    for (ei, e) in el.edges.iter().enumerate() {
        for (t, x, w) in edge_points(e.start, e.end, rule) {
            let psi = el.interior.values(x);
            let gpsi = el.interior.gradients(x);
            let vg = el.vg_basis.values(t);
            if !config.c0 {
                let mut d = vec![0.0; n];
                d[..psi.len()].copy_from_slice(&psi);
                for (q, b) in el.vb_basis.values(t).iter().enumerate() {
                    d[config.vb_offset(ei) + q] -= b;
                }
                s.ger(
                    w * w0,
                    &nalgebra::DVector::from_vec(d.clone()),
                    &nalgebra::DVector::from_vec(d),
                    1.0,
                );
            }
            for c in 0..2 {
                let mut d = vec![0.0; n];
                for (q, g) in gpsi.iter().enumerate() {
                    d[q] = g[c];
                }
                for (q, g) in vg.iter().enumerate() {
                    d[config.vg_offset(ei, c) + q] -= g;
                }
                let d = nalgebra::DVector::from_vec(d);
                s.ger(w * w1, &d, &d, 1.0);
            }
        }
    }
    // ger rounds (w x_i) x_j and (w x_j) x_i differently
    (&s + s.transpose()) * 0.5
}

/// `s_T(v, v)` summed from squared trace differences, with the matching
/// scale `sum w (h^-3 (v0^2 + vb^2) + h^-1 (|grad v0|^2 + |vg|^2))`.
/// Avoids the cancellation of `v^T S v` when `v` is nearly conforming.
pub fn stabilizer_energy_local(el: &ElementData, config: &SpaceConfig, v: &[f64]) -> (f64, f64) {
    let rule = edge_quadrature(config.edge_rule_degree()).expect("rule");
    let n_int = config.n_interior();
    let w0 = el.h.powi(-3);
    let w1 = el.h.recip();
    let (mut energy, mut scale) = (0.0, 0.0);
    for (ei, e) in el.edges.iter().enumerate() {
        for (t, x, w) in edge_points(e.start, e.end, rule) {
            if !config.c0 {
                let a = el.interior.eval(&v[..n_int], x);
                let off = config.vb_offset(ei);
                let b = el.vb_basis.eval(&v[off..off + config.n_vb()], t);
                energy += w * w0 * (a - b).powi(2);
                scale += w * w0 * (a * a + b * b);
            }
            let grads = el.interior.gradients(x);
            for c in 0..2 {
                let a: f64 = grads.iter().zip(&v[..n_int]).map(|(g, vi)| g[c] * vi).sum();
                let off = config.vg_offset(ei, c);
                let b = el.vg_basis.eval(&v[off..off + config.n_vg()], t);
                energy += w * w1 * (a - b).powi(2);
                scale += w * w1 * (a * a + b * b);
            }
        }
    }
    (energy, scale)
}

/// `A_ij[l, p] = (a_ij phi_p, phi_l)` in the orthonormal multiplier basis.
pub fn coefficient_moments(
    el: &ElementData,
    coeff: &dyn CoefficientField,
    rule_degree: usize,
) -> Result<[DMatrix<f64>; 4], AssemblyError> {
    let m = el.multiplier.dim();
    let mut amat: [DMatrix<f64>; 4] = std::array::from_fn(|_| DMatrix::zeros(m, m));
    let rule = triangle_quadrature(rule_degree).expect("rule");
    for (p, w) in physical_points(&el.points, rule) {
        let a = coeff.eval(p, el.region);
        if a.iter().flatten().any(|v| !v.is_finite()) {
            return Err(AssemblyError::NonFinite {
                what: "coefficient",
                element: el.index,
                point: p,
            });
        }
        let phi = el.multiplier.values(p);
        for l in 0..m {
            for q in 0..m {
                let pp = w * phi[l] * phi[q];
                for i in 0..2 {
                    for j in 0..2 {
                        amat[2 * i + j][(l, q)] += a[i][j] * pp;
                    }
                }
            }
        }
    }
    Ok(amat)
}

/// Local constraint matrix `(sum_ij a_ij d^2_{ij,d} v, phi_l)` and load
/// `(f, phi_l)` in the orthonormal multiplier basis.
pub fn constraint_local(
    el: &ElementData,
    config: &SpaceConfig,
    problem: &dyn Problem,
    rule_degree: usize,
) -> Result<(DMatrix<f64>, Vec<f64>), AssemblyError> {
    let hess = weak_hessian_local(el, config)?;
    let amat = coefficient_moments(el, problem.coefficient(), rule_degree)?;
    let m = el.multiplier.dim();
    let mut load = vec![0.0; m];
    let rule = triangle_quadrature(rule_degree).expect("rule");
    for (p, w) in physical_points(&el.points, rule) {
        let f = problem.rhs(p, el.region);
        if !f.is_finite() {
            return Err(AssemblyError::NonFinite {
                what: "load",
                element: el.index,
                point: p,
            });
        }
        for (l, phi) in el.multiplier.values(p).iter().enumerate() {
            load[l] += w * f * phi;
        }
    }
    let mut b = DMatrix::zeros(m, config.n_local());
    for (a, h) in amat.iter().zip(&hess.h) {
        b += a * h;
    }
    Ok((b, load))
}

/// Rule degree for coefficient and load integrals of `problem`.
pub fn data_rule_degree(problem: &dyn Problem, config: &SpaceConfig) -> usize {
    if problem.smooth_data() {
        config.elem_rule_degree()
    } else {
        ROUGH_DATA_RULE_DEGREE
    }
}

pub fn element_data(mesh: &Mesh, config: &SpaceConfig) -> Result<Vec<ElementData>, AssemblyError> {
    (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| ElementData::new(mesh, t, config).map_err(AssemblyError::from))
        .collect()
}

fn scatter(map: &DofMap, t: usize, rows: &[usize], local: &DMatrix<f64>, out: &mut Vec<(usize, usize, f64)>) {
    let cols = map.local_to_global(t);
    for (a, &r) in rows.iter().enumerate() {
        for (b, &c) in cols.iter().enumerate() {
            let v = local[(a, b)];
            if v != 0.0 {
                out.push((r, c, v));
            }
        }
    }
}

/// Global stabilizer matrix.
pub fn assemble_stabilizer(mesh: &Mesh, map: &DofMap) -> Result<CsrMatrix, AssemblyError> {
    let config = map.config;
    let elements = element_data(mesh, &config)?;
    let locals: Vec<DMatrix<f64>> = elements.par_iter().map(|el| stabilizer_local(el, &config)).collect();
    let mut trip = Vec::new();
    for (t, s) in locals.iter().enumerate() {
        let rows = map.local_to_global(t).to_vec();
        scatter(map, t, &rows, s, &mut trip);
    }
    Ok(CsrMatrix::from_triplets(map.n_primal, map.n_primal, &trip))
}

/// Global constraint matrix `B` (multipliers x primal) and load vector.
pub fn assemble_constraint(
    mesh: &Mesh,
    map: &DofMap,
    problem: &dyn Problem,
) -> Result<(CsrMatrix, Vec<f64>), AssemblyError> {
    let config = map.config;
    let rule_degree = data_rule_degree(problem, &config);
    let elements = element_data(mesh, &config)?;
    let locals: Vec<(DMatrix<f64>, Vec<f64>)> = elements
        .par_iter()
        .map(|el| constraint_local(el, &config, problem, rule_degree))
        .collect::<Result<_, _>>()?;
    let mut trip = Vec::new();
    let mut load = vec![0.0; map.n_multiplier];
    for (t, (b, f)) in locals.iter().enumerate() {
        let rows: Vec<usize> = map.multiplier_range(t).collect();
        scatter(map, t, &rows, b, &mut trip);
        for (r, v) in rows.iter().zip(f) {
            load[*r] = *v;
        }
    }
    Ok((CsrMatrix::from_triplets(map.n_multiplier, map.n_primal, &trip), load))
}

/// Values of the constrained dofs: nodal Dirichlet data in the C0 variant,
/// nodal values of the edge L2 projection `Q_b g` in the general variant.
pub fn dirichlet_values(mesh: &Mesh, map: &DofMap, problem: &dyn Problem) -> Result<Vec<f64>, AssemblyError> {
    let mut x = vec![0.0; map.n_primal];
    let config = map.config;
    if config.c0 {
        for (g, p) in map.node_points.iter().enumerate() {
            if let (true, Some(p)) = (map.constrained[g], p) {
                x[g] = problem.boundary(*p);
            }
        }
    } else {
        let rule_degree = if problem.smooth_data() {
            config.edge_rule_degree() + 2
        } else {
            ROUGH_DATA_RULE_DEGREE
        };
        for (e, edge) in mesh.edges.iter().enumerate() {
            if !edge.is_boundary {
                continue;
            }
            let [a, b] = mesh.edge_points(e);
            let q = project_edge(|p| problem.boundary(p), config.k, a, b, rule_degree).map_err(|_| {
                AssemblyError::NonFinite {
                    what: "boundary data",
                    element: edge.triangles[0],
                    point: a.midpoint(b),
                }
            })?;
            for s in 0..=config.k {
                x[map.vb_dof(e, s)] = q.eval(s as f64 / config.k as f64);
            }
        }
    }
    Ok(x)
}

/// Full (unreduced) saddle-point data for one mesh and configuration.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub map: DofMap,
    pub stabilizer: CsrMatrix,
    pub constraint: CsrMatrix,
    pub load: Vec<f64>,
    /// constrained dofs hold their Dirichlet values, the rest are zero
    pub boundary_values: Vec<f64>,
}

/// Dirichlet-reduced system `[[S_ff, B_f^T], [B_f, 0]] [u_f; lambda] = rhs`.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub n_free: usize,
    pub n_multiplier: usize,
    /// global primal index of each free unknown
    pub free: Vec<usize>,
}

impl KktSystem {
    /// Writes `n_primal n_multiplier nnz` followed by `row col value` lines.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{} {} {}", self.n_free, self.n_multiplier, self.matrix.nnz())?;
        for (r, c, v) in self.matrix.triplets() {
            writeln!(w, "{r} {c} {v:.16e}")?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n_free + self.n_multiplier
    }

    /// `S_ff` block.
    pub fn stabilizer_block(&self) -> CsrMatrix {
        let n = self.n_free;
        let t: Vec<_> = self.matrix.triplets().filter(|&(r, c, _)| r < n && c < n).collect();
        CsrMatrix::from_triplets(n, n, &t)
    }

    /// `B_f` block.
    pub fn constraint_block(&self) -> CsrMatrix {
        let n = self.n_free;
        let t: Vec<_> = self
            .matrix
            .triplets()
            .filter(|&(r, c, _)| r >= n && c < n)
            .map(|(r, c, v)| (r - n, c, v))
            .collect();
        CsrMatrix::from_triplets(self.n_multiplier, n, &t)
    }
}

impl SaddleSystem {
    pub fn reduce(&self) -> KktSystem {
        let map = &self.map;
        let mut index = vec![usize::MAX; map.n_primal];
        let mut free = Vec::new();
        for (g, slot) in index.iter_mut().enumerate() {
            if !map.constrained[g] {
                *slot = free.len();
                free.push(g);
            }
        }
        let nf = free.len();
        let nm = map.n_multiplier;
        let mut trip = Vec::with_capacity(self.stabilizer.nnz() + 2 * self.constraint.nnz());
        let mut rhs = vec![0.0; nf + nm];
        let xb = &self.boundary_values;
        for (r, c, v) in self.stabilizer.triplets() {
            match (index[r], index[c]) {
                (usize::MAX, _) => {}
                (i, usize::MAX) => rhs[i] -= v * xb[c],
                (i, j) => trip.push((i, j, v)),
            }
        }
        for (r, f) in self.load.iter().enumerate() {
            rhs[nf + r] = *f;
        }
        for (r, c, v) in self.constraint.triplets() {
            match index[c] {
                usize::MAX => rhs[nf + r] -= v * xb[c],
                j => {
                    trip.push((nf + r, j, v));
                    trip.push((j, nf + r, v));
                }
            }
        }
        KktSystem {
            matrix: CsrMatrix::from_triplets(nf + nm, nf + nm, &trip),
            rhs,
            n_free: nf,
            n_multiplier: nm,
            free,
        }
    }

    /// Global primal vector from the free unknowns and the Dirichlet values.
    pub fn expand(&self, kkt: &KktSystem, u_free: &[f64]) -> Vec<f64> {
        let mut u = self.boundary_values.clone();
        for (i, &g) in kkt.free.iter().enumerate() {
            u[g] = u_free[i];
        }
        u
    }
}

/// Builds every operator of the discrete problem on `mesh`.
pub fn build_saddle(mesh: &Mesh, config: &SpaceConfig, problem: &dyn Problem) -> Result<SaddleSystem, AssemblyError> {
    let map = build_dof_map(mesh, config);
    let stabilizer = assemble_stabilizer(mesh, &map)?;
    let (constraint, load) = assemble_constraint(mesh, &map, problem)?;
    let boundary_values = dirichlet_values(mesh, &map, problem)?;
    Ok(SaddleSystem {
        map,
        stabilizer,
        constraint,
        load,
        boundary_values,
    })
}
