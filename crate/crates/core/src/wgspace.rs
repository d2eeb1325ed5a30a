//! Degree-of-freedom layout of the weak finite element space and the
//! element-local discrete weak Hessian.
//!
//! Local vector layout on one element, in this order:
//!
//! * `v0`: nodal values of `P_k(T)` at the Lagrange lattice nodes
//!   (vertices, edge nodes, interior nodes; see [`TriBasis::lagrange_nodes`]);
//! * `vb`: for each local edge, `k+1` nodal values of `P_k(e)` at
//!   equispaced points in the edge's global orientation (general variant only);
//! * `vg`: for each local edge, both components of `[P_{k-1}(e)]^2` as `k`
//!   nodal values each, again in global orientation.
//!
//! In the C0-type variant `vb` is identified with the trace of `v0` and is
//! absent from the layout.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::mesh::{Mesh, Point2};
use crate::polyquad::{
    edge_points, edge_quadrature, physical_points, tri_dim, triangle_quadrature, EdgeBasis, TriBasis,
};

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("polynomial degree k = {0} is not supported (need 2 <= k <= 4)")]
    Degree(usize),
    #[error("singular Gram matrix on element {0} (degenerate triangle)")]
    SingularGram(usize),
}

/// Choice of the local multiplier space `S_k(T)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MultiplierSpace {
    /// `P_{k-2}(T)`
    Pkm2,
    /// `P_{k-1}(T)`
    Pkm1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpaceConfig {
    pub k: usize,
    pub multiplier: MultiplierSpace,
    pub c0: bool,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig {
            k: 2,
            multiplier: MultiplierSpace::Pkm1,
            c0: true,
        }
    }
}

impl SpaceConfig {
    pub fn new(k: usize, multiplier: MultiplierSpace, c0: bool) -> Result<Self, SpaceError> {
        if !(2..=4).contains(&k) {
            return Err(SpaceError::Degree(k));
        }
        Ok(SpaceConfig { k, multiplier, c0 })
    }

    pub fn multiplier_degree(&self) -> usize {
        match self.multiplier {
            MultiplierSpace::Pkm2 => self.k - 2,
            MultiplierSpace::Pkm1 => self.k - 1,
        }
    }

    pub fn n_interior(&self) -> usize {
        tri_dim(self.k)
    }

    /// `vb` values per edge (0 in the C0 variant).
    pub fn n_vb(&self) -> usize {
        if self.c0 {
            0
        } else {
            self.k + 1
        }
    }

    /// `vg` values per edge and component.
    pub fn n_vg(&self) -> usize {
        self.k
    }

    pub fn n_local(&self) -> usize {
        self.n_interior() + 3 * self.n_vb() + 3 * 2 * self.n_vg()
    }

    pub fn n_local_multiplier(&self) -> usize {
        tri_dim(self.multiplier_degree())
    }

    /// Exactness degree of the element rule used for polynomial integrands.
    pub fn elem_rule_degree(&self) -> usize {
        2 * self.k + 4
    }

    pub fn edge_rule_degree(&self) -> usize {
        2 * self.k + 2
    }

    pub fn vb_offset(&self, edge: usize) -> usize {
        self.n_interior() + edge * self.n_vb()
    }

    pub fn vg_offset(&self, edge: usize, comp: usize) -> usize {
        self.n_interior() + 3 * self.n_vb() + (2 * edge + comp) * self.n_vg()
    }
}

/// One edge of an element, parametrized in the edge's global orientation.
#[derive(Debug, Clone, Copy)]
pub struct LocalEdge {
    pub start: Point2,
    pub end: Point2,
    pub length: f64,
    pub normal: Point2,
    pub global: usize,
    /// local traversal direction disagrees with the global orientation
    pub flipped: bool,
}

/// Geometry and bases of one element, shared by every local operator.
#[derive(Debug, Clone)]
pub struct ElementData {
    pub index: usize,
    pub points: [Point2; 3],
    pub region: i32,
    pub area: f64,
    pub h: f64,
    pub edges: [LocalEdge; 3],
    /// nodal basis of `v0`
    pub interior: TriBasis,
    /// orthonormal basis of `S_k(T)`
    pub multiplier: TriBasis,
    pub vb_basis: EdgeBasis,
    pub vg_basis: EdgeBasis,
}

impl ElementData {
    pub fn new(mesh: &Mesh, t: usize, config: &SpaceConfig) -> Result<ElementData, SpaceError> {
        let points = mesh.tri_points(t);
        let edges = std::array::from_fn(|i| {
            let global = mesh.tri_edges[t][i];
            let [start, end] = mesh.edge_points(global);
            LocalEdge {
                start,
                end,
                length: start.dist(end),
                normal: mesh.outward_normal(t, i),
                global,
                flipped: mesh.edge_flipped(t, i),
            }
        });
        let interior = TriBasis::nodal(&points, config.k).ok_or(SpaceError::SingularGram(t))?;
        let multiplier =
            TriBasis::orthonormal(&points, config.multiplier_degree()).ok_or(SpaceError::SingularGram(t))?;
        Ok(ElementData {
            index: t,
            points,
            region: mesh.triangles[t].region,
            area: mesh.area(t),
            h: mesh.h_tri[t],
            edges,
            interior,
            multiplier,
            vb_basis: EdgeBasis::Nodal { degree: config.k },
            vg_basis: EdgeBasis::Nodal { degree: config.k - 1 },
        })
    }

    /// Physical points of the `vb` nodes on local edge `i`.
    pub fn vb_nodes(&self, i: usize) -> Vec<Point2> {
        self.edge_nodes(i, &EdgeBasis::nodes(self.vb_degree()))
    }

    /// Physical points of the `vg` nodes on local edge `i`.
    pub fn vg_nodes(&self, i: usize) -> Vec<Point2> {
        self.edge_nodes(i, &EdgeBasis::nodes(self.vg_degree()))
    }

    fn vb_degree(&self) -> usize {
        self.vb_basis.dim() - 1
    }

    fn vg_degree(&self) -> usize {
        self.vg_basis.dim() - 1
    }

    fn edge_nodes(&self, i: usize, ts: &[f64]) -> Vec<Point2> {
        let e = &self.edges[i];
        ts.iter()
            .map(|t| {
                Point2::new(
                    e.start.x + t * (e.end.x - e.start.x),
                    e.start.y + t * (e.end.y - e.start.y),
                )
            })
            .collect()
    }
}

/// `H[2*i + j]` maps the local primal vector to the orthonormal-basis
/// coefficients of the discrete weak derivative `d^2_{ij,d} v` in `S_k(T)`.
#[derive(Debug, Clone)]
pub struct WeakHessianLocal {
    pub h: [DMatrix<f64>; 4],
}

impl WeakHessianLocal {
    pub fn get(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.h[2 * i + j]
    }
}

/// Moments `(d^2_{ij,d} v, phi)_T` for every multiplier basis function,
/// from the defining identity with all three components of `v`:
/// `(v0, d_ji phi) - <vb n_i, d_j phi> + <vg_i, phi n_j>`.
fn general_moments(el: &ElementData, config: &SpaceConfig) -> [DMatrix<f64>; 4] {
    assert!(!config.c0, "general weak Hessian needs an explicit vb block");
    let m = el.multiplier.dim();
    let n = config.n_local();
    let mut r: [DMatrix<f64>; 4] = std::array::from_fn(|_| DMatrix::zeros(m, n));
    let rule = triangle_quadrature(config.elem_rule_degree()).expect("rule");
    for (p, w) in physical_points(&el.points, rule) {
        let psi = el.interior.values(p);
        let hess = el.multiplier.hessians(p);
        for (a, hs) in hess.iter().enumerate() {
            let d = [[hs[0], hs[1]], [hs[1], hs[2]]];
            for i in 0..2 {
                for j in 0..2 {
                    let dij = d[j][i];
                    for (q, v) in psi.iter().enumerate() {
                        r[2 * i + j][(a, q)] += w * v * dij;
                    }
                }
            }
        }
    }
    let erule = edge_quadrature(config.edge_rule_degree()).expect("rule");
    for (ei, e) in el.edges.iter().enumerate() {
        let n_ = [e.normal.x, e.normal.y];
        for (t, x, w) in edge_points(e.start, e.end, erule) {
            let phi = el.multiplier.values(x);
            let grad = el.multiplier.gradients(x);
            let vb = el.vb_basis.values(t);
            let vg = el.vg_basis.values(t);
            for a in 0..m {
                for i in 0..2 {
                    for j in 0..2 {
                        let rij = &mut r[2 * i + j];
                        for (q, b) in vb.iter().enumerate() {
                            rij[(a, config.vb_offset(ei) + q)] -= w * b * n_[i] * grad[a][j];
                        }
                        for (q, g) in vg.iter().enumerate() {
                            rij[(a, config.vg_offset(ei, i) + q)] += w * g * phi[a] * n_[j];
                        }
                    }
                }
            }
        }
    }
    r
}

/// C0-type moments: `-(d_i v0, d_j phi) + <vg_i, phi n_j>`.
fn c0_moments(el: &ElementData, config: &SpaceConfig) -> [DMatrix<f64>; 4] {
    let m = el.multiplier.dim();
    let n = config.n_local();
    let mut r: [DMatrix<f64>; 4] = std::array::from_fn(|_| DMatrix::zeros(m, n));
    let rule = triangle_quadrature(config.elem_rule_degree()).expect("rule");
    for (p, w) in physical_points(&el.points, rule) {
        let gpsi = el.interior.gradients(p);
        let gphi = el.multiplier.gradients(p);
        for a in 0..m {
            for i in 0..2 {
                for j in 0..2 {
                    for (q, g) in gpsi.iter().enumerate() {
                        r[2 * i + j][(a, q)] -= w * g[i] * gphi[a][j];
                    }
                }
            }
        }
    }
    let erule = edge_quadrature(config.edge_rule_degree()).expect("rule");
    for (ei, e) in el.edges.iter().enumerate() {
        let n_ = [e.normal.x, e.normal.y];
        for (t, x, w) in edge_points(e.start, e.end, erule) {
            let phi = el.multiplier.values(x);
            let vg = el.vg_basis.values(t);
            for a in 0..m {
                for i in 0..2 {
                    for j in 0..2 {
                        for (q, g) in vg.iter().enumerate() {
                            r[2 * i + j][(a, config.vg_offset(ei, i) + q)] += w * g * phi[a] * n_[j];
                        }
                    }
                }
            }
        }
    }
    r
}

/// Gram matrix of the multiplier basis (identity up to rounding).
pub fn multiplier_gram(el: &ElementData, config: &SpaceConfig) -> DMatrix<f64> {
    let m = el.multiplier.dim();
    let mut g = DMatrix::zeros(m, m);
    let rule = triangle_quadrature(config.elem_rule_degree()).expect("rule");
    for (p, w) in physical_points(&el.points, rule) {
        let v = el.multiplier.values(p);
        for a in 0..m {
            for b in 0..m {
                g[(a, b)] += w * v[a] * v[b];
            }
        }
    }
    g
}

/// Precomputes the four weak second-derivative matrices of one element,
/// selecting the C0-type formula when `config.c0` is set.
pub fn weak_hessian_local(el: &ElementData, config: &SpaceConfig) -> Result<WeakHessianLocal, SpaceError> {
    let moments = if config.c0 {
        c0_moments(el, config)
    } else {
        general_moments(el, config)
    };
    weak_hessian_from_moments(el, config, moments)
}

/// General-formula weak Hessian evaluated on a C0 layout: `vb` is taken as
/// the trace of `v0`, so the result must agree with [`weak_hessian_local`].
pub fn weak_hessian_general_on_c0(el: &ElementData, config: &SpaceConfig) -> Result<WeakHessianLocal, SpaceError> {
    assert!(config.c0);
    let general = SpaceConfig { c0: false, ..*config };
    let moments = general_moments(el, &general);
    // vb nodal values = v0 evaluated at those nodes
    let n = config.n_local();
    let mut embed = DMatrix::<f64>::zeros(general.n_local(), n);
    for q in 0..config.n_interior() {
        embed[(q, q)] = 1.0;
    }
    for ei in 0..3 {
        for (q, p) in el.vb_nodes(ei).iter().enumerate() {
            for (s, v) in el.interior.values(*p).iter().enumerate() {
                embed[(general.vb_offset(ei) + q, s)] = *v;
            }
        }
        for c in 0..2 {
            for q in 0..config.n_vg() {
                embed[(general.vg_offset(ei, c) + q, config.vg_offset(ei, c) + q)] = 1.0;
            }
        }
    }
    let moments = moments.map(|r| r * &embed);
    weak_hessian_from_moments(el, config, moments)
}

fn weak_hessian_from_moments(
    el: &ElementData,
    config: &SpaceConfig,
    moments: [DMatrix<f64>; 4],
) -> Result<WeakHessianLocal, SpaceError> {
    let gram = multiplier_gram(el, config);
    let chol = gram.cholesky().ok_or(SpaceError::SingularGram(el.index))?;
    Ok(WeakHessianLocal {
        h: moments.map(|r| chol.solve(&r)),
    })
}

/// `S_k(T)` coefficients of `d^2_{ij,d} v` for the local vector `v`.
pub fn apply_weak_hessian(v: &[f64], h: &WeakHessianLocal, i: usize, j: usize) -> Vec<f64> {
    let hij = h.get(i, j);
    assert_eq!(hij.ncols(), v.len(), "local vector length mismatch");
    (0..hij.nrows())
        .map(|a| (0..v.len()).map(|q| hij[(a, q)] * v[q]).sum())
        .collect()
}

/// Global numbering of the primal unknowns and the element-wise multipliers.
///
/// C0 variant: continuous Lagrange `v0` nodes (vertices, then `k-1` nodes per
/// edge, then element-interior nodes), followed by the `vg` blocks.
/// General variant: element `v0` blocks, then `vb` blocks, then `vg` blocks.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub config: SpaceConfig,
    pub n_primal: usize,
    pub n_multiplier: usize,
    pub n_elements: usize,
    local_to_global: Vec<usize>,
    /// Dirichlet-constrained primal dofs: boundary `v0` nodes (C0) or
    /// boundary `vb` values (general).
    pub constrained: Vec<bool>,
    /// Physical location of each constrained dof's node.
    pub node_points: Vec<Option<Point2>>,
    /// Start of the `vg` block of edge `e` is `vg_start + e * 2k`.
    pub vg_start: usize,
    /// Start of the `vb` block (general variant).
    pub vb_start: usize,
}

impl DofMap {
    pub fn local_to_global(&self, t: usize) -> &[usize] {
        let n = self.config.n_local();
        &self.local_to_global[t * n..(t + 1) * n]
    }

    pub fn multiplier_range(&self, t: usize) -> std::ops::Range<usize> {
        let m = self.config.n_local_multiplier();
        t * m..(t + 1) * m
    }

    /// Global index of component `comp`, node `q` of the `vg` block on edge `e`.
    pub fn vg_dof(&self, e: usize, comp: usize, q: usize) -> usize {
        self.vg_start + (2 * e + comp) * self.config.n_vg() + q
    }

    pub fn vb_dof(&self, e: usize, q: usize) -> usize {
        assert!(!self.config.c0);
        self.vb_start + e * self.config.n_vb() + q
    }

    /// Gathers the local vector of element `t` from a global primal vector.
    pub fn gather(&self, t: usize, global: &[f64]) -> Vec<f64> {
        self.local_to_global(t).iter().map(|&g| global[g]).collect()
    }

    pub fn n_constrained(&self) -> usize {
        self.constrained.iter().filter(|c| **c).count()
    }
}

pub fn build_dof_map(mesh: &Mesh, config: &SpaceConfig) -> DofMap {
    let k = config.k;
    let nt = mesh.triangles.len();
    let ne = mesh.edges.len();
    let nv = mesh.vertices.len();
    let n_local = config.n_local();
    let n_int = config.n_interior();
    let n_bubble = n_int - 3 - 3 * (k - 1);
    let mut l2g = vec![usize::MAX; nt * n_local];
    let mut n_v0;
    let mut vb_start = 0;
    if config.c0 {
        n_v0 = nv + ne * (k - 1) + nt * n_bubble;
    } else {
        n_v0 = nt * n_int;
        vb_start = n_v0;
        n_v0 += ne * (k + 1);
    }
    let vg_start = n_v0;
    let n_primal = vg_start + ne * 2 * k;
    let mut constrained = vec![false; n_primal];
    let mut node_points = vec![None; n_primal];

    for t in 0..nt {
        let tri = mesh.triangles[t];
        let loc = &mut l2g[t * n_local..(t + 1) * n_local];
        if config.c0 {
            let mut q = 0;
            for &v in &tri.vertices {
                loc[q] = v;
                q += 1;
            }
            for i in 0..3 {
                let e = mesh.tri_edges[t][i];
                let flip = mesh.edge_flipped(t, i);
                for j in 1..k {
                    let jg = if flip { k - j } else { j };
                    loc[q] = nv + e * (k - 1) + (jg - 1);
                    q += 1;
                }
            }
            for b in 0..n_bubble {
                loc[q] = nv + ne * (k - 1) + t * n_bubble + b;
                q += 1;
            }
        } else {
            for (q, slot) in loc.iter_mut().take(n_int).enumerate() {
                *slot = t * n_int + q;
            }
            for i in 0..3 {
                let e = mesh.tri_edges[t][i];
                for q in 0..=k {
                    loc[config.vb_offset(i) + q] = vb_start + e * (k + 1) + q;
                }
            }
        }
        for i in 0..3 {
            let e = mesh.tri_edges[t][i];
            for c in 0..2 {
                for q in 0..k {
                    loc[config.vg_offset(i, c) + q] = vg_start + (2 * e + c) * k + q;
                }
            }
        }
    }

    // boundary constraints and node locations
    for (e, edge) in mesh.edges.iter().enumerate() {
        if !edge.is_boundary {
            continue;
        }
        let [a, b] = mesh.edge_points(e);
        let at = |s: f64| Point2::new(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y));
        if config.c0 {
            for (end, &v) in edge.vertices.iter().enumerate() {
                constrained[v] = true;
                node_points[v] = Some(if end == 0 { a } else { b });
            }
            for j in 1..k {
                let g = nv + e * (k - 1) + (j - 1);
                constrained[g] = true;
                node_points[g] = Some(at(j as f64 / k as f64));
            }
        } else {
            for q in 0..=k {
                let g = vb_start + e * (k + 1) + q;
                constrained[g] = true;
                node_points[g] = Some(at(q as f64 / k as f64));
            }
        }
    }

    DofMap {
        config: *config,
        n_primal,
        n_multiplier: nt * config.n_local_multiplier(),
        n_elements: nt,
        local_to_global: l2g,
        constrained,
        node_points,
        vg_start,
        vb_start,
    }
}

/// Local vector of the weak function `{q|_T, q|_e, grad q|_e}` obtained by
/// nodal sampling (exact for polynomial `q` of degree `<= k`, whose gradient
/// lies in `P_{k-1}`).
pub fn sample_local(
    el: &ElementData,
    config: &SpaceConfig,
    q: impl Fn(Point2) -> f64,
    grad: impl Fn(Point2) -> [f64; 2],
) -> Vec<f64> {
    let mut v = vec![0.0; config.n_local()];
    for (i, p) in TriBasis::lagrange_nodes(&el.points, config.k).iter().enumerate() {
        v[i] = q(*p);
    }
    for ei in 0..3 {
        if !config.c0 {
            for (s, p) in el.vb_nodes(ei).iter().enumerate() {
                v[config.vb_offset(ei) + s] = q(*p);
            }
        }
        for (s, p) in el.vg_nodes(ei).iter().enumerate() {
            let g = grad(*p);
            v[config.vg_offset(ei, 0) + s] = g[0];
            v[config.vg_offset(ei, 1) + s] = g[1];
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::DomainKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_triangle() -> Mesh {
        let v = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.2), Point2::new(0.3, 0.8)];
        let t = vec![crate::mesh::Triangle {
            vertices: [0, 1, 2],
            region: 0,
        }];
        Mesh::from_parts(v, t, 0).unwrap()
    }

    #[test]
    fn dof_counts_general_single_triangle() {
        let cfg = SpaceConfig::new(2, MultiplierSpace::Pkm1, false).unwrap();
        assert_eq!(cfg.n_local(), 27);
        let map = build_dof_map(&one_triangle(), &cfg);
        assert_eq!(map.n_primal, 6 + 9 + 12);
        assert_eq!(map.n_multiplier, 3);
        let p0 = SpaceConfig::new(2, MultiplierSpace::Pkm2, false).unwrap();
        assert_eq!(build_dof_map(&one_triangle(), &p0).n_multiplier, 1);
    }

    #[test]
    fn dof_counts_c0_square() {
        let mesh = Mesh::initial(DomainKind::UnitSquare);
        let cfg = SpaceConfig::default();
        let map = build_dof_map(&mesh, &cfg);
        assert_eq!(map.vg_start, 9);
        assert_eq!(map.n_primal - map.vg_start, 20);
        assert_eq!(map.n_constrained(), 8);
        // shared diagonal: both elements see the same global nodes on it
        let e = mesh.edges.iter().position(|e| !e.is_boundary).unwrap();
        let mid = 4 + e;
        assert!(map.local_to_global(0).contains(&mid));
        assert!(map.local_to_global(1).contains(&mid));
    }

    #[test]
    fn shared_edge_blocks_agree() {
        for c0 in [true, false] {
            let mesh = Mesh::initial(DomainKind::RefSquare).refine();
            let cfg = SpaceConfig::new(3, MultiplierSpace::Pkm1, c0).unwrap();
            let map = build_dof_map(&mesh, &cfg);
            // a global polynomial sampled element by element must produce
            // the same value at every shared global dof
            let q = |p: Point2| 1.0 + p.x - 2.0 * p.y + p.x * p.y * p.y;
            let g = |p: Point2| [1.0 + p.y * p.y, -2.0 + 2.0 * p.x * p.y];
            let mut global = vec![f64::NAN; map.n_primal];
            for t in 0..mesh.triangles.len() {
                let el = ElementData::new(&mesh, t, &cfg).unwrap();
                let v = sample_local(&el, &cfg, q, g);
                for (l, &gi) in map.local_to_global(t).iter().enumerate() {
                    if global[gi].is_nan() {
                        global[gi] = v[l];
                    } else {
                        assert!((global[gi] - v[l]).abs() < 1e-12, "c0={c0} dof {gi}");
                    }
                }
            }
            assert!(global.iter().all(|v| !v.is_nan()));
        }
    }

    fn quadratic(p: Point2) -> f64 {
        1.0 + 0.5 * p.x - p.y + 3.0 * p.x * p.x - 2.0 * p.x * p.y + 0.7 * p.y * p.y
    }

    fn quadratic_grad(p: Point2) -> [f64; 2] {
        [0.5 + 6.0 * p.x - 2.0 * p.y, -1.0 - 2.0 * p.x + 1.4 * p.y]
    }

    #[test]
    fn exact_on_quadratics() {
        let hess = [[6.0, -2.0], [-2.0, 1.4]];
        let mesh = Mesh::initial(DomainKind::LShape).refine();
        for c0 in [true, false] {
            for mult in [MultiplierSpace::Pkm1, MultiplierSpace::Pkm2] {
                let cfg = SpaceConfig::new(2, mult, c0).unwrap();
                for t in 0..mesh.triangles.len() {
                    let el = ElementData::new(&mesh, t, &cfg).unwrap();
                    let h = weak_hessian_local(&el, &cfg).unwrap();
                    let v = sample_local(&el, &cfg, quadratic, quadratic_grad);
                    for (i, row) in hess.iter().enumerate() {
                        for (j, &hij) in row.iter().enumerate() {
                            let c = apply_weak_hessian(&v, &h, i, j);
                            for p in TriBasis::lagrange_nodes(&el.points, 2) {
                                let val = el.multiplier.eval(&c, p);
                                assert!((val - hij).abs() < 1e-11, "c0={c0} {mult:?}");
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn c0_and_general_formulas_agree() {
        let mesh = Mesh::initial(DomainKind::UnitSquare).refine();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for mult in [MultiplierSpace::Pkm1, MultiplierSpace::Pkm2] {
            let cfg = SpaceConfig::new(2, mult, true).unwrap();
            for trial in 0..50 {
                let t = trial % mesh.triangles.len();
                let el = ElementData::new(&mesh, t, &cfg).unwrap();
                let a = weak_hessian_local(&el, &cfg).unwrap();
                let b = weak_hessian_general_on_c0(&el, &cfg).unwrap();
                let v: Vec<f64> = (0..cfg.n_local()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                for i in 0..2 {
                    for j in 0..2 {
                        let x = apply_weak_hessian(&v, &a, i, j);
                        let y = apply_weak_hessian(&v, &b, i, j);
                        for (x, y) in x.iter().zip(&y) {
                            assert!((x - y).abs() < 1e-11);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn p0_multiplier_is_scaled_functional() {
        // with S = P0 the weak derivative is the constant RHS(1) / |T|
        let mesh = one_triangle();
        let cfg = SpaceConfig::new(2, MultiplierSpace::Pkm2, false).unwrap();
        let el = ElementData::new(&mesh, 0, &cfg).unwrap();
        let h = weak_hessian_local(&el, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..cfg.n_local()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let erule = edge_quadrature(8).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                // (v0, 0) - <vb n_i, 0> + <vg_i, n_j>
                let mut rhs = 0.0;
                for (ei, e) in el.edges.iter().enumerate() {
                    let nj = [e.normal.x, e.normal.y][j];
                    for (t, _, w) in edge_points(e.start, e.end, erule) {
                        let c = &v[cfg.vg_offset(ei, i)..cfg.vg_offset(ei, i) + cfg.n_vg()];
                        rhs += w * el.vg_basis.eval(c, t) * nj;
                    }
                }
                let coef = apply_weak_hessian(&v, &h, i, j);
                let val = el.multiplier.eval(&coef, el.points[0]);
                assert!((val - rhs / el.area).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_and_zero() {
        let mesh = one_triangle();
        let cfg = SpaceConfig::new(2, MultiplierSpace::Pkm1, false).unwrap();
        let el = ElementData::new(&mesh, 0, &cfg).unwrap();
        let h = weak_hessian_local(&el, &cfg).unwrap();
        let zero = vec![0.0; cfg.n_local()];
        assert!(apply_weak_hessian(&zero, &h, 0, 1).iter().all(|x| *x == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..cfg.n_local()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..cfg.n_local()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = (0.7, -1.3);
        let comb: Vec<f64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
        let lhs = apply_weak_hessian(&comb, &h, 1, 0);
        let hv = apply_weak_hessian(&v, &h, 1, 0);
        let hw = apply_weak_hessian(&w, &h, 1, 0);
        for q in 0..lhs.len() {
            assert!((lhs[q] - (a * hv[q] + b * hw[q])).abs() < 1e-13 * (1.0 + lhs[q].abs()));
        }
    }

    #[test]
    fn rejects_bad_degree() {
        assert!(matches!(
            SpaceConfig::new(1, MultiplierSpace::Pkm1, true),
            Err(SpaceError::Degree(1))
        ));
    }
}
