//! Interpolants, error norms, discrete norms and the convergence-study driver.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{
    build_saddle, coefficient_moments, data_rule_degree, element_data, stabilizer_energy_local, stabilizer_local,
    AssemblyError, CoefficientField, SaddleSystem,
};
use crate::mesh::{hierarchy, Mesh, Point2};
use crate::polyquad::{
    edge_points, edge_quadrature, physical_points, project_edge, project_edge_vector, project_element,
    triangle_quadrature, TriBasis,
};
use crate::problems::Problem;
use crate::solver::{solve_saddle, LinearSolver, SolveError, WgSolution};
use crate::wgspace::{weak_hessian_local, DofMap, ElementData, SpaceConfig};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("levels must be >= 2 (got {0})")]
    Levels(usize),
    #[error("level {level}: {source}")]
    Assembly { level: usize, source: AssemblyError },
    #[error("level {level}: {source}")]
    Solve { level: usize, source: SolveError },
}

/// Nodal values of `I_h u` at the degree-`k` Lagrange nodes of every element.
pub fn lagrange_interpolant(u: impl Fn(Point2) -> f64, mesh: &Mesh, k: usize) -> Vec<Vec<f64>> {
    (0..mesh.triangles.len())
        .map(|t| {
            TriBasis::lagrange_nodes(&mesh.tri_points(t), k)
                .into_iter()
                .map(&u)
                .collect()
        })
        .collect()
}

/// Nodal values of `I_g grad u` on every edge: `k` equispaced nodes per
/// component in the edge's global orientation (the endpoints for `k = 2`).
pub fn edge_gradient_interpolant(grad: impl Fn(Point2) -> [f64; 2], mesh: &Mesh, k: usize) -> Vec<[Vec<f64>; 2]> {
    let ts = crate::polyquad::EdgeBasis::nodes(k - 1);
    (0..mesh.edges.len())
        .map(|e| {
            let [a, b] = mesh.edge_points(e);
            let g: Vec<[f64; 2]> = ts
                .iter()
                .map(|t| grad(Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))))
                .collect();
            [g.iter().map(|v| v[0]).collect(), g.iter().map(|v| v[1]).collect()]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorReport {
    /// `||u0 - I_h u||`
    pub e0: Option<f64>,
    /// `||u0 - u||`
    pub e0_true: Option<f64>,
    /// `(sum_T h_T ||u_g - I_g grad u||^2_{dT})^{1/2}`
    pub eg: Option<f64>,
    /// `||lambda_h||`
    pub gamma: f64,
    /// `(sum_T h_T ||u_b - Q_b u||^2_{dT})^{1/2}`, general variant only
    pub eb: Option<f64>,
    /// `s_h(u_h, u_h)^{1/2}`
    pub s_energy: f64,
}

#[derive(Default, Clone, Copy)]
struct Partial {
    e0: f64,
    e0_true: f64,
    eg: f64,
    eb: f64,
    s: f64,
}

fn element_errors(el: &ElementData, map: &DofMap, local: &[f64], problem: &dyn Problem, data_rule: usize) -> Partial {
    let config = &map.config;
    let mut out = Partial {
        s: stabilizer_energy_local(el, config, local).0,
        ..Partial::default()
    };
    let (Some(_), Some(_)) = (problem.exact(el.points[0]), problem.exact_grad(el.points[0])) else {
        return out;
    };
    let u = |p: Point2| problem.exact(p).unwrap();
    let gu = |p: Point2| problem.exact_grad(p).unwrap();
    let n_int = config.n_interior();
    let diff: Vec<f64> = TriBasis::lagrange_nodes(&el.points, config.k)
        .iter()
        .enumerate()
        .map(|(q, p)| local[q] - u(*p))
        .collect();
    for (p, w) in physical_points(
        &el.points,
        triangle_quadrature(config.elem_rule_degree()).expect("rule"),
    ) {
        out.e0 += w * el.interior.eval(&diff, p).powi(2);
    }
    for (p, w) in physical_points(&el.points, triangle_quadrature(data_rule).expect("rule")) {
        out.e0_true += w * (el.interior.eval(&local[..n_int], p) - u(p)).powi(2);
    }
    let erule = edge_quadrature(config.edge_rule_degree()).expect("rule");
    for ei in 0..3 {
        let e = &el.edges[ei];
        let nodes = el.vg_nodes(ei);
        let d: [Vec<f64>; 2] = std::array::from_fn(|c| {
            let off = config.vg_offset(ei, c);
            nodes
                .iter()
                .enumerate()
                .map(|(q, p)| local[off + q] - gu(*p)[c])
                .collect()
        });
        for (t, _, w) in edge_points(e.start, e.end, erule) {
            out.eg += el.h * w * (el.vg_basis.eval(&d[0], t).powi(2) + el.vg_basis.eval(&d[1], t).powi(2));
        }
        if !config.c0 {
            let qb = project_edge(u, config.k, e.start, e.end, data_rule).expect("finite boundary projection");
            let off = config.vb_offset(ei);
            let db: Vec<f64> = crate::polyquad::EdgeBasis::nodes(config.k)
                .iter()
                .enumerate()
                .map(|(q, t)| local[off + q] - qb.eval(*t))
                .collect();
            for (t, _, w) in edge_points(e.start, e.end, erule) {
                out.eb += el.h * w * el.vb_basis.eval(&db, t).powi(2);
            }
        }
    }
    out
}

/// All error norms of a discrete solution against the problem's exact data.
pub fn error_norms(
    mesh: &Mesh,
    system: &SaddleSystem,
    sol: &WgSolution,
    problem: &dyn Problem,
) -> Result<ErrorReport, AssemblyError> {
    let map = &system.map;
    let config = map.config;
    let data_rule = data_rule_degree(problem, &config);
    let elements = element_data(mesh, &config)?;
    let parts: Vec<Partial> = elements
        .par_iter()
        .map(|el| element_errors(el, map, &map.gather(el.index, &sol.primal), problem, data_rule))
        .collect();
    let sum = parts.iter().fold(Partial::default(), |a, p| Partial {
        e0: a.e0 + p.e0,
        e0_true: a.e0_true + p.e0_true,
        eg: a.eg + p.eg,
        eb: a.eb + p.eb,
        s: a.s + p.s,
    });
    let has_exact = problem.exact(mesh.vertices[0]).is_some() && problem.exact_grad(mesh.vertices[0]).is_some();
    let gamma = sol.lambda.iter().map(|l| l * l).sum::<f64>().sqrt();
    Ok(ErrorReport {
        e0: has_exact.then(|| sum.e0.sqrt()),
        e0_true: has_exact.then(|| sum.e0_true.sqrt()),
        eg: has_exact.then(|| sum.eg.sqrt()),
        gamma,
        eb: (has_exact && !config.c0).then(|| sum.eb.sqrt()),
        s_energy: sum.s.max(0.0).sqrt(),
    })
}

/// `||v||_{2,h}`, `|||v|||_2` and `s_h(v, v)^{1/2}` for a global primal vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteNorms {
    pub norm_2h: f64,
    pub triple: f64,
    pub s_energy: f64,
}

/// Per-element `(C_T, B_T, S_T)`.
pub type NormMatrices = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

/// Per-element matrices `(C_T, B_T, S_T)`: `C_T v` and `B_T v` are the
/// multiplier-basis coefficients of `sum Q(a_ij d_ij v0)` and of
/// `sum Q(a_ij d^2_{ij,d} v)`.
pub fn norm_matrices(
    el: &ElementData,
    config: &SpaceConfig,
    coeff: &dyn CoefficientField,
    rule_degree: usize,
) -> Result<NormMatrices, AssemblyError> {
    let amat = coefficient_moments(el, coeff, rule_degree)?;
    let hess = weak_hessian_local(el, config)?;
    let m = el.multiplier.dim();
    let n = config.n_local();
    // classical Hessian of v0 in the multiplier basis, exact since d_ij v0 in P_{k-2}
    let mut d: [DMatrix<f64>; 4] = std::array::from_fn(|_| DMatrix::zeros(m, n));
    for (p, w) in physical_points(
        &el.points,
        triangle_quadrature(config.elem_rule_degree()).expect("rule"),
    ) {
        let phi = el.multiplier.values(p);
        for (q, h) in el.interior.hessians(p).iter().enumerate() {
            let hij = [h[0], h[1], h[1], h[2]];
            for l in 0..m {
                for c in 0..4 {
                    d[c][(l, q)] += w * phi[l] * hij[c];
                }
            }
        }
    }
    let mut cm = DMatrix::zeros(m, n);
    let mut bm = DMatrix::zeros(m, n);
    for c in 0..4 {
        cm += &amat[c] * &d[c];
        bm += &amat[c] * &hess.h[c];
    }
    Ok((cm, bm, stabilizer_local(el, config)))
}

pub fn discrete_norms(
    v: &[f64],
    mesh: &Mesh,
    map: &DofMap,
    coeff: &dyn CoefficientField,
    rule_degree: usize,
) -> Result<DiscreteNorms, AssemblyError> {
    assert_eq!(v.len(), map.n_primal);
    let config = map.config;
    let elements = element_data(mesh, &config)?;
    let parts: Vec<[f64; 3]> = elements
        .par_iter()
        .map(|el| {
            let (c, b, s) = norm_matrices(el, &config, coeff, rule_degree)?;
            let x = DVector::from_vec(map.gather(el.index, v));
            Ok([
                (&c * &x).norm_squared(),
                (&b * &x).norm_squared(),
                (x.transpose() * &s * &x)[(0, 0)],
            ])
        })
        .collect::<Result<_, AssemblyError>>()?;
    let [c, b, s] = parts
        .iter()
        .fold([0.0; 3], |a, p| [a[0] + p[0], a[1] + p[1], a[2] + p[2]]);
    let s = s.max(0.0);
    Ok(DiscreteNorms {
        norm_2h: (c + s).sqrt(),
        triple: (b + s).sqrt(),
        s_energy: s.sqrt(),
    })
}

/// Local vector of `Q_h w = {Q_0 w, Q_b w, Q_g grad w}` on element `el`.
pub fn project_weak_local(
    el: &ElementData,
    config: &SpaceConfig,
    w: impl Fn(Point2) -> f64 + Copy,
    grad: impl Fn(Point2) -> [f64; 2] + Copy,
    rule_degree: usize,
) -> Vec<f64> {
    let mut v = vec![0.0; config.n_local()];
    let q0 = project_element(w, config.k, &el.points, rule_degree).expect("finite projection");
    for (q, p) in TriBasis::lagrange_nodes(&el.points, config.k).iter().enumerate() {
        v[q] = q0.eval(*p);
    }
    let vb_nodes = crate::polyquad::EdgeBasis::nodes(config.k);
    let vg_nodes = crate::polyquad::EdgeBasis::nodes(config.k - 1);
    for ei in 0..3 {
        let e = &el.edges[ei];
        if !config.c0 {
            let qb = project_edge(w, config.k, e.start, e.end, rule_degree).expect("finite projection");
            for (q, t) in vb_nodes.iter().enumerate() {
                v[config.vb_offset(ei) + q] = qb.eval(*t);
            }
        }
        let qg = project_edge_vector(grad, config.k - 1, e.start, e.end, rule_degree).expect("finite projection");
        for c in 0..2 {
            for (q, t) in vg_nodes.iter().enumerate() {
                v[config.vg_offset(ei, c) + q] = qg[c].eval(*t);
            }
        }
    }
    v
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRow {
    pub level: usize,
    pub h: f64,
    pub n_unknowns: usize,
    pub report: ErrorReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    E0,
    E0True,
    Eg,
    Gamma,
    Eb,
    SEnergy,
}

impl Metric {
    pub fn of(self, r: &ErrorReport) -> Option<f64> {
        match self {
            Metric::E0 => r.e0,
            Metric::E0True => r.e0_true,
            Metric::Eg => r.eg,
            Metric::Gamma => Some(r.gamma),
            Metric::Eb => r.eb,
            Metric::SEnergy => Some(r.s_energy),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub problem: String,
    pub config: SpaceConfig,
    pub rows: Vec<LevelRow>,
}

/// `log2(prev / cur)`, undefined when either value is missing or non-positive.
pub fn observed_order(prev: Option<f64>, cur: Option<f64>) -> Option<f64> {
    match (prev, cur) {
        (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).log2()),
        _ => None,
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.7e}")).unwrap_or_default()
}

impl ConvergenceTable {
    pub fn values(&self, m: Metric) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| m.of(&r.report)).collect()
    }

    /// Orders per row; the first row has none.
    pub fn orders(&self, m: Metric) -> Vec<Option<f64>> {
        let v = self.values(m);
        (0..v.len())
            .map(|i| if i == 0 { None } else { observed_order(v[i - 1], v[i]) })
            .collect()
    }

    pub fn final_order(&self, m: Metric) -> Option<f64> {
        self.orders(m).last().copied().flatten()
    }

    /// Order between rows `len-3` and `len-2`.
    pub fn second_final_order(&self, m: Metric) -> Option<f64> {
        let o = self.orders(m);
        o.len().checked_sub(2).and_then(|i| o[i])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "level,inv_h,e0,e0_order,eg,eg_order,gamma,gamma_order,e0_true,s_energy"
        )?;
        let (o0, og, ol) = (
            self.orders(Metric::E0),
            self.orders(Metric::Eg),
            self.orders(Metric::Gamma),
        );
        for (i, r) in self.rows.iter().enumerate() {
            let e = &r.report;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.level,
                fmt(Some(1.0 / r.h)),
                fmt(e.e0),
                fmt(o0[i]),
                fmt(e.eg),
                fmt(og[i]),
                fmt(Some(e.gamma)),
                fmt(ol[i]),
                fmt(e.e0_true),
                fmt(Some(e.s_energy))
            )?;
        }
        Ok(())
    }

    /// Columns `h,e0,eg,gamma` for log-log plotting.
    pub fn write_loglog<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "h,e0,eg,gamma")?;
        for r in &self.rows {
            let e = &r.report;
            writeln!(
                w,
                "{},{},{},{}",
                fmt(Some(r.h)),
                fmt(e.e0),
                fmt(e.eg),
                fmt(Some(e.gamma))
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

/// Solves `problem` on `levels` successively refined meshes, starting from
/// the domain's initial mesh, calling `on_level` after each row is added.
pub fn run_study_with(
    problem: &dyn Problem,
    config: &SpaceConfig,
    levels: usize,
    solver: &dyn LinearSolver,
    mut on_level: impl FnMut(&ConvergenceTable),
) -> Result<ConvergenceTable, StudyError> {
    if levels < 2 {
        return Err(StudyError::Levels(levels));
    }
    let mut table = ConvergenceTable {
        problem: problem.name().to_string(),
        config: *config,
        rows: Vec::new(),
    };
    for mesh in hierarchy(problem.domain(), levels) {
        let level = mesh.level;
        let system = build_saddle(&mesh, config, problem).map_err(|source| StudyError::Assembly { level, source })?;
        let sol = solve_saddle(&system, solver).map_err(|source| StudyError::Solve { level, source })?;
        let report =
            error_norms(&mesh, &system, &sol, problem).map_err(|source| StudyError::Assembly { level, source })?;
        table.rows.push(LevelRow {
            level,
            h: mesh.h_max,
            n_unknowns: sol.primal.len() + sol.lambda.len(),
            report,
        });
        on_level(&table);
    }
    Ok(table)
}

pub fn run_study(
    problem: &dyn Problem,
    config: &SpaceConfig,
    levels: usize,
    solver: &dyn LinearSolver,
) -> Result<ConvergenceTable, StudyError> {
    run_study_with(problem, config, levels, solver, |_| {})
}
