//! Built-in test problems, registered by name, and the Cordes-condition check.

use thiserror::Error;

use crate::assembly::CoefficientField;
use crate::mesh::{DomainKind, Mesh, Point2};
use crate::polyquad::{physical_points, triangle_quadrature};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown problem '{name}'; available: {}", known.join(", "))]
    Unknown { name: String, known: Vec<String> },
}

/// A Dirichlet problem `sum_ij a_ij d_ij u = f` in the domain, `u = g` on
/// its boundary.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;
    fn description(&self) -> &str;
    fn domain(&self) -> DomainKind;
    fn coefficient(&self) -> &dyn CoefficientField;
    /// Right-hand side `f`; `region` is the element's smoothness-region tag.
    fn rhs(&self, p: Point2, region: i32) -> f64;
    /// Dirichlet data `g`.
    fn boundary(&self, p: Point2) -> f64;
    fn exact(&self, _p: Point2) -> Option<f64> {
        None
    }
    fn exact_grad(&self, _p: Point2) -> Option<[f64; 2]> {
        None
    }
    /// Whether coefficient and load are smooth inside each region. Non-smooth
    /// data is integrated with a fixed degree-20 rule.
    fn smooth_data(&self) -> bool {
        true
    }
}

/// Constant tensor.
#[derive(Debug, Clone, Copy)]
pub struct ConstantCoefficient(pub [[f64; 2]; 2]);

impl CoefficientField for ConstantCoefficient {
    fn eval(&self, _p: Point2, _region: i32) -> [[f64; 2]; 2] {
        self.0
    }

    fn ellipticity_bounds(&self) -> Option<(f64, f64)> {
        let [[a, b], [_, d]] = self.0;
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        Some((mean - rad, mean + rad))
    }
}

/// `a11 = 1 + |x1|`, `a12 = a21 = |x1|^{1/3} |x2|^{1/3} / 2`, `a22 = 1 + |x2|`:
/// continuous, with singular derivatives at the origin.
#[derive(Debug, Clone, Copy)]
pub struct CubeRootCoefficient;

impl CoefficientField for CubeRootCoefficient {
    fn eval(&self, p: Point2, _region: i32) -> [[f64; 2]; 2] {
        let off = 0.5 * p.x.abs().cbrt() * p.y.abs().cbrt();
        [[1.0 + p.x.abs(), off], [off, 1.0 + p.y.abs()]]
    }

    fn ellipticity_bounds(&self) -> Option<(f64, f64)> {
        // Gershgorin on (-1,1)^2
        Some((0.5, 2.5))
    }
}

/// Quadrant signs `(s1, s2)` encoded by the reference-square region tags.
pub fn quadrant_signs(region: i32) -> (f64, f64) {
    match region.rem_euclid(4) {
        0 => (1.0, 1.0),
        1 => (-1.0, 1.0),
        2 => (-1.0, -1.0),
        _ => (1.0, -1.0),
    }
}

/// `a_ij = (1 + delta_ij) sign(x_i) sign(x_j)`, with signs taken from the
/// element's quadrant tag.
#[derive(Debug, Clone, Copy)]
pub struct SignCoefficient;

impl CoefficientField for SignCoefficient {
    fn eval(&self, _p: Point2, region: i32) -> [[f64; 2]; 2] {
        let (s1, s2) = quadrant_signs(region);
        [[2.0, s1 * s2], [s1 * s2, 2.0]]
    }

    fn ellipticity_bounds(&self) -> Option<(f64, f64)> {
        Some((1.0, 3.0))
    }
}

/// `a_ij = delta_ij + x_i x_j / |x|^2`, discontinuous at the origin.
#[derive(Debug, Clone, Copy)]
pub struct RadialCoefficient;

impl CoefficientField for RadialCoefficient {
    fn eval(&self, p: Point2, _region: i32) -> [[f64; 2]; 2] {
        let r2 = p.x * p.x + p.y * p.y;
        let xy = p.x * p.y / r2;
        [[1.0 + p.x * p.x / r2, xy], [xy, 1.0 + p.y * p.y / r2]]
    }

    fn ellipticity_bounds(&self) -> Option<(f64, f64)> {
        Some((1.0, 2.0))
    }
}

/// Exact solution `sin(x1) sin(x2)` with load computed from the closed-form
/// Hessian and the problem's coefficient.
pub struct SinSinProblem<C> {
    name: &'static str,
    description: &'static str,
    domain: DomainKind,
    coeff: C,
    smooth: bool,
}

impl<C: CoefficientField> Problem for SinSinProblem<C> {
    fn name(&self) -> &str {
        self.name
    }

    fn description(&self) -> &str {
        self.description
    }

    fn domain(&self) -> DomainKind {
        self.domain
    }

    fn coefficient(&self) -> &dyn CoefficientField {
        &self.coeff
    }

    fn rhs(&self, p: Point2, region: i32) -> f64 {
        let a = self.coeff.eval(p, region);
        let (s1, c1, s2, c2) = (p.x.sin(), p.x.cos(), p.y.sin(), p.y.cos());
        let hxx = -s1 * s2;
        let hxy = c1 * c2;
        let hyy = -s1 * s2;
        a[0][0] * hxx + (a[0][1] + a[1][0]) * hxy + a[1][1] * hyy
    }

    fn boundary(&self, p: Point2) -> f64 {
        p.x.sin() * p.y.sin()
    }

    fn exact(&self, p: Point2) -> Option<f64> {
        Some(p.x.sin() * p.y.sin())
    }

    fn exact_grad(&self, p: Point2) -> Option<[f64; 2]> {
        Some([p.x.cos() * p.y.sin(), p.x.sin() * p.y.cos()])
    }

    fn smooth_data(&self) -> bool {
        self.smooth
    }
}

// t (1 - e^{1-|t|}) and its derivatives; `s` is sign(t)
fn damped(t: f64) -> f64 {
    t * (1.0 - (1.0 - t.abs()).exp())
}

fn damped_d1(t: f64) -> f64 {
    let e = (1.0 - t.abs()).exp();
    1.0 - e + t.abs() * e
}

fn damped_d2(t: f64, s: f64) -> f64 {
    s * (1.0 - t.abs()).exp() * (2.0 - t.abs())
}

/// Sign-discontinuous coefficient on (-1,1)^2 with exact solution
/// `x1 x2 (1 - e^{1-|x1|}) (1 - e^{1-|x2|})`, which vanishes on the boundary.
pub struct SignProblem;

impl Problem for SignProblem {
    fn name(&self) -> &str {
        "p4"
    }

    fn description(&self) -> &str {
        "(-1,1)^2, a_ij = (1+delta_ij) sign(x_i) sign(x_j), u = x1 x2 (1-e^(1-|x1|)) (1-e^(1-|x2|))"
    }

    fn domain(&self) -> DomainKind {
        DomainKind::RefSquare
    }

    fn coefficient(&self) -> &dyn CoefficientField {
        &SignCoefficient
    }

    fn rhs(&self, p: Point2, region: i32) -> f64 {
        let (s1, s2) = quadrant_signs(region);
        let (g1, g2) = (damped(p.x), damped(p.y));
        2.0 * damped_d2(p.x, s1) * g2 + 2.0 * g1 * damped_d2(p.y, s2) + 2.0 * s1 * s2 * damped_d1(p.x) * damped_d1(p.y)
    }

    fn boundary(&self, _p: Point2) -> f64 {
        0.0
    }

    fn exact(&self, p: Point2) -> Option<f64> {
        Some(damped(p.x) * damped(p.y))
    }

    fn exact_grad(&self, p: Point2) -> Option<[f64; 2]> {
        Some([damped_d1(p.x) * damped(p.y), damped(p.x) * damped_d1(p.y)])
    }

    fn smooth_data(&self) -> bool {
        false
    }
}

/// `u = |x|^alpha` for `sum (delta_ij + x_i x_j/|x|^2) d_ij u = f`,
/// `f = (2 alpha^2 - alpha) |x|^{alpha-2}`.
pub struct RadialProblem {
    pub alpha: f64,
    name: &'static str,
    description: &'static str,
    domain: DomainKind,
}

impl RadialProblem {
    pub fn new(domain: DomainKind, alpha: f64) -> RadialProblem {
        let (name, description) = match domain {
            DomainKind::UnitSquare => ("p5", "(0,1)^2, a_ij = delta_ij + x_i x_j/|x|^2, u = |x|^alpha"),
            _ => ("p5-ref", "(-1,1)^2, a_ij = delta_ij + x_i x_j/|x|^2, u = |x|^alpha"),
        };
        RadialProblem {
            alpha,
            name,
            description,
            domain,
        }
    }
}

impl Problem for RadialProblem {
    fn name(&self) -> &str {
        self.name
    }

    fn description(&self) -> &str {
        self.description
    }

    fn domain(&self) -> DomainKind {
        self.domain
    }

    fn coefficient(&self) -> &dyn CoefficientField {
        &RadialCoefficient
    }

    fn rhs(&self, p: Point2, _region: i32) -> f64 {
        let a = self.alpha;
        (2.0 * a * a - a) * p.norm().powf(a - 2.0)
    }

    fn boundary(&self, p: Point2) -> f64 {
        p.norm().powf(self.alpha)
    }

    fn exact(&self, p: Point2) -> Option<f64> {
        Some(p.norm().powf(self.alpha))
    }

    fn exact_grad(&self, p: Point2) -> Option<[f64; 2]> {
        let r = p.norm();
        if r == 0.0 {
            return Some([0.0, 0.0]);
        }
        let s = self.alpha * r.powf(self.alpha - 2.0);
        Some([s * p.x, s * p.y])
    }

    fn smooth_data(&self) -> bool {
        false
    }
}

/// `u = x1^2 + x2^2`, Laplacian coefficient, `f = 4`; reproduced exactly by
/// the quadratic element.
pub struct QuadraticProblem;

impl Problem for QuadraticProblem {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn description(&self) -> &str {
        "(0,1)^2, a = I, u = x1^2 + x2^2 (exactly representable)"
    }

    fn domain(&self) -> DomainKind {
        DomainKind::UnitSquare
    }

    fn coefficient(&self) -> &dyn CoefficientField {
        &ConstantCoefficient([[1.0, 0.0], [0.0, 1.0]])
    }

    fn rhs(&self, _p: Point2, _region: i32) -> f64 {
        4.0
    }

    fn boundary(&self, p: Point2) -> f64 {
        p.x * p.x + p.y * p.y
    }

    fn exact(&self, p: Point2) -> Option<f64> {
        Some(p.x * p.x + p.y * p.y)
    }

    fn exact_grad(&self, p: Point2) -> Option<[f64; 2]> {
        Some([2.0 * p.x, 2.0 * p.y])
    }
}

pub const TABLE_COEFFICIENT: [[f64; 2]; 2] = [[3.0, 1.0], [1.0, 2.0]];
pub const RADIAL_ALPHA: f64 = 1.6;

/// Name-keyed collection of problems.
pub struct ProblemRegistry {
    entries: Vec<Box<dyn Problem>>,
}

impl ProblemRegistry {
    pub fn empty() -> Self {
        ProblemRegistry { entries: Vec::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(SinSinProblem {
            name: "p1",
            description: "(0,1)^2, a = [[3,1],[1,2]], u = sin(x1) sin(x2)",
            domain: DomainKind::UnitSquare,
            coeff: ConstantCoefficient(TABLE_COEFFICIENT),
            smooth: true,
        }));
        r.register(Box::new(SinSinProblem {
            name: "p2",
            description: "L-shaped domain, a = [[3,1],[1,2]], u = sin(x1) sin(x2)",
            domain: DomainKind::LShape,
            coeff: ConstantCoefficient(TABLE_COEFFICIENT),
            smooth: true,
        }));
        r.register(Box::new(SinSinProblem {
            name: "p3",
            description: "(-1,1)^2, a11 = 1+|x1|, a12 = |x1|^(1/3)|x2|^(1/3)/2, a22 = 1+|x2|, u = sin(x1) sin(x2)",
            domain: DomainKind::RefSquare,
            coeff: CubeRootCoefficient,
            smooth: false,
        }));
        r.register(Box::new(SignProblem));
        r.register(Box::new(RadialProblem::new(DomainKind::UnitSquare, RADIAL_ALPHA)));
        r.register(Box::new(RadialProblem::new(DomainKind::RefSquare, RADIAL_ALPHA)));
        r.register(Box::new(QuadraticProblem));
        r
    }

    /// Adds a problem; a later registration under an existing name wins.
    pub fn register(&mut self, problem: Box<dyn Problem>) {
        self.entries.retain(|p| p.name() != problem.name());
        self.entries.push(problem);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Problem, ProblemError> {
        self.entries
            .iter()
            .find(|p| p.name() == name)
            .map(|p| p.as_ref())
            .ok_or_else(|| ProblemError::Unknown {
                name: name.to_string(),
                known: self.names().into_iter().map(String::from).collect(),
            })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|p| p.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Problem> {
        self.entries.iter().map(|p| p.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CordesReport {
    /// max over samples of `sum a_ij^2 / (sum a_ii)^2`
    pub ratio_sup: f64,
    /// `1 / ratio_sup - (d - 1)` with `d = 2`
    pub epsilon: f64,
    pub satisfied: bool,
    /// `alpha / (2 beta - alpha)` from known ellipticity bounds
    pub ellipticity_epsilon: Option<f64>,
    /// first sample with non-positive trace, if any
    pub bad_point: Option<Point2>,
}

/// Evaluates the Cordes ratio at every sample `(point, region)`.
pub fn cordes_check(coeff: &dyn CoefficientField, samples: &[(Point2, i32)]) -> CordesReport {
    assert!(!samples.is_empty(), "Cordes check needs at least one sample");
    let ellipticity_epsilon = coeff
        .ellipticity_bounds()
        .map(|(alpha, beta)| alpha / (2.0 * beta - alpha));
    let mut ratio_sup = 0.0f64;
    for &(p, region) in samples {
        let a = coeff.eval(p, region);
        let trace = a[0][0] + a[1][1];
        if trace <= 0.0 || !trace.is_finite() {
            return CordesReport {
                ratio_sup: f64::INFINITY,
                epsilon: f64::NEG_INFINITY,
                satisfied: false,
                ellipticity_epsilon,
                bad_point: Some(p),
            };
        }
        let sq: f64 = a.iter().flatten().map(|v| v * v).sum();
        ratio_sup = ratio_sup.max(sq / (trace * trace));
    }
    let epsilon = 1.0 / ratio_sup - 1.0;
    CordesReport {
        ratio_sup,
        epsilon,
        satisfied: epsilon > 0.0 && epsilon <= 1.0,
        ellipticity_epsilon,
        bad_point: None,
    }
}

/// All quadrature points of the level-3 mesh of `domain`, with region tags.
pub fn default_samples(domain: DomainKind) -> Vec<(Point2, i32)> {
    let mut mesh = Mesh::initial(domain);
    for _ in 0..3 {
        mesh = mesh.refine();
    }
    let rule = triangle_quadrature(4).expect("rule");
    let mut out = Vec::new();
    for t in 0..mesh.triangles.len() {
        let region = mesh.triangles[t].region;
        for (p, _) in physical_points(&mesh.tri_points(t), rule) {
            out.push((p, region));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn p1_rhs_at_one_one() {
        let reg = ProblemRegistry::builtin();
        let p1 = reg.get("p1").unwrap();
        let s = 1f64.sin();
        let c = 1f64.cos();
        let f = p1.rhs(Point2::new(1.0, 1.0), 0);
        assert!((f - (-5.0 * s * s + 2.0 * c * c)).abs() < 1e-14);
    }

    #[test]
    fn p5_rhs_at_half() {
        let p5 = RadialProblem::new(DomainKind::UnitSquare, 1.6);
        let f = p5.rhs(Point2::new(0.3, 0.4), 0);
        assert!((f - 3.52 * 0.5f64.powf(-0.4)).abs() < 1e-13);
    }

    #[test]
    fn p4_vanishes_on_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s: f64 = rng.gen_range(-1.0..1.0);
            for p in [
                Point2::new(1.0, s),
                Point2::new(-1.0, s),
                Point2::new(s, 1.0),
                Point2::new(s, -1.0),
            ] {
                assert!(SignProblem.exact(p).unwrap().abs() < 1e-15);
            }
        }
    }

    fn region_of(p: Point2, domain: DomainKind) -> i32 {
        if domain != DomainKind::RefSquare {
            return 0;
        }
        match (p.x > 0.0, p.y > 0.0) {
            (true, true) => 0,
            (false, true) => 1,
            (false, false) => 2,
            (true, false) => 3,
        }
    }

    fn random_interior(domain: DomainKind, rng: &mut ChaCha8Rng) -> Point2 {
        loop {
            let p = match domain {
                DomainKind::UnitSquare => Point2::new(rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)),
                DomainKind::RefSquare => Point2::new(rng.gen_range(-0.95..0.95), rng.gen_range(-0.95..0.95)),
                DomainKind::LShape => Point2::new(rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)),
            };
            // stay a finite-difference stencil away from the axes
            if p.x.abs() > 0.05 && p.y.abs() > 0.05 {
                return p;
            }
        }
    }

    #[test]
    fn rhs_matches_finite_difference_hessian() {
        let reg = ProblemRegistry::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-3;
        for prob in reg.iter() {
            for _ in 0..100 {
                let p = random_interior(prob.domain(), &mut rng);
                let u = |dx: f64, dy: f64| prob.exact(Point2::new(p.x + dx, p.y + dy)).unwrap();
                let uxx = (u(h, 0.0) - 2.0 * u(0.0, 0.0) + u(-h, 0.0)) / (h * h);
                let uyy = (u(0.0, h) - 2.0 * u(0.0, 0.0) + u(0.0, -h)) / (h * h);
                let uxy = (u(h, h) - u(h, -h) - u(-h, h) + u(-h, -h)) / (4.0 * h * h);
                let region = region_of(p, prob.domain());
                let a = prob.coefficient().eval(p, region);
                let fd = a[0][0] * uxx + (a[0][1] + a[1][0]) * uxy + a[1][1] * uyy;
                let f = prob.rhs(p, region);
                assert!((fd - f).abs() < 1e-4 * (1.0 + f.abs()), "{}: {fd} vs {f}", prob.name());
            }
        }
    }

    #[test]
    fn boundary_data_is_exact_trace() {
        let reg = ProblemRegistry::builtin();
        for prob in reg.iter() {
            let mesh = Mesh::initial(prob.domain()).refine();
            for e in mesh.edges.iter().filter(|e| e.is_boundary) {
                let p = mesh.vertices[e.vertices[0]];
                assert!((prob.boundary(p) - prob.exact(p).unwrap()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cordes_values() {
        let id = ConstantCoefficient([[1.0, 0.0], [0.0, 1.0]]);
        let s = default_samples(DomainKind::UnitSquare);
        let r = cordes_check(&id, &s);
        assert!((r.ratio_sup - 0.5).abs() < 1e-15);
        assert!((r.epsilon - 1.0).abs() < 1e-15);
        assert!(r.satisfied);

        let r4 = cordes_check(&SignCoefficient, &default_samples(DomainKind::RefSquare));
        assert!((r4.ratio_sup - 5.0 / 8.0).abs() < 1e-15);
        assert!((r4.epsilon - 0.6).abs() < 1e-14);

        let r5 = cordes_check(&RadialCoefficient, &default_samples(DomainKind::RefSquare));
        assert!((r5.epsilon - 0.8).abs() < 1e-14);
        assert!(r5.satisfied);
    }

    #[test]
    fn cordes_rejects_nonpositive_trace() {
        let neg = ConstantCoefficient([[-1.0, 0.0], [0.0, 0.5]]);
        let r = cordes_check(&neg, &[(Point2::new(0.2, 0.2), 0)]);
        assert!(!r.satisfied);
        assert_eq!(r.bad_point, Some(Point2::new(0.2, 0.2)));
    }

    #[test]
    fn cordes_dominates_ellipticity_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let a: f64 = rng.gen_range(0.1..10.0);
            let d: f64 = rng.gen_range(0.1..10.0);
            let lim = (a * d).sqrt() * 0.999;
            let b = rng.gen_range(-lim..lim);
            let c = ConstantCoefficient([[a, b], [b, d]]);
            let r = cordes_check(&c, &[(Point2::new(0.0, 0.0), 0)]);
            let bound = r.ellipticity_epsilon.unwrap();
            assert!(r.epsilon >= bound - 1e-12, "{a} {b} {d}: {} < {bound}", r.epsilon);
        }
        for (coeff, domain) in [
            (&CubeRootCoefficient as &dyn CoefficientField, DomainKind::RefSquare),
            (&SignCoefficient, DomainKind::RefSquare),
            (&RadialCoefficient, DomainKind::UnitSquare),
        ] {
            let r = cordes_check(coeff, &default_samples(domain));
            assert!(r.epsilon >= r.ellipticity_epsilon.unwrap() - 1e-12);
        }
    }

    #[test]
    fn unknown_name_lists_catalog() {
        let reg = ProblemRegistry::builtin();
        let err = reg.get("p9").err().unwrap().to_string();
        assert!(err.contains("p1") && err.contains("p5-ref"));
    }
}
