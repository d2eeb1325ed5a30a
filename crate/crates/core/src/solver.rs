//! Linear solvers for the reduced saddle-point system, selectable by name.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use thiserror::Error;

use crate::assembly::{CsrMatrix, KktSystem, SaddleSystem};

/// Relative residual accepted after a solve.
pub const RESIDUAL_RTOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("singular saddle system: {diagnosis} (relative residual {residual:.3e})")]
    Singular { diagnosis: String, residual: f64 },
    #[error("{solver} did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    NotConverged {
        solver: &'static str,
        residual: f64,
        iterations: usize,
    },
    #[error("unknown solver '{name}'; available: {}", known.join(", "))]
    UnknownSolver { name: String, known: Vec<String> },
}

/// A method for `K x = b` with symmetric, possibly indefinite `K`.
pub trait LinearSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, matrix: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>, SolveError>;
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn relative_residual(matrix: &CsrMatrix, x: &[f64], rhs: &[f64]) -> f64 {
    let r: Vec<f64> = matrix.matvec(x).iter().zip(rhs).map(|(a, b)| b - a).collect();
    norm(&r) / norm(rhs).max(f64::MIN_POSITIVE)
}

/// Sparse LU with two steps of iterative refinement.
pub struct DirectSolver;

impl LinearSolver for DirectSolver {
    fn name(&self) -> &'static str {
        "direct"
    }

    fn solve(&self, matrix: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
        let n = matrix.nrows;
        let singular = |residual| SolveError::Singular {
            diagnosis: "LU factorization failed".into(),
            residual,
        };
        let trip: Vec<Triplet<usize, usize, f64>> = matrix.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip).map_err(|_| singular(f64::NAN))?;
        let lu = a.sp_lu().map_err(|_| singular(f64::NAN))?;
        let b = Col::<f64>::from_fn(n, |i| rhs[i]);
        let mut x: Vec<f64> = lu.solve(&b).iter().copied().collect();
        for _ in 0..2 {
            if x.iter().any(|v| !v.is_finite()) {
                break;
            }
            let ax = matrix.matvec(&x);
            let r = Col::<f64>::from_fn(n, |i| rhs[i] - ax[i]);
            let dx = lu.solve(&r);
            for (xi, d) in x.iter_mut().zip(dx.iter()) {
                *xi += d;
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(singular(f64::INFINITY));
        }
        Ok(x)
    }
}

/// Unpreconditioned MINRES (Paige-Saunders).
pub struct MinresSolver {
    pub rtol: f64,
    pub max_iter: usize,
}

impl Default for MinresSolver {
    fn default() -> Self {
        MinresSolver {
            rtol: 1e-12,
            max_iter: 200_000,
        }
    }
}

impl LinearSolver for MinresSolver {
    fn name(&self) -> &'static str {
        "minres"
    }

    fn solve(&self, matrix: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
        let n = rhs.len();
        let mut x = vec![0.0; n];
        let bnorm = norm(rhs);
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut v_old = vec![0.0; n];
        let mut v: Vec<f64> = rhs.iter().map(|b| b / bnorm).collect();
        let mut w_old = vec![0.0; n];
        let mut w_older = vec![0.0; n];
        // Lanczos coupling to the previous vector, and the last two Givens rotations
        let mut beta = 0.0;
        let (mut c_prev, mut c) = (1.0, 1.0);
        let (mut s_prev, mut s) = (0.0, 0.0);
        let mut eta = bnorm;
        for _ in 0..self.max_iter {
            let mut p = matrix.matvec(&v);
            let alpha: f64 = p.iter().zip(&v).map(|(a, b)| a * b).sum();
            for i in 0..n {
                p[i] -= alpha * v[i] + beta * v_old[i];
            }
            let beta_next = norm(&p);
            let delta = c * alpha - c_prev * s * beta;
            let rho1 = delta.hypot(beta_next);
            let rho2 = s * alpha + c_prev * c * beta;
            let rho3 = s_prev * beta;
            if rho1 == 0.0 {
                return Err(SolveError::Singular {
                    diagnosis: "MINRES breakdown".into(),
                    residual: f64::NAN,
                });
            }
            let (c_new, s_new) = (delta / rho1, beta_next / rho1);
            let w: Vec<f64> = (0..n)
                .map(|i| (v[i] - rho2 * w_old[i] - rho3 * w_older[i]) / rho1)
                .collect();
            for i in 0..n {
                x[i] += c_new * eta * w[i];
            }
            eta *= -s_new;
            if eta.abs() <= self.rtol * bnorm || beta_next == 0.0 {
                break;
            }
            w_older = std::mem::replace(&mut w_old, w);
            let v_next: Vec<f64> = p.iter().map(|a| a / beta_next).collect();
            v_old = std::mem::replace(&mut v, v_next);
            beta = beta_next;
            (c_prev, c) = (c, c_new);
            (s_prev, s) = (s, s_new);
        }
        let residual = relative_residual(matrix, &x, rhs);
        if residual <= RESIDUAL_RTOL {
            return Ok(x);
        }
        Err(SolveError::NotConverged {
            solver: "minres",
            residual,
            iterations: self.max_iter,
        })
    }
}

/// Name-keyed collection of solvers.
pub struct SolverRegistry {
    entries: Vec<Box<dyn LinearSolver>>,
}

impl SolverRegistry {
    pub fn builtin() -> Self {
        SolverRegistry {
            entries: vec![Box::new(DirectSolver), Box::new(MinresSolver::default())],
        }
    }

    pub fn register(&mut self, solver: Box<dyn LinearSolver>) {
        self.entries.retain(|s| s.name() != solver.name());
        self.entries.push(solver);
    }

    pub fn get(&self, name: &str) -> Result<&dyn LinearSolver, SolveError> {
        self.entries
            .iter()
            .find(|s| s.name() == name)
            .map(|s| s.as_ref())
            .ok_or_else(|| SolveError::UnknownSolver {
                name: name.into(),
                known: self.names().into_iter().map(String::from).collect(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|s| s.name()).collect()
    }
}

/// Discrete solution: global primal vector split into its components.
#[derive(Debug, Clone)]
pub struct WgSolution {
    /// full primal vector (Dirichlet values included)
    pub primal: Vec<f64>,
    pub lambda: Vec<f64>,
    pub residual: f64,
}

/// Names the block responsible for a singular saddle system: a rank-deficient
/// constraint if `B_f B_f^T` is singular, otherwise a stabilizer kernel that
/// meets the kernel of `B_f`.
pub fn diagnose(kkt: &KktSystem) -> String {
    let b = kkt.constraint_block();
    let bbt = {
        let mut trip = Vec::new();
        let bt = transpose(&b);
        for r in 0..b.nrows {
            for (k, v) in b.row(r) {
                for (c, w) in bt.row(k) {
                    trip.push((r, c, v * w));
                }
            }
        }
        CsrMatrix::from_triplets(b.nrows, b.nrows, &trip)
    };
    let ones = vec![1.0; bbt.nrows];
    match DirectSolver.solve(&bbt, &ones) {
        Ok(x) if relative_residual(&bbt, &x, &ones) < 1e-8 => {
            "stabilizer kernel intersects the constraint kernel".into()
        }
        _ => "constraint block B is rank deficient".into(),
    }
}

fn transpose(m: &CsrMatrix) -> CsrMatrix {
    let t: Vec<_> = m.triplets().map(|(r, c, v)| (c, r, v)).collect();
    CsrMatrix::from_triplets(m.ncols, m.nrows, &t)
}

/// Solves the reduced system and checks the residual.
pub fn solve_saddle(system: &SaddleSystem, solver: &dyn LinearSolver) -> Result<WgSolution, SolveError> {
    let kkt = system.reduce();
    let x = match solver.solve(&kkt.matrix, &kkt.rhs) {
        Ok(x) => x,
        Err(SolveError::Singular { residual, .. }) => {
            return Err(SolveError::Singular {
                diagnosis: diagnose(&kkt),
                residual,
            })
        }
        Err(e) => return Err(e),
    };
    let residual = relative_residual(&kkt.matrix, &x, &kkt.rhs);
    if residual.is_nan() || residual > RESIDUAL_RTOL {
        return Err(SolveError::Singular {
            diagnosis: diagnose(&kkt),
            residual,
        });
    }
    let primal = system.expand(&kkt, &x[..kkt.n_free]);
    Ok(WgSolution {
        primal,
        lambda: x[kkt.n_free..].to_vec(),
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::build_saddle;
    use crate::mesh::{DomainKind, Mesh};
    use crate::problems::{ProblemRegistry, QuadraticProblem};
    use crate::wgspace::{MultiplierSpace, SpaceConfig};

    fn small_indefinite() -> CsrMatrix {
        // [[2, 1, 1], [1, 3, 0], [1, 0, 0]]
        CsrMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 2.0),
                (0, 1, 1.0),
                (1, 0, 1.0),
                (1, 1, 3.0),
                (0, 2, 1.0),
                (2, 0, 1.0),
            ],
        )
    }

    #[test]
    fn both_solvers_on_small_indefinite() {
        let m = small_indefinite();
        let b = [1.0, 2.0, 3.0];
        let reg = SolverRegistry::builtin();
        for name in reg.names() {
            let x = reg.get(name).unwrap().solve(&m, &b).unwrap();
            assert!(relative_residual(&m, &x, &b) < 1e-12, "{name}");
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(
            DirectSolver.solve(&m, &[1.0, 0.0]).is_err() || {
                let x = DirectSolver.solve(&m, &[1.0, 0.0]).unwrap();
                relative_residual(&m, &x, &[1.0, 0.0]) > 1e-3
            }
        );
    }

    #[test]
    fn unknown_solver_lists_available() {
        let e = SolverRegistry::builtin().get("cg").err().unwrap().to_string();
        assert!(e.contains("direct") && e.contains("minres"));
    }

    #[test]
    fn quadratic_is_reproduced() {
        let mesh = Mesh::initial(DomainKind::UnitSquare).refine().refine();
        for c0 in [true, false] {
            for m in [MultiplierSpace::Pkm1, MultiplierSpace::Pkm2] {
                let cfg = SpaceConfig::new(2, m, c0).unwrap();
                let sys = build_saddle(&mesh, &cfg, &QuadraticProblem).unwrap();
                for solver in ["direct", "minres"] {
                    let reg = SolverRegistry::builtin();
                    let sol = solve_saddle(&sys, reg.get(solver).unwrap()).unwrap();
                    assert!(sol.lambda.iter().all(|l| l.abs() < 1e-9), "{solver} c0={c0}");
                    let su = sys.stabilizer.matvec(&sol.primal);
                    let e: f64 = su.iter().zip(&sol.primal).map(|(a, b)| a * b).sum();
                    assert!(e.abs() < 1e-10, "{e}");
                }
            }
        }
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let reg = ProblemRegistry::builtin();
        // p4 has g = 0, but f != 0; build with zero load instead
        let mesh = Mesh::initial(DomainKind::RefSquare).refine();
        let mut sys = build_saddle(&mesh, &SpaceConfig::default(), reg.get("p4").unwrap()).unwrap();
        sys.load.iter_mut().for_each(|f| *f = 0.0);
        let sol = solve_saddle(&sys, &DirectSolver).unwrap();
        assert!(sol.primal.iter().chain(&sol.lambda).all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn energy_identity() {
        // s(u, u) + b(u, lambda) = 0 and b(u, lambda) = (f, lambda) for g = 0
        let reg = ProblemRegistry::builtin();
        let mesh = Mesh::initial(DomainKind::RefSquare).refine().refine();
        let sys = build_saddle(&mesh, &SpaceConfig::default(), reg.get("p4").unwrap()).unwrap();
        let sol = solve_saddle(&sys, &DirectSolver).unwrap();
        let su: f64 = sys
            .stabilizer
            .matvec(&sol.primal)
            .iter()
            .zip(&sol.primal)
            .map(|(a, b)| a * b)
            .sum();
        let fl: f64 = sys.load.iter().zip(&sol.lambda).map(|(a, b)| a * b).sum();
        assert!((su + fl).abs() < 1e-9 * (1.0 + su.abs()), "{su} {fl}");
    }
}
