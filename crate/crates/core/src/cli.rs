//! Command-line front end for convergence studies.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{discrete_norms, run_study_with, ConvergenceTable, Metric, StudyError};
use crate::assembly::{build_saddle, data_rule_degree};
use crate::mesh::hierarchy;
use crate::problems::{Problem, ProblemRegistry};
use crate::solver::SolverRegistry;
use crate::wgspace::{build_dof_map, MultiplierSpace, SpaceConfig};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_OTHER: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "pdwg", about = "Primal-dual weak Galerkin convergence studies")]
pub struct Args {
    /// Problem name (see --list)
    #[arg(long, default_value = "p1")]
    pub problem: String,
    /// Polynomial degree of the interior unknown
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Multiplier space: p<d> for P_d with d in {k-2, k-1}, or auto (P_{k-1})
    #[arg(long, default_value = "auto")]
    pub multiplier: String,
    /// Use independent boundary values instead of the C0-type element
    #[arg(long)]
    pub no_c0: bool,
    /// Number of meshes, starting from the domain's initial mesh
    #[arg(long, default_value_t = 6)]
    pub levels: usize,
    /// CSV output path; a log-log companion is written next to it.
    /// Without it the CSV goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the finest reduced saddle system as a triplet file
    #[arg(long)]
    pub dump_system: Option<PathBuf>,
    /// Write the finest mesh
    #[arg(long)]
    pub dump_mesh: Option<PathBuf>,
    /// Seed for the randomized norm check
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random vectors per level for the norm-equivalence check (0 = off)
    #[arg(long, default_value_t = 0)]
    pub norm_samples: usize,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Linear solver: direct or minres
    #[arg(long, default_value = "direct")]
    pub solver: String,
    /// List the built-in problems and exit
    #[arg(long)]
    pub list: bool,
}

/// Parses the multiplier flag against the admissible degrees `k-2, k-1`.
pub fn parse_multiplier(s: &str, k: usize) -> Result<MultiplierSpace, String> {
    if s == "auto" {
        return Ok(MultiplierSpace::Pkm1);
    }
    let d: usize = s
        .strip_prefix('p')
        .or_else(|| s.strip_prefix('P'))
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| format!("invalid multiplier '{s}' (expected p<degree> or auto)"))?;
    if d + 1 == k {
        Ok(MultiplierSpace::Pkm1)
    } else if d + 2 == k {
        Ok(MultiplierSpace::Pkm2)
    } else {
        Err(format!(
            "multiplier degree {d} not admissible for k = {k} (need {} or {})",
            k.saturating_sub(2),
            k - 1
        ))
    }
}

fn usage(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    EXIT_USAGE
}

fn summary_line(table: &ConvergenceTable) -> String {
    let i = table.rows.len() - 1;
    let row = &table.rows[i];
    let part = |name: &str, m: Metric| {
        let v = m.of(&row.report).map_or("-".to_string(), |v| format!("{v:.4e}"));
        let r = table.orders(m)[i].map_or("-".to_string(), |r| format!("{r:.2}"));
        format!("{name}={v} (r={r})")
    };
    format!(
        "level {}: {} {} {}",
        row.level,
        part("e0", Metric::E0),
        part("eg", Metric::Eg),
        part("gamma", Metric::Gamma)
    )
}

fn write_file(path: &PathBuf, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()
}

fn norm_check(
    problem: &dyn Problem,
    config: &SpaceConfig,
    levels: usize,
    samples: usize,
    seed: u64,
) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for mesh in hierarchy(problem.domain(), levels) {
        let map = build_dof_map(&mesh, config);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for _ in 0..samples {
            let v: Vec<f64> = (0..map.n_primal)
                .map(|g| {
                    if map.constrained[g] {
                        0.0
                    } else {
                        rng.gen_range(-1.0..1.0)
                    }
                })
                .collect();
            let n = discrete_norms(
                &v,
                &mesh,
                &map,
                problem.coefficient(),
                data_rule_degree(problem, config),
            )
            .map_err(|e| e.to_string())?;
            let r = n.triple / n.norm_2h;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        println!("norm ratio level {}: [{lo:.6}, {hi:.6}]", mesh.level);
    }
    Ok(())
}

fn execute(args: &Args) -> i32 {
    let problems = ProblemRegistry::builtin();
    if args.list {
        for p in problems.iter() {
            println!("{:<10} {}", p.name(), p.description());
        }
        return 0;
    }
    if args.levels < 2 {
        return usage("levels must be ≥ 2");
    }
    let problem = match problems.get(&args.problem) {
        Ok(p) => p,
        Err(e) => return usage(e),
    };
    let multiplier = match parse_multiplier(&args.multiplier, args.k.max(1)) {
        Ok(m) => m,
        Err(e) => return usage(e),
    };
    let config = match SpaceConfig::new(args.k, multiplier, !args.no_c0) {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    let solvers = SolverRegistry::builtin();
    let solver = match solvers.get(&args.solver) {
        Ok(s) => s,
        Err(e) => return usage(e),
    };

    let to_stdout = args.out.is_none();
    let result = run_study_with(problem, &config, args.levels, solver, |t| {
        let line = summary_line(t);
        if to_stdout {
            eprintln!("{line}");
        } else {
            println!("{line}");
        }
    });
    let table = match result {
        Ok(t) => t,
        Err(e @ StudyError::Solve { .. }) => {
            eprintln!("error: {e}");
            return EXIT_SOLVER;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_OTHER;
        }
    };

    let io_result = (|| -> io::Result<()> {
        match &args.out {
            Some(path) => {
                write_file(path, |w| table.write_csv(w))?;
                write_file(&path.with_extension("loglog.csv"), |w| table.write_loglog(w))?;
            }
            None => table.write_csv(io::stdout().lock())?,
        }
        if args.dump_system.is_some() || args.dump_mesh.is_some() {
            let mesh = hierarchy(problem.domain(), args.levels).pop().expect("levels >= 2");
            if let Some(path) = &args.dump_mesh {
                write_file(path, |w| mesh.write_dump(w))?;
            }
            if let Some(path) = &args.dump_system {
                let kkt = build_saddle(&mesh, &config, problem)
                    .map_err(|e| io::Error::other(e.to_string()))?
                    .reduce();
                write_file(path, |w| kkt.write_dump(w))?;
            }
        }
        Ok(())
    })();
    if let Err(e) = io_result {
        eprintln!("error: {e}");
        return EXIT_OTHER;
    }
    if args.norm_samples > 0 {
        if let Err(e) = norm_check(problem, &config, args.levels, args.norm_samples, args.seed) {
            eprintln!("error: {e}");
            return EXIT_OTHER;
        }
    }
    0
}

/// Runs the CLI on `argv` and returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match args.threads {
        Some(0) => usage("threads must be ≥ 1"),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&args)),
            Err(e) => usage(e),
        },
        None => execute(&args),
    }
}
