//! `starhjb` command line: solve problems defined in config files, check
//! the structural assumptions, audit vertex test functions, and run the
//! verification suites.
//!
//! Exit codes: 0 on success/pass, 1 on a check or experiment failure, 2 on
//! usage or parse errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use starhjb::hamiltonian::{DEFAULT_SAMPLE_K, DEFAULT_SAMPLE_M};
use starhjb::solver::{solve, Grid, Problem, ProblemOrder, SolverConfig};
use starhjb::testfn::{BundleKind, TestFunctionBundle};
use starhjb::verify::{
    run_comparison_experiment, run_convergence_study, run_testfn_suite, run_weak_strong_check,
    ReferenceProblem,
};

use starhjb_cli::config::{parse_config, ProblemConfig};

const USAGE_ERROR: u8 = 2;
const CHECK_FAILED: u8 = 1;

#[derive(Parser)]
#[command(
    name = "starhjb",
    version,
    about = "HJB systems on a star-shaped network with a Kirchhoff vertex condition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem and print the residual report
    Solve {
        /// Problem definition file
        config: PathBuf,
        /// Write the solution as CSV (ray,x,u; vertex row has ray=0)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the solver tolerance from the config
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Run the assumption checks for the configured nonlinear terms
    Check {
        config: PathBuf,
        /// Seed of the sampled checks
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Sample budget per check
        #[arg(long, default_value_t = 10_000)]
        budget: usize,
    },
    /// Build a vertex test function for the solved problem and audit it
    Testfn {
        config: PathBuf,
        /// Boundary-gap offset theta > 0
        #[arg(long)]
        theta: f64,
        /// Neighborhood radius eps > 0 (shared by all rays)
        #[arg(long)]
        eps: f64,
        /// Which bundle to build
        #[arg(long, value_enum, default_value_t = KindArg::Super)]
        kind: KindArg,
        /// Write the audit table as CSV (ray,x,phi,dphi,d2phi,residual)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification suite against the configured problem
    Verify {
        config: PathBuf,
        #[arg(long, value_enum)]
        suite: SuiteArg,
        /// Seed for randomized suites
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Trial count for the testfn suite
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Dirichlet shift for the comparison suite
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Write the report as CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Super,
    Sub,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Comparison,
    Weakstrong,
    Testfn,
    Convergence,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

fn parse_failure(message: impl std::fmt::Display) -> Failure {
    Failure { code: USAGE_ERROR, message: message.to_string() }
}

fn run_failure(message: impl std::fmt::Display) -> Failure {
    Failure { code: CHECK_FAILED, message: message.to_string() }
}

fn load_config(path: &Path) -> Result<ProblemConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| parse_failure(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| parse_failure(format!("{}: {e}", path.display())))
}

fn write_out(path: &Path, content: &str) -> Result<(), Failure> {
    std::fs::write(path, content)
        .map_err(|e| run_failure(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Solve { config, out, tolerance } => {
            let parsed = load_config(&config)?;
            let (problem, grid, mut solver_config) =
                parsed.build().map_err(parse_failure)?;
            if let Some(tol) = tolerance {
                solver_config.tolerance = tol;
            }
            let solution = solve(&problem, &grid, &solver_config).map_err(run_failure)?;
            print!("{}", solution.report_text());
            println!("vertex_value: {:.12e}", solution.vertex_value());
            if let Some(path) = out {
                write_out(&path, &solution.to_csv())?;
                println!("solution written to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { config, seed, budget } => {
            let parsed = load_config(&config)?;
            let (problem, _, _) = parsed.build().map_err(parse_failure)?;
            let h = problem.hamiltonians();
            let reports = [
                h.check_properness(budget, seed),
                h.check_ellipticity(budget, seed),
                h.check_gradient_growth(DEFAULT_SAMPLE_M, DEFAULT_SAMPLE_K, budget, seed),
                h.check_x_lipschitz(DEFAULT_SAMPLE_M, budget, seed),
                problem.kirchhoff().check(budget, seed),
            ];
            let mut all_passed = true;
            for report in &reports {
                println!("{report}");
                all_passed &= report.passed();
            }
            Ok(if all_passed { ExitCode::SUCCESS } else { ExitCode::from(CHECK_FAILED) })
        }
        Command::Testfn { config, theta, eps, kind, out } => {
            let parsed = load_config(&config)?;
            let (problem, grid, solver_config) = parsed.build().map_err(parse_failure)?;
            let bundle = build_bundle(&problem, &grid, &solver_config, theta, eps, kind)?;
            println!("vertex_value: {:.12e}", bundle.vertex());
            for ray in 1..=bundle.ray_count() {
                println!(
                    "ray {ray}: eta = {:.6e}, gap = {:.6e}, dphi(0) = {:.6e}",
                    bundle.eta(ray).unwrap(),
                    bundle.gap(ray).unwrap(),
                    bundle.dphi(ray, 0.0).unwrap()
                );
            }
            if let Some(path) = out {
                write_out(&path, &bundle.audit_csv(101))?;
                println!("audit written to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { config, suite, seed, trials, delta, out } => {
            let parsed = load_config(&config)?;
            let (problem, grid, solver_config) = parsed.build().map_err(parse_failure)?;
            let reports = match suite {
                SuiteArg::Comparison => {
                    vec![run_comparison_experiment(&problem, delta, &grid, &solver_config)
                        .map_err(run_failure)?]
                }
                SuiteArg::Weakstrong => {
                    vec![run_weak_strong_check(&problem, &grid, &solver_config)
                        .map_err(run_failure)?]
                }
                SuiteArg::Testfn => vec![run_testfn_suite(seed, trials)],
                SuiteArg::Convergence => {
                    // Fixed closed-form studies; the configured problem only
                    // provides context for solver settings.
                    let n_list = [50, 100, 200, 400];
                    let cosh = ReferenceProblem::cosh_symmetric().map_err(run_failure)?;
                    let exponential =
                        ReferenceProblem::exponential_vertex().map_err(run_failure)?;
                    vec![
                        run_convergence_study(&cosh, &n_list, 1.8, Some((100, 5e-4)))
                            .map_err(run_failure)?,
                        run_convergence_study(&exponential, &n_list, 0.9, None)
                            .map_err(run_failure)?,
                    ]
                }
            };
            let mut all_passed = true;
            let mut csv = String::new();
            for report in &reports {
                print!("{}", report.to_text());
                csv.push_str(&report.to_csv());
                all_passed &= report.passed;
            }
            if let Some(path) = out {
                write_out(&path, &csv)?;
            }
            Ok(if all_passed { ExitCode::SUCCESS } else { ExitCode::from(CHECK_FAILED) })
        }
    }
}

/// Solves the problem and builds the test function for the discrete
/// solution near the vertex: the data at `eps` come from linear
/// interpolation of the nodal values, `M` strictly bounds the solution, and
/// `C` is the certified growth constant for that box.
fn build_bundle(
    problem: &Problem,
    grid: &Grid,
    solver_config: &SolverConfig,
    theta: f64,
    eps: f64,
    kind: KindArg,
) -> Result<TestFunctionBundle, Failure> {
    if !eps.is_finite() || eps <= 0.0 || eps > problem.network().ray_length() {
        return Err(parse_failure(format!(
            "eps must lie in (0, {}], got {eps}",
            problem.network().ray_length()
        )));
    }
    let solution = solve(problem, grid, solver_config).map_err(run_failure)?;
    let rays = problem.network().ray_count();
    let u0 = solution.vertex_value();
    let mut u_eps = Vec::with_capacity(rays);
    let h = grid.spacing();
    for ray in 1..=rays {
        let values = solution.ray_values(ray).map_err(run_failure)?;
        let t = (eps / h).min((values.len() - 1) as f64);
        let k = (t.floor() as usize).min(values.len() - 2);
        let w = t - k as f64;
        u_eps.push(values[k] * (1.0 - w) + values[k + 1] * w);
    }
    let sup = solution
        .values()
        .iter()
        .flatten()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let bound_m = sup + theta + 1.0;
    let big_c = problem
        .hamiltonians()
        .growth_constant(bound_m, 1.0)
        .ok_or_else(|| run_failure("no growth constant available for the bundle"))?;
    let lambda = problem.hamiltonians().lambda();
    let eps_vec = vec![eps; rays];
    let result = match (kind, problem.order()) {
        (KindArg::Super, ProblemOrder::First) => starhjb::testfn::build_super_test_function(
            u0, &u_eps, &eps_vec, theta, lambda, big_c, bound_m,
        ),
        (KindArg::Sub, ProblemOrder::First) => starhjb::testfn::build_sub_test_function(
            u0, &u_eps, &eps_vec, theta, lambda, big_c, bound_m,
        ),
        (KindArg::Super, ProblemOrder::Second) => TestFunctionBundle::second_order(
            BundleKind::Super,
            u0,
            &u_eps,
            &eps_vec,
            theta,
            lambda,
            big_c,
            bound_m,
        ),
        (KindArg::Sub, ProblemOrder::Second) => TestFunctionBundle::second_order(
            BundleKind::Sub,
            u0,
            &u_eps,
            &eps_vec,
            theta,
            lambda,
            big_c,
            bound_m,
        ),
    };
    result.map_err(run_failure)
}
