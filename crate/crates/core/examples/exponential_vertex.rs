//! Solves the first-order eikonal problem whose exact solution is
//! `1 - 0.1 e^{-x}` on ray 1 and `1 - 0.1 e^{x}` on ray 2, with vertex
//! value 0.9 and fluxes +-0.1.

use starhjb::hamiltonian::{HamiltonianSet, KirchhoffCondition, RayFamily, SourceTerm};
use starhjb::network::StarNetwork;
use starhjb::solver::{solve, Grid, Problem, ProblemOrder, SolverConfig};

fn main() -> Result<(), starhjb::Error> {
    let network = StarNetwork::new(2, 1.0)?;
    let hamiltonians = HamiltonianSet::uniform_builtin(
        RayFamily::Eikonal { c: 1.0, f: SourceTerm::constant(1.0) },
        2,
        1.0, // lambda
        1.0, // ray length
    )?;
    let kirchhoff = KirchhoffCondition::flux_sum(2)?;
    let dirichlet = vec![1.0 - 0.1 * (-1.0f64).exp(), 1.0 - 0.1 * 1.0f64.exp()];
    let problem = Problem::new(network, hamiltonians, kirchhoff, dirichlet, ProblemOrder::First)?;
    let grid = Grid::new(problem.network(), 100)?;
    let solution = solve(&problem, &grid, &SolverConfig::default())?;
    assert!((solution.vertex_value() - 0.9).abs() < 5e-3);
    print!("{}", solution.report_text());
    println!("vertex_value: {:.6}", solution.vertex_value());
    Ok(())
}
