//! Shared fixtures for the benchmarks: small, fully certified problems that
//! exercise the solver and test-function kernels.

use starhjb::hamiltonian::{HamiltonianSet, KirchhoffCondition, RayFamily, SourceTerm};
use starhjb::network::StarNetwork;
use starhjb::solver::{Grid, Problem, ProblemOrder};

/// First-order eikonal problem with the closed-form exponential solution.
pub fn eikonal_problem(nodes: usize) -> (Problem, Grid) {
    let network = StarNetwork::new(2, 1.0).unwrap();
    let hamiltonians = HamiltonianSet::uniform_builtin(
        RayFamily::Eikonal { c: 1.0, f: SourceTerm::constant(1.0) },
        2,
        1.0,
        1.0,
    )
    .unwrap();
    let problem = Problem::new(
        network,
        hamiltonians,
        KirchhoffCondition::flux_sum(2).unwrap(),
        vec![1.0 - 0.1 * (-1.0_f64).exp(), 1.0 - 0.1 * 1.0_f64.exp()],
        ProblemOrder::First,
    )
    .unwrap();
    let grid = Grid::new(problem.network(), nodes).unwrap();
    (problem, grid)
}

/// Second-order symmetric problem with the cosh solution.
pub fn cosh_problem(nodes: usize) -> (Problem, Grid) {
    let network = StarNetwork::new(2, 1.0).unwrap();
    let hamiltonians = HamiltonianSet::uniform_builtin(
        RayFamily::Viscous { c: 0.0, nu: 1.0, f: SourceTerm::zero() },
        2,
        1.0,
        1.0,
    )
    .unwrap();
    let problem = Problem::new(
        network,
        hamiltonians,
        KirchhoffCondition::flux_sum(2).unwrap(),
        vec![1.0_f64.cosh(), 1.0_f64.cosh()],
        ProblemOrder::Second,
    )
    .unwrap();
    let grid = Grid::new(problem.network(), nodes).unwrap();
    (problem, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_solve() {
        let (problem, grid) = eikonal_problem(20);
        starhjb::solver::solve(&problem, &grid, &Default::default()).unwrap();
        let (problem, grid) = cosh_problem(20);
        starhjb::solver::solve(&problem, &grid, &Default::default()).unwrap();
    }
}
