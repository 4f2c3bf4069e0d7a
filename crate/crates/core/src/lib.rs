//! Solver and verification toolkit for fully nonlinear, possibly degenerate
//! second-order HJB systems posed on a compact star-shaped network with a
//! nonlinear Kirchhoff boundary condition at the vertex.
//!
//! The crate is organized around the objects of the continuous theory:
//!
//! * [`network`] — the star network, its geodesic metric, and ray-indexed
//!   functions with vertex consistency rules;
//! * [`hamiltonian`] — the nonlinear terms `Q_i` and the Kirchhoff term `F`
//!   with machine-checkable certifications of their structural assumptions;
//! * [`testfn`] — the closed-form vertex test functions (solutions of an
//!   eikonal-type ODE system), their matched continuity constants, and the
//!   exponential barrier pair;
//! * [`solver`] — a monotone finite-difference discretization with the
//!   Kirchhoff condition imposed strongly at the vertex;
//! * [`verify`] — an experiment harness turning the comparison, uniqueness
//!   and weak-equals-strong statements into executable checks.

pub mod error;
pub mod hamiltonian;
pub mod network;
pub mod solver;
pub mod testfn;
pub mod verify;

pub use error::{Error, ResidualSample, Result};
pub use hamiltonian::{
    Assumption, AssumptionReport, CheckStatus, Counterexample, GrowthConstant, HamiltonianSet,
    KirchhoffCondition, RayFamily, SourceTerm, XLipschitzConstant,
};
pub use network::{
    geodesic_distance, vertex_value, NetworkPoint, RayFunction, StarNetwork, VertexRule,
};
pub use solver::{
    numerical_hamiltonian, residual, solve, vertex_update, DiscreteSolution, Grid, InitialGuess,
    Problem, ProblemOrder, SolverConfig,
};
pub use testfn::{
    build_barriers, build_sub_test_function, build_super_test_function, grad_at_vertex,
    match_eta, BarrierPair, BundleKind, TestFunctionBundle,
};
pub use verify::{
    run_comparison_experiment, run_convergence_study, run_testfn_suite, run_weak_strong_check,
    sample_builtin_problem, sample_first_order_instance, ExperimentReport, ReferenceProblem,
};
