//! Numerical solvers for backward stochastic differential equations whose
//! Y-component must satisfy a running constraint in expectation (mean
//! reflection) or a static risk-measure bound. The solvers return the
//! deterministic flat solution (Y, Z, K): the compensator K is a
//! deterministic nondecreasing curve that grows only while the constraint
//! binds.
//!
//! The crate provides three routes to the solution (a constructive
//! running-maximum scheme, a Picard fixed point, and a penalization scheme),
//! closed-form reference cases for testing, and diagnostic probes for
//! flatness, feasibility, a priori energy bounds, minimality, and the
//! non-uniqueness of random compensators.

pub mod constraints;
pub mod curve;
pub mod error;
pub mod reference;
pub mod regression;
pub mod solver;
pub mod stochastic;

pub use constraints::{Constraint, LossKind, LossSpec, RiskSpec, TerminalCheck, UtilityKind};
pub use curve::DeterministicCurve;
pub use error::{Error, Result};
pub use reference::{
    counterexample_solution, linear_closed_form, CounterexampleSolution, CounterexampleSpec,
    DiscountTransform,
};
pub use regression::BasisSpec;
pub use solver::{
    apriori_check, minimality_probe, random_compensator_variant, solve_constant_driver,
    solve_general, solve_penalized, AprioriReport, Compensator, Diagnostics, DriverFamily,
    DriverFn, DriverSpec, MinimalityOutcome, RandomCompensatorSolution, SolutionTriple,
    SolveOptions, VectorEnsemble, ZDriverFn,
};
pub use stochastic::{PathEnsemble, ScalarEnsemble, TimeGrid};
