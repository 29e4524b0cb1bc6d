//! Solvers for the BSDE with mean (or risk-measure) reflection.
//!
//! Three routes produce the deterministic flat solution on the grid: the
//! constructive running-maximum solver for drivers free of (y, z), a Picard
//! fixed point for Lipschitz drivers, and a penalized scheme for linear
//! losses with constant benchmark. Shared diagnostics make feasibility and
//! flatness inspectable on every output.

mod constant;
mod penalized;
mod picard;
mod probes;

pub use constant::solve_constant_driver;
pub use penalized::solve_penalized;
pub use picard::{solve_general, SolveOptions};
pub use probes::{
    apriori_check, minimality_probe, random_compensator_variant, AprioriReport,
    MinimalityOutcome, RandomCompensatorSolution,
};

use serde::Serialize;
use std::sync::Arc;

use crate::constraints::Constraint;
use crate::curve::DeterministicCurve;
use crate::error::{Error, Result};
use crate::stochastic::{ScalarEnsemble, TimeGrid};

/// Driver evaluated as `f(t, y, z)`.
pub type DriverFn = Arc<dyn Fn(f64, f64, &[f64]) -> f64 + Send + Sync>;
/// y-free part of a structured driver, evaluated as `h(t, z)`.
pub type ZDriverFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Structural family of the driver.
#[derive(Clone)]
pub enum DriverFamily {
    /// Driver free of (y, z): per-path per-time values.
    Constant { c: ScalarEnsemble },
    /// `f(t, y, z) = a_t y + h(t, z)` with deterministic bounded `a`.
    LinearInY { a: DeterministicCurve, h: ZDriverFn },
    /// General Lipschitz driver.
    General { f: DriverFn },
}

impl std::fmt::Debug for DriverFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DriverFamily::Constant { .. } => write!(f, "DriverFamily::Constant"),
            DriverFamily::LinearInY { a, .. } => {
                write!(f, "DriverFamily::LinearInY(sup|a| = {})", a.max_abs())
            }
            DriverFamily::General { .. } => write!(f, "DriverFamily::General"),
        }
    }
}

/// Driver with its declared Lipschitz constant.
#[derive(Debug, Clone)]
pub struct DriverSpec {
    pub family: DriverFamily,
    pub lambda: f64,
}

impl DriverSpec {
    pub fn constant(c: ScalarEnsemble) -> Self {
        Self {
            family: DriverFamily::Constant { c },
            lambda: 0.0,
        }
    }

    pub fn linear_in_y(a: DeterministicCurve, h: ZDriverFn, lambda: f64) -> Self {
        Self {
            family: DriverFamily::LinearInY { a, h },
            lambda,
        }
    }

    pub fn general(f: DriverFn, lambda: f64) -> Self {
        Self {
            family: DriverFamily::General { f },
            lambda,
        }
    }

    /// Evaluate the driver for one path. `Constant` drivers read their stored
    /// value at `(path, i)` and ignore `(y, z)`.
    pub fn eval(&self, i: usize, t: f64, path: usize, y: f64, z: &[f64]) -> f64 {
        match &self.family {
            DriverFamily::Constant { c } => c.value(path, i),
            DriverFamily::LinearInY { a, h } => a.value(i) * y + h(t, z),
            DriverFamily::General { f } => f(t, y, z),
        }
    }

    /// `f(t, 0, 0)` for one path, the inhomogeneous part entering the a
    /// priori estimate.
    pub fn eval_at_zero(&self, i: usize, t: f64, path: usize, dim: usize) -> f64 {
        let zeros = vec![0.0; dim];
        self.eval(i, t, path, 0.0, &zeros)
    }

    /// Probe the declared Lipschitz constant on random (y, z) pairs.
    /// Detects gross misdeclarations; (H_f) remains a user obligation.
    pub fn probe_lipschitz(&self, grid: &TimeGrid, dim: usize, n_probes: usize, seed: u64) -> Result<()> {
        use rand::{Rng, SeedableRng};
        if matches!(self.family, DriverFamily::Constant { .. }) {
            return Ok(());
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n_probes {
            let i = rng.gen_range(0..grid.len());
            let t = grid.time(i);
            let y1: f64 = rng.gen_range(-3.0..3.0);
            let y2: f64 = rng.gen_range(-3.0..3.0);
            let z1: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let z2: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let df = (self.eval(i, t, 0, y1, &z1) - self.eval(i, t, 0, y2, &z2)).abs();
            let dz: f64 = z1
                .iter()
                .zip(&z2)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let bound = self.lambda * ((y1 - y2).abs() + dz) * (1.0 + 1e-6);
            if df > bound + 1e-12 {
                return Err(Error::InvalidSpec(format!(
                    "driver violates declared Lipschitz constant {}: |df| = {df} > {bound}",
                    self.lambda
                )));
            }
        }
        Ok(())
    }
}

/// Deterministic nondecreasing compensator with `K_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Compensator {
    curve: DeterministicCurve,
}

impl Compensator {
    pub fn new(curve: DeterministicCurve) -> Result<Self> {
        if curve.is_empty() || curve.value(0) != 0.0 {
            return Err(Error::InvalidSpec("compensator must start at 0".into()));
        }
        for i in 1..curve.len() {
            if curve.value(i) < curve.value(i - 1) {
                return Err(Error::InvalidSpec(format!(
                    "compensator decreases at index {i}"
                )));
            }
        }
        if !curve.value(curve.len() - 1).is_finite() {
            return Err(Error::InvalidSpec("compensator must stay finite".into()));
        }
        Ok(Self { curve })
    }

    /// Compensator from the backward running maximum of the per-time pushes:
    /// `R_i = max_{j >= i} psi_j`, `K_i = R_0 - R_i`.
    pub fn from_pushes(pushes: &[f64]) -> Result<(Self, Vec<f64>)> {
        let m = pushes.len();
        let mut r = vec![0.0; m];
        r[m - 1] = pushes[m - 1];
        for i in (0..m - 1).rev() {
            r[i] = pushes[i].max(r[i + 1]);
        }
        let curve = DeterministicCurve::new(r.iter().map(|ri| r[0] - ri).collect())?;
        Ok((Self { curve }, r))
    }

    pub fn curve(&self) -> &DeterministicCurve {
        &self.curve
    }

    pub fn value(&self, i: usize) -> f64 {
        self.curve.value(i)
    }

    pub fn len(&self) -> usize {
        self.curve.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curve.is_empty()
    }

    /// Total mass `K_T`.
    pub fn total(&self) -> f64 {
        self.curve.value(self.curve.len() - 1)
    }

    /// Increment over step `i`.
    pub fn delta(&self, i: usize) -> f64 {
        self.curve.value(i + 1) - self.curve.value(i)
    }

    /// Compensator-to-go `K_T - K_i`.
    pub fn to_go(&self, i: usize) -> f64 {
        self.total() - self.curve.value(i)
    }
}

/// Martingale integrand Z sampled at step left endpoints `0..M`.
///
/// Path-major within a step: `value(p, i, k)` at `(i * n_paths + p) * dim + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorEnsemble {
    grid: TimeGrid,
    n_paths: usize,
    dim: usize,
    values: Vec<f64>,
}

impl VectorEnsemble {
    pub fn zeros(grid: &TimeGrid, n_paths: usize, dim: usize) -> Self {
        Self {
            grid: grid.clone(),
            n_paths,
            dim,
            values: vec![0.0; grid.steps() * n_paths * dim],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, path: usize, i: usize, k: usize) -> f64 {
        self.values[(i * self.n_paths + path) * self.dim + k]
    }

    pub fn set_value(&mut self, path: usize, i: usize, k: usize, v: f64) {
        self.values[(i * self.n_paths + path) * self.dim + k] = v;
    }

    /// All components for one path at one step.
    pub fn at_path(&self, path: usize, i: usize) -> &[f64] {
        let base = (i * self.n_paths + path) * self.dim;
        &self.values[base..base + self.dim]
    }

    pub fn set_slice(&mut self, i: usize, values: &[f64]) {
        let base = i * self.n_paths * self.dim;
        self.values[base..base + self.n_paths * self.dim].copy_from_slice(values);
    }
}

/// Record kept alongside every solution for audit.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    /// Discrete `sum_i E[l(t_i, Y_i)] (K_{i+1} - K_i)` (or the risk-mode analogue).
    pub flatness_integral: f64,
    /// Most negative constraint slack over all grid times; 0 means feasible.
    pub max_violation: f64,
    /// Sup-over-time empirical L2 residuals of successive Picard iterates.
    pub picard_residuals: Vec<f64>,
    /// Per-step regression residual (RMS) of the backward chain.
    pub regression_residuals: Vec<f64>,
    /// Both sides of the a priori bound, when evaluated.
    pub apriori: Option<AprioriReport>,
    /// Ridge weights applied on rank-deficient regressions, if any.
    pub ridge_weights: Vec<f64>,
}

impl Diagnostics {
    pub fn empty() -> Self {
        Self {
            flatness_integral: 0.0,
            max_violation: 0.0,
            picard_residuals: Vec::new(),
            regression_residuals: Vec::new(),
            apriori: None,
            ridge_weights: Vec::new(),
        }
    }
}

/// The solver output: Y ensemble, Z integrand, deterministic compensator
/// and diagnostics.
#[derive(Debug, Clone)]
pub struct SolutionTriple {
    pub y: ScalarEnsemble,
    pub z: VectorEnsemble,
    pub k: Compensator,
    pub diagnostics: Diagnostics,
}

impl SolutionTriple {
    /// Mean of Y over paths at every grid time.
    pub fn mean_y_curve(&self) -> DeterministicCurve {
        let n = self.y.grid().len();
        DeterministicCurve::new(
            (0..n)
                .map(|i| self.y.empirical_mean(i).unwrap())
                .collect(),
        )
        .expect("means of finite ensembles are finite")
    }
}

/// Discrete flatness integral `sum_i slack_i * (K_{i+1} - K_i)`, left-point rule.
pub fn flatness_integral(constraint: &Constraint, y: &ScalarEnsemble, k: &Compensator) -> Result<f64> {
    if k.len() != y.grid().len() {
        return Err(Error::ShapeMismatch(format!(
            "compensator has {} points, grid has {}",
            k.len(),
            y.grid().len()
        )));
    }
    let mut acc = 0.0;
    for i in 0..y.grid().steps() {
        let dk = k.delta(i);
        if dk != 0.0 {
            acc += constraint.slack(i, y.at(i))? * dk;
        }
    }
    Ok(acc)
}

/// Curve of `min(0, slack_i)`; identically zero means feasible.
pub fn violation_profile(constraint: &Constraint, y: &ScalarEnsemble) -> Result<DeterministicCurve> {
    let mut values = Vec::with_capacity(y.grid().len());
    for i in 0..y.grid().len() {
        values.push(constraint.slack(i, y.at(i))?.min(0.0));
    }
    DeterministicCurve::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::LossSpec;

    #[test]
    fn compensator_invariants() {
        let k = Compensator::new(DeterministicCurve::new(vec![0.0, 0.5, 0.5, 1.0]).unwrap()).unwrap();
        assert_eq!(k.total(), 1.0);
        assert_eq!(k.to_go(1), 0.5);
        assert!(Compensator::new(DeterministicCurve::new(vec![0.1, 0.5]).unwrap()).is_err());
        assert!(Compensator::new(DeterministicCurve::new(vec![0.0, 0.5, 0.4]).unwrap()).is_err());
    }

    #[test]
    fn running_max_construction() {
        let pushes = vec![0.25, 0.75, 0.125, 0.25, 0.0];
        let (k, r) = Compensator::from_pushes(&pushes).unwrap();
        assert_eq!(r, vec![0.75, 0.75, 0.25, 0.25, 0.0]);
        assert_eq!(k.curve().values(), &[0.0, 0.0, 0.5, 0.5, 0.75]);
        // exact identities on the stored curves
        for i in 0..4 {
            assert!(r[i] >= r[i + 1]);
            assert_eq!(r[i], pushes[i].max(r[i + 1]));
        }
        assert_eq!(r[4], pushes[4]);
    }

    #[test]
    fn flatness_zero_for_flat_compensator() {
        let g = TimeGrid::build(1.0, 2).unwrap();
        let y = ScalarEnsemble::constant(&g, 4, 1.0);
        let k = Compensator::new(DeterministicCurve::constant(&g, 0.0)).unwrap();
        let c = Constraint::Mean(LossSpec::linear(DeterministicCurve::constant(&g, 0.0)));
        assert_eq!(flatness_integral(&c, &y, &k).unwrap(), 0.0);
    }

    #[test]
    fn violation_profile_signs() {
        let g = TimeGrid::build(1.0, 1).unwrap();
        let y = ScalarEnsemble::from_values(&g, 2, vec![1.0, 1.0, -2.0, -2.0]).unwrap();
        let c = Constraint::Mean(LossSpec::linear(DeterministicCurve::constant(&g, 0.0)));
        let v = violation_profile(&c, &y).unwrap();
        assert_eq!(v.value(0), 0.0);
        assert_eq!(v.value(1), -2.0);
    }

    #[test]
    fn driver_lipschitz_probe_flags_misdeclaration() {
        let g = TimeGrid::build(1.0, 4).unwrap();
        let honest = DriverSpec::general(Arc::new(|_t, y, _z: &[f64]| -0.5 * y), 0.5);
        assert!(honest.probe_lipschitz(&g, 1, 200, 1).is_ok());
        let lying = DriverSpec::general(Arc::new(|_t, y, _z: &[f64]| 3.0 * y), 0.5);
        assert!(lying.probe_lipschitz(&g, 1, 200, 1).is_err());
    }
}
