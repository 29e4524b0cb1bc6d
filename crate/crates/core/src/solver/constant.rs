//! Constructive solver for drivers free of (y, z).
//!
//! Backward chain `X_i = condexp(X_{i+1}) + C_i dt_i`, per-time pushes
//! `psi_i = push(law of X_i)`, backward running maximum `R_i`, and
//! `Y = X + R`, `K_i = R_0 - R_i`. Z comes from the martingale-increment
//! regression on Y.

use crate::constraints::{default_push_tol, Constraint, TerminalCheck};
use crate::error::{Error, Result};
use crate::regression::{condexp, extract_z, BasisSpec, StateSlice};
use crate::stochastic::{PathEnsemble, ScalarEnsemble};

use super::{flatness_integral, violation_profile, Compensator, Diagnostics, SolutionTriple, VectorEnsemble};

/// Solution of the constant-driver problem on the index window `[lo, hi]`.
pub(crate) struct WindowSolution {
    /// Y per path, window times `lo..=hi` stored at offsets `0..=hi-lo`.
    pub y: Vec<Vec<f64>>,
    /// Z per step `lo..hi`, path-major `[p * dim + k]`.
    pub z: Vec<Vec<f64>>,
    /// Backward running maximum of the pushes (compensator-to-go).
    pub r: Vec<f64>,
    pub pushes: Vec<f64>,
    pub regression_residuals: Vec<f64>,
    pub ridge_weights: Vec<f64>,
}

/// Run the constructive scheme on `[lo, hi]` with the given terminal samples.
pub(crate) fn solve_constant_window(
    c: &ScalarEnsemble,
    terminal: &[f64],
    constraint: &Constraint,
    ensemble: &PathEnsemble,
    basis: &BasisSpec,
    lo: usize,
    hi: usize,
) -> Result<WindowSolution> {
    let n = ensemble.n_paths();
    if terminal.len() != n || c.n_paths() != n {
        return Err(Error::ShapeMismatch(
            "terminal samples, driver values and ensemble must share n_paths".into(),
        ));
    }
    if c.grid() != ensemble.grid() {
        return Err(Error::ShapeMismatch("driver values live on a different grid".into()));
    }
    if hi <= lo || hi >= ensemble.grid().len() {
        return Err(Error::IndexOutOfRange {
            index: hi,
            len: ensemble.grid().len(),
        });
    }
    let width = hi - lo;
    let grid = ensemble.grid();

    // backward conditional-expectation chain for X
    let mut x: Vec<Vec<f64>> = vec![Vec::new(); width + 1];
    x[width] = terminal.to_vec();
    let mut regression_residuals = vec![0.0; width];
    let mut ridge_weights = Vec::new();
    for off in (0..width).rev() {
        let i = lo + off;
        let state = StateSlice::new(ensemble, i)?;
        let reg = condexp(&x[off + 1], &state, basis)?;
        if let Some(w) = reg.ridge {
            ridge_weights.push(w);
        }
        regression_residuals[off] = reg.residual_rms;
        let dt = grid.dt(i);
        x[off] = (0..n).map(|p| reg.values[p] + c.value(p, i) * dt).collect();
    }

    // per-time pushes and backward running maximum
    let mut pushes = vec![0.0; width + 1];
    for off in 0..=width {
        let i = lo + off;
        let tol = default_push_tol(&x[off]);
        pushes[off] = constraint.push(i, &x[off], tol)?;
    }
    let mut r = vec![0.0; width + 1];
    r[width] = pushes[width];
    for off in (0..width).rev() {
        r[off] = pushes[off].max(r[off + 1]);
    }

    // flat Y and the integrand Z
    let y: Vec<Vec<f64>> = x
        .iter()
        .zip(&r)
        .map(|(xi, ri)| xi.iter().map(|v| v + ri).collect())
        .collect();
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(width);
    for off in 0..width {
        let i = lo + off;
        let zs = extract_z(&y[off + 1], ensemble, i, basis)?;
        if let Some(w) = zs.ridge {
            ridge_weights.push(w);
        }
        z.push(zs.values);
    }

    Ok(WindowSolution {
        y,
        z,
        r,
        pushes,
        regression_residuals,
        ridge_weights,
    })
}

/// Deterministic flat solution for a driver free of (y, z).
///
/// The terminal constraint must already hold; no facelift is performed.
pub fn solve_constant_driver(
    c: &ScalarEnsemble,
    xi: &[f64],
    constraint: &Constraint,
    ensemble: &PathEnsemble,
    basis: &BasisSpec,
) -> Result<SolutionTriple> {
    let grid = ensemble.grid();
    let m = grid.steps();
    let tol_terminal = default_push_tol(xi);
    if let TerminalCheck::Violation { gap } = constraint.check_terminal(m, xi, tol_terminal)? {
        return Err(Error::TerminalViolation { gap });
    }
    let w = solve_constant_window(c, xi, constraint, ensemble, basis, 0, m)?;
    assemble_solution(w, constraint, ensemble)
}

pub(crate) fn assemble_solution(
    w: WindowSolution,
    constraint: &Constraint,
    ensemble: &PathEnsemble,
) -> Result<SolutionTriple> {
    let grid = ensemble.grid();
    let n = ensemble.n_paths();
    let m = grid.steps();
    let mut y = ScalarEnsemble::zeros(grid, n);
    for i in 0..=m {
        y.at_mut(i).copy_from_slice(&w.y[i]);
    }
    let mut z = VectorEnsemble::zeros(grid, n, ensemble.dim());
    for i in 0..m {
        z.set_slice(i, &w.z[i]);
    }
    let (k, _) = Compensator::from_pushes(&w.pushes)?;
    let mut diagnostics = Diagnostics::empty();
    diagnostics.regression_residuals = w.regression_residuals;
    diagnostics.ridge_weights = w.ridge_weights;
    diagnostics.flatness_integral = flatness_integral(constraint, &y, &k)?;
    diagnostics.max_violation = violation_profile(constraint, &y)?
        .values()
        .iter()
        .fold(0.0f64, |a, v| a.min(*v));
    Ok(SolutionTriple {
        y,
        z,
        k,
        diagnostics,
    })
}
