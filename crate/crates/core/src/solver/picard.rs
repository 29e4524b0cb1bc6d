//! Picard fixed point for general Lipschitz drivers, with optional
//! horizon splitting chained backward subinterval by subinterval.

use crate::constraints::{default_push_tol, Constraint, TerminalCheck};
use crate::error::{Error, Result};
use crate::regression::BasisSpec;
use crate::stochastic::{PathEnsemble, ScalarEnsemble};

use super::constant::{solve_constant_window, WindowSolution};
use super::{
    flatness_integral, violation_profile, Compensator, Diagnostics, DriverSpec, SolutionTriple,
    VectorEnsemble,
};
use crate::curve::DeterministicCurve;

/// Options for the Picard loop.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_picard: usize,
    /// Fixed-point tolerance, scaled internally by the solution scale.
    pub tol_fix: f64,
    /// Split the horizon into subintervals sized by the contraction heuristic.
    pub split: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_picard: 50,
            tol_fix: 1e-4,
            split: false,
        }
    }
}

/// Deterministic flat solution for a Lipschitz driver via Picard iteration.
///
/// Each pass freezes the previous iterate `(U, V)`, evaluates the driver
/// pathwise and reuses the constructive constant-driver scheme. With
/// `split` on, the horizon is partitioned so the contraction heuristic
/// `n = ceil(sqrt(8 lambda max(T, T^2))) + 1` holds, and subintervals are
/// solved backward with chained terminal data.
pub fn solve_general(
    driver: &DriverSpec,
    xi: &[f64],
    constraint: &Constraint,
    ensemble: &PathEnsemble,
    basis: &BasisSpec,
    opts: &SolveOptions,
) -> Result<SolutionTriple> {
    let grid = ensemble.grid();
    let m = grid.steps();
    let n = ensemble.n_paths();
    if xi.len() != n {
        return Err(Error::ShapeMismatch("terminal samples must match n_paths".into()));
    }
    let tol_terminal = default_push_tol(xi);
    if let TerminalCheck::Violation { gap } = constraint.check_terminal(m, xi, tol_terminal)? {
        return Err(Error::TerminalViolation { gap });
    }

    let boundaries = if opts.split {
        let t_end = grid.horizon();
        let lam = driver.lambda;
        let n_split = ((8.0 * lam * t_end.max(t_end * t_end)).sqrt().ceil() as usize + 1).clamp(1, m);
        chunk_boundaries(m, n_split)
    } else {
        vec![0, m]
    };

    let scale = 1.0 + xi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = opts.tol_fix * scale;

    // global storage
    let mut y = ScalarEnsemble::zeros(grid, n);
    let mut z = VectorEnsemble::zeros(grid, n, ensemble.dim());
    let mut r_global = vec![0.0; m + 1];
    let mut regression_residuals = vec![0.0; m];
    let mut ridge_weights = Vec::new();
    let mut picard_residuals = Vec::new();

    let mut terminal = xi.to_vec();
    let mut r_offset = 0.0;
    for w in (0..boundaries.len() - 1).rev() {
        let lo = boundaries[w];
        let hi = boundaries[w + 1];
        let (sol, residuals) = picard_window(
            driver, &terminal, constraint, ensemble, basis, lo, hi, opts.max_picard, tol,
        )?;
        picard_residuals.extend(residuals);
        for off in 0..=(hi - lo) {
            let i = lo + off;
            y.at_mut(i).copy_from_slice(&sol.y[off]);
            r_global[i] = sol.r[off] + r_offset;
        }
        for off in 0..(hi - lo) {
            let i = lo + off;
            z.set_slice(i, &sol.z[off]);
            regression_residuals[i] = sol.regression_residuals[off];
        }
        ridge_weights.extend(sol.ridge_weights.iter().copied());
        r_offset = r_global[lo];
        terminal = sol.y[0].clone();
    }

    let k_curve = DeterministicCurve::new(r_global.iter().map(|ri| r_global[0] - ri).collect())?;
    let k = Compensator::new(k_curve)?;
    let mut diagnostics = Diagnostics::empty();
    diagnostics.picard_residuals = picard_residuals;
    diagnostics.regression_residuals = regression_residuals;
    diagnostics.ridge_weights = ridge_weights;
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

fn chunk_boundaries(m: usize, n_split: usize) -> Vec<usize> {
    let n_split = n_split.min(m);
    let mut b: Vec<usize> = (0..=n_split).map(|j| j * m / n_split).collect();
    b.dedup();
    b
}

/// Picard loop on one index window; returns the converged window solution
/// and the residual history.
#[allow(clippy::too_many_arguments)]
fn picard_window(
    driver: &DriverSpec,
    terminal: &[f64],
    constraint: &Constraint,
    ensemble: &PathEnsemble,
    basis: &BasisSpec,
    lo: usize,
    hi: usize,
    max_picard: usize,
    tol: f64,
) -> Result<(WindowSolution, Vec<f64>)> {
    let grid = ensemble.grid();
    let n = ensemble.n_paths();
    let d = ensemble.dim();
    let width = hi - lo;

    let mut u: Vec<Vec<f64>> = vec![vec![0.0; n]; width + 1];
    let mut v: Vec<Vec<f64>> = vec![vec![0.0; n * d]; width];
    let mut residuals = Vec::new();

    let mut c = ScalarEnsemble::zeros(grid, n);
    for iter in 0..max_picard {
        // freeze (U, V), evaluate the driver pathwise
        for off in 0..width {
            let i = lo + off;
            let t = grid.time(i);
            let row = c.at_mut(i);
            for p in 0..n {
                let zp = &v[off][p * d..(p + 1) * d];
                row[p] = driver.eval(i, t, p, u[off][p], zp);
            }
        }
        let sol = solve_constant_window(&c, terminal, constraint, ensemble, basis, lo, hi)?;

        // sup-over-time empirical L2 residual of (dY, dZ)
        let mut res = 0.0f64;
        for off in 0..=width {
            let ms = sol.y[off]
                .iter()
                .zip(&u[off])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n as f64;
            res = res.max(ms.sqrt());
        }
        for off in 0..width {
            let ms = sol.z[off]
                .iter()
                .zip(&v[off])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n as f64;
            res = res.max(ms.sqrt());
        }
        residuals.push(res);
        u = sol.y.clone();
        v = sol.z.clone();
        if res < tol {
            return Ok((sol, residuals));
        }
        let _ = iter;
    }
    Err(Error::NonConvergence {
        iterations: max_picard,
        last_residual: *residuals.last().unwrap(),
        residuals,
    })
}
