//! Diagnostic probes: the a priori bound alarm, the random-compensator
//! non-uniqueness demonstrator, and the minimality comparison against a
//! user-supplied deterministic compensator.

use serde::Serialize;

use crate::constraints::Constraint;
use crate::curve::DeterministicCurve;
use crate::error::{Error, Result};
use crate::regression::{condexp, extract_z, BasisSpec, StateSlice};
use crate::stochastic::{PathEnsemble, ScalarEnsemble};

use super::{Compensator, DriverFamily, DriverSpec, SolutionTriple};

/// Both sides of the a priori energy bound, with their ratio.
#[derive(Debug, Clone, Serialize)]
pub struct AprioriReport {
    /// `E[sup_t |Y|^2] + E int |Z|^2 dt + K_T^2`.
    pub lhs: f64,
    /// Calibrated constant times the data energy.
    pub rhs: f64,
    pub ratio: f64,
}

/// Evaluate the a priori energy bound with the calibrated constant
/// `C(lambda, T) = exp((1 + 2 lambda + 2 lambda^2) T) * 12`.
///
/// An alarm, not a proof: ratios above 1 indicate the solution's energy
/// exceeds what the data admits, pointing at a solver or spec problem.
/// `bench` is the benchmark scale (sup of `u_t`, or `q` in risk mode);
/// only its positive part enters.
pub fn apriori_check(
    solution: &SolutionTriple,
    xi: &[f64],
    driver: &DriverSpec,
    bench: f64,
) -> AprioriReport {
    let grid = solution.y.grid();
    let m = grid.steps();
    let n = solution.y.n_paths();
    let d = solution.z.dim();
    let t_end = grid.horizon();
    let lam = driver.lambda;

    let mut sup_sq = 0.0;
    let mut z_energy = 0.0;
    for p in 0..n {
        let mut sup = 0.0f64;
        for i in 0..=m {
            sup = sup.max(solution.y.value(p, i).abs());
        }
        sup_sq += sup * sup;
        for i in 0..m {
            let zp = solution.z.at_path(p, i);
            let norm2: f64 = zp.iter().map(|v| v * v).sum();
            z_energy += norm2 * grid.dt(i);
        }
    }
    let k_t = solution.k.total();
    let lhs = sup_sq / n as f64 + z_energy / n as f64 + k_t * k_t;

    let xi_sq = xi.iter().map(|v| v * v).sum::<f64>() / xi.len() as f64;
    let mut f0_energy = 0.0;
    for p in 0..n {
        for i in 0..m {
            let f0 = driver.eval_at_zero(i, grid.time(i), p, d);
            f0_energy += f0 * f0 * grid.dt(i);
        }
    }
    let bench_sq = bench.max(0.0).powi(2);
    let c = ((1.0 + 2.0 * lam + 2.0 * lam * lam) * t_end).exp() * 12.0;
    let rhs = c * (xi_sq + f0_energy / n as f64 + bench_sq);
    let ratio = if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    AprioriReport { lhs, rhs, ratio }
}

/// A flat solution whose compensator is a random process: one nondecreasing
/// path of K per sample path, all starting at 0.
#[derive(Debug, Clone)]
pub struct RandomCompensatorSolution {
    pub y: ScalarEnsemble,
    /// Pathwise compensator values at every grid time.
    pub k_paths: ScalarEnsemble,
    /// Empirical mean of the random compensator.
    pub k_mean: DeterministicCurve,
    /// Discrete `sum_i slack_i * mean_p dK_i` in the pathwise sense.
    pub flatness_integral: f64,
}

/// Non-uniqueness demonstrator: tilt the base compensator by the exponential
/// martingale `M^alpha_t = exp(alpha B_t - alpha^2 t / 2)` of the first
/// Brownian coordinate, `K^alpha_t = int M^alpha_s dK^0_s` (left-point rule).
///
/// `(Y^alpha, Z, K^alpha)` solves the same dynamics with the same terminal
/// data: `Y^alpha_i = X_i + E_i[K^alpha_T] - K^alpha_i` where X is the
/// unconstrained part of the base solution. `E[K^alpha] = K^0` since
/// `E[M^alpha] = 1`, yet paths of Y^alpha spread around the base Y.
pub fn random_compensator_variant(
    base: &SolutionTriple,
    alpha: f64,
    constraint: &Constraint,
    ensemble: &PathEnsemble,
    basis: &BasisSpec,
) -> Result<RandomCompensatorSolution> {
    if !alpha.is_finite() {
        return Err(Error::InvalidSpec("alpha must be finite".into()));
    }
    let grid = ensemble.grid();
    let m = grid.steps();
    let n = ensemble.n_paths();
    if base.y.grid() != grid || base.y.n_paths() != n {
        return Err(Error::ShapeMismatch(
            "base solution and ensemble disagree on grid or n_paths".into(),
        ));
    }

    // pathwise Stieltjes accumulation of M^alpha against the base K
    let mut k_paths = ScalarEnsemble::zeros(grid, n);
    for i in 0..m {
        let t = grid.time(i);
        let dk = base.k.delta(i);
        for p in 0..n {
            let mart = (alpha * ensemble.value(p, i, 0) - 0.5 * alpha * alpha * t).exp();
            let prev = k_paths.value(p, i);
            k_paths.set_value(p, i + 1, prev + mart * dk);
        }
    }

    // Y^alpha = X + E_i[K^alpha_T] - K^alpha_i, with X = base Y minus its
    // deterministic compensator-to-go
    let terminal_k: Vec<f64> = (0..n).map(|p| k_paths.value(p, m)).collect();
    let mut g = terminal_k.clone();
    let mut y = ScalarEnsemble::zeros(grid, n);
    for p in 0..n {
        let x = base.y.value(p, m) - base.k.to_go(m);
        y.set_value(p, m, x + g[p] - k_paths.value(p, m));
    }
    for i in (0..m).rev() {
        let state = StateSlice::new(ensemble, i)?;
        g = condexp(&g, &state, basis)?.values;
        for p in 0..n {
            let x = base.y.value(p, i) - base.k.to_go(i);
            y.set_value(p, i, x + g[p] - k_paths.value(p, i));
        }
    }

    let mut k_mean_values = Vec::with_capacity(m + 1);
    let mut flatness = 0.0;
    for i in 0..=m {
        let mean_k = (0..n).map(|p| k_paths.value(p, i)).sum::<f64>() / n as f64;
        k_mean_values.push(mean_k);
    }
    for i in 0..m {
        let dk_mean = k_mean_values[i + 1] - k_mean_values[i];
        if dk_mean != 0.0 {
            flatness += constraint.slack(i, y.at(i))? * dk_mean;
        }
    }
    Ok(RandomCompensatorSolution {
        y,
        k_paths,
        k_mean: DeterministicCurve::new(k_mean_values)?,
        flatness_integral: flatness,
    })
}

/// Outcome of comparing the flat solution against a candidate compensator.
#[derive(Debug, Clone, Serialize)]
pub enum MinimalityOutcome {
    /// K' is feasible; `excess = max_i max_p (Y_i - Y'_i)_+`. Minimality of
    /// the flat solution holds when the excess is at tolerance level.
    Minimal { excess: f64 },
    /// The K'-solution violates the constraint; most negative slack reported.
    InfeasibleCompensator { max_violation: f64 },
}

/// Solve the plain BSDE with the compensator forced to `k_prime` and compare
/// its Y against the flat solution.
///
/// Supported for constant and linear-in-y drivers. The probe runs the same
/// frozen-coefficient Picard scheme as the flat solver, so when
/// `k_prime` equals the flat compensator the two discrete solutions agree to
/// fixed-point tolerance.
#[allow(clippy::too_many_arguments)]
pub fn minimality_probe(
    flat: &SolutionTriple,
    k_prime: &Compensator,
    driver: &DriverSpec,
    xi: &[f64],
    constraint: &Constraint,
    ensemble: &PathEnsemble,
    basis: &BasisSpec,
    tol_c: f64,
) -> Result<MinimalityOutcome> {
    if matches!(driver.family, DriverFamily::General { .. }) {
        return Err(Error::Unsupported(
            "minimality comparison requires a constant or linear-in-y driver".into(),
        ));
    }
    let grid = ensemble.grid();
    let m = grid.steps();
    let n = ensemble.n_paths();
    let d = ensemble.dim();
    if k_prime.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "candidate compensator has {} points, grid has {}",
            k_prime.len(),
            grid.len()
        )));
    }
    if xi.len() != n {
        return Err(Error::ShapeMismatch("terminal samples must match n_paths".into()));
    }

    let scale = 1.0 + xi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-6 * scale;

    // warm start from the flat solution
    let mut u: Vec<Vec<f64>> = (0..=m).map(|i| flat.y.at(i).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row = vec![0.0; n * d];
            for p in 0..n {
                row[p * d..(p + 1) * d].copy_from_slice(flat.z.at_path(p, i));
            }
            row
        })
        .collect();

    let max_iter = 50;
    let mut converged = false;
    for _ in 0..max_iter {
        let mut w: Vec<Vec<f64>> = vec![Vec::new(); m + 1];
        w[m] = xi.to_vec();
        let mut z_new: Vec<Vec<f64>> = vec![Vec::new(); m];
        for i in (0..m).rev() {
            let state = StateSlice::new(ensemble, i)?;
            let reg = condexp(&w[i + 1], &state, basis)?;
            let dt = grid.dt(i);
            let t = grid.time(i);
            let dk = k_prime.delta(i);
            w[i] = (0..n)
                .map(|p| {
                    let zp = &v[i][p * d..(p + 1) * d];
                    reg.values[p] + driver.eval(i, t, p, u[i][p], zp) * dt + dk
                })
                .collect();
            z_new[i] = extract_z(&w[i + 1], ensemble, i, basis)?.values;
        }
        let mut res = 0.0f64;
        for i in 0..=m {
            let ms = w[i]
                .iter()
                .zip(&u[i])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n as f64;
            res = res.max(ms.sqrt());
        }
        u = w;
        v = z_new;
        if res < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: max_iter,
            last_residual: f64::NAN,
            residuals: Vec::new(),
        });
    }

    let mut max_violation = 0.0f64;
    for i in 0..=m {
        max_violation = max_violation.min(constraint.slack(i, &u[i])?);
    }
    if max_violation < -tol_c {
        return Ok(MinimalityOutcome::InfeasibleCompensator { max_violation });
    }
    let mut excess = 0.0f64;
    for i in 0..=m {
        for p in 0..n {
            excess = excess.max(flat.y.value(p, i) - u[i][p]);
        }
    }
    Ok(MinimalityOutcome::Minimal { excess: excess.max(0.0) })
}
