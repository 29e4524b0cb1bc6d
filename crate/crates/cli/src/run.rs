//! Scenario execution: solver dispatch, invariant evaluation, output files,
//! and the convergence-study harness.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use mrbsde::{
    apriori_check, solve_constant_driver, solve_general, solve_penalized, Constraint,
    CounterexampleSpec, DriverFamily, Error, LossKind, LossSpec, SolutionTriple, TimeGrid,
};

use crate::config::{Method, Scenario, ScenarioConfig};

/// A finished run with its invariant verdicts.
pub struct RunOutcome {
    pub solution: SolutionTriple,
    pub y0: f64,
    pub feasible: bool,
    pub flat: bool,
    pub tol_c_abs: f64,
    pub tol_flat_abs: f64,
}

#[derive(Serialize)]
struct Summary {
    y0: f64,
    k_total: f64,
    feasible: bool,
    flat: bool,
    tol_c: f64,
    tol_flat: f64,
}

/// Dispatch the configured solver.
pub fn solve_scenario(sc: &Scenario) -> mrbsde::Result<SolutionTriple> {
    let mut sol = match sc.method {
        Method::Constructive => match &sc.driver.family {
            DriverFamily::Constant { c } => {
                solve_constant_driver(c, &sc.xi, &sc.constraint, &sc.ensemble, &sc.basis)?
            }
            _ => unreachable!("validated at config build time"),
        },
        Method::Picard => solve_general(
            &sc.driver,
            &sc.xi,
            &sc.constraint,
            &sc.ensemble,
            &sc.basis,
            &sc.opts,
        )?,
        Method::Penalized => solve_penalized(
            &sc.driver,
            &sc.xi,
            sc.penalty_u,
            sc.n_penalty,
            &sc.ensemble,
            &sc.basis,
            &sc.opts,
        )?,
    };
    sol.diagnostics.apriori = Some(apriori_check(&sol, &sc.xi, &sc.driver, benchmark_scale(&sc.constraint)));
    Ok(sol)
}

fn benchmark_scale(constraint: &Constraint) -> f64 {
    match constraint {
        Constraint::Mean(LossSpec {
            kind: LossKind::Linear { u },
            ..
        }) => u.values().iter().fold(0.0f64, |a, &v| a.max(v)),
        Constraint::Mean(_) => 0.0,
        Constraint::Risk(risk) => risk.q.max_abs(),
    }
}

/// Evaluate the feasibility and flatness invariants. `tol_c_override` and
/// `tol_flat_override` replace the computed absolute tolerances when given.
pub fn evaluate(
    sc: &Scenario,
    solution: SolutionTriple,
    tol_c_override: Option<f64>,
    tol_flat_override: Option<f64>,
) -> RunOutcome {
    let scale = 1.0 + sc.xi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol_c_abs = tol_c_override.unwrap_or(sc.tol_c * scale);
    let k_total = solution.k.total();
    let tol_flat_abs =
        tol_flat_override.unwrap_or(sc.tol_flat_factor * k_total.max(f64::EPSILON) * scale);
    let feasible = solution.diagnostics.max_violation >= -tol_c_abs;
    let flat = solution.diagnostics.flatness_integral.abs() <= tol_flat_abs;
    let y0 = solution.y.empirical_mean(0).unwrap_or(f64::NAN);
    RunOutcome {
        solution,
        y0,
        feasible,
        flat,
        tol_c_abs,
        tol_flat_abs,
    }
}

/// Write meanY.csv, K.csv, diagnostics.json and summary.json into `dir`.
pub fn write_outputs(sc: &Scenario, outcome: &RunOutcome, dir: &Path) -> mrbsde::Result<()> {
    fs::create_dir_all(dir)?;
    let grid = &sc.grid;
    let mean_y = outcome.solution.mean_y_curve();
    let mut f = fs::File::create(dir.join("meanY.csv"))?;
    mean_y.export_csv(grid, &mut f)?;
    let mut f = fs::File::create(dir.join("K.csv"))?;
    outcome.solution.k.curve().export_csv(grid, &mut f)?;
    let diag = serde_json::to_string_pretty(&outcome.solution.diagnostics)
        .map_err(|e| Error::InvalidSpec(format!("diagnostics serialization failed: {e}")))?;
    fs::write(dir.join("diagnostics.json"), diag + "\n")?;
    let summary = Summary {
        y0: outcome.y0,
        k_total: outcome.solution.k.total(),
        feasible: outcome.feasible,
        flat: outcome.flat,
        tol_c: outcome.tol_c_abs,
        tol_flat: outcome.tol_flat_abs,
    };
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::InvalidSpec(format!("summary serialization failed: {e}")))?;
    fs::write(dir.join("summary.json"), text + "\n")?;
    Ok(())
}

/// The convergence-study sweeps. Grid and path sweeps compare against the
/// analytic compensator of the constant-drift scenario, so they require a
/// constant driver with a constant value, an affine terminal recipe, and a
/// linear loss with constant benchmark.
pub fn run_study(
    cfg: &ScenarioConfig,
    sc: &Scenario,
    mode: &str,
    seed: Option<u64>,
    dir: &Path,
) -> mrbsde::Result<()> {
    fs::create_dir_all(dir)?;
    let mut out = fs::File::create(dir.join("rates.csv"))?;
    match mode {
        "penalty" => {
            let oracle = match &sc.driver.family {
                DriverFamily::Constant { c } => {
                    solve_constant_driver(c, &sc.xi, &sc.constraint, &sc.ensemble, &sc.basis)?
                }
                _ => {
                    return Err(Error::Unsupported(
                        "penalty study requires a constant driver".into(),
                    ))
                }
            };
            writeln!(out, "n_penalty,k_error")?;
            for n in [4usize, 16, 64, 256] {
                let sol = solve_penalized(
                    &sc.driver,
                    &sc.xi,
                    sc.penalty_u,
                    n,
                    &sc.ensemble,
                    &sc.basis,
                    &sc.opts,
                )?;
                let err = (0..sc.grid.len())
                    .map(|i| (sol.k.value(i) - oracle.k.value(i)).abs())
                    .fold(0.0f64, f64::max);
                writeln!(out, "{n},{err:.17e}")?;
            }
        }
        "grid" => {
            let spec = analytic_spec(cfg, sc)?;
            writeln!(out, "steps,kT_error")?;
            for m in [50usize, 100, 200, 400] {
                let grid = TimeGrid::build(sc.grid.horizon(), m)?;
                let scenario = cfg
                    .clone_with_grid(m)
                    .and_then(|c| c.build(seed))
                    .map_err(|e| Error::InvalidSpec(e.to_string()))?;
                let sol = match &scenario.driver.family {
                    DriverFamily::Constant { c } => solve_constant_driver(
                        c,
                        &scenario.xi,
                        &scenario.constraint,
                        &scenario.ensemble,
                        &scenario.basis,
                    )?,
                    _ => unreachable!("analytic_spec enforced a constant driver"),
                };
                let exact = spec.gamma * spec.t_star().min(grid.horizon());
                let err = (sol.k.total() - exact).abs();
                writeln!(out, "{m},{err:.17e}")?;
            }
        }
        "paths" => {
            let spec = analytic_spec(cfg, sc)?;
            writeln!(out, "n_paths,kT_error")?;
            let base = sc.ensemble.n_paths();
            for mult in [1usize, 2, 4] {
                let n_paths = base * mult;
                let scenario = cfg
                    .clone_with_paths(n_paths)
                    .and_then(|c| c.build(seed))
                    .map_err(|e| Error::InvalidSpec(e.to_string()))?;
                let sol = match &scenario.driver.family {
                    DriverFamily::Constant { c } => solve_constant_driver(
                        c,
                        &scenario.xi,
                        &scenario.constraint,
                        &scenario.ensemble,
                        &scenario.basis,
                    )?,
                    _ => unreachable!("analytic_spec enforced a constant driver"),
                };
                let exact = spec.gamma * spec.t_star();
                writeln!(out, "{n_paths},{:.17e}", (sol.k.total() - exact).abs())?;
            }
        }
        "picard" => {
            let sol = solve_general(
                &sc.driver,
                &sc.xi,
                &sc.constraint,
                &sc.ensemble,
                &sc.basis,
                &sc.opts,
            )?;
            writeln!(out, "iteration,residual,ratio")?;
            let res = &sol.diagnostics.picard_residuals;
            for (i, r) in res.iter().enumerate() {
                let ratio = if i == 0 { f64::NAN } else { r / res[i - 1] };
                writeln!(out, "{},{r:.17e},{ratio:.17e}", i + 1)?;
            }
        }
        other => {
            return Err(Error::Unsupported(format!(
                "unknown study mode `{other}` (expected penalty | grid | paths | picard)"
            )))
        }
    }
    Ok(())
}

/// Recover the analytic constant-drift scenario data from the config, for
/// sweeps with an analytic compensator oracle.
fn analytic_spec(cfg: &ScenarioConfig, sc: &Scenario) -> mrbsde::Result<CounterexampleSpec> {
    let gamma = match &sc.driver.family {
        DriverFamily::Constant { c } => {
            let v = c.value(0, 0);
            for i in 0..sc.grid.len() {
                for p in 0..c.n_paths() {
                    if c.value(p, i) != v {
                        return Err(Error::Unsupported(
                            "analytic oracle requires a constant driver value".into(),
                        ));
                    }
                }
            }
            -v
        }
        _ => {
            return Err(Error::Unsupported(
                "analytic oracle requires a constant driver".into(),
            ))
        }
    };
    let u = match &sc.constraint {
        Constraint::Mean(LossSpec {
            kind: LossKind::Linear { u },
            ..
        }) if u.max_jump() == 0.0 => u.value(0),
        _ => {
            return Err(Error::Unsupported(
                "analytic oracle requires a linear loss with constant benchmark".into(),
            ))
        }
    };
    let mean_xi = cfg
        .affine_terminal_mean()
        .ok_or_else(|| Error::Unsupported("analytic oracle requires an affine terminal".into()))?;
    CounterexampleSpec::new(gamma, u, sc.grid.horizon(), mean_xi)
}

/// Compute the unconstrained replication price by reusing the scenario's
/// Brownian samples as risk-neutral samples: under the pricing measure the
/// terminal state is shifted by minus the accumulated market price of risk,
/// and the payoff is discounted at the rate curve.
pub fn replication_price(sc: &Scenario, cfg: &ScenarioConfig) -> mrbsde::Result<(f64, f64)> {
    let sh = sc.superhedge.as_ref().ok_or_else(|| {
        Error::Unsupported("replication price requires super-hedging mode".into())
    })?;
    let grid = &sc.grid;
    let m = grid.steps();
    let mut discount = 0.0;
    let mut shift = vec![0.0; sc.ensemble.dim()];
    for i in 0..m {
        discount += sh.r.value(i) * grid.dt(i);
        for k in 0..sc.ensemble.dim() {
            shift[k] += sh.theta[i][k] * grid.dt(i);
        }
    }
    let coord = cfg.terminal.coordinate.unwrap_or(0);
    let n = sc.ensemble.n_paths();
    let mut acc = 0.0;
    let mut sq = 0.0;
    for p in 0..n {
        let b = sc.ensemble.value(p, m, coord) - shift[coord];
        let payoff = cfg
            .terminal_payoff(b)
            .ok_or_else(|| Error::Unsupported("unknown terminal payoff".into()))?;
        let v = (-discount).exp() * payoff;
        acc += v;
        sq += v * v;
    }
    let mean = acc / n as f64;
    let se = ((sq / n as f64 - mean * mean).max(0.0) / n as f64).sqrt();
    Ok((mean, se))
}
