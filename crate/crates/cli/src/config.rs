//! Scenario configuration: TOML schema, validation, and construction of the
//! runtime objects the solvers consume.

use std::sync::Arc;

use serde::Deserialize;

use mrbsde::{
    BasisSpec, Constraint, DeterministicCurve, DriverSpec, LossKind, LossSpec, PathEnsemble,
    RiskSpec, SolveOptions, TimeGrid, UtilityKind, ZDriverFn,
};

/// Error carrying the offending config field, for exact CLI messages.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid config field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn bad(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        message: message.into(),
    }
}

/// Top-level scenario document. A `[market]` section switches the run into
/// super-hedging mode; the driver is then assembled from market data and the
/// constraint must be in risk mode.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: GridSection,
    pub ensemble: EnsembleSection,
    pub terminal: TerminalSection,
    pub driver: Option<DriverSection>,
    pub constraint: Option<ConstraintSection>,
    pub solver: SolverSection,
    pub output: Option<OutputSection>,
    pub market: Option<MarketSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_paths: usize,
    pub dim: usize,
    pub seed: u64,
}

/// Named payoff recipes of the terminal Brownian state.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalSection {
    /// `affine`: shift + slope * B_T; `positive_part_affine`: its positive
    /// part; `exponential`: scale * exp(rate * B_T).
    pub kind: String,
    pub shift: Option<f64>,
    pub slope: Option<f64>,
    pub scale: Option<f64>,
    pub rate: Option<f64>,
    /// Brownian coordinate the payoff reads; defaults to 0.
    pub coordinate: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverSection {
    /// `constant` | `linear` | `trig`.
    pub kind: String,
    /// Constant driver value (curve allowed).
    pub value: Option<CurveSpec>,
    /// Linear-in-y rate curve a_t.
    pub a: Option<CurveSpec>,
    /// Coefficients of the z-linear part of a `linear` driver.
    pub z_coeffs: Option<Vec<f64>>,
    /// Amplitudes of the `trig` driver `ay * cos(y) + az * sin(z_0)`.
    pub ay: Option<f64>,
    pub az: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    /// `mean` | `risk`.
    pub mode: String,
    /// Loss kind in mean mode: `linear` | `smoothed_indicator` | `utility`.
    pub loss: Option<String>,
    pub u: Option<CurveSpec>,
    pub v: Option<CurveSpec>,
    pub width: Option<f64>,
    pub utility: Option<String>,
    pub gamma: Option<f64>,
    /// ES level and benchmark in risk mode.
    pub alpha: Option<CurveSpec>,
    pub q: Option<CurveSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// `constructive` | `picard` | `penalized`.
    pub method: String,
    pub max_picard: Option<usize>,
    pub tol_fix: Option<f64>,
    pub split: Option<bool>,
    pub n_penalty: Option<usize>,
    /// Regression basis: polynomial degree (default 2).
    pub degree: Option<usize>,
    /// Declared driver Lipschitz constant override.
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
    pub tol_c: Option<f64>,
    pub tol_flat: Option<f64>,
}

/// Market data for the super-hedging application. The volatility matrix is
/// constant in time; rates and drifts may be curves.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub r: CurveSpec,
    /// One drift curve per asset.
    pub mu: Vec<CurveSpec>,
    /// Row-major d x d volatility matrix.
    pub sigma: Vec<Vec<f64>>,
    /// Uniform ellipticity margin: sigma sigma^T - epsilon I must stay psd.
    pub epsilon: f64,
}

/// Grid curve given as a constant, explicit per-instant values, a linear
/// ramp, or piecewise-linear nodes.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CurveSpec {
    Constant(f64),
    Values(Vec<f64>),
    Ramp { from: f64, to: f64 },
    Nodes { times: Vec<f64>, values: Vec<f64> },
}

impl CurveSpec {
    pub fn realize(&self, grid: &TimeGrid, field: &str) -> Result<DeterministicCurve, ConfigError> {
        match self {
            CurveSpec::Constant(v) => Ok(DeterministicCurve::constant(grid, *v)),
            CurveSpec::Values(values) => {
                if values.len() != grid.len() {
                    return Err(bad(
                        field,
                        format!("has {} values, grid needs {}", values.len(), grid.len()),
                    ));
                }
                DeterministicCurve::new(values.clone()).map_err(|e| bad(field, e.to_string()))
            }
            CurveSpec::Ramp { from, to } => Ok(DeterministicCurve::ramp(grid, *from, *to)),
            CurveSpec::Nodes { times, values } => {
                if times.len() != values.len() {
                    return Err(bad(field, "node times and values differ in length"));
                }
                let nodes: Vec<(f64, f64)> =
                    times.iter().copied().zip(values.iter().copied()).collect();
                DeterministicCurve::from_nodes(grid, &nodes).map_err(|e| bad(field, e.to_string()))
            }
        }
    }
}

/// A validated scenario with all runtime objects built.
#[derive(Debug)]
pub struct Scenario {
    pub grid: TimeGrid,
    pub ensemble: PathEnsemble,
    pub xi: Vec<f64>,
    pub constraint: Constraint,
    pub driver: DriverSpec,
    pub method: Method,
    pub basis: BasisSpec,
    pub opts: SolveOptions,
    pub n_penalty: usize,
    /// Constant benchmark of the penalized method, when applicable.
    pub penalty_u: f64,
    pub tol_c: f64,
    pub tol_flat_factor: f64,
    pub out_dir: Option<String>,
    pub superhedge: Option<SuperhedgeData>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Constructive,
    Picard,
    Penalized,
}

/// Per-grid-time market price of risk and the rate curve, kept for reporting.
#[derive(Debug)]
pub struct SuperhedgeData {
    pub r: DeterministicCurve,
    pub theta: Vec<Vec<f64>>,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| bad("<document>", e.to_string()))
    }

    /// Copy of the config with a different step count, for grid sweeps.
    pub fn clone_with_grid(&self, steps: usize) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        c.grid.steps = steps;
        Ok(c)
    }

    /// Copy of the config with a different path count, for MC sweeps.
    pub fn clone_with_paths(&self, n_paths: usize) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        c.ensemble.n_paths = n_paths;
        Ok(c)
    }

    /// `E[xi]` when the terminal recipe is affine in a driftless Brownian
    /// coordinate; None otherwise.
    pub fn affine_terminal_mean(&self) -> Option<f64> {
        if self.terminal.kind == "affine" {
            self.terminal.shift
        } else {
            None
        }
    }

    /// Evaluate the terminal recipe at state value `b`.
    pub fn terminal_payoff(&self, b: f64) -> Option<f64> {
        let t = &self.terminal;
        match t.kind.as_str() {
            "affine" => Some(t.shift? + t.slope? * b),
            "positive_part_affine" => Some((t.shift? + t.slope? * b).max(0.0)),
            "exponential" => Some(t.scale? * (t.rate? * b).exp()),
            _ => None,
        }
    }

    /// Validate everything and build the runtime scenario. `seed_override`
    /// replaces the configured ensemble seed when present.
    pub fn build(&self, seed_override: Option<u64>) -> Result<Scenario, ConfigError> {
        if !(self.grid.horizon > 0.0) {
            return Err(bad("grid.horizon", "must be positive"));
        }
        if self.grid.steps == 0 {
            return Err(bad("grid.steps", "must be positive"));
        }
        let grid = TimeGrid::build(self.grid.horizon, self.grid.steps)
            .map_err(|e| bad("grid", e.to_string()))?;
        if self.ensemble.n_paths < 2 {
            return Err(bad("ensemble.n_paths", "needs at least 2 paths"));
        }
        if self.ensemble.dim == 0 {
            return Err(bad("ensemble.dim", "must be positive"));
        }
        let seed = seed_override.unwrap_or(self.ensemble.seed);
        let ensemble =
            PathEnsemble::simulate_brownian(&grid, self.ensemble.n_paths, self.ensemble.dim, seed)
                .map_err(|e| bad("ensemble", e.to_string()))?;

        let xi = self.build_terminal(&grid, &ensemble)?;
        let (constraint, penalty_u) = self.build_constraint(&grid)?;

        let (driver, superhedge) = if let Some(market) = &self.market {
            if self.driver.is_some() {
                return Err(bad("driver", "must be omitted in super-hedging mode"));
            }
            if !matches!(constraint, Constraint::Risk(_)) {
                return Err(bad("constraint.mode", "super-hedging requires risk mode"));
            }
            let (d, sh) = build_market_driver(market, &grid, self.ensemble.dim)?;
            (d, Some(sh))
        } else {
            (self.build_driver(&grid, &ensemble)?, None)
        };

        let method = match self.solver.method.as_str() {
            "constructive" => Method::Constructive,
            "picard" => Method::Picard,
            "penalized" => Method::Penalized,
            other => return Err(bad("solver.method", format!("unknown method `{other}`"))),
        };
        if method == Method::Constructive
            && !matches!(driver.family, mrbsde::DriverFamily::Constant { .. })
        {
            return Err(bad(
                "solver.method",
                "constructive method requires a constant driver",
            ));
        }
        if method == Method::Penalized {
            match &constraint {
                Constraint::Mean(LossSpec {
                    kind: LossKind::Linear { u },
                    ..
                }) if u.max_jump() == 0.0 => {}
                _ => {
                    return Err(bad(
                        "solver.method",
                        "penalized method requires a linear loss with constant benchmark",
                    ))
                }
            }
        }

        let mut opts = SolveOptions::default();
        if let Some(v) = self.solver.max_picard {
            opts.max_picard = v;
        }
        if let Some(v) = self.solver.tol_fix {
            if !(v > 0.0) {
                return Err(bad("solver.tol_fix", "must be positive"));
            }
            opts.tol_fix = v;
        }
        if let Some(v) = self.solver.split {
            opts.split = v;
        }
        let degree = self.solver.degree.unwrap_or(2);
        let basis = BasisSpec::Polynomial { degree };
        let n_penalty = self.solver.n_penalty.unwrap_or(64);
        if method == Method::Penalized && n_penalty == 0 {
            return Err(bad("solver.n_penalty", "must be positive"));
        }

        let output = self.output.as_ref();
        let tol_c = output.and_then(|o| o.tol_c).unwrap_or(1e-3);
        let tol_flat_factor = output.and_then(|o| o.tol_flat).unwrap_or(1e-2);
        if !(tol_c > 0.0) {
            return Err(bad("output.tol_c", "must be positive"));
        }
        if !(tol_flat_factor > 0.0) {
            return Err(bad("output.tol_flat", "must be positive"));
        }

        Ok(Scenario {
            grid,
            ensemble,
            xi,
            constraint,
            driver,
            method,
            basis,
            opts,
            n_penalty,
            penalty_u,
            tol_c,
            tol_flat_factor,
            out_dir: output.and_then(|o| o.dir.clone()),
            superhedge,
        })
    }

    fn build_terminal(
        &self,
        grid: &TimeGrid,
        ensemble: &PathEnsemble,
    ) -> Result<Vec<f64>, ConfigError> {
        let t = &self.terminal;
        let coord = t.coordinate.unwrap_or(0);
        if coord >= ensemble.dim() {
            return Err(bad(
                "terminal.coordinate",
                format!("coordinate {coord} exceeds dim {}", ensemble.dim()),
            ));
        }
        let m = grid.steps();
        let b_t: Vec<f64> = (0..ensemble.n_paths())
            .map(|p| ensemble.value(p, m, coord))
            .collect();
        match t.kind.as_str() {
            "affine" => {
                let shift = t.shift.ok_or_else(|| bad("terminal.shift", "required for affine"))?;
                let slope = t.slope.ok_or_else(|| bad("terminal.slope", "required for affine"))?;
                Ok(b_t.iter().map(|b| shift + slope * b).collect())
            }
            "positive_part_affine" => {
                let shift = t
                    .shift
                    .ok_or_else(|| bad("terminal.shift", "required for positive_part_affine"))?;
                let slope = t
                    .slope
                    .ok_or_else(|| bad("terminal.slope", "required for positive_part_affine"))?;
                Ok(b_t.iter().map(|b| (shift + slope * b).max(0.0)).collect())
            }
            "exponential" => {
                let scale = t
                    .scale
                    .ok_or_else(|| bad("terminal.scale", "required for exponential"))?;
                let rate = t.rate.ok_or_else(|| bad("terminal.rate", "required for exponential"))?;
                Ok(b_t.iter().map(|b| scale * (rate * b).exp()).collect())
            }
            other => Err(bad("terminal.kind", format!("unknown payoff `{other}`"))),
        }
    }

    fn build_constraint(&self, grid: &TimeGrid) -> Result<(Constraint, f64), ConfigError> {
        let c = self
            .constraint
            .as_ref()
            .ok_or_else(|| bad("constraint", "section is required"))?;
        match c.mode.as_str() {
            "mean" => {
                let loss_kind = c.loss.as_deref().unwrap_or("linear");
                let u = c
                    .u
                    .as_ref()
                    .ok_or_else(|| bad("constraint.u", "required in mean mode"))?
                    .realize(grid, "constraint.u")?;
                let penalty_u = u.value(0);
                let loss = match loss_kind {
                    "linear" => LossSpec::linear(u),
                    "smoothed_indicator" => {
                        let v = c
                            .v
                            .as_ref()
                            .ok_or_else(|| bad("constraint.v", "required for smoothed_indicator"))?
                            .realize(grid, "constraint.v")?;
                        let width = c
                            .width
                            .ok_or_else(|| bad("constraint.width", "required for smoothed_indicator"))?;
                        if !(width > 0.0) {
                            return Err(bad("constraint.width", "must be positive"));
                        }
                        LossSpec::new(
                            LossKind::SmoothedIndicator { u, v, width },
                            None,
                            None,
                            2.0,
                        )
                    }
                    "utility" => {
                        let utility = match c.utility.as_deref().unwrap_or("identity") {
                            "identity" => UtilityKind::Identity,
                            "exponential" => {
                                let gamma = c.gamma.ok_or_else(|| {
                                    bad("constraint.gamma", "required for exponential utility")
                                })?;
                                if !(gamma > 0.0) {
                                    return Err(bad("constraint.gamma", "must be positive"));
                                }
                                UtilityKind::Exponential { gamma }
                            }
                            other => {
                                return Err(bad(
                                    "constraint.utility",
                                    format!("unknown utility `{other}`"),
                                ))
                            }
                        };
                        let growth = 1.0 + u.max_abs();
                        LossSpec::new(LossKind::Utility { utility, u }, None, None, growth)
                    }
                    other => return Err(bad("constraint.loss", format!("unknown loss `{other}`"))),
                };
                Ok((Constraint::Mean(loss), penalty_u))
            }
            "risk" => {
                let alpha = c
                    .alpha
                    .as_ref()
                    .ok_or_else(|| bad("constraint.alpha", "required in risk mode"))?
                    .realize(grid, "constraint.alpha")?;
                let q = c
                    .q
                    .as_ref()
                    .ok_or_else(|| bad("constraint.q", "required in risk mode"))?
                    .realize(grid, "constraint.q")?;
                let risk = RiskSpec::new(alpha, q).map_err(|e| bad("constraint.alpha", e.to_string()))?;
                Ok((Constraint::Risk(risk), 0.0))
            }
            other => Err(bad("constraint.mode", format!("unknown mode `{other}`"))),
        }
    }

    fn build_driver(
        &self,
        grid: &TimeGrid,
        ensemble: &PathEnsemble,
    ) -> Result<DriverSpec, ConfigError> {
        let d = match &self.driver {
            Some(d) => d,
            None => {
                let zeros = mrbsde::ScalarEnsemble::zeros(grid, ensemble.n_paths());
                return Ok(DriverSpec::constant(zeros));
            }
        };
        match d.kind.as_str() {
            "constant" => {
                let spec = d
                    .value
                    .as_ref()
                    .ok_or_else(|| bad("driver.value", "required for constant driver"))?;
                let curve = spec.realize(grid, "driver.value")?;
                let n = ensemble.n_paths();
                let mut values = Vec::with_capacity(grid.len() * n);
                for i in 0..grid.len() {
                    values.extend(std::iter::repeat(curve.value(i)).take(n));
                }
                let c = mrbsde::ScalarEnsemble::from_values(grid, n, values)
                    .map_err(|e| bad("driver.value", e.to_string()))?;
                Ok(DriverSpec::constant(c))
            }
            "linear" => {
                let a = d
                    .a
                    .as_ref()
                    .ok_or_else(|| bad("driver.a", "required for linear driver"))?
                    .realize(grid, "driver.a")?;
                let coeffs = d.z_coeffs.clone().unwrap_or_default();
                if coeffs.len() > ensemble.dim() {
                    return Err(bad(
                        "driver.z_coeffs",
                        format!("{} coefficients exceed dim {}", coeffs.len(), ensemble.dim()),
                    ));
                }
                let z_norm: f64 = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
                let lambda = self.solver.lambda.unwrap_or(a.max_abs() + z_norm);
                let h: ZDriverFn = Arc::new(move |_t, z| {
                    coeffs.iter().zip(z).map(|(c, v)| c * v).sum::<f64>()
                });
                Ok(DriverSpec::linear_in_y(a, h, lambda))
            }
            "trig" => {
                let ay = d.ay.ok_or_else(|| bad("driver.ay", "required for trig driver"))?;
                let az = d.az.ok_or_else(|| bad("driver.az", "required for trig driver"))?;
                let lambda = self.solver.lambda.unwrap_or(ay.abs() + az.abs());
                let f: mrbsde::DriverFn =
                    Arc::new(move |_t, y: f64, z: &[f64]| ay * y.cos() + az * z[0].sin());
                Ok(DriverSpec::general(f, lambda))
            }
            other => Err(bad("driver.kind", format!("unknown driver `{other}`"))),
        }
    }
}

/// Assemble the super-hedging driver `f(t, y, z) = -r_t y - theta_t . z`
/// with `theta_t = sigma^{-1} (mu_t - r_t 1)`, after checking the uniform
/// ellipticity margin of `sigma sigma^T`.
fn build_market_driver(
    market: &MarketSection,
    grid: &TimeGrid,
    dim: usize,
) -> Result<(DriverSpec, SuperhedgeData), ConfigError> {
    use nalgebra::DMatrix;
    if market.sigma.len() != dim || market.sigma.iter().any(|row| row.len() != dim) {
        return Err(bad(
            "market.sigma",
            format!("must be a {dim} x {dim} matrix matching ensemble.dim"),
        ));
    }
    if market.mu.len() != dim {
        return Err(bad(
            "market.mu",
            format!("needs one drift curve per asset ({dim})"),
        ));
    }
    if !(market.epsilon > 0.0) {
        return Err(bad("market.epsilon", "must be positive"));
    }
    let sigma = DMatrix::from_fn(dim, dim, |i, j| market.sigma[i][j]);
    let gram = &sigma * sigma.transpose();
    let eigen = gram.clone().symmetric_eigen();
    let min_eig = eigen.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if min_eig < market.epsilon - 1e-12 {
        return Err(bad(
            "market.sigma",
            format!(
                "ellipticity margin violated: min eigenvalue of sigma sigma^T is {min_eig}, epsilon is {}",
                market.epsilon
            ),
        ));
    }
    let inv = sigma
        .try_inverse()
        .ok_or_else(|| bad("market.sigma", "volatility matrix is singular"))?;

    let r = market.r.realize(grid, "market.r")?;
    let mut mu = Vec::with_capacity(dim);
    for (k, spec) in market.mu.iter().enumerate() {
        mu.push(spec.realize(grid, &format!("market.mu[{k}]"))?);
    }
    let mut theta = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let excess =
            nalgebra::DVector::from_fn(dim, |k, _| mu[k].value(i) - r.value(i));
        let th = &inv * excess;
        theta.push(th.iter().copied().collect::<Vec<f64>>());
    }

    let a = r.map(|_, v| -v);
    let times: Vec<f64> = grid.times().to_vec();
    let thetas = theta.clone();
    let h: ZDriverFn = Arc::new(move |t, z| {
        let i = nearest_index(&times, t);
        -thetas[i].iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
    });
    let theta_sup = theta
        .iter()
        .map(|th| th.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);
    let lambda = r.max_abs() + theta_sup;
    Ok((
        DriverSpec::linear_in_y(a, h, lambda),
        SuperhedgeData { r, theta },
    ))
}

fn nearest_index(times: &[f64], t: f64) -> usize {
    let j = times.partition_point(|&s| s < t);
    if j == 0 {
        0
    } else if j == times.len() {
        times.len() - 1
    } else if (times[j] - t).abs() < (t - times[j - 1]).abs() {
        j
    } else {
        j - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_doc() -> &'static str {
        r#"
            [grid]
            horizon = 1.0
            steps = 20

            [ensemble]
            n_paths = 64
            dim = 1
            seed = 5

            [terminal]
            kind = "affine"
            shift = 0.5
            slope = 1.0

            [driver]
            kind = "constant"
            value = -1.0

            [constraint]
            mode = "mean"
            loss = "linear"
            u = 0.0

            [solver]
            method = "constructive"
        "#
    }

    #[test]
    fn base_document_builds() {
        let cfg = ScenarioConfig::parse(base_doc()).unwrap();
        let sc = cfg.build(None).unwrap();
        assert_eq!(sc.grid.steps(), 20);
        assert_eq!(sc.xi.len(), 64);
        assert_eq!(sc.method, Method::Constructive);
    }

    #[test]
    fn seed_override_changes_paths() {
        let cfg = ScenarioConfig::parse(base_doc()).unwrap();
        let a = cfg.build(None).unwrap();
        let b = cfg.build(Some(6)).unwrap();
        assert_ne!(a.xi, b.xi);
        let c = cfg.build(Some(5)).unwrap();
        assert_eq!(a.xi, c.xi);
    }

    #[test]
    fn unknown_method_names_the_field() {
        let doc = base_doc().replace("constructive", "magic");
        let cfg = ScenarioConfig::parse(&doc).unwrap();
        let err = cfg.build(None).unwrap_err();
        assert_eq!(err.field, "solver.method");
    }

    #[test]
    fn curve_specs_realize() {
        let grid = TimeGrid::build(1.0, 4).unwrap();
        let c: CurveSpec = toml::from_str::<toml::Value>("x = 2.5")
            .map(|v| v["x"].clone().try_into().unwrap())
            .unwrap();
        assert_eq!(c.realize(&grid, "x").unwrap().value(3), 2.5);
        let ramp = CurveSpec::Ramp { from: 0.0, to: 1.0 };
        assert_eq!(ramp.realize(&grid, "x").unwrap().value(2), 0.5);
        let vals = CurveSpec::Values(vec![1.0; 3]);
        assert!(vals.realize(&grid, "x").is_err());
    }

    #[test]
    fn penalized_requires_constant_linear_benchmark() {
        let doc = base_doc()
            .replace("method = \"constructive\"", "method = \"penalized\"")
            .replace("u = 0.0", "u = { from = 0.0, to = 1.0 }");
        let cfg = ScenarioConfig::parse(&doc).unwrap();
        let err = cfg.build(None).unwrap_err();
        assert_eq!(err.field, "solver.method");
    }

    #[test]
    fn market_mode_checks_ellipticity() {
        let doc = r#"
            [grid]
            horizon = 0.5
            steps = 10

            [ensemble]
            n_paths = 32
            dim = 1
            seed = 1

            [terminal]
            kind = "positive_part_affine"
            shift = 0.0
            slope = 1.0

            [constraint]
            mode = "risk"
            alpha = 0.5
            q = 100.0

            [solver]
            method = "picard"

            [market]
            r = 0.0
            mu = [0.1]
            sigma = [[0.01]]
            epsilon = 0.05
        "#;
        let cfg = ScenarioConfig::parse(doc).unwrap();
        let err = cfg.build(None).unwrap_err();
        assert_eq!(err.field, "market.sigma");
        let ok_doc = doc.replace("[[0.01]]", "[[1.0]]");
        let cfg = ScenarioConfig::parse(&ok_doc).unwrap();
        let sc = cfg.build(None).unwrap();
        let sh = sc.superhedge.unwrap();
        assert!((sh.theta[0][0] - 0.1).abs() < 1e-12);
    }
}
