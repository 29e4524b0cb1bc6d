//! Loss functions, the push operator, and static risk measures.
//!
//! A mean constraint asks `E[l(t, Y_t)] >= 0` at every grid time; a risk
//! constraint asks `rho(t, Y_t) <= q_t` for a translation-invariant monotone
//! risk measure. Both are reduced to a single "push" operator returning the
//! minimal deterministic upward shift restoring feasibility at time t.

use crate::curve::DeterministicCurve;
use crate::error::{Error, Result};
use crate::stochastic::mean;

/// Maximum bracket doublings before the constraint is declared unsatisfiable.
const MAX_BRACKET_DOUBLINGS: u32 = 64;

/// Default absolute tolerance for the bisection in the push operator.
pub fn default_push_tol(samples: &[f64]) -> f64 {
    let scale = samples.iter().fold(0.0f64, |a, s| a.max(s.abs()));
    1e-10 * (1.0 + scale)
}

/// Utility maps for the `utility` loss family.
#[derive(Debug, Clone, PartialEq)]
pub enum UtilityKind {
    Identity,
    /// `(1 - exp(-gamma y)) / gamma`, concave and strictly increasing.
    Exponential { gamma: f64 },
}

impl UtilityKind {
    fn eval(&self, y: f64) -> f64 {
        match self {
            UtilityKind::Identity => y,
            UtilityKind::Exponential { gamma } => (1.0 - (-gamma * y).exp()) / gamma,
        }
    }
}

/// Loss function families. Every kind must be strictly increasing in y.
#[derive(Debug, Clone, PartialEq)]
pub enum LossKind {
    /// `y - u_t`; push operator is closed-form.
    Linear { u: DeterministicCurve },
    /// Smoothed step `0.5 (1 + tanh((y - u_t)/w)) - v_t`; saturates at `1 - v_t`.
    SmoothedIndicator {
        u: DeterministicCurve,
        v: DeterministicCurve,
        width: f64,
    },
    /// `U(y) - u_t` for a named utility map.
    Utility { utility: UtilityKind, u: DeterministicCurve },
    /// Tabulated `(y, value)` breakpoints with linear interpolation and
    /// end-slope extrapolation; time-independent.
    Custom { ys: Vec<f64>, values: Vec<f64> },
    /// `l(t, scale_t * y)` wrapping another loss; used by the discount transform.
    Rescaled {
        inner: Box<LossKind>,
        scale: DeterministicCurve,
    },
}

/// Loss specification with optional declared bi-Lipschitz constants.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Lower Lipschitz constant, when declared.
    pub c_lower: Option<f64>,
    /// Upper Lipschitz constant, when declared.
    pub c_upper: Option<f64>,
    /// Growth constant C in `|l(t,y)| <= C (1 + |y|)`.
    pub growth: f64,
}

impl LossSpec {
    pub fn linear(u: DeterministicCurve) -> Self {
        let growth = 1.0 + u.max_abs();
        Self {
            kind: LossKind::Linear { u },
            c_lower: Some(1.0),
            c_upper: Some(1.0),
            growth,
        }
    }

    pub fn new(kind: LossKind, c_lower: Option<f64>, c_upper: Option<f64>, growth: f64) -> Self {
        Self {
            kind,
            c_lower,
            c_upper,
            growth,
        }
    }

    /// Evaluate `l(t_i, y)`.
    pub fn eval(&self, i: usize, y: f64) -> f64 {
        eval_kind(&self.kind, i, y)
    }

    fn curve_len(&self) -> usize {
        curve_len_of(&self.kind)
    }

    /// Probe strict monotonicity and the growth bound on a ladder of 64
    /// points per grid time. (H_l) is a user obligation; this detects gross
    /// violations rather than proving the property.
    pub fn validate(&self, n_times: usize, y_range: f64) -> Result<()> {
        let points: Vec<f64> = (0..64)
            .map(|j| -y_range + 2.0 * y_range * j as f64 / 63.0)
            .collect();
        for i in 0..n_times {
            let mut prev = self.eval(i, points[0]);
            if !prev.is_finite() {
                return Err(Error::InvalidSpec("loss produced non-finite value".into()));
            }
            for &y in &points[1..] {
                let v = self.eval(i, y);
                if !(v > prev) {
                    return Err(Error::InvalidSpec(format!(
                        "loss not strictly increasing at t index {i}, y {y}"
                    )));
                }
                if v.abs() > self.growth * (1.0 + y.abs()) * (1.0 + 1e-6) {
                    return Err(Error::InvalidSpec(format!(
                        "loss violates growth bound at t index {i}, y {y}"
                    )));
                }
                prev = v;
            }
            if let (Some(c), Some(cc)) = (self.c_lower, self.c_upper) {
                for w in points.windows(2) {
                    let dy = w[1] - w[0];
                    let dl = (self.eval(i, w[1]) - self.eval(i, w[0])).abs();
                    if dl < c * dy * (1.0 - 1e-6) || dl > cc * dy * (1.0 + 1e-6) {
                        return Err(Error::InvalidSpec(format!(
                            "declared bi-Lipschitz bounds violated at t index {i}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn curve_len_of(kind: &LossKind) -> usize {
    match kind {
        LossKind::Linear { u } => u.len(),
        LossKind::SmoothedIndicator { u, .. } => u.len(),
        LossKind::Utility { u, .. } => u.len(),
        LossKind::Custom { .. } => 1,
        LossKind::Rescaled { scale, .. } => scale.len(),
    }
}

fn eval_kind(kind: &LossKind, i: usize, y: f64) -> f64 {
    match kind {
        LossKind::Linear { u } => y - u.value(i),
        LossKind::SmoothedIndicator { u, v, width } => {
            0.5 * (1.0 + ((y - u.value(i)) / width).tanh()) - v.value(i)
        }
        LossKind::Utility { utility, u } => utility.eval(y) - u.value(i),
        LossKind::Custom { ys, values } => interp_with_end_slopes(ys, values, y),
        LossKind::Rescaled { inner, scale } => eval_kind(inner, i, scale.value(i) * y),
    }
}

fn interp_with_end_slopes(ys: &[f64], values: &[f64], y: f64) -> f64 {
    let n = ys.len();
    if y <= ys[0] {
        let slope = (values[1] - values[0]) / (ys[1] - ys[0]);
        return values[0] + slope * (y - ys[0]);
    }
    if y >= ys[n - 1] {
        let slope = (values[n - 1] - values[n - 2]) / (ys[n - 1] - ys[n - 2]);
        return values[n - 1] + slope * (y - ys[n - 1]);
    }
    let j = ys.partition_point(|&x| x <= y);
    let w = (y - ys[j - 1]) / (ys[j] - ys[j - 1]);
    values[j - 1] + w * (values[j] - values[j - 1])
}

/// Minimal deterministic upward shift `inf { x >= 0 : mean l(t, x + s_p) >= 0 }`.
///
/// Closed form for the linear kind; bracketing bisection otherwise, to
/// absolute tolerance `tol`. The bracket starts at `[0, 1]` and doubles its
/// right end; exhaustion means the growth condition fails empirically.
pub fn l_operator(loss: &LossSpec, i: usize, samples: &[f64], tol: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::ShapeMismatch("empty sample set".into()));
    }
    if let LossKind::Linear { u } = &loss.kind {
        return Ok((mean(samples) - u.value(i)).min(0.0).abs());
    }
    let g = |x: f64| -> f64 { mean(&samples.iter().map(|s| loss.eval(i, x + s)).collect::<Vec<_>>()) };
    if g(0.0) >= 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    let mut doublings = 0;
    while g(hi) < 0.0 {
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS {
            return Err(Error::UnsatisfiableConstraint { doublings });
        }
        hi *= 2.0;
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Empirical ratio `|L_t(X) - L_t(Y)| / mean |X - Y|`, maximized over the
/// provided sample-vector pairs and all grid times. Pairs with zero mean
/// distance are excluded.
pub fn lipschitz_ratio_probe(loss: &LossSpec, probes: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    if loss.c_lower.is_none() || loss.c_upper.is_none() {
        return Err(Error::InvalidSpec(
            "lipschitz_ratio_probe requires declared bi-Lipschitz constants".into(),
        ));
    }
    let mut worst = 0.0f64;
    for i in 0..loss.curve_len() {
        for (x, y) in probes {
            if x.len() != y.len() {
                return Err(Error::ShapeMismatch("probe pair lengths differ".into()));
            }
            let dist = x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / x.len() as f64;
            if dist == 0.0 {
                continue;
            }
            let tol = 1e-13 * (1.0 + default_push_tol(x).max(default_push_tol(y)) / 1e-10);
            let lx = l_operator(loss, i, x, tol)?;
            let ly = l_operator(loss, i, y, tol)?;
            worst = worst.max((lx - ly).abs() / dist);
        }
    }
    Ok(worst)
}

/// Static risk-measure constraint: Expected Shortfall at level `alpha_t`
/// compared to benchmark `q_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSpec {
    pub alpha: DeterministicCurve,
    pub q: DeterministicCurve,
}

impl RiskSpec {
    pub fn new(alpha: DeterministicCurve, q: DeterministicCurve) -> Result<Self> {
        if alpha.values().iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::InvalidSpec("ES levels must lie in (0, 1)".into()));
        }
        Ok(Self { alpha, q })
    }
}

/// Empirical Expected Shortfall (AVaR) of the wealth samples at level `alpha`.
///
/// Losses are `-sample`. The tail average uses fractional-atom weighting at
/// the quantile boundary so the dual density cap `1/alpha` is met exactly,
/// which makes translation invariance exact on empirical atoms.
pub fn es_value(samples: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidSpec(format!("ES level must be in (0,1), got {alpha}")));
    }
    if samples.is_empty() {
        return Err(Error::ShapeMismatch("empty sample set".into()));
    }
    let n = samples.len();
    let mut losses: Vec<f64> = samples.iter().map(|s| -s).collect();
    losses.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mass = alpha * n as f64;
    let k = mass.floor() as usize;
    let mut acc: f64 = losses[..k.min(n)].iter().sum();
    let frac = mass - k as f64;
    if frac > 0.0 && k < n {
        acc += frac * losses[k];
    }
    Ok(acc / mass)
}

/// `(rho(t, samples) - q_t)_+`: the minimal deterministic shift `m` with
/// `rho(t, samples + m) <= q_t`, closed-form by translation invariance.
pub fn risk_push(risk: &RiskSpec, i: usize, samples: &[f64]) -> Result<f64> {
    let rho = es_value(samples, risk.alpha.value(i))?;
    Ok((rho - risk.q.value(i)).max(0.0))
}

/// Constraint mode: mean reflection via a loss, or risk-measure reflection.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Mean(LossSpec),
    Risk(RiskSpec),
}

/// Outcome of the terminal admissibility check. Solvers refuse to run on a
/// violation; no facelift of the terminal data is performed.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalCheck {
    Ok,
    Violation { gap: f64 },
}

impl Constraint {
    /// Minimal upward shift restoring feasibility at time index `i`.
    pub fn push(&self, i: usize, samples: &[f64], tol: f64) -> Result<f64> {
        match self {
            Constraint::Mean(loss) => l_operator(loss, i, samples, tol),
            Constraint::Risk(risk) => risk_push(risk, i, samples),
        }
    }

    /// Signed feasibility margin at time index `i`: `mean l(t, .)` in mean
    /// mode, `q_t - rho(t, .)` in risk mode. Nonnegative means feasible.
    pub fn slack(&self, i: usize, samples: &[f64]) -> Result<f64> {
        match self {
            Constraint::Mean(loss) => {
                Ok(mean(&samples.iter().map(|s| loss.eval(i, *s)).collect::<Vec<_>>()))
            }
            Constraint::Risk(risk) => {
                Ok(risk.q.value(i) - es_value(samples, risk.alpha.value(i))?)
            }
        }
    }

    /// Check the constraint on the terminal samples within `tol` slack.
    pub fn check_terminal(&self, terminal_index: usize, xi: &[f64], tol: f64) -> Result<TerminalCheck> {
        let slack = self.slack(terminal_index, xi)?;
        if slack >= -tol {
            Ok(TerminalCheck::Ok)
        } else {
            Ok(TerminalCheck::Violation { gap: -slack })
        }
    }
}
