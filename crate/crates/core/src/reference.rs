//! Closed-form reference cases: the deterministic Skorokhod construction for
//! linear losses, the constant-drift scenario with analytic compensator, and
//! the discount transform removing a linear-in-y driver term.

use crate::constraints::{LossKind, LossSpec};
use crate::curve::DeterministicCurve;
use crate::error::{Error, Result};
use crate::solver::{Compensator, SolutionTriple, ZDriverFn};
use crate::stochastic::TimeGrid;

/// Skorokhod construction for a deterministic state curve under the linear
/// constraint `y >= u`:
/// `K_i = max_j (x_j - u_j)^- - max_{j >= i} (x_j - u_j)^-` and
/// `y_i = x_i + R_i` with `R_i` the backward running maximum of the deficits.
///
/// The output satisfies `y >= u` and K-monotonicity exactly at grid points,
/// and the flatness sum `sum_i (y_i - u_i)(K_{i+1} - K_i)` vanishes term by
/// term up to rounding. When the terminal deficit is zero, `y = x + K_T - K`.
pub fn linear_closed_form(
    x: &DeterministicCurve,
    u: &DeterministicCurve,
) -> Result<(DeterministicCurve, Compensator)> {
    if x.len() != u.len() || x.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "state curve has {} points, benchmark has {}",
            x.len(),
            u.len()
        )));
    }
    let deficits: Vec<f64> = (0..x.len())
        .map(|i| (x.value(i) - u.value(i)).min(0.0).abs())
        .collect();
    let (k, r) = Compensator::from_pushes(&deficits)?;
    // x + r >= u in exact arithmetic; clamping removes the one-ulp shortfall
    // of float addition where the deficit attains the running maximum
    let y = DeterministicCurve::new(
        (0..x.len())
            .map(|i| (x.value(i) + r[i]).max(u.value(i)))
            .collect(),
    )?;
    Ok((y, k))
}

/// The constant-drift scenario with a binding-then-slack constraint:
/// driver `C = -gamma`, linear loss with constant benchmark `u`, and terminal
/// data with `u < E[xi] < u + gamma T`. Its flat solution is known in closed
/// form, with the compensator `K_t = gamma (t ^ t*)`.
#[derive(Debug, Clone)]
pub struct CounterexampleSpec {
    pub gamma: f64,
    pub u: f64,
    pub horizon: f64,
    /// `E[xi]` of the terminal recipe in use.
    pub mean_xi: f64,
}

impl CounterexampleSpec {
    pub fn new(gamma: f64, u: f64, horizon: f64, mean_xi: f64) -> Result<Self> {
        if !(gamma > 0.0) || !(horizon > 0.0) {
            return Err(Error::InvalidSpec("gamma and horizon must be positive".into()));
        }
        if !(u < mean_xi && mean_xi < u + gamma * horizon) {
            return Err(Error::InvalidSpec(format!(
                "mean terminal value {mean_xi} must lie in ({u}, {})",
                u + gamma * horizon
            )));
        }
        Ok(Self {
            gamma,
            u,
            horizon,
            mean_xi,
        })
    }

    /// The binding time: `E[xi] - gamma (T - t*) = u`.
    pub fn t_star(&self) -> f64 {
        self.horizon - (self.mean_xi - self.u) / self.gamma
    }
}

/// Analytic flat solution of the constant-drift scenario on a grid.
#[derive(Debug, Clone)]
pub struct CounterexampleSolution {
    /// `E[Y_t] = max(E[xi] - gamma (T - t), u)`.
    pub mean_y: DeterministicCurve,
    /// `K_t = gamma (t ^ t*)`.
    pub k: Compensator,
    /// Exact binding time.
    pub t_star: f64,
    /// Index of the grid cell containing `t_star`: `times[i] <= t* < times[i+1]`.
    pub t_star_cell: usize,
}

/// Evaluate the closed-form mean curve and compensator on `grid`.
pub fn counterexample_solution(
    spec: &CounterexampleSpec,
    grid: &TimeGrid,
) -> Result<CounterexampleSolution> {
    if (grid.horizon() - spec.horizon).abs() > 1e-12 * (1.0 + spec.horizon) {
        return Err(Error::InvalidGrid(format!(
            "grid horizon {} does not match scenario horizon {}",
            grid.horizon(),
            spec.horizon
        )));
    }
    let t_star = spec.t_star();
    let mean_y = DeterministicCurve::new(
        grid.times()
            .iter()
            .map(|&t| (spec.mean_xi - spec.gamma * (spec.horizon - t)).max(spec.u))
            .collect(),
    )?;
    let k = Compensator::new(DeterministicCurve::new(
        grid.times()
            .iter()
            .map(|&t| spec.gamma * t.min(t_star))
            .collect(),
    )?)?;
    let t_star_cell = grid
        .times()
        .iter()
        .rposition(|&t| t <= t_star)
        .unwrap_or(0)
        .min(grid.steps().saturating_sub(1));
    Ok(CounterexampleSolution {
        mean_y,
        k,
        t_star,
        t_star_cell,
    })
}

/// Change of variables removing a linear-in-y driver term `a_t y`:
/// with `A_t = int_0^t a_s ds` (discrete left-point sum), set
/// `xi~ = e^{A_T} xi`, `h~(t, z) = e^{A_t} h(t, e^{-A_t} z)`,
/// `l~(t, y) = l(t, e^{-A_t} y)`. Solving the transformed y-free problem and
/// scaling (Y, Z, K) back by `e^{-A_t}` recovers the original solution.
#[derive(Debug, Clone)]
pub struct DiscountTransform {
    grid: TimeGrid,
    /// `A_i` at every grid time.
    pub a_integral: DeterministicCurve,
}

impl DiscountTransform {
    /// Accumulate the discrete integral of the rate curve `a` on `grid`.
    pub fn new(a: &DeterministicCurve, grid: &TimeGrid) -> Result<Self> {
        if a.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "rate curve has {} points, grid has {}",
                a.len(),
                grid.len()
            )));
        }
        let mut acc = vec![0.0; grid.len()];
        for i in 0..grid.steps() {
            acc[i + 1] = acc[i] + a.value(i) * grid.dt(i);
        }
        Ok(Self {
            grid: grid.clone(),
            a_integral: DeterministicCurve::new(acc)?,
        })
    }

    /// `e^{A_i}`.
    pub fn factor(&self, i: usize) -> f64 {
        self.a_integral.value(i).exp()
    }

    /// Terminal samples of the transformed problem.
    pub fn transform_terminal(&self, xi: &[f64]) -> Vec<f64> {
        let f = self.factor(self.grid.steps());
        xi.iter().map(|v| f * v).collect()
    }

    /// The y-free driver of the transformed problem. `h` is looked up at the
    /// nearest grid time, so it must only be evaluated on grid times.
    pub fn transform_h(&self, h: ZDriverFn) -> ZDriverFn {
        let times: Vec<f64> = self.grid.times().to_vec();
        let factors: Vec<f64> = (0..times.len()).map(|i| self.factor(i)).collect();
        std::sync::Arc::new(move |t, z| {
            let i = nearest_index(&times, t);
            let f = factors[i];
            f * h(t, &z.iter().map(|v| v / f).collect::<Vec<_>>())
        })
    }

    /// The transformed loss `l~(t, y) = l(t, e^{-A_t} y)`.
    ///
    /// Linear losses stay linear with the benchmark scaled up by `e^{A_t}`,
    /// which has the identical feasible set and keeps the closed-form push.
    /// Other kinds are wrapped with a rescaling.
    pub fn transform_loss(&self, loss: &LossSpec) -> Result<LossSpec> {
        let n = self.grid.len();
        if let LossKind::Linear { u } = &loss.kind {
            let scaled =
                DeterministicCurve::new((0..n).map(|i| self.factor(i) * u.value(i)).collect())?;
            return Ok(LossSpec::linear(scaled));
        }
        let inv = DeterministicCurve::new((0..n).map(|i| 1.0 / self.factor(i)).collect())?;
        let (lo, hi) = inv
            .values()
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        Ok(LossSpec::new(
            LossKind::Rescaled {
                inner: Box::new(loss.kind.clone()),
                scale: inv,
            },
            loss.c_lower.map(|c| c * lo),
            loss.c_upper.map(|c| c * hi),
            loss.growth * hi.max(1.0),
        ))
    }

    /// Map a solution of the transformed problem back to the original one:
    /// Y, Z and K all scale by `e^{-A_t}`; K scales stepwise so it stays
    /// nondecreasing from 0.
    pub fn untransform_solution(&self, sol: &SolutionTriple) -> Result<SolutionTriple> {
        let m = self.grid.steps();
        let n = sol.y.n_paths();
        let d = sol.z.dim();
        let mut out = sol.clone();
        for i in 0..=m {
            let f = 1.0 / self.factor(i);
            for p in 0..n {
                out.y.set_value(p, i, f * sol.y.value(p, i));
            }
        }
        for i in 0..m {
            let f = 1.0 / self.factor(i);
            for p in 0..n {
                for k in 0..d {
                    out.z.set_value(p, i, k, f * sol.z.value(p, i, k));
                }
            }
        }
        let mut k_values = vec![0.0; m + 1];
        for i in 0..m {
            k_values[i + 1] = k_values[i] + sol.k.delta(i) / self.factor(i);
        }
        out.k = Compensator::new(DeterministicCurve::new(k_values)?)?;
        Ok(out)
    }

    /// The inverse transform: the same construction run with rate `-a`.
    pub fn inverse(&self) -> Result<Self> {
        let m = self.grid.steps();
        // recover the left-point rates from the accumulated integral
        let mut a = vec![0.0; self.grid.len()];
        for i in 0..m {
            a[i] = -(self.a_integral.value(i + 1) - self.a_integral.value(i)) / self.grid.dt(i);
        }
        DiscountTransform::new(&DeterministicCurve::new(a)?, &self.grid)
    }
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
    use std::sync::Arc;

    #[test]
    fn slack_curve_needs_no_compensator() {
        let g = TimeGrid::build(1.0, 4).unwrap();
        let x = DeterministicCurve::new(vec![1.0, 2.0, 1.5, 3.0, 2.5]).unwrap();
        let u = DeterministicCurve::constant(&g, 0.0);
        let (y, k) = linear_closed_form(&x, &u).unwrap();
        assert_eq!(k.total(), 0.0);
        assert_eq!(y.values(), x.values());
    }

    #[test]
    fn counterexample_curve_matches_closed_form() {
        let g = TimeGrid::build(1.0, 10).unwrap();
        let spec = CounterexampleSpec::new(1.0, 0.0, 1.0, 0.5).unwrap();
        assert!((spec.t_star() - 0.5).abs() < 1e-15);
        let x = DeterministicCurve::new(
            g.times().iter().map(|&t| 0.5 - (1.0 - t)).collect(),
        )
        .unwrap();
        let u = DeterministicCurve::constant(&g, 0.0);
        let (y, k) = linear_closed_form(&x, &u).unwrap();
        let exact = counterexample_solution(&spec, &g).unwrap();
        for i in 0..g.len() {
            assert!((k.value(i) - exact.k.value(i)).abs() < 1e-14);
            assert!((y.value(i) - exact.mean_y.value(i)).abs() < 1e-14);
        }
        assert_eq!(exact.t_star_cell, 5);
        assert_eq!(exact.mean_y.value(g.len() - 1), 0.5);
        assert_eq!(exact.mean_y.value(0), 0.0);
    }

    #[test]
    fn sawtooth_satisfies_skorokhod_triple() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..25 {
            let m = rng.gen_range(3..40);
            let x = DeterministicCurve::new(
                (0..=m).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            )
            .unwrap();
            let u = DeterministicCurve::new(
                (0..=m).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let (y, k) = linear_closed_form(&x, &u).unwrap();
            let mut flat = 0.0;
            for i in 0..=m {
                assert!(y.value(i) >= u.value(i));
                if i < m {
                    assert!(k.value(i + 1) >= k.value(i));
                    flat += (y.value(i) - u.value(i)) * (k.value(i + 1) - k.value(i));
                }
            }
            assert!(flat.abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_rate_transform_is_identity() {
        let g = TimeGrid::build(1.0, 8).unwrap();
        let tr = DiscountTransform::new(&DeterministicCurve::constant(&g, 0.0), &g).unwrap();
        let xi = vec![1.0, -2.0, 0.5];
        assert_eq!(tr.transform_terminal(&xi), xi);
        for i in 0..g.len() {
            assert_eq!(tr.factor(i), 1.0);
        }
    }

    #[test]
    fn constant_rate_accumulates_exactly() {
        let g = TimeGrid::build(2.0, 8).unwrap();
        let r = 0.3;
        let tr = DiscountTransform::new(&DeterministicCurve::constant(&g, r), &g).unwrap();
        for i in 0..g.len() {
            assert!((tr.a_integral.value(i) - r * g.time(i)).abs() < 1e-14);
        }
        let xi = vec![2.0];
        assert!((tr.transform_terminal(&xi)[0] - 2.0 * (r * 2.0f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn inverse_transform_round_trips() {
        let g = TimeGrid::build(1.0, 5).unwrap();
        let a = DeterministicCurve::new(vec![0.1, -0.2, 0.3, 0.0, 0.5, 0.0]).unwrap();
        let tr = DiscountTransform::new(&a, &g).unwrap();
        let inv = tr.inverse().unwrap();
        for i in 0..g.len() {
            assert!((tr.factor(i) * inv.factor(i) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn transformed_h_rescales_z() {
        let g = TimeGrid::build(1.0, 4).unwrap();
        let tr = DiscountTransform::new(&DeterministicCurve::constant(&g, 1.0), &g).unwrap();
        let h: ZDriverFn = Arc::new(|_t, z: &[f64]| 2.0 * z[0]);
        let ht = tr.transform_h(h);
        // e^{A} * 2 * (z / e^{A}) = 2 z at every grid time
        for i in 0..g.len() {
            let t = g.time(i);
            assert!((ht(t, &[1.5]) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_loss_transform_keeps_closed_form() {
        let g = TimeGrid::build(1.0, 4).unwrap();
        let tr = DiscountTransform::new(&DeterministicCurve::constant(&g, 0.5), &g).unwrap();
        let loss = LossSpec::linear(DeterministicCurve::constant(&g, 2.0));
        let out = tr.transform_loss(&loss).unwrap();
        match out.kind {
            LossKind::Linear { u } => {
                for i in 0..g.len() {
                    assert!((u.value(i) - 2.0 * (0.5 * g.time(i)).exp()).abs() < 1e-13);
                }
            }
            other => panic!("expected linear kind, got {other:?}"),
        }
    }
}
