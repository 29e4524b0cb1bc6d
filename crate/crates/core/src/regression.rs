//! Regression-based conditional expectation on the path ensemble.
//!
//! `condexp` projects a time-(i+1) target onto basis functions of the
//! time-i Brownian state, the discrete stand-in for `E[. | F_{t_i}]`.
//! `extract_z` regresses martingale increments to recover the integrand Z.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stochastic::PathEnsemble;

/// Basis family used for the least-squares projection.
///
/// Two families only: global polynomials in the Brownian state (per
/// coordinate, no cross terms) and equiprobable partition indicators on the
/// first coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisSpec {
    Polynomial { degree: usize },
    Partition { cells: usize },
}

impl BasisSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            BasisSpec::Polynomial { .. } => Ok(()),
            BasisSpec::Partition { cells } if *cells >= 1 => Ok(()),
            BasisSpec::Partition { .. } => {
                Err(Error::InvalidSpec("partition count must be at least 1".into()))
            }
        }
    }
}

/// Result of one conditional-expectation regression.
#[derive(Debug, Clone)]
pub struct Regression {
    /// Fitted value per path.
    pub values: Vec<f64>,
    /// Ridge weight applied on rank deficiency, if any.
    pub ridge: Option<f64>,
    /// Root-mean-square residual `target - fitted`.
    pub residual_rms: f64,
}

/// Brownian state at one time index, the regression covariate.
#[derive(Debug, Clone, Copy)]
pub struct StateSlice<'a> {
    ensemble: &'a PathEnsemble,
    index: usize,
}

impl<'a> StateSlice<'a> {
    pub fn new(ensemble: &'a PathEnsemble, index: usize) -> Result<Self> {
        if index >= ensemble.grid().len() {
            return Err(Error::IndexOutOfRange {
                index,
                len: ensemble.grid().len(),
            });
        }
        Ok(Self { ensemble, index })
    }

    pub fn n_paths(&self) -> usize {
        self.ensemble.n_paths()
    }

    pub fn dim(&self) -> usize {
        self.ensemble.dim()
    }

    fn coordinate(&self, k: usize) -> Vec<f64> {
        self.ensemble.coordinate_at(self.index, k)
    }
}

/// Least-squares projection of `target` onto the basis evaluated on `state`.
///
/// Exact (up to arithmetic) whenever the target lies in the basis span. Rank
/// deficiency never fails: the solve falls back to a ridge-regularized system
/// with weight `1e-8 * trace / n_features`, and the weight is reported.
pub fn condexp(target: &[f64], state: &StateSlice, basis: &BasisSpec) -> Result<Regression> {
    basis.validate()?;
    let n = state.n_paths();
    if target.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "target has {} entries, ensemble has {} paths",
            target.len(),
            n
        )));
    }
    match basis {
        BasisSpec::Polynomial { degree } => polynomial_fit(target, state, *degree),
        BasisSpec::Partition { cells } => partition_fit(target, state, *cells),
    }
}

fn polynomial_fit(target: &[f64], state: &StateSlice, degree: usize) -> Result<Regression> {
    let n = target.len();
    if degree == 0 || state.index == 0 {
        // Only the constant regressor carries information.
        let m = target.iter().sum::<f64>() / n as f64;
        let residual_rms =
            (target.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / n as f64).sqrt();
        return Ok(Regression {
            values: vec![m; n],
            ridge: None,
            residual_rms,
        });
    }
    let d = state.dim();
    let n_feat = 1 + d * degree;
    // standardized coordinates keep the normal equations well conditioned
    let mut features = DMatrix::<f64>::zeros(n, n_feat);
    for p in 0..n {
        features[(p, 0)] = 1.0;
    }
    for k in 0..d {
        let coord = state.coordinate(k);
        let m = coord.iter().sum::<f64>() / n as f64;
        let var = coord.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        for p in 0..n {
            let x = (coord[p] - m) / scale;
            let mut pow = 1.0;
            for deg in 1..=degree {
                pow *= x;
                features[(p, 1 + k * degree + deg - 1)] = pow;
            }
        }
    }
    solve_normal_equations(&features, target)
}

fn partition_fit(target: &[f64], state: &StateSlice, cells: usize) -> Result<Regression> {
    let n = target.len();
    let cells = cells.min(n);
    if cells == 1 || state.index == 0 {
        let m = target.iter().sum::<f64>() / n as f64;
        let residual_rms =
            (target.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / n as f64).sqrt();
        return Ok(Regression {
            values: vec![m; n],
            ridge: None,
            residual_rms,
        });
    }
    // equiprobable cells on the first coordinate
    let coord = state.coordinate(0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| coord[a].partial_cmp(&coord[b]).unwrap());
    let mut sums = vec![0.0; cells];
    let mut counts = vec![0usize; cells];
    let mut cell_of = vec![0usize; n];
    for (rank, &p) in order.iter().enumerate() {
        let c = (rank * cells / n).min(cells - 1);
        cell_of[p] = c;
        sums[c] += target[p];
        counts[c] += 1;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let values: Vec<f64> = cell_of.iter().map(|&c| means[c]).collect();
    let residual_rms = (target
        .iter()
        .zip(&values)
        .map(|(y, v)| (y - v) * (y - v))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Ok(Regression {
        values,
        ridge: None,
        residual_rms,
    })
}

fn solve_normal_equations(features: &DMatrix<f64>, target: &[f64]) -> Result<Regression> {
    let n = target.len();
    let y = DVector::from_column_slice(target);
    let gram = features.transpose() * features;
    let rhs = features.transpose() * &y;
    let (coeffs, ridge) = match gram.clone().cholesky() {
        Some(chol) => (chol.solve(&rhs), None),
        None => {
            let g = gram.nrows();
            let weight = 1e-8 * gram.trace() / g as f64;
            let regularized = gram + DMatrix::<f64>::identity(g, g) * weight;
            let chol = regularized.cholesky().ok_or_else(|| {
                Error::InvalidSpec("ridge-regularized normal equations not positive definite".into())
            })?;
            (chol.solve(&rhs), Some(weight))
        }
    };
    let fitted = features * coeffs;
    let residual_rms = (fitted
        .iter()
        .zip(target)
        .map(|(v, y)| (v - y) * (v - y))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Ok(Regression {
        values: fitted.as_slice().to_vec(),
        ridge,
        residual_rms,
    })
}

/// Z extracted per dimension from `y_next`, the discrete martingale-increment
/// regression: component k is `condexp(y_next * dB_k) / dt`.
///
/// Output is path-major: `values[p * dim + k]`.
#[derive(Debug, Clone)]
pub struct ZSlice {
    pub values: Vec<f64>,
    pub dim: usize,
    pub ridge: Option<f64>,
}

impl ZSlice {
    pub fn value(&self, path: usize, k: usize) -> f64 {
        self.values[path * self.dim + k]
    }
}

/// Regress the martingale increment of `y_next` against each Brownian
/// increment over `[t_i, t_{i+1}]`.
pub fn extract_z(
    y_next: &[f64],
    ensemble: &PathEnsemble,
    step: usize,
    basis: &BasisSpec,
) -> Result<ZSlice> {
    let n = ensemble.n_paths();
    if y_next.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "y_next has {} entries, ensemble has {} paths",
            y_next.len(),
            n
        )));
    }
    if step + 1 >= ensemble.grid().len() {
        return Err(Error::IndexOutOfRange {
            index: step,
            len: ensemble.grid().len() - 1,
        });
    }
    let dt = ensemble.grid().dt(step);
    let d = ensemble.dim();
    let state = StateSlice::new(ensemble, step)?;
    let mut values = vec![0.0; n * d];
    let mut ridge = None;
    for k in 0..d {
        let weighted: Vec<f64> = (0..n)
            .map(|p| y_next[p] * ensemble.increment(p, step, k))
            .collect();
        let reg = condexp(&weighted, &state, basis)?;
        if reg.ridge.is_some() {
            ridge = reg.ridge;
        }
        for p in 0..n {
            values[p * d + k] = reg.values[p] / dt;
        }
    }
    Ok(ZSlice { values, dim: d, ridge })
}
