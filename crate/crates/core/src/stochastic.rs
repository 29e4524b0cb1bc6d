//! Time discretization and seeded Brownian path ensembles.
//!
//! Every downstream solver works on the empirical probability space spanned
//! by a fixed [`PathEnsemble`]. Generation is counter-based: path `p` owns an
//! independent substream derived from `(seed, p)`, so the output does not
//! depend on scheduling and regenerating with the same seed is bit-exact.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::Write;

use crate::error::{Error, Result};

/// Discretized horizon `[0, T]`, strictly increasing instants with `times[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with `m` steps of size `horizon / m`.
    pub fn build(horizon: f64, m: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if m < 1 {
            return Err(Error::InvalidGrid("step count must be at least 1".into()));
        }
        let dt = horizon / m as f64;
        let mut times: Vec<f64> = (0..=m).map(|i| i as f64 * dt).collect();
        times[m] = horizon;
        Ok(Self { times })
    }

    /// Non-uniform grid from explicit instants.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid("need at least two instants".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidGrid("first instant must be 0".into()));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidGrid("instants must be strictly increasing and finite".into()));
            }
        }
        Ok(Self { times })
    }

    /// Number of instants, `M + 1`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of steps `M`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Step size `t_{i+1} - t_i`.
    pub fn dt(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    /// Largest step size.
    pub fn max_step(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// Per-path substream seed, independent of scheduling.
///
/// splitmix64 over `(seed, path)`; used to key one ChaCha stream per path so
/// that parallel generation orders cannot change the output.
fn path_stream_seed(seed: u64, path: usize) -> u64 {
    let mut x = seed ^ (path as u64).wrapping_mul(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Seeded d-dimensional Brownian sample paths on a grid.
///
/// Values are stored time-major: `value(p, i, k)` lives at
/// `(i * n_paths + p) * dim + k`. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    grid: TimeGrid,
    n_paths: usize,
    dim: usize,
    seed: u64,
    values: Vec<f64>,
}

impl PathEnsemble {
    /// Simulate a standard d-dimensional Brownian motion.
    ///
    /// Increments over `[t_i, t_{i+1}]` are Gaussian with variance `dt(i)` per
    /// dimension. Requires `n_paths >= 2` so empirical means are meaningful.
    pub fn simulate_brownian(grid: &TimeGrid, n_paths: usize, dim: usize, seed: u64) -> Result<Self> {
        if n_paths < 2 {
            return Err(Error::InvalidEnsemble(format!(
                "n_paths must be at least 2, got {n_paths}"
            )));
        }
        if dim < 1 {
            return Err(Error::InvalidEnsemble("dimension must be at least 1".into()));
        }
        let m = grid.steps();
        let n_times = grid.len();
        let mut values = vec![0.0; n_times * n_paths * dim];
        let sqrt_dt: Vec<f64> = (0..m).map(|i| grid.dt(i).sqrt()).collect();
        for p in 0..n_paths {
            let mut rng = ChaCha8Rng::seed_from_u64(path_stream_seed(seed, p));
            for i in 0..m {
                for k in 0..dim {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    let prev = values[(i * n_paths + p) * dim + k];
                    values[((i + 1) * n_paths + p) * dim + k] = prev + sqrt_dt[i] * g;
                }
            }
        }
        Ok(Self {
            grid: grid.clone(),
            n_paths,
            dim,
            seed,
            values,
        })
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

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn value(&self, path: usize, i: usize, k: usize) -> f64 {
        self.values[(i * self.n_paths + path) * self.dim + k]
    }

    /// Increment of coordinate `k` over `[t_i, t_{i+1}]` for one path.
    pub fn increment(&self, path: usize, i: usize, k: usize) -> f64 {
        self.value(path, i + 1, k) - self.value(path, i, k)
    }

    /// First coordinate at time index `i`, across all paths.
    pub fn coordinate_at(&self, i: usize, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.value(p, i, k)).collect()
    }

    /// Restriction of the ensemble to a subset of time indices.
    ///
    /// Indices must be increasing and start at 0. Values at shared instants
    /// are identical to the source ensemble.
    pub fn subsample(&self, indices: &[usize]) -> Result<Self> {
        if indices.first() != Some(&0) {
            return Err(Error::InvalidGrid("subsample must start at index 0".into()));
        }
        for w in indices.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidGrid("subsample indices must be increasing".into()));
            }
        }
        if *indices.last().unwrap() >= self.grid.len() {
            return Err(Error::IndexOutOfRange {
                index: *indices.last().unwrap(),
                len: self.grid.len(),
            });
        }
        let times: Vec<f64> = indices.iter().map(|&i| self.grid.time(i)).collect();
        let grid = TimeGrid::from_times(times)?;
        let mut values = Vec::with_capacity(indices.len() * self.n_paths * self.dim);
        for &i in indices {
            let start = i * self.n_paths * self.dim;
            values.extend_from_slice(&self.values[start..start + self.n_paths * self.dim]);
        }
        Ok(Self {
            grid,
            n_paths: self.n_paths,
            dim: self.dim,
            seed: self.seed,
            values,
        })
    }

    /// Debug export, one row per path-time-dimension. Not a stable format.
    pub fn export_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "path,time,dim,value")?;
        for p in 0..self.n_paths {
            for i in 0..self.grid.len() {
                for k in 0..self.dim {
                    writeln!(w, "{},{:.17e},{},{:.17e}", p, self.grid.time(i), k, self.value(p, i, k))?;
                }
            }
        }
        Ok(())
    }
}

/// Scalar process sampled on the same paths and grid as a [`PathEnsemble`].
///
/// Houses Y, X and driver-accumulation values; time-major like the ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarEnsemble {
    grid: TimeGrid,
    n_paths: usize,
    values: Vec<f64>,
}

impl ScalarEnsemble {
    pub fn zeros(grid: &TimeGrid, n_paths: usize) -> Self {
        Self {
            grid: grid.clone(),
            n_paths,
            values: vec![0.0; grid.len() * n_paths],
        }
    }

    pub fn from_values(grid: &TimeGrid, n_paths: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * n_paths {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                grid.len() * n_paths,
                values.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            n_paths,
            values,
        })
    }

    /// Constant-in-time, constant-in-path ensemble.
    pub fn constant(grid: &TimeGrid, n_paths: usize, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            n_paths,
            values: vec![c; grid.len() * n_paths],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn value(&self, path: usize, i: usize) -> f64 {
        self.values[i * self.n_paths + path]
    }

    pub fn set_value(&mut self, path: usize, i: usize, v: f64) {
        self.values[i * self.n_paths + path] = v;
    }

    /// All paths at time index `i`.
    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_paths..(i + 1) * self.n_paths]
    }

    pub fn at_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.n_paths..(i + 1) * self.n_paths]
    }

    /// Arithmetic mean over paths at time index `i`.
    pub fn empirical_mean(&self, i: usize) -> Result<f64> {
        if i >= self.grid.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.grid.len(),
            });
        }
        Ok(mean(self.at(i)))
    }
}

/// Arithmetic mean of a sample slice.
pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Sample variance (denominator `n`).
pub fn variance(samples: &[f64]) -> f64 {
    let m = mean(samples);
    samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / samples.len() as f64
}
