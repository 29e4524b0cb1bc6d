//! Grid-aligned deterministic curves.

use crate::error::{Error, Result};
use crate::stochastic::TimeGrid;
use std::io::Write;

/// Real-valued curve sampled at every grid instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicCurve {
    values: Vec<f64>,
}

impl DeterministicCurve {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("curve values must be finite".into()));
        }
        Ok(Self { values })
    }

    pub fn constant(grid: &TimeGrid, v: f64) -> Self {
        Self {
            values: vec![v; grid.len()],
        }
    }

    /// Linear ramp from `v0` at time 0 to `v1` at the horizon.
    pub fn ramp(grid: &TimeGrid, v0: f64, v1: f64) -> Self {
        let t_end = grid.horizon();
        let values = grid
            .times()
            .iter()
            .map(|&t| v0 + (v1 - v0) * t / t_end)
            .collect();
        Self { values }
    }

    /// Piecewise-linear interpolation through `(t, v)` nodes, flat outside.
    pub fn from_nodes(grid: &TimeGrid, nodes: &[(f64, f64)]) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidSpec("curve nodes must be non-empty".into()));
        }
        for w in nodes.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidSpec("curve node times must be increasing".into()));
            }
        }
        let values = grid
            .times()
            .iter()
            .map(|&t| {
                if t <= nodes[0].0 {
                    nodes[0].1
                } else if t >= nodes[nodes.len() - 1].0 {
                    nodes[nodes.len() - 1].1
                } else {
                    let j = nodes.partition_point(|n| n.0 <= t);
                    let (t0, v0) = nodes[j - 1];
                    let (t1, v1) = nodes[j];
                    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
                }
            })
            .collect();
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Largest jump between adjacent values; a continuity proxy.
    pub fn max_jump(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        Self {
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(i, &v)| f(i, v))
                .collect(),
        }
    }

    /// `time,value` rows with full float precision; shared schema across exports.
    pub fn export_csv<W: Write>(&self, grid: &TimeGrid, mut w: W) -> Result<()> {
        if grid.len() != self.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "curve has {} values, grid has {} instants",
                self.values.len(),
                grid.len()
            )));
        }
        writeln!(w, "time,value")?;
        for (t, v) in grid.times().iter().zip(&self.values) {
            writeln!(w, "{:.17e},{:.17e}", t, v)?;
        }
        Ok(())
    }
}
