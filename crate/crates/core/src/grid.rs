//! Uniform time grid shared by every ODE solve, moment recursion and
//! simulation, plus the sampled-path container used for coefficient
//! schedules.

use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};

/// Uniform grid `t_k = k T / N`, `k = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(GameError::invalid("horizon", format!("must be > 0, got {horizon}")));
        }
        if steps == 0 {
            return Err(GameError::invalid("steps", "must be >= 1"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.t(k))
    }

    /// Trapezoidal weights on the nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let dt = self.dt();
        let mut w = vec![dt; self.steps + 1];
        w[0] = 0.5 * dt;
        w[self.steps] = 0.5 * dt;
        w
    }

    pub fn trapezoid(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        let n = self.steps;
        let dt = self.dt();
        values
            .into_iter()
            .enumerate()
            .map(|(k, v)| if k == 0 || k == n { 0.5 * dt * v } else { dt * v })
            .sum()
    }

    pub(crate) fn ensure_same(&self, other: &TimeGrid, context: &'static str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(GameError::GridMismatch { context })
        }
    }
}

/// Values sampled on a [`TimeGrid`] at `per_step` points per interval.
///
/// Riccati-type solutions are stored at half-step resolution
/// (`per_step == 2`) so that driven RK4 solves on the grid see exact
/// midpoint inputs; everything else lives on the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Path<T> {
    grid: TimeGrid,
    per_step: usize,
    values: Vec<T>,
}

impl<T: Copy> Path<T> {
    pub fn from_values(grid: TimeGrid, per_step: usize, values: Vec<T>) -> Result<Self> {
        if per_step == 0 || values.len() != grid.steps() * per_step + 1 {
            return Err(GameError::GridMismatch {
                context: "path length does not match grid",
            });
        }
        Ok(Self {
            grid,
            per_step,
            values,
        })
    }

    pub fn constant(grid: TimeGrid, value: T) -> Self {
        Self {
            grid,
            per_step: 1,
            values: vec![value; grid.steps() + 1],
        }
    }

    pub fn from_fn(grid: TimeGrid, per_step: usize, mut f: impl FnMut(f64) -> T) -> Self {
        let n = grid.steps() * per_step;
        let h = grid.horizon() / n as f64;
        let values = (0..=n)
            .map(|j| f(if j == n { grid.horizon() } else { j as f64 * h }))
            .collect();
        Self {
            grid,
            per_step,
            values,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn per_step(&self) -> usize {
        self.per_step
    }

    /// Value at grid node `k`.
    pub fn node(&self, k: usize) -> T {
        self.values[k * self.per_step]
    }

    pub fn terminal(&self) -> T {
        *self.values.last().expect("paths are never empty")
    }

    pub fn initial(&self) -> T {
        self.values[0]
    }

    /// Raw samples, including any intermediate points.
    pub fn samples(&self) -> &[T] {
        &self.values
    }

    pub fn nodes(&self) -> impl Iterator<Item = T> + '_ {
        self.values.iter().step_by(self.per_step).copied()
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(&T) -> U) -> Path<U> {
        Path {
            grid: self.grid,
            per_step: self.per_step,
            values: self.values.iter().map(f).collect(),
        }
    }

    /// Keeps only the node values.
    pub fn at_nodes(&self) -> Path<T> {
        Path {
            grid: self.grid,
            per_step: 1,
            values: self.nodes().collect(),
        }
    }

    pub fn zip_with<U: Copy, V: Copy>(&self, other: &Path<U>, mut f: impl FnMut(&T, &U) -> V) -> Result<Path<V>> {
        self.grid.ensure_same(&other.grid, "zip_with")?;
        if self.per_step != other.per_step {
            return Err(GameError::GridMismatch {
                context: "zip_with: resolution differs",
            });
        }
        Ok(Path {
            grid: self.grid,
            per_step: self.per_step,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }
}

impl<T> Path<T>
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    /// Value at the midpoint of interval `k`; linear interpolation when the
    /// path carries no intermediate sample.
    pub fn midpoint(&self, k: usize) -> T {
        if self.per_step % 2 == 0 {
            self.values[k * self.per_step + self.per_step / 2]
        } else {
            self.at_time(self.grid.t(k) + 0.5 * self.grid.dt())
        }
    }

    /// Linear interpolation between stored samples.
    pub fn at_time(&self, t: f64) -> T {
        let n = self.values.len() - 1;
        let h = self.grid.horizon() / n as f64;
        let s = (t / h).clamp(0.0, n as f64);
        let j = (s.floor() as usize).min(n - 1);
        let frac = s - j as f64;
        self.values[j] * (1.0 - frac) + self.values[j + 1] * frac
    }

    /// Quadrature-weighted combination `sum_q w_q * paths[q]`.
    pub fn weighted_sum<'a>(paths: impl IntoIterator<Item = (&'a Path<T>, f64)>) -> Result<Path<T>>
    where
        T: 'a,
    {
        let mut it = paths.into_iter();
        let (first, w0) = it.next().ok_or(GameError::Empty("weighted_sum"))?;
        let mut acc = first.map(|v| *v * w0);
        for (p, w) in it {
            acc.grid.ensure_same(&p.grid, "weighted_sum")?;
            if acc.per_step != p.per_step {
                return Err(GameError::GridMismatch {
                    context: "weighted_sum: resolution differs",
                });
            }
            for (a, b) in acc.values.iter_mut().zip(&p.values) {
                *a = *a + *b * w;
            }
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes() {
        let g = TimeGrid::new(1.0, 100).unwrap();
        assert_eq!(g.t(0), 0.0);
        assert_eq!(g.t(100), 1.0);
        assert!((g.dt() - 0.01).abs() < 1e-15);
        assert!((g.trapezoid(g.times()) - 0.5).abs() < 1e-14);
        assert!((g.trapezoid_weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(-1.0, 3).is_err());
    }

    #[test]
    fn midpoint_and_interpolation() {
        let g = TimeGrid::new(2.0, 4).unwrap();
        let fine = Path::from_fn(g, 2, |t| t * t);
        let coarse = Path::from_fn(g, 1, |t| t * t);
        assert_eq!(fine.midpoint(1), 0.75 * 0.75);
        // linear interpolation of t^2 between 0.5 and 1.0
        assert!((coarse.midpoint(1) - 0.625).abs() < 1e-15);
        assert_eq!(fine.node(4), 4.0);
        assert_eq!(fine.at_nodes().samples(), coarse.samples());
    }
}
