//! Seeded Euler–Maruyama simulation of the controlled two-dimensional state.
//!
//! Each path draws from its own ChaCha stream selected by the path index, so
//! a path's noise depends only on `(seed, path)` and its position in the
//! step sequence. Batches are bit-identical for any worker count.

use std::io::{Read, Write};

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controls::GainPath;
use crate::error::{GameError, Result};
use crate::grid::TimeGrid;
use crate::model::GameParams;

pub const DUMP_MAGIC: &[u8; 4] = b"AFG1";
pub const DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_steps: 100,
            n_paths: 50_000,
            seed: 20_240_601,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(GameError::invalid("n_steps", "must be >= 1"));
        }
        if self.n_paths == 0 {
            return Err(GameError::invalid("n_paths", "must be >= 1"));
        }
        Ok(())
    }
}

/// `n_paths` trajectories on `n_steps + 1` nodes, stored path-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    states: Vec<f64>,
    pub label: String,
}

impl TrajectoryBatch {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn stride(&self) -> usize {
        2 * (self.grid.steps() + 1)
    }

    pub fn state(&self, path: usize, k: usize) -> Vector2<f64> {
        let i = path * self.stride() + 2 * k;
        Vector2::new(self.states[i], self.states[i + 1])
    }

    /// Flat path-major buffer `[path][node][coordinate]`.
    pub fn raw(&self) -> &[f64] {
        &self.states
    }

    pub fn path(&self, path: usize) -> impl Iterator<Item = Vector2<f64>> + '_ {
        let s = &self.states[path * self.stride()..(path + 1) * self.stride()];
        s.chunks_exact(2).map(|c| Vector2::new(c[0], c[1]))
    }

    /// Keeps the listed paths, in the given order.
    pub fn select(&self, paths: &[usize]) -> Result<Self> {
        if paths.is_empty() {
            return Err(GameError::Empty("path selection"));
        }
        let stride = self.stride();
        let mut states = Vec::with_capacity(paths.len() * stride);
        for &p in paths {
            if p >= self.n_paths {
                return Err(GameError::invalid("paths", format!("index {p} out of range")));
            }
            states.extend_from_slice(&self.states[p * stride..(p + 1) * stride]);
        }
        Ok(Self {
            grid: self.grid,
            n_paths: paths.len(),
            seed: self.seed,
            states,
            label: self.label.clone(),
        })
    }

    pub fn from_raw(grid: TimeGrid, n_paths: usize, seed: u64, states: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if n_paths == 0 {
            return Err(GameError::Empty("trajectory batch"));
        }
        if states.len() != n_paths * 2 * (grid.steps() + 1) {
            return Err(GameError::invalid("states", "buffer length does not match dimensions"));
        }
        Ok(Self {
            grid,
            n_paths,
            seed,
            states,
            label: label.into(),
        })
    }

    /// Binary dump: magic `AFG1`, `u32` version, `u64` path count, `u64`
    /// step count, `u64` seed, `f64` horizon, then the row-major states, all
    /// little-endian.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_paths as u64).to_le_bytes())?;
        w.write_all(&(self.grid.steps() as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.grid.horizon().to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.states.len() * 8);
        for v in &self.states {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(GameError::Io("not an AFG1 trajectory dump".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != DUMP_VERSION {
            return Err(GameError::Io(format!("unsupported dump version {version}")));
        }
        let mut b8 = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut b8)?;
            Ok(b8)
        };
        let n_paths = u64::from_le_bytes(next(&mut r)?) as usize;
        let n_steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let seed = u64::from_le_bytes(next(&mut r)?);
        let horizon = f64::from_le_bytes(next(&mut r)?);
        let grid = TimeGrid::new(horizon, n_steps)?;
        let len = n_paths
            .checked_mul(2 * (n_steps + 1))
            .ok_or_else(|| GameError::Io("dump dimensions overflow".into()))?;
        let mut bytes = vec![0u8; len * 8];
        r.read_exact(&mut bytes)?;
        let states = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Self::from_raw(grid, n_paths, seed, states, "dump")
    }
}

/// Standard normal pairs for one path, `n_steps` of them.
fn path_noise(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// `X_{k+1} = X_k + K(t_k) X_k dt + Sigma sqrt(dt) xi_k` from `x0`.
pub fn euler_maruyama(gains: &GainPath, params: &GameParams, sim: &SimConfig) -> Result<TrajectoryBatch> {
    sim.validate()?;
    let grid = *gains.grid();
    if grid.steps() != sim.n_steps {
        return Err(GameError::GridMismatch {
            context: "gain schedule and simulation step count",
        });
    }
    let dt = grid.dt();
    let noise = params.sigma() * dt.sqrt();
    let x0 = params.x0();
    let k_nodes: Vec<Matrix2<f64>> = gains.k.nodes().collect();
    let stride = 2 * (sim.n_steps + 1);
    let mut states = vec![0.0; sim.n_paths * stride];
    states
        .par_chunks_mut(stride)
        .enumerate()
        .try_for_each(|(p, out)| {
            let mut rng = path_noise(sim.seed, p);
            let mut x = x0;
            out[0] = x[0];
            out[1] = x[1];
            for (k, kmat) in k_nodes[..sim.n_steps].iter().enumerate() {
                let xi = Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
                x += kmat * x * dt + noise * xi;
                if !(x[0].is_finite() && x[1].is_finite()) {
                    return Err(GameError::NonFinite {
                        context: "Euler-Maruyama step",
                        t: grid.t(k + 1),
                    });
                }
                out[2 * (k + 1)] = x[0];
                out[2 * (k + 1) + 1] = x[1];
            }
            Ok(())
        })?;
    Ok(TrajectoryBatch {
        grid,
        n_paths: sim.n_paths,
        seed: sim.seed,
        states,
        label: gains.label.clone(),
    })
}

/// Sample mean and standard error of a per-path statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStats {
    pub values: Vec<f64>,
    pub mean: f64,
    pub se: f64,
}

impl PathStats {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(GameError::Empty("path statistics"));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self { values, mean, se })
    }
}

/// Per-path trapezoidal `int_0^T f(k, X_{t_k}) dt`.
pub fn pathwise_integral(batch: &TrajectoryBatch, f: impl Fn(usize, &Vector2<f64>) -> f64 + Sync) -> Result<PathStats> {
    let w = batch.grid().trapezoid_weights();
    let values: Vec<f64> = (0..batch.n_paths())
        .into_par_iter()
        .map(|p| batch.path(p).enumerate().map(|(k, x)| w[k] * f(k, &x)).sum())
        .collect();
    PathStats::from_values(values)
}

/// Per-path trapezoidal `int_0^T X^T C(t) X dt` for a weight schedule on the
/// nodes.
pub fn pathwise_quadratic(batch: &TrajectoryBatch, weights: &[Matrix2<f64>]) -> Result<PathStats> {
    if weights.len() != batch.n_steps() + 1 {
        return Err(GameError::GridMismatch {
            context: "quadratic weight schedule",
        });
    }
    pathwise_integral(batch, |k, x| (x.transpose() * weights[k] * x)[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Path;

    fn gains(grid: TimeGrid, k: Matrix2<f64>) -> GainPath {
        GainPath {
            k: Path::constant(grid, k),
            label: "const".into(),
        }
    }

    #[test]
    fn noiseless_driftless_paths_stay_put() {
        let p = GameParams {
            sigma_a: 0.0,
            sigma_b: 0.0,
            ..GameParams::default()
        };
        let sim = SimConfig {
            n_steps: 10,
            n_paths: 4,
            seed: 1,
        };
        let b = euler_maruyama(&gains(TimeGrid::new(1.0, 10).unwrap(), Matrix2::zeros()), &p, &sim).unwrap();
        assert!(b.raw().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn driftless_moments() {
        let p = GameParams::default();
        let sim = SimConfig {
            n_steps: 100,
            n_paths: 50_000,
            seed: 7,
        };
        let b = euler_maruyama(&gains(TimeGrid::new(1.0, 100).unwrap(), Matrix2::zeros()), &p, &sim).unwrap();
        for c in 0..2 {
            let xs: Vec<f64> = (0..b.n_paths()).map(|i| b.state(i, 100)[c]).collect();
            let m = PathStats::from_values(xs.clone()).unwrap();
            assert!((m.mean - 1.0).abs() < 3.0 * m.se);
            let sq = PathStats::from_values(xs.iter().map(|x| (x - 1.0).powi(2)).collect()).unwrap();
            assert!((sq.mean - 0.01).abs() < 3.0 * sq.se, "{} +- {}", sq.mean, sq.se);
        }
    }

    #[test]
    fn unit_quadratic_functional() {
        let p = GameParams {
            sigma_a: 1.0,
            sigma_b: 1.0,
            x0: [0.0, 0.0],
            ..GameParams::default()
        };
        let sim = SimConfig {
            n_steps: 100,
            n_paths: 20_000,
            seed: 3,
        };
        let b = euler_maruyama(&gains(TimeGrid::new(1.0, 100).unwrap(), Matrix2::zeros()), &p, &sim).unwrap();
        let zero = pathwise_quadratic(&b, &[Matrix2::zeros(); 101]).unwrap();
        assert_eq!(zero.mean, 0.0);
        let id = pathwise_quadratic(&b, &[Matrix2::identity(); 101]).unwrap();
        assert!((id.mean - 1.0).abs() < 3.0 * id.se, "{} +- {}", id.mean, id.se);
    }

    #[test]
    fn deterministic_and_path_local() {
        let p = GameParams::default();
        let sim = SimConfig {
            n_steps: 20,
            n_paths: 64,
            seed: 11,
        };
        let g = gains(TimeGrid::new(1.0, 20).unwrap(), Matrix2::new(-1.0, 0.2, 0.1, -0.5));
        let a = euler_maruyama(&g, &p, &sim).unwrap();
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = single.install(|| euler_maruyama(&g, &p, &sim).unwrap());
        assert_eq!(a, b);
        let fewer = euler_maruyama(&g, &p, &SimConfig { n_paths: 10, ..sim }).unwrap();
        let keep: Vec<usize> = (0..10).collect();
        assert_eq!(a.select(&keep).unwrap().raw(), fewer.raw());
    }

    #[test]
    fn dump_round_trip_and_bad_magic() {
        let p = GameParams::default();
        let sim = SimConfig {
            n_steps: 5,
            n_paths: 3,
            seed: 2,
        };
        let b = euler_maruyama(&gains(TimeGrid::new(1.0, 5).unwrap(), Matrix2::zeros()), &p, &sim).unwrap();
        let mut buf = Vec::new();
        b.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"AFG1");
        assert_eq!(buf.len(), 4 + 4 + 8 * 4 + 3 * 12 * 8);
        let back = TrajectoryBatch::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.raw(), b.raw());
        assert_eq!(back.seed(), 2);
        buf[0] = b'X';
        assert!(TrajectoryBatch::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn rejects_step_mismatch() {
        let g = gains(TimeGrid::new(1.0, 10).unwrap(), Matrix2::zeros());
        let sim = SimConfig {
            n_steps: 20,
            n_paths: 1,
            seed: 0,
        };
        assert!(matches!(
            euler_maruyama(&g, &GameParams::default(), &sim),
            Err(GameError::GridMismatch { .. })
        ));
    }
}
