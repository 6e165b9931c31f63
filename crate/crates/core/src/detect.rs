//! Player B's residual-regression detector.
//!
//! B subtracts its predicted baseline increment for A from the observed
//! increments of `X^A`, regresses the residual on the state at every step
//! across repeated plays, and summarizes the coefficient profiles by their
//! largest magnitude.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::controls::RowPath;
use crate::error::{GameError, Result};
use crate::grid::TimeGrid;
use crate::simulate::TrajectoryBatch;

/// Gram matrices with a larger condition number are treated as singular.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Residuals `X^A_{k+1} - X^A_k - (row_k . X_k) dt`, path-major, `n_steps`
/// per path.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub n_paths: usize,
    pub n_steps: usize,
    pub values: Vec<f64>,
}

impl Residuals {
    pub fn get(&self, path: usize, k: usize) -> f64 {
        self.values[path * self.n_steps + k]
    }
}

pub fn residuals(batch: &TrajectoryBatch, predicted_row: &RowPath, grid: &TimeGrid) -> Result<Residuals> {
    batch.grid().ensure_same(grid, "batch vs grid")?;
    predicted_row.grid().ensure_same(grid, "predicted row vs grid")?;
    let n = grid.steps();
    let dt = grid.dt();
    let rows: Vec<_> = predicted_row.nodes().collect();
    let mut values = vec![0.0; batch.n_paths() * n];
    values.par_chunks_mut(n.max(1)).enumerate().for_each(|(p, out)| {
        for (k, slot) in out.iter_mut().enumerate() {
            let x = batch.state(p, k);
            let next = batch.state(p, k + 1);
            *slot = next[0] - x[0] - (rows[k] * x)[0] * dt;
        }
    });
    Ok(Residuals {
        n_paths: batch.n_paths(),
        n_steps: n,
        values,
    })
}

/// Per-step least-squares coefficients with classical standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProfile {
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub se1: Vec<f64>,
    pub se2: Vec<f64>,
    /// Steps whose Gram matrix was singular; their coefficients are zero.
    pub rank_deficient: Vec<usize>,
}

struct StepFit {
    alpha: Vector2<f64>,
    se: Vector2<f64>,
    singular: bool,
}

fn fit_step(xs: impl Iterator<Item = (Vector2<f64>, f64)> + Clone, n: usize) -> StepFit {
    let mut gram = Matrix2::zeros();
    let mut rhs = Vector2::zeros();
    for (x, r) in xs.clone() {
        gram += x * x.transpose();
        rhs += x * r;
    }
    let eig = gram.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let singular = !(lo > 0.0 && hi / lo <= MAX_GRAM_CONDITION);
    let inv = if singular { None } else { gram.try_inverse() };
    let Some(inv) = inv else {
        return StepFit {
            alpha: Vector2::zeros(),
            se: Vector2::zeros(),
            singular: true,
        };
    };
    let alpha = inv * rhs;
    let rss: f64 = xs.map(|(x, r)| (r - alpha.dot(&x)).powi(2)).sum();
    let s2 = if n > 2 { rss / (n - 2) as f64 } else { f64::NAN };
    StepFit {
        alpha,
        se: Vector2::new((s2 * inv[(0, 0)]).sqrt(), (s2 * inv[(1, 1)]).sqrt()),
        singular: false,
    }
}

/// OLS of the step-`k` residual on `(X^A_k, X^B_k)` across paths, without
/// intercept.
pub fn per_step_regression(res: &Residuals, batch: &TrajectoryBatch, grid: &TimeGrid) -> Result<RegressionProfile> {
    batch.grid().ensure_same(grid, "batch vs grid")?;
    if res.n_paths != batch.n_paths() || res.n_steps != grid.steps() {
        return Err(GameError::GridMismatch {
            context: "residuals vs batch",
        });
    }
    if res.n_paths < 3 {
        return Err(GameError::invalid("n_paths", "regression needs at least 3 paths"));
    }
    let fits: Vec<StepFit> = (0..res.n_steps)
        .into_par_iter()
        .map(|k| fit_step((0..res.n_paths).map(|p| (batch.state(p, k), res.get(p, k))), res.n_paths))
        .collect();
    let mut out = RegressionProfile {
        alpha1: Vec::with_capacity(fits.len()),
        alpha2: Vec::with_capacity(fits.len()),
        se1: Vec::with_capacity(fits.len()),
        se2: Vec::with_capacity(fits.len()),
        rank_deficient: Vec::new(),
    };
    for (k, f) in fits.iter().enumerate() {
        out.alpha1.push(f.alpha[0]);
        out.alpha2.push(f.alpha[1]);
        out.se1.push(f.se[0]);
        out.se2.push(f.se[1]);
        if f.singular {
            out.rank_deficient.push(k);
        }
    }
    Ok(out)
}

/// `max_k max(|alpha1_k|, |alpha2_k|)`.
pub fn detection_score(alpha1: &[f64], alpha2: &[f64]) -> Result<f64> {
    if alpha1.is_empty() && alpha2.is_empty() {
        return Err(GameError::Empty("coefficient profiles"));
    }
    Ok(alpha1.iter().chain(alpha2).fold(0.0, |m, a| m.max(a.abs())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub t: Vec<f64>,
    pub profile: RegressionProfile,
    /// Expected coefficients: the residual drift row times `dt`.
    pub target1: Option<Vec<f64>>,
    pub target2: Option<Vec<f64>>,
    pub daf: f64,
    pub n_reps: usize,
    pub dt: f64,
}

impl DetectionReport {
    /// Coefficients divided by `dt`, comparable across grids.
    pub fn alpha_rates(&self) -> (Vec<f64>, Vec<f64>) {
        let s = |v: &[f64]| v.iter().map(|a| a / self.dt).collect();
        (s(&self.profile.alpha1), s(&self.profile.alpha2))
    }

    /// Fraction of usable steps where both coefficients lie within `n_se`
    /// standard errors of their targets.
    pub fn coverage(&self, n_se: f64) -> Option<f64> {
        let (t1, t2) = (self.target1.as_ref()?, self.target2.as_ref()?);
        let p = &self.profile;
        let mut hit = 0usize;
        let mut total = 0usize;
        for k in 0..p.alpha1.len() {
            if p.rank_deficient.contains(&k) {
                continue;
            }
            total += 1;
            if (p.alpha1[k] - t1[k]).abs() <= n_se * p.se1[k] && (p.alpha2[k] - t2[k]).abs() <= n_se * p.se2[k] {
                hit += 1;
            }
        }
        (total > 0).then(|| hit as f64 / total as f64)
    }
}

/// Runs the detector on a batch. `drift_row`, when given, is the row of the
/// residual drift (the actual row of A minus `predicted_row`) and fills the
/// targets.
pub fn detect(batch: &TrajectoryBatch, predicted_row: &RowPath, drift_row: Option<&RowPath>, grid: &TimeGrid) -> Result<DetectionReport> {
    let res = residuals(batch, predicted_row, grid)?;
    let profile = per_step_regression(&res, batch, grid)?;
    let dt = grid.dt();
    let n = grid.steps();
    let (target1, target2) = match drift_row {
        Some(row) => {
            row.grid().ensure_same(grid, "drift row vs grid")?;
            let nodes: Vec<_> = row.nodes().take(n).collect();
            (
                Some(nodes.iter().map(|r| r[0] * dt).collect()),
                Some(nodes.iter().map(|r| r[1] * dt).collect()),
            )
        }
        None => (None, None),
    };
    let daf = detection_score(&profile.alpha1, &profile.alpha2)?;
    Ok(DetectionReport {
        t: (0..n).map(|k| grid.t(k)).collect(),
        profile,
        target1,
        target2,
        daf,
        n_reps: batch.n_paths(),
        dt,
    })
}

/// Row difference `a - b` on the coarser of the two resolutions.
pub fn row_difference(a: &RowPath, b: &RowPath) -> Result<RowPath> {
    let per_step = a.per_step().min(b.per_step());
    let a = crate::afcontrol::resample(a, per_step)?;
    let b = crate::afcontrol::resample(b, per_step)?;
    a.zip_with(&b, |x, y| x - y)
}
