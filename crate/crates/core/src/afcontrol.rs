//! Player A's alignment-faking controller: the information-rewarded Riccati
//! equation, the resulting feedback row, the cost functional and the outer
//! ascent loop over the auxiliary vector `z`.

use nalgebra::{Matrix2, RowVector2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controls::{pair_gains, AveragedCoefficients, GainPath, RowPath, SensitivityCoefficients, VectorPath};
use crate::error::{GameError, Result};
use crate::fisher::{fisher_from_moments, fisher_mc, moment_path, variational_value, FisherMatrix, MomentScheme};
use crate::grid::{Path, TimeGrid};
use crate::model::GameParams;
use crate::ode::{rk4_backward, Stack};
use crate::riccati::{af_horizon_bound, MatrixPath};
use crate::simulate::{euler_maruyama, pathwise_quadratic, SimConfig};

/// Step of the central differences in `z`.
pub const GRADIENT_STEP: f64 = 1e-4;

/// Sign with which the rank-one information term enters the `theta^AF`
/// equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoSource {
    /// `+ (lambda / sigma_B^2) g g^T`: the reward lowers the running cost.
    #[default]
    Reward,
    /// `- (lambda / sigma_B^2) g g^T`: the term treated like a running cost.
    Penalty,
}

impl InfoSource {
    fn sign(self) -> f64 {
        match self {
            InfoSource::Reward => 1.0,
            InfoSource::Penalty => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AFConfig {
    pub q_af: f64,
    pub r_af: f64,
    pub lam_af: f64,
    pub z0: [f64; 2],
    pub alpha: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub info_source: InfoSource,
}

impl Default for AFConfig {
    fn default() -> Self {
        Self {
            q_af: 5.0,
            r_af: 1.0,
            lam_af: 2.5,
            z0: [0.0, 0.0],
            alpha: 0.05,
            eps: 1e-4,
            max_iter: 200,
            info_source: InfoSource::Reward,
        }
    }
}

impl AFConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_af >= 0.0 && self.q_af.is_finite()) {
            return Err(GameError::invalid("q_af", "must be finite and >= 0"));
        }
        if !(self.r_af > 0.0 && self.r_af.is_finite()) {
            return Err(GameError::invalid("r_af", "must be finite and > 0"));
        }
        if !(self.lam_af >= 0.0 && self.lam_af.is_finite()) {
            return Err(GameError::invalid("lam_af", "must be finite and >= 0"));
        }
        if !self.z0.iter().all(|v| v.is_finite()) {
            return Err(GameError::invalid("z0", "must be finite"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(GameError::invalid("alpha", "must be finite and > 0"));
        }
        if !(self.eps > 0.0) {
            return Err(GameError::invalid("eps", "must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(GameError::invalid("max_iter", "must be >= 1"));
        }
        Ok(())
    }

    pub fn z0(&self) -> Vector2<f64> {
        Vector2::new(self.z0[0], self.z0[1])
    }
}

/// `(g_12, g_22)` on every sample of the proxy sensitivities.
pub fn g_path(z: &Vector2<f64>, proxy: &SensitivityCoefficients, r_b: f64) -> Result<VectorPath> {
    let [d_mb, d_mu, d_rho] = &proxy.a;
    let partial = d_mu.zip_with(d_rho, |mu, rho| mu * z[0] + rho * z[1])?;
    partial.zip_with(d_mb, |p, mb| (p + mb) / r_b)
}

/// `(g_12, g_22)` at grid node `k`.
pub fn g_vector(z: &Vector2<f64>, proxy: &SensitivityCoefficients, r_b: f64, k: usize) -> Vector2<f64> {
    let [d_mb, d_mu, d_rho] = &proxy.a;
    (d_mu.node(k) * z[0] + d_rho.node(k) * z[1] + d_mb.node(k)) / r_b
}

/// Integrates the `theta^AF` equation backward from zero.
///
/// Inputs carry `s` samples per interval; the solve takes `s / 2` RK4 steps
/// per interval, so the output carries `s / 2` samples per interval.
pub fn solve_theta_af(
    z: &Vector2<f64>,
    avg: &AveragedCoefficients,
    proxy: &SensitivityCoefficients,
    cfg: &AFConfig,
    params: &GameParams,
    grid: &TimeGrid,
) -> Result<MatrixPath> {
    avg.grid().ensure_same(grid, "averaged coefficients vs grid")?;
    proxy.grid().ensure_same(grid, "proxy sensitivities vs grid")?;
    let per_step = avg.theta_a_bar.per_step();
    if per_step % 2 != 0 || avg.theta_b_bar.per_step() != per_step || proxy.a[0].per_step() != per_step {
        return Err(GameError::GridMismatch {
            context: "theta^AF inputs need matching even resolution",
        });
    }
    let g = g_path(z, proxy, params.r_b)?;
    let s = cfg.q_af + cfg.r_af;
    let ra_m = Matrix2::new(1.0 / params.r_a, 0.0, 0.0, 0.0);
    let rb_m = Matrix2::new(0.0, 0.0, 0.0, 1.0 / params.r_b);
    let quad = params.r_a / s;
    let cross = cfg.q_af / s;
    let constant = cfg.q_af * cfg.r_af / (s * params.r_a);
    let info = cfg.info_source.sign() * cfg.lam_af / (params.sigma_b * params.sigma_b);
    if cfg.lam_af > 0.0 && !info.is_finite() {
        return Err(GameError::invalid("sigma_b", "information reward needs sigma_b > 0"));
    }
    let (ta, tb, gs) = (avg.theta_a_bar.samples(), avg.theta_b_bar.samples(), g.samples());
    let out_per_step = per_step / 2;
    let n = grid.steps() * out_per_step;
    let h = grid.dt() / out_per_step as f64;
    let states = rk4_backward(n, h, Stack::<1>::zero(), "theta^AF equation", |i, y| {
        let th = y.0[0];
        let (a, b, gv) = (ta[i], tb[i], gs[i]);
        let mut rhs = th * ra_m * th * quad + (th * ra_m * a + a * ra_m * th) * cross + th * rb_m * b + b * rb_m * th
            - a * ra_m * a * constant;
        if info != 0.0 {
            rhs += gv * gv.transpose() * info;
        }
        Stack([rhs])
    })?;
    Path::from_values(*grid, out_per_step, states.into_iter().map(|s| s.0[0]).collect())
}

/// Row of `v*(t, x) = -(1/(q+r)) [(q / r_A) theta_bar^A row + theta^AF row] x`.
pub fn af_gains(theta_af: &MatrixPath, avg: &AveragedCoefficients, cfg: &AFConfig, params: &GameParams, grid: &TimeGrid) -> Result<RowPath> {
    theta_af.grid().ensure_same(grid, "theta^AF vs grid")?;
    let bar = resample(&avg.theta_a_bar, theta_af.per_step())?;
    let s = cfg.q_af + cfg.r_af;
    let w = cfg.q_af / params.r_a;
    bar.zip_with(theta_af, |a, f| {
        RowVector2::new(w * a[(0, 0)] + f[(0, 0)], w * a[(0, 1)] + f[(0, 1)]) * (-1.0 / s)
    })
}

/// Subsamples a path onto a coarser resolution that divides its own.
pub(crate) fn resample<T: Copy>(p: &Path<T>, per_step: usize) -> Result<Path<T>> {
    if per_step == p.per_step() {
        return Ok(p.clone());
    }
    if per_step == 0 || p.per_step() % per_step != 0 {
        return Err(GameError::GridMismatch {
            context: "incompatible path resolutions",
        });
    }
    let stride = p.per_step() / per_step;
    Path::from_values(*p.grid(), per_step, p.samples().iter().step_by(stride).copied().collect())
}

/// Stacks a player-A row with a player-B row after bringing both to a common
/// resolution.
pub fn pair_rows(row_a: &RowPath, row_b: &RowPath, label: impl Into<String>) -> Result<GainPath> {
    let per_step = row_a.per_step().min(row_b.per_step());
    pair_gains(&resample(row_a, per_step)?, &resample(row_b, per_step)?, label)
}

/// How [`eval_jaf`] computes expectations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalMode {
    Moments(MomentScheme),
    MonteCarlo(SimConfig),
}

impl Default for EvalMode {
    fn default() -> Self {
        EvalMode::Moments(MomentScheme::default())
    }
}

/// Breakdown of one cost evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct JafValue {
    /// `E int q (v - u_bar)^2 + r v^2 dt`.
    pub effort: f64,
    /// Value of the variational form at `z` under the proxy information.
    pub information: f64,
    pub total: f64,
    /// Standard error of `effort` in Monte Carlo mode.
    pub effort_se: Option<f64>,
    pub proxy_fisher: FisherMatrix,
}

fn effort_weights(v: &RowPath, u_bar: &RowPath, cfg: &AFConfig) -> Result<Vec<Matrix2<f64>>> {
    let u = resample(u_bar, v.per_step())?;
    let w = v.zip_with(&u, |v, u| {
        let d = v - u;
        d.transpose() * d * cfg.q_af + v.transpose() * v * cfg.r_af
    })?;
    Ok(w.nodes().collect())
}

/// `J^AF[v, z]` with A playing `v_row` against its model of B.
#[allow(clippy::too_many_arguments)]
pub fn eval_jaf(
    z: &Vector2<f64>,
    v_row: &RowPath,
    avg: &AveragedCoefficients,
    proxy: &SensitivityCoefficients,
    cfg: &AFConfig,
    params: &GameParams,
    grid: &TimeGrid,
    mode: &EvalMode,
) -> Result<JafValue> {
    let gains = pair_rows(v_row, &avg.proxy_row_b(params), "af/proxyB")?;
    let weights = effort_weights(v_row, &avg.baseline_row_a(params), cfg)?;
    let (effort, effort_se, fisher) = match mode {
        EvalMode::Moments(scheme) => {
            let mp = moment_path(&gains, params, params.x0(), grid, *scheme)?;
            let effort = mp.integrate_quadratic(&weights)?;
            (effort, None, fisher_from_moments(proxy, &mp, params, grid)?)
        }
        EvalMode::MonteCarlo(sim) => {
            let batch = euler_maruyama(&gains, params, sim)?;
            let st = pathwise_quadratic(&batch, &weights)?;
            let (f, _) = fisher_mc(proxy, &batch, params, grid)?;
            (st.mean, Some(st.se), f)
        }
    };
    let information = variational_value(&fisher, z);
    Ok(JafValue {
        effort,
        information,
        total: effort - cfg.lam_af * information,
        effort_se,
        proxy_fisher: fisher,
    })
}

/// Inner solve at `z`: `theta^AF`, the feedback row and the cost.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub z: Vector2<f64>,
    pub theta_af: MatrixPath,
    pub v_row: RowPath,
    pub value: JafValue,
}

#[allow(clippy::too_many_arguments)]
pub fn inner_solve(
    z: &Vector2<f64>,
    avg: &AveragedCoefficients,
    proxy: &SensitivityCoefficients,
    cfg: &AFConfig,
    params: &GameParams,
    grid: &TimeGrid,
    mode: &EvalMode,
) -> Result<InnerSolution> {
    let theta_af = solve_theta_af(z, avg, proxy, cfg, params, grid)?;
    let v_row = af_gains(&theta_af, avg, cfg, params, grid)?;
    let value = eval_jaf(z, &v_row, avg, proxy, cfg, params, grid, mode)?;
    Ok(InnerSolution {
        z: *z,
        theta_af,
        v_row,
        value,
    })
}

/// One outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub z: Vector2<f64>,
    pub j: f64,
    pub gradient: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AFSolution {
    pub z_star: Vector2<f64>,
    pub theta_af: MatrixPath,
    pub g: VectorPath,
    pub v_row: RowPath,
    pub value: JafValue,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

impl AFSolution {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    /// Largest `|z|` visited, including the returned point.
    pub fn max_z_norm(&self) -> f64 {
        self.history
            .iter()
            .map(|r| r.z.norm())
            .fold(self.z_star.norm(), f64::max)
    }

    /// A playing `v*` against B's actual implementable control.
    pub fn true_gains(&self, avg: &AveragedCoefficients, params: &GameParams) -> Result<GainPath> {
        pair_rows(&self.v_row, &avg.true_row_b(params), "af/trueB")
    }

    /// A playing `v*` against its own model of B.
    pub fn proxy_gains(&self, avg: &AveragedCoefficients, params: &GameParams) -> Result<GainPath> {
        pair_rows(&self.v_row, &avg.proxy_row_b(params), "af/proxyB")
    }
}

/// Post-inner-solve objective `z -> J^AF[v*(z), z]`.
pub struct Objective<'a> {
    pub avg: &'a AveragedCoefficients,
    pub proxy: &'a SensitivityCoefficients,
    pub cfg: &'a AFConfig,
    pub params: &'a GameParams,
    pub grid: &'a TimeGrid,
    pub mode: EvalMode,
}

impl Objective<'_> {
    pub fn solve(&self, z: &Vector2<f64>) -> Result<InnerSolution> {
        inner_solve(z, self.avg, self.proxy, self.cfg, self.params, self.grid, &self.mode)
    }

    pub fn value(&self, z: &Vector2<f64>) -> Result<f64> {
        Ok(self.solve(z)?.value.total)
    }

    /// Central differences with a fresh inner solve at each probe.
    pub fn gradient(&self, z: &Vector2<f64>) -> Result<Vector2<f64>> {
        if self.cfg.lam_af == 0.0 {
            return Ok(Vector2::zeros());
        }
        let h = GRADIENT_STEP;
        let probes = [
            z + Vector2::new(h, 0.0),
            z - Vector2::new(h, 0.0),
            z + Vector2::new(0.0, h),
            z - Vector2::new(0.0, h),
        ];
        let vals: Vec<f64> = probes.par_iter().map(|p| self.value(p)).collect::<Result<_>>()?;
        Ok(Vector2::new((vals[0] - vals[1]) / (2.0 * h), (vals[2] - vals[3]) / (2.0 * h)))
    }
}

/// Gradient ascent in `z` on the post-inner-solve cost, stopping once two
/// consecutive values differ by at most `eps`.
pub fn optimize(
    cfg: &AFConfig,
    avg: &AveragedCoefficients,
    proxy: &SensitivityCoefficients,
    params: &GameParams,
    grid: &TimeGrid,
) -> Result<AFSolution> {
    optimize_with(cfg, avg, proxy, params, grid, EvalMode::default())
}

pub fn optimize_with(
    cfg: &AFConfig,
    avg: &AveragedCoefficients,
    proxy: &SensitivityCoefficients,
    params: &GameParams,
    grid: &TimeGrid,
    mode: EvalMode,
) -> Result<AFSolution> {
    cfg.validate()?;
    let obj = Objective {
        avg,
        proxy,
        cfg,
        params,
        grid,
        mode,
    };
    let mut z = cfg.z0();
    let mut j_prev;
    let mut j_curr = f64::INFINITY;
    let mut history = Vec::new();
    let mut converged = false;
    while history.len() < cfg.max_iter {
        j_prev = j_curr;
        j_curr = obj.value(&z)?;
        let gradient = obj.gradient(&z)?;
        history.push(IterationRecord { z, j: j_curr, gradient });
        z += gradient * cfg.alpha;
        if (j_curr - j_prev).abs() <= cfg.eps {
            converged = true;
            break;
        }
    }
    let inner = obj.solve(&z)?;
    Ok(AFSolution {
        z_star: z,
        g: g_path(&z, proxy, params.r_b)?,
        theta_af: inner.theta_af,
        v_row: inner.v_row,
        value: inner.value,
        history,
        converged,
    })
}

/// Existence horizon of the `theta^AF` equation for `|z| < radius`, with
/// `c_theta` the largest Frobenius norm of the averaged coefficients and
/// `c_g` sampled on the circle of that radius.
pub fn af_existence_horizon(
    cfg: &AFConfig,
    avg: &AveragedCoefficients,
    proxy: &SensitivityCoefficients,
    params: &GameParams,
    radius: f64,
) -> Result<f64> {
    let norm = |p: &MatrixPath| p.samples().iter().map(|m| m.norm()).fold(0.0, f64::max);
    let c_theta = norm(&avg.theta_a_bar).max(norm(&avg.theta_b_bar));
    let mut c_g: f64 = 0.0;
    for i in 0..64 {
        let phi = i as f64 * std::f64::consts::TAU / 64.0;
        let z = Vector2::new(phi.cos(), phi.sin()) * radius;
        let g = g_path(&z, proxy, params.r_b)?;
        c_g = g.samples().iter().map(|v| v.norm()).fold(c_g, f64::max);
    }
    let (pa, pb) = (avg.beliefs.prior_a, avg.beliefs.prior_b);
    let c_a = pa.lo.abs().max(pa.hi.abs());
    let c_b = pb.lo.abs().max(pb.hi.abs());
    Ok(af_horizon_bound(params, cfg.q_af, cfg.r_af, cfg.lam_af, c_theta, c_g, c_a, c_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controls::Rules;
    use crate::scenario::{beliefs, Coefficients, Scenario};

    fn fixture(steps: usize) -> (Scenario, Coefficients) {
        let sc = Scenario::new(GameParams::default(), beliefs(1.0, 1.0, 0.1).unwrap(), steps, Rules::new(32, 16).unwrap())
            .unwrap();
        let c = sc.view().coefficients().unwrap();
        (sc, c)
    }

    fn cfg(q_af: f64, lam_af: f64) -> AFConfig {
        AFConfig {
            q_af,
            lam_af,
            ..AFConfig::default()
        }
    }

    fn max_abs(p: &MatrixPath) -> f64 {
        p.samples().iter().map(|m| m.abs().max()).fold(0.0, f64::max)
    }

    #[test]
    fn no_tracking_no_reward_means_no_deviation() {
        let (sc, c) = fixture(50);
        let cfg = cfg(0.0, 0.0);
        let th = solve_theta_af(&Vector2::new(0.3, -0.2), &c.avg, &c.proxy, &cfg, &sc.params, &sc.grid).unwrap();
        assert_eq!(max_abs(&th), 0.0);
        let row = af_gains(&th, &c.avg, &cfg, &sc.params, &sc.grid).unwrap();
        assert!(row.samples().iter().all(|r| r.norm() == 0.0));
    }

    #[test]
    fn without_reward_z_is_irrelevant() {
        let (sc, c) = fixture(50);
        let cfg = cfg(5.0, 0.0);
        let a = solve_theta_af(&Vector2::zeros(), &c.avg, &c.proxy, &cfg, &sc.params, &sc.grid).unwrap();
        let b = solve_theta_af(&Vector2::new(1.5, -0.7), &c.avg, &c.proxy, &cfg, &sc.params, &sc.grid).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.terminal(), Matrix2::zeros());
    }

    #[test]
    fn g_is_affine_and_vanishes_at_horizon() {
        let (sc, c) = fixture(50);
        let rb = sc.params.r_b;
        let (z1, z2) = (Vector2::new(0.4, -1.1), Vector2::new(-0.3, 0.8));
        let n = sc.grid.steps();
        for k in [0, 7, n] {
            let lhs = g_vector(&(z1 + z2), &c.proxy, rb, k);
            let rhs = g_vector(&z1, &c.proxy, rb, k) + g_vector(&z2, &c.proxy, rb, k) - g_vector(&Vector2::zeros(), &c.proxy, rb, k);
            assert!((lhs - rhs).norm() < 1e-14);
        }
        assert_eq!(g_vector(&z1, &c.proxy, rb, n), Vector2::zeros());
        let at0 = g_vector(&Vector2::zeros(), &c.proxy, rb, 3);
        assert!((at0 - c.proxy.a[0].node(3) / rb).norm() < 1e-15);
    }

    #[test]
    fn vanishing_effort_weight_recovers_baseline() {
        let (sc, c) = fixture(50);
        let cfg = AFConfig {
            r_af: 1e-10,
            ..cfg(5.0, 0.0)
        };
        let th = solve_theta_af(&Vector2::zeros(), &c.avg, &c.proxy, &cfg, &sc.params, &sc.grid).unwrap();
        let row = af_gains(&th, &c.avg, &cfg, &sc.params, &sc.grid).unwrap();
        let base = resample(&c.avg.baseline_row_a(&sc.params), row.per_step()).unwrap();
        for (a, b) in row.samples().iter().zip(base.samples()) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    // With the reward sign, x0' theta(0) x0 + int tr(Sigma Sigma' theta) is
    // the optimal cost; with the penalty sign it is the cost plus twice the
    // reward.
    #[test]
    fn value_function_matches_evaluated_cost() {
        let (sc, c) = fixture(400);
        let p = sc.params;
        let z = Vector2::new(-1.0, 0.5);
        let noise = p.sigma() * p.sigma().transpose();
        for source in [InfoSource::Reward, InfoSource::Penalty] {
            let cfg = AFConfig {
                info_source: source,
                ..cfg(5.0, 0.5)
            };
            let th = solve_theta_af(&z, &c.avg, &c.proxy, &cfg, &p, &sc.grid).unwrap();
            let row = af_gains(&th, &c.avg, &cfg, &p, &sc.grid).unwrap();
            let val = eval_jaf(&z, &row, &c.avg, &c.proxy, &cfg, &p, &sc.grid, &EvalMode::Moments(MomentScheme::Rk4)).unwrap();
            let x0 = p.x0();
            let value_fn = (x0.transpose() * th.initial() * x0)[0] + sc.grid.trapezoid(th.nodes().map(|t| (noise * t).trace()));
            let cost = match source {
                InfoSource::Reward => val.total,
                InfoSource::Penalty => val.effort + cfg.lam_af * val.information,
            };
            assert!((cost - value_fn).abs() < 1e-5 * value_fn.abs().max(1.0), "{source:?}: {cost} vs {value_fn}");
        }
    }

    #[test]
    fn v_star_is_optimal_among_perturbed_rows() {
        let (sc, c) = fixture(100);
        let p = sc.params;
        let cfg = cfg(5.0, 0.5);
        let z = Vector2::new(-0.5, 0.2);
        let th = solve_theta_af(&z, &c.avg, &c.proxy, &cfg, &p, &sc.grid).unwrap();
        let row = af_gains(&th, &c.avg, &cfg, &p, &sc.grid).unwrap();
        let mode = EvalMode::Moments(MomentScheme::Rk4);
        let best = eval_jaf(&z, &row, &c.avg, &c.proxy, &cfg, &p, &sc.grid, &mode).unwrap().total;
        for d in [RowVector2::new(0.05, 0.0), RowVector2::new(0.0, -0.05), RowVector2::new(-0.03, 0.03)] {
            let other = row.map(|r| r + d);
            let j = eval_jaf(&z, &other, &c.avg, &c.proxy, &cfg, &p, &sc.grid, &mode).unwrap().total;
            assert!(j > best, "{j} <= {best}");
        }
    }

    #[test]
    fn cost_is_quadratic_in_z_for_frozen_gains() {
        let (sc, c) = fixture(50);
        let p = sc.params;
        let cfg = cfg(5.0, 1.0);
        let th = solve_theta_af(&Vector2::zeros(), &c.avg, &c.proxy, &cfg, &p, &sc.grid).unwrap();
        let row = af_gains(&th, &c.avg, &cfg, &p, &sc.grid).unwrap();
        let j = |z1: f64| {
            eval_jaf(&Vector2::new(z1, 0.3), &row, &c.avg, &c.proxy, &cfg, &p, &sc.grid, &EvalMode::default())
                .unwrap()
                .total
        };
        // third finite difference of a quadratic vanishes
        let d3 = j(1.5) - 3.0 * j(0.5) + 3.0 * j(-0.5) - j(-1.5);
        assert!(d3.abs() < 1e-10, "{d3}");
    }

    #[test]
    fn zero_reward_stops_immediately() {
        let (sc, c) = fixture(50);
        let cfg = AFConfig {
            z0: [0.4, -0.3],
            ..cfg(5.0, 0.0)
        };
        let sol = optimize(&cfg, &c.avg, &c.proxy, &sc.params, &sc.grid).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations() <= 2);
        assert_eq!(sol.z_star, cfg.z0());
    }

    #[test]
    fn ascent_history_is_nondecreasing() {
        let (sc, c) = fixture(100);
        let cfg = AFConfig {
            max_iter: 40,
            ..cfg(10.0, 1.0)
        };
        let sol = optimize(&cfg, &c.avg, &c.proxy, &sc.params, &sc.grid).unwrap();
        for w in sol.history.windows(2).skip(1) {
            assert!(w[1].j >= w[0].j - 1e-9, "{} -> {}", w[0].j, w[1].j);
        }
        assert_eq!(sol.theta_af.terminal(), Matrix2::zeros());
        assert!(sol.history.len() <= cfg.max_iter);
    }

    #[test]
    fn theta_af_is_continuous_in_z() {
        let (sc, c) = fixture(100);
        let cfg = cfg(5.0, 1.0);
        let z = Vector2::new(0.2, 0.1);
        let a = solve_theta_af(&z, &c.avg, &c.proxy, &cfg, &sc.params, &sc.grid).unwrap();
        let b = solve_theta_af(&(z + Vector2::new(1e-6, -1e-6)), &c.avg, &c.proxy, &cfg, &sc.params, &sc.grid).unwrap();
        assert!((a.initial() - b.initial()).abs().max() <= 1e-4);
    }

    #[test]
    fn rejects_bad_config() {
        for bad in [
            AFConfig { r_af: 0.0, ..AFConfig::default() },
            AFConfig { lam_af: -1.0, ..AFConfig::default() },
            AFConfig { alpha: 0.0, ..AFConfig::default() },
            AFConfig { max_iter: 0, ..AFConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
