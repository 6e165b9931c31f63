//! Oracle checks over every solver stage, each reporting its worst measured
//! error against a fixed tolerance.
//!
//! The individual checks are public so that tests can run them at other
//! sample sizes; [`run_validate`] runs the whole suite at desk scale.

use std::time::Instant;

use nalgebra::{Matrix3, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::afcontrol::{optimize_with, solve_theta_af, AFConfig, EvalMode, Objective};
use crate::controls::{averaged_coefficients, true_sensitivity_coefficients, Beliefs, Rules, SolveCache, GAMMA_MU_A, GAMMA_RHO_A};
use crate::detect::{detect, per_step_regression, residuals, row_difference};
use crate::error::{GameError, Result};
use crate::experiments::{play_gains, Play};
use crate::fisher::{
    asymptotic_variance, fisher_from_moments, fisher_mc, moment_path, variational_minimizer, variational_value,
    FisherMatrix, MomentScheme,
};
use crate::grid::{Path, TimeGrid};
use crate::model::{GameParams, QuadratureRule, TruncGaussPrior};
use crate::report::{Cell, Table};
use crate::riccati::{horizon_bound, solve_riccati, solve_with_scaled_source, Coupling, MatrixPath};
use crate::scenario::{beliefs, Coefficients, Scenario};
use crate::simulate::{euler_maruyama, SimConfig, TrajectoryBatch};

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
    pub seconds: f64,
}

impl Check {
    /// Passes when `measured <= tolerance`.
    pub fn at_most(name: &str, measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: measured <= tolerance,
            measured,
            tolerance,
            detail: detail.into(),
            seconds: 0.0,
        }
    }

    /// Passes when `measured >= threshold`.
    pub fn at_least(name: &str, measured: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            passed: measured >= threshold,
            ..Self::at_most(name, measured, threshold, detail)
        }
    }

    fn failed(name: &str, err: &GameError) -> Self {
        Self {
            name: name.into(),
            passed: false,
            measured: f64::NAN,
            tolerance: f64::NAN,
            detail: format!("error: {err}"),
            seconds: 0.0,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<28} measured={:.3e} tolerance={:.3e} ({:.1}s) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance,
            self.seconds,
            self.detail
        )
    }
}

/// Runs `f`, turning an error into a failed check and recording wall time.
pub fn timed(name: &str, f: impl FnOnce() -> Result<Check>) -> Check {
    let start = Instant::now();
    let mut c = f().unwrap_or_else(|e| Check::failed(name, &e));
    c.seconds = start.elapsed().as_secs_f64();
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self) -> Result<Table> {
        let mut t = Table::new(&["check", "passed", "measured", "tolerance", "seconds", "detail"]);
        for c in &self.checks {
            t.push(vec![
                Cell::from(c.name.as_str()),
                c.passed.into(),
                c.measured.into(),
                c.tolerance.into(),
                c.seconds.into(),
                Cell::Text(c.detail.replace(',', ";")),
            ])?;
        }
        Ok(t)
    }
}

/// Deliberate defects used to confirm that the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Forcing of the sensitivity equations scaled by 1.01.
    SensitivitySource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOptions {
    pub params: GameParams,
    pub steps: usize,
    pub paths: usize,
    pub detect_reps: usize,
    pub seed: u64,
    /// Controller used by the checks that need an AF play.
    pub af: AFConfig,
    /// Belief spread and controller of the ascent-versus-lattice check.
    pub ascent_rho: f64,
    pub ascent: AFConfig,
    pub fault: Fault,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            params: GameParams::default(),
            steps: 100,
            paths: 5_000,
            detect_reps: 10_000,
            seed: SimConfig::default().seed,
            af: AFConfig {
                q_af: 10.0,
                lam_af: 1.0,
                ..AFConfig::default()
            },
            ascent_rho: 0.5,
            ascent: AFConfig {
                q_af: 10.0,
                lam_af: 1.0,
                alpha: 2.0,
                eps: 1e-12,
                max_iter: 5_000,
                ..AFConfig::default()
            },
            fault: Fault::None,
        }
    }
}

fn max_entry_diff(a: &MatrixPath, b: &MatrixPath, stride: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..=a.grid().steps() {
        worst = worst.max((a.node(k) - b.node(k * stride)).amax());
    }
    worst
}

fn game_with_horizon(params: &GameParams, horizon: f64) -> GameParams {
    GameParams { horizon, ..*params }
}

/// `||diag(theta_A, theta_B)||_F <= 1 + m_A^2 + m_B^2` on a 5x5 grid of
/// couplings in `[-2, 2]^2`, each at 0.9 of its existence horizon.
/// Measured is the largest norm-to-radius ratio.
pub fn check_horizon_bound(params: &GameParams, steps: usize) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let (ma, mb) = (-2.0 + i as f64, -2.0 + j as f64);
            let p = game_with_horizon(params, 0.9 * horizon_bound(ma, mb, params));
            let grid = TimeGrid::new(p.horizon, steps)?;
            let sol = solve_riccati(&p, ma, mb, &grid)?;
            let radius = 1.0 + ma * ma + mb * mb;
            for n in sol.block_norms() {
                worst = worst.max(n / radius);
            }
        }
    }
    Ok(Check::at_most("horizon_bound", worst, 1.0, "25 coupling pairs, ratio norm/radius"))
}

/// Riccati solution at `steps` against a reference at `reference` steps.
pub fn check_riccati_refinement(params: &GameParams, steps: usize, reference: usize) -> Result<Check> {
    let stride = reference / steps;
    let coarse_grid = TimeGrid::new(params.horizon, steps)?;
    let fine_grid = TimeGrid::new(params.horizon, reference)?;
    let c = solve_riccati(params, params.m_a, params.m_b, &coarse_grid)?;
    let f = solve_riccati(params, params.m_a, params.m_b, &fine_grid)?;
    let err = max_entry_diff(&c.theta_a, &f.theta_a, stride).max(max_entry_diff(&c.theta_b, &f.theta_b, stride));
    Ok(Check::at_most("riccati_refinement", err, 1e-8, format!("N={steps} vs N={reference}")))
}

/// `theta^AF` at `z` with inputs and solve at `steps` against the same
/// pipeline at `reference` steps.
pub fn check_theta_af_refinement(
    params: &GameParams,
    beliefs: &Beliefs,
    af: &AFConfig,
    z: Vector2<f64>,
    steps: usize,
    reference: usize,
) -> Result<Check> {
    let stride = reference / steps;
    let solve = |n: usize| -> Result<MatrixPath> {
        let sc = Scenario::new(*params, *beliefs, n, Rules::default())?;
        let c = sc.view().coefficients()?;
        solve_theta_af(&z, &c.avg, &c.proxy, af, params, &sc.grid)
    };
    let err = max_entry_diff(&solve(steps)?, &solve(reference)?, stride);
    Ok(Check::at_most(
        "theta_af_refinement",
        err,
        1e-8,
        format!("q_af={} lambda={} N={steps} vs N={reference}", af.q_af, af.lam_af),
    ))
}

fn fd_error(exact: &MatrixPath, plus: &MatrixPath, minus: &MatrixPath, h: f64) -> f64 {
    exact
        .samples()
        .iter()
        .zip(plus.samples().iter().zip(minus.samples()))
        .map(|(e, (p, m))| (e - (p - m) / (2.0 * h)).amax())
        .fold(0.0, f64::max)
}

/// Coupling sensitivities of `(theta_A, theta_B)` against central
/// differences with step `h`.
pub fn check_coupling_sensitivities(params: &GameParams, steps: usize, h: f64, fault: Fault) -> Result<Check> {
    let grid = TimeGrid::new(params.horizon, steps)?;
    let scale = match fault {
        Fault::None => 1.0,
        Fault::SensitivitySource => 1.01,
    };
    let (ma, mb) = (params.m_a, params.m_b);
    let mut worst: f64 = 0.0;
    for wrt in [Coupling::MA, Coupling::MB] {
        let (_, sens) = solve_with_scaled_source(params, ma, mb, &grid, wrt, scale)?;
        let (dp, dm) = match wrt {
            Coupling::MA => ((ma + h, mb), (ma - h, mb)),
            Coupling::MB => ((ma, mb + h), (ma, mb - h)),
        };
        let p = solve_riccati(params, dp.0, dp.1, &grid)?;
        let m = solve_riccati(params, dm.0, dm.1, &grid)?;
        worst = worst
            .max(fd_error(&sens.d_theta_a, &p.theta_a, &m.theta_a, h))
            .max(fd_error(&sens.d_theta_b, &p.theta_b, &m.theta_b, h));
    }
    Ok(Check::at_most("coupling_sensitivities", worst, 1e-6, format!("central differences h={h:e}")))
}

/// Score-weighted derivatives of B's averaged coefficients in `(mu_A, rho_A)`
/// against central differences of the average itself.
pub fn check_belief_sensitivities(params: &GameParams, prior_a: &TruncGaussPrior, steps: usize, h: f64) -> Result<Check> {
    let grid = TimeGrid::new(params.horizon, steps)?;
    let cache = SolveCache::new(*params, grid)?;
    let rule = Rules::default().legendre;
    let sens = true_sensitivity_coefficients(&cache, params.m_b, prior_a, &rule)?;
    let average = |p: TruncGaussPrior| -> Result<Path<Vector2<f64>>> {
        let b = Beliefs {
            prior_a: p,
            prior_b: p,
        };
        let avg = averaged_coefficients(&cache, params.m_a, params.m_b, &b, &rule)?;
        Ok(avg.theta_b_tilde.map(|t| Vector2::new(t[(0, 1)], t[(1, 1)])))
    };
    let mut worst: f64 = 0.0;
    for (idx, shift) in [(GAMMA_MU_A, (h, 0.0)), (GAMMA_RHO_A, (0.0, h))] {
        let at = |s: f64| TruncGaussPrior::new(prior_a.mu + s * shift.0, prior_a.rho + s * shift.1, prior_a.lo, prior_a.hi);
        let (p, m) = (average(at(1.0)?)?, average(at(-1.0)?)?);
        for ((e, p), m) in sens.a[idx].samples().iter().zip(p.samples()).zip(m.samples()) {
            worst = worst.max((e - (p - m) / (2.0 * h)).amax());
        }
    }
    Ok(Check::at_most("belief_sensitivities", worst, 1e-6, format!("central differences h={h:e}")))
}

/// Zero-mean scores under quadrature and scores against differences of the
/// log density, over a set of truncated beliefs.
pub fn check_score_identities() -> Result<Check> {
    let rule = QuadratureRule::gauss_legendre(64, -1.0, 1.0)?;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (mu, rho, lo, hi) in [
        (1.0, 0.1, -5.0, 5.0),
        (0.0, 1.0, -1.0, 2.0),
        (1.8, 0.7, 0.0, 2.0),
        (-0.5, 2.0, -1.0, 1.0),
    ] {
        let prior = TruncGaussPrior::new(mu, rho, lo, hi)?;
        let nodes = prior.discretize(&rule)?;
        let mut e_mu = 0.0;
        let mut e_rho = 0.0;
        for (&m, &w) in nodes.nodes.iter().zip(&nodes.weights) {
            e_mu += w * prior.score_mu(m)?;
            e_rho += w * prior.score_rho(m)?;
        }
        worst = worst.max(e_mu.abs()).max(e_rho.abs());
        let shifted = |dm: f64, dr: f64| TruncGaussPrior::new(mu + dm, rho + dr, lo, hi);
        let (mp, mm) = (shifted(h, 0.0)?, shifted(-h, 0.0)?);
        let (rp, rm) = (shifted(0.0, h)?, shifted(0.0, -h)?);
        for i in 1..10 {
            let m = lo + (hi - lo) * i as f64 / 10.0;
            let fd_mu = (mp.log_pdf(m) - mm.log_pdf(m)) / (2.0 * h);
            let fd_rho = (rp.log_pdf(m) - rm.log_pdf(m)) / (2.0 * h);
            let scale = 1.0 + fd_mu.abs().max(fd_rho.abs());
            worst = worst
                .max((prior.score_mu(m)? - fd_mu).abs() / scale)
                .max((prior.score_rho(m)? - fd_rho).abs() / scale);
        }
    }
    Ok(Check::at_most("score_identities", worst, 1e-7, "E[s]=0 and s vs d log pdf"))
}

/// Largest entrywise gap between moment and Monte Carlo Fisher matrices in
/// units of the Monte Carlo standard error.
fn fisher_gap(moments: &FisherMatrix, mc: &FisherMatrix, se: &Matrix3<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..3 {
        for k in j..3 {
            let d = (moments.entries[(j, k)] - mc.entries[(j, k)]).abs();
            let z = if se[(j, k)] > 0.0 {
                d / se[(j, k)]
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
    }
    worst
}

/// Moment Fisher matrices for the baseline and AF plays (true and proxy
/// sensitivities) against Monte Carlo estimates from common paths.
pub fn check_fisher_cross(
    sc: &Scenario,
    coeffs: &Coefficients,
    af: &AFConfig,
    scheme: MomentScheme,
    sim: &SimConfig,
) -> Result<Check> {
    let view = sc.view();
    let sol = view.optimize(coeffs, af)?;
    let mut worst: f64 = 0.0;
    for play in [Play::Baseline, Play::Af] {
        for true_b in [true, false] {
            let gains = play_gains(coeffs, Some(&sol), &view, play, true_b)?;
            let sens = if true_b { &coeffs.truth } else { &coeffs.proxy };
            let mp = moment_path(&gains, &sc.params, sc.params.x0(), &sc.grid, scheme)?;
            let fm = fisher_from_moments(sens, &mp, &sc.params, &sc.grid)?;
            let batch = euler_maruyama(&gains, &sc.params, sim)?;
            let (fmc, se) = fisher_mc(sens, &batch, &sc.params, &sc.grid)?;
            worst = worst.max(fisher_gap(&fm, &fmc, &se));
        }
    }
    Ok(Check::at_most(
        "fisher_moments_vs_mc",
        worst,
        3.0,
        format!("{} paths, {scheme:?} moments, in standard errors", sim.n_paths),
    ))
}

/// `min_z` of the variational form against the Schur complement on random
/// positive definite matrices.
pub fn check_schur_identity(count: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let l = Matrix3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let m = l * l.transpose() + Matrix3::identity() * rng.random_range(0.01..1.0);
        let f = FisherMatrix::new(m, crate::controls::SensitivityKind::Truth, "random");
        let z = variational_minimizer(&f)?;
        let v = asymptotic_variance(&f)?;
        let min = variational_value(&f, &z);
        worst = worst.max((min - 1.0 / v).abs());
    }
    Ok(Check::at_most("schur_variational", worst, 1e-10, format!("{count} random matrices")))
}

/// Argmax of `z -> J^AF` over a 41x41 lattice on `center + [-2, 2]^2`,
/// with its value.
pub fn grid_search(obj: &Objective, center: Vector2<f64>) -> Result<(Vector2<f64>, f64)> {
    use rayon::prelude::*;
    let pts: Vec<Vector2<f64>> = (0..41)
        .flat_map(|i| (0..41).map(move |j| center + Vector2::new(-2.0 + 0.1 * i as f64, -2.0 + 0.1 * j as f64)))
        .collect();
    let vals: Vec<f64> = pts.par_iter().map(|z| obj.value(z)).collect::<Result<_>>()?;
    let best = vals
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v > vals[b] { i } else { b });
    Ok((pts[best], vals[best]))
}

/// Gradient ascent result against a lattice search centred on the lattice
/// point nearest to it. Measured is how far the best lattice value exceeds
/// the value at the ascent's answer.
pub fn check_ascent_vs_grid(sc: &Scenario, coeffs: &Coefficients, af: &AFConfig) -> Result<Check> {
    let mode = EvalMode::default();
    let sol = optimize_with(af, &coeffs.avg, &coeffs.proxy, &sc.params, &sc.grid, mode)?;
    let obj = Objective {
        avg: &coeffs.avg,
        proxy: &coeffs.proxy,
        cfg: af,
        params: &sc.params,
        grid: &sc.grid,
        mode,
    };
    let center = (sol.z_star * 10.0).map(f64::round) / 10.0;
    let (best, best_j) = grid_search(&obj, center)?;
    let gap = best_j - sol.value.total;
    Ok(Check::at_most(
        "ascent_vs_grid_search",
        gap,
        1e-8,
        format!(
            "z*=({:.3}; {:.3}) lattice=({:.3}; {:.3}) cells={:.2} iterations={} converged={}",
            sol.z_star[0],
            sol.z_star[1],
            best[0],
            best[1],
            (sol.z_star - best).amax() / 0.1,
            sol.iterations(),
            sol.converged
        ),
    ))
}

/// Residuals built to be exactly linear in the state are recovered by the
/// per-step regression.
pub fn check_planted_detection(steps: usize, n_paths: usize, seed: u64) -> Result<Check> {
    let grid = TimeGrid::new(1.0, steps)?;
    let dt = grid.dt();
    let predicted = Path::from_fn(grid, 1, |t| nalgebra::RowVector2::new(-1.0 - t, 0.5 * t));
    let planted = |k: usize| Vector2::new(0.3 * (k as f64 * 0.1).sin(), -0.2 + 0.01 * k as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(n_paths * 2 * (steps + 1));
    for _ in 0..n_paths {
        let mut xa: f64 = rng.sample(StandardNormal);
        for k in 0..=steps {
            let xb: f64 = rng.sample(StandardNormal);
            states.push(xa);
            states.push(xb);
            let x = Vector2::new(xa, xb);
            xa += (predicted.node(k) * x)[0] * dt + planted(k).dot(&x);
        }
    }
    let batch = TrajectoryBatch::from_raw(grid, n_paths, seed, states, "planted")?;
    let res = residuals(&batch, &predicted, &grid)?;
    let prof = per_step_regression(&res, &batch, &grid)?;
    let mut worst: f64 = 0.0;
    for k in 0..steps {
        let c = planted(k);
        worst = worst.max((prof.alpha1[k] - c[0]).abs()).max((prof.alpha2[k] - c[1]).abs());
    }
    Ok(Check::at_most("planted_detection", worst, 1e-10, format!("{n_paths} noiseless paths")))
}

/// Baseline-play regression coefficients within 3 standard errors of the
/// drift targets. Measured is the covered fraction of usable steps.
pub fn check_detection_coverage(sc: &Scenario, coeffs: &Coefficients, reps: usize, seed: u64) -> Result<Check> {
    let view = sc.view();
    let gains = play_gains(coeffs, None, &view, Play::Baseline, true)?;
    let sim = SimConfig {
        n_steps: sc.grid.steps(),
        n_paths: reps,
        seed,
    };
    let batch = euler_maruyama(&gains, &sc.params, &sim)?;
    let row_a = gains.row_a();
    let predicted = crate::afcontrol::resample(&coeffs.avg.predicted_row_a(&sc.params), row_a.per_step())?;
    let drift = row_difference(&row_a, &predicted)?;
    let rep = detect(&batch, &predicted, Some(&drift), &sc.grid)?;
    let cov = rep.coverage(3.0).ok_or(GameError::Empty("usable regression steps"))?;
    Ok(Check::at_least(
        "detection_coverage",
        cov,
        0.95,
        format!("{reps} baseline replications; {} rank-deficient steps", rep.profile.rank_deficient.len()),
    ))
}

/// Existence horizon of the `theta^AF` equation from sampled bounds.
pub fn check_af_horizon(sc: &Scenario, coeffs: &Coefficients, af: &AFConfig) -> Result<Check> {
    let t = crate::afcontrol::af_existence_horizon(af, &coeffs.avg, &coeffs.proxy, &sc.params, 2.0)?;
    Ok(Check::at_least("af_existence_horizon", t, f64::MIN_POSITIVE, "sampled constants, |z| < 2"))
}

/// Runs every check at the configured sizes.
pub fn run_validate(opts: &ValidationOptions) -> Result<ValidationReport> {
    let p = opts.params;
    let b = beliefs(1.0, 1.0, 0.1)?;
    let sc = Scenario::new(p, b, opts.steps, Rules::default())?;
    let coeffs = sc.view().coefficients()?;
    let sim = SimConfig {
        n_steps: opts.steps,
        n_paths: opts.paths,
        seed: opts.seed,
    };
    let checks = vec![
        timed("horizon_bound", || check_horizon_bound(&p, opts.steps)),
        timed("riccati_refinement", || check_riccati_refinement(&p, opts.steps, 1000)),
        timed("theta_af_refinement", || {
            check_theta_af_refinement(&p, &b, &opts.af, opts.af.z0(), opts.steps, 1000)
        }),
        timed("coupling_sensitivities", || check_coupling_sensitivities(&p, opts.steps, 1e-5, opts.fault)),
        timed("belief_sensitivities", || check_belief_sensitivities(&p, &b.prior_a, opts.steps, 1e-5)),
        timed("score_identities", check_score_identities),
        timed("fisher_moments_vs_mc", || {
            check_fisher_cross(&sc, &coeffs, &opts.af, MomentScheme::EulerChain, &sim)
        }),
        timed("schur_variational", || check_schur_identity(100, opts.seed)),
        timed("ascent_vs_grid_search", || {
            let sc = Scenario::new(p, beliefs(1.0, 1.0, opts.ascent_rho)?, opts.steps, Rules::default())?;
            check_ascent_vs_grid(&sc, &sc.view().coefficients()?, &opts.ascent)
        }),
        timed("planted_detection", || check_planted_detection(opts.steps, 50, opts.seed)),
        timed("detection_coverage", || check_detection_coverage(&sc, &coeffs, opts.detect_reps, opts.seed)),
        timed("af_existence_horizon", || check_af_horizon(&sc, &coeffs, &opts.af)),
    ];
    Ok(ValidationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn injected_fault_is_caught() {
        let p = GameParams::default();
        assert!(check_coupling_sensitivities(&p, 100, 1e-5, Fault::None).unwrap().passed);
        let bad = check_coupling_sensitivities(&p, 100, 1e-5, Fault::SensitivitySource).unwrap();
        assert!(!bad.passed, "{}", bad.line());
    }

    #[test]
    fn planted_residuals_recovered() {
        let c = check_planted_detection(50, 20, 3).unwrap();
        assert!(c.passed, "{}", c.line());
    }

    #[test]
    fn schur_identity_holds() {
        assert!(check_schur_identity(100, 11).unwrap().passed);
    }

    #[test]
    fn timed_turns_errors_into_failures() {
        let c = timed("x", || Err(GameError::Empty("nothing")));
        assert!(!c.passed);
        assert!(c.detail.contains("nothing"));
    }
}
