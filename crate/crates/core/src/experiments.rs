//! Drivers behind the CLI: single-configuration reports and the three
//! parameter sweeps.

use std::path::{Path as FsPath, PathBuf};

use rayon::prelude::*;

use crate::afcontrol::{AFConfig, AFSolution};
use crate::config::{ExperimentConfig, FisherMode};
use crate::controls::{GainPath, SensitivityCoefficients};
use crate::detect::{detect, row_difference, DetectionReport};
use crate::error::{GameError, Result};
use crate::fisher::{fisher_mc, FisherMatrix};
use crate::report::{write_atomic, Cell, Table};
use crate::riccati::solve_riccati;
use crate::scenario::{Coefficients, Scenario, ScenarioView, Variance};
use crate::simulate::{euler_maruyama, SimConfig, TrajectoryBatch};

/// Paths kept in the trajectory dumps of the `fig2` experiment.
pub const DUMP_PATHS: usize = 100;

pub fn scenario(cfg: &ExperimentConfig) -> Result<Scenario> {
    Scenario::new(cfg.params, cfg.beliefs(), cfg.sim.n_steps, cfg.quadrature.rules()?)
}

/// The four pairings whose information is compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Play {
    Baseline,
    Af,
}

impl Play {
    pub fn name(self) -> &'static str {
        match self {
            Play::Baseline => "baseline",
            Play::Af => "af",
        }
    }
}

/// Gains with B's actual control (`true_b`) or with A's model of it.
pub fn play_gains(coeffs: &Coefficients, sol: Option<&AFSolution>, view: &ScenarioView, play: Play, true_b: bool) -> Result<GainPath> {
    let p = view.params();
    let row_b = if true_b {
        coeffs.avg.true_row_b(p)
    } else {
        coeffs.avg.proxy_row_b(p)
    };
    let row_a = match (play, sol) {
        (Play::Baseline, _) => coeffs.avg.baseline_row_a(p),
        (Play::Af, Some(s)) => s.v_row.clone(),
        (Play::Af, None) => return Err(GameError::invalid("play", "AF play needs a solution")),
    };
    crate::afcontrol::pair_rows(&row_a, &row_b, format!("{}/{}", play.name(), if true_b { "trueB" } else { "proxyB" }))
}

fn fisher_for(view: &ScenarioView, sens: &SensitivityCoefficients, gains: &GainPath, cfg: &ExperimentConfig) -> Result<FisherMatrix> {
    match cfg.fisher_mode {
        FisherMode::Moments => view.fisher(sens, gains, cfg.moment_scheme),
        FisherMode::MonteCarlo => {
            let batch = euler_maruyama(gains, view.params(), &cfg.sim)?;
            Ok(fisher_mc(sens, &batch, view.params(), view.grid())?.0)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Variances {
    pub true_af: Variance,
    pub proxy_af: Variance,
    pub true_base: Variance,
    pub proxy_base: Variance,
}

#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub coeffs: Coefficients,
    pub solution: AFSolution,
    pub variances: Variances,
}

/// AF optimization and the four variances at one set of beliefs.
pub fn evaluate_point(view: &ScenarioView, af: &AFConfig, cfg: &ExperimentConfig) -> Result<PointOutcome> {
    let coeffs = view.coefficients()?;
    let solution = view.optimize(&coeffs, af)?;
    let var = |play, true_b: bool| -> Result<Variance> {
        let gains = play_gains(&coeffs, Some(&solution), view, play, true_b)?;
        let sens = if true_b { &coeffs.truth } else { &coeffs.proxy };
        Variance::of(&fisher_for(view, sens, &gains, cfg)?)
    };
    let variances = Variances {
        true_af: var(Play::Af, true)?,
        proxy_af: var(Play::Af, false)?,
        true_base: var(Play::Baseline, true)?,
        proxy_base: var(Play::Baseline, false)?,
    };
    Ok(PointOutcome {
        coeffs,
        solution,
        variances,
    })
}

/// Simulated plays against B's actual control and the detector run on each.
pub struct DetectionPair {
    pub baseline: DetectionReport,
    pub af: DetectionReport,
    pub baseline_batch: TrajectoryBatch,
    pub af_batch: TrajectoryBatch,
}

/// Both plays share the seed, so the detector sees common noise.
pub fn detection_pair(view: &ScenarioView, coeffs: &Coefficients, sol: &AFSolution, cfg: &ExperimentConfig) -> Result<DetectionPair> {
    let p = view.params();
    let sim = SimConfig {
        n_paths: cfg.detect_reps,
        ..cfg.sim
    };
    let predicted = coeffs.avg.predicted_row_a(p);
    let run = |play: Play| -> Result<(DetectionReport, TrajectoryBatch)> {
        let gains = play_gains(coeffs, Some(sol), view, play, true)?;
        let batch = euler_maruyama(&gains, p, &sim)?;
        let row_a = gains.row_a();
        let drift = row_difference(&row_a, &predicted)?;
        let predicted = crate::afcontrol::resample(&predicted, row_a.per_step())?;
        Ok((detect(&batch, &predicted, Some(&drift), view.grid())?, batch))
    };
    let (baseline, baseline_batch) = run(Play::Baseline)?;
    let (af, af_batch) = run(Play::Af)?;
    Ok(DetectionPair {
        baseline,
        af,
        baseline_batch,
        af_batch,
    })
}

fn at_point<T>(label: String, r: Result<T>) -> Result<T> {
    r.map_err(|e| GameError::AtSweepPoint {
        point: label,
        source: Box::new(e),
    })
}

fn af_with_lambda(cfg: &ExperimentConfig, lam: f64) -> AFConfig {
    AFConfig {
        lam_af: lam,
        ..cfg.af.clone()
    }
}

/// Named output tables and raw files of one run.
#[derive(Debug, Clone, Default)]
pub struct Outputs {
    pub tables: Vec<(String, Table)>,
    pub blobs: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Writes all files under `dir` in a fixed order and returns their paths.
    pub fn write(&self, dir: &FsPath, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
        let hash = cfg.hash()?;
        let mut written = Vec::new();
        for (name, t) in &self.tables {
            let path = dir.join(name);
            t.write(&path, &hash, cfg.sim.seed)?;
            written.push(path);
        }
        for (name, bytes) in &self.blobs {
            let path = dir.join(name);
            write_atomic(&path, bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn lam_of(cfg: &ExperimentConfig) -> f64 {
    cfg.sweep.lam_af[0]
}

fn rho_of(cfg: &ExperimentConfig) -> f64 {
    cfg.sweep.rho[0]
}

fn dump(batch: &TrajectoryBatch) -> Result<Vec<u8>> {
    let keep: Vec<usize> = (0..batch.n_paths().min(DUMP_PATHS)).collect();
    let mut out = Vec::new();
    batch.select(&keep)?.write_to(&mut out)?;
    Ok(out)
}

/// Variance and detection along the sweep of A's belief mean about `m_B`.
pub fn run_fig2(cfg: &ExperimentConfig) -> Result<Outputs> {
    let sc = scenario(cfg)?;
    let mu_a = cfg.sweep.mu_a[0];
    let (lam, rho) = (lam_of(cfg), rho_of(cfg));
    let af = af_with_lambda(cfg, lam);
    let points: Vec<(PointOutcome, DetectionPair)> = cfg
        .sweep
        .mu_b
        .par_iter()
        .map(|&mu_b| {
            at_point(format!("mu_B={mu_b}"), (|| {
                let view = sc.with_beliefs(cfg.beliefs_at(mu_a, mu_b, rho)?);
                let out = evaluate_point(&view, &af, cfg)?;
                let det = detection_pair(&view, &out.coeffs, &out.solution, cfg)?;
                Ok((out, det))
            })())
        })
        .collect::<Result<_>>()?;
    let mut var = Table::new(&[
        "mu_B",
        "var_true_af",
        "var_proxy_af",
        "var_true_baseline",
        "var_proxy_baseline",
        "z1",
        "z2",
        "iterations",
        "converged",
    ]);
    let mut det = Table::new(&["mu_B", "daf_af", "daf_baseline"]);
    for (&mu_b, (o, d)) in cfg.sweep.mu_b.iter().zip(&points) {
        let v = &o.variances;
        var.push(vec![
            mu_b.into(),
            v.true_af.value.into(),
            v.proxy_af.value.into(),
            v.true_base.value.into(),
            v.proxy_base.value.into(),
            o.solution.z_star[0].into(),
            o.solution.z_star[1].into(),
            o.solution.iterations().into(),
            o.solution.converged.into(),
        ])?;
        det.push(vec![mu_b.into(), d.af.daf.into(), d.baseline.daf.into()])?;
    }
    let mut outputs = Outputs {
        tables: vec![("fig2_variance.csv".into(), var), ("fig2_detect.csv".into(), det)],
        blobs: Vec::new(),
    };
    // trajectories at the first sweep point
    let (o, d) = &points[0];
    let mut traj = Table::new(&["t", "xa_af", "xb_af", "ua_af", "xa_baseline", "xb_baseline", "ua_baseline"]);
    let rows_af = play_gains(&o.coeffs, Some(&o.solution), &sc.view(), Play::Af, true)?;
    let rows_base = play_gains(&o.coeffs, Some(&o.solution), &sc.view(), Play::Baseline, true)?;
    for k in 0..=sc.grid.steps() {
        let xa = d.af_batch.state(0, k);
        let xb = d.baseline_batch.state(0, k);
        let ua = (rows_af.k.node(k).row(0) * xa)[0];
        let ub = (rows_base.k.node(k).row(0) * xb)[0];
        traj.push(vec![sc.grid.t(k).into(), xa[0].into(), xa[1].into(), ua.into(), xb[0].into(), xb[1].into(), ub.into()])?;
    }
    outputs.tables.push(("fig2_trajectory.csv".into(), traj));
    outputs.blobs.push(("fig2_paths_af.bin".into(), dump(&d.af_batch)?));
    outputs.blobs.push(("fig2_paths_baseline.bin".into(), dump(&d.baseline_batch)?));
    Ok(outputs)
}

/// True variance over the grid of both belief means.
pub fn run_fig3(cfg: &ExperimentConfig) -> Result<Outputs> {
    let sc = scenario(cfg)?;
    let (lam, rho) = (lam_of(cfg), rho_of(cfg));
    let af = af_with_lambda(cfg, lam);
    let grid: Vec<(f64, f64)> = cfg
        .sweep
        .mu_a
        .iter()
        .flat_map(|&a| cfg.sweep.mu_b.iter().map(move |&b| (a, b)))
        .collect();
    let results: Vec<Variances> = grid
        .par_iter()
        .map(|&(mu_a, mu_b)| {
            at_point(format!("mu_A={mu_a}, mu_B={mu_b}"), (|| {
                let view = sc.with_beliefs(cfg.beliefs_at(mu_a, mu_b, rho)?);
                Ok(evaluate_point(&view, &af, cfg)?.variances)
            })())
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(&["mu_A", "mu_B", "var_true_af", "var_true_baseline"]);
    for (&(a, b), v) in grid.iter().zip(&results) {
        t.push(vec![a.into(), b.into(), v.true_af.value.into(), v.true_base.value.into()])?;
    }
    Ok(Outputs {
        tables: vec![("fig3.csv".into(), t)],
        blobs: Vec::new(),
    })
}

/// True and proxy variance against the information weight and belief spread.
pub fn run_fig4(cfg: &ExperimentConfig) -> Result<Outputs> {
    let sc = scenario(cfg)?;
    let (mu_a, mu_b) = (cfg.sweep.mu_a[0], cfg.sweep.mu_b[0]);
    let grid: Vec<(f64, f64)> = cfg
        .sweep
        .lam_af
        .iter()
        .flat_map(|&l| cfg.sweep.rho.iter().map(move |&r| (l, r)))
        .collect();
    let results: Vec<Variances> = grid
        .par_iter()
        .map(|&(lam, rho)| {
            at_point(format!("lambda={lam}, rho={rho}"), (|| {
                let view = sc.with_beliefs(cfg.beliefs_at(mu_a, mu_b, rho)?);
                Ok(evaluate_point(&view, &af_with_lambda(cfg, lam), cfg)?.variances)
            })())
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(&[
        "lambda",
        "rho",
        "var_true_af",
        "var_true_base",
        "var_proxy_af",
        "var_proxy_base",
        "ridged",
    ]);
    for (&(l, r), v) in grid.iter().zip(&results) {
        let ridged = v.true_af.ridged || v.true_base.ridged || v.proxy_af.ridged || v.proxy_base.ridged;
        t.push(vec![
            l.into(),
            r.into(),
            v.true_af.value.into(),
            v.true_base.value.into(),
            v.proxy_af.value.into(),
            v.proxy_base.value.into(),
            ridged.into(),
        ])?;
    }
    Ok(Outputs {
        tables: vec![("fig4.csv".into(), t)],
        blobs: Vec::new(),
    })
}

/// Full-information Riccati solution at the true couplings.
pub fn riccati_table(cfg: &ExperimentConfig) -> Result<Table> {
    let sc = scenario(cfg)?;
    let sol = solve_riccati(&sc.params, sc.params.m_a, sc.params.m_b, &sc.grid)?;
    let mut t = Table::new(&["t", "theta_a_11", "theta_a_12", "theta_a_22", "theta_b_11", "theta_b_12", "theta_b_22"]);
    for k in 0..=sc.grid.steps() {
        let (a, b) = (sol.theta_a.node(k), sol.theta_b.node(k));
        t.push(vec![
            sc.grid.t(k).into(),
            a[(0, 0)].into(),
            a[(0, 1)].into(),
            a[(1, 1)].into(),
            b[(0, 0)].into(),
            b[(0, 1)].into(),
            b[(1, 1)].into(),
        ])?;
    }
    Ok(t)
}

/// Averaged coefficients and the baseline gain schedule.
pub fn baseline_outputs(cfg: &ExperimentConfig, dump_paths: bool) -> Result<Outputs> {
    let sc = scenario(cfg)?;
    let view = sc.view();
    let c = view.coefficients()?;
    let gains = c.avg.baseline_gains(&sc.params)?;
    let mut t = Table::new(&[
        "t",
        "theta_a_bar_11",
        "theta_a_bar_12",
        "theta_b_tilde_12",
        "theta_b_tilde_22",
        "k_11",
        "k_12",
        "k_21",
        "k_22",
    ]);
    for k in 0..=sc.grid.steps() {
        let (a, b, g) = (c.avg.theta_a_bar.node(k), c.avg.theta_b_tilde.node(k), gains.k.node(k));
        t.push(vec![
            sc.grid.t(k).into(),
            a[(0, 0)].into(),
            a[(0, 1)].into(),
            b[(0, 1)].into(),
            b[(1, 1)].into(),
            g[(0, 0)].into(),
            g[(0, 1)].into(),
            g[(1, 0)].into(),
            g[(1, 1)].into(),
        ])?;
    }
    let mut out = Outputs {
        tables: vec![("baseline.csv".into(), t)],
        blobs: Vec::new(),
    };
    if dump_paths {
        let batch = euler_maruyama(&gains, &sc.params, &cfg.sim)?;
        let mut bytes = Vec::new();
        batch.write_to(&mut bytes)?;
        out.blobs.push(("baseline_paths.bin".into(), bytes));
    }
    Ok(out)
}

/// `theta^AF`, the feedback row and the ascent history.
pub fn af_outputs(cfg: &ExperimentConfig, dump_paths: bool) -> Result<Outputs> {
    let sc = scenario(cfg)?;
    let view = sc.view();
    let c = view.coefficients()?;
    let sol = view.optimize(&c, &cfg.af)?;
    let mut t = Table::new(&["t", "theta_af_11", "theta_af_12", "theta_af_22", "g12", "g22", "v_a", "v_b"]);
    let g = crate::afcontrol::resample(&sol.g, sol.theta_af.per_step())?;
    for k in 0..=sc.grid.steps() {
        let (th, gv, v) = (sol.theta_af.node(k), g.node(k), sol.v_row.node(k));
        t.push(vec![
            sc.grid.t(k).into(),
            th[(0, 0)].into(),
            th[(0, 1)].into(),
            th[(1, 1)].into(),
            gv[0].into(),
            gv[1].into(),
            v[0].into(),
            v[1].into(),
        ])?;
    }
    let mut h = Table::new(&["iteration", "z1", "z2", "j_af", "grad_norm"]);
    for (i, r) in sol.history.iter().enumerate() {
        h.push(vec![i.into(), r.z[0].into(), r.z[1].into(), r.j.into(), r.gradient.norm().into()])?;
    }
    let mut s = Table::new(&["z1", "z2", "j_af", "iterations", "converged"]);
    s.push(vec![
        sol.z_star[0].into(),
        sol.z_star[1].into(),
        sol.value.total.into(),
        sol.iterations().into(),
        sol.converged.into(),
    ])?;
    let mut out = Outputs {
        tables: vec![("af.csv".into(), t), ("af_history.csv".into(), h), ("af_summary.csv".into(), s)],
        blobs: Vec::new(),
    };
    if dump_paths {
        let batch = euler_maruyama(&sol.true_gains(&c.avg, &sc.params)?, &sc.params, &cfg.sim)?;
        let mut bytes = Vec::new();
        batch.write_to(&mut bytes)?;
        out.blobs.push(("af_paths.bin".into(), bytes));
    }
    Ok(out)
}

/// Fisher matrices and variances for both plays and both sensitivity kinds.
pub fn fisher_outputs(cfg: &ExperimentConfig) -> Result<Outputs> {
    let sc = scenario(cfg)?;
    let view = sc.view();
    let c = view.coefficients()?;
    let sol = view.optimize(&c, &cfg.af)?;
    let mut t = Table::new(&[
        "play", "kind", "i_mb_mb", "i_mb_mu", "i_mb_rho", "i_mu_mu", "i_mu_rho", "i_rho_rho", "variance", "ridged",
    ]);
    for play in [Play::Baseline, Play::Af] {
        for true_b in [true, false] {
            let gains = play_gains(&c, Some(&sol), &view, play, true_b)?;
            let sens = if true_b { &c.truth } else { &c.proxy };
            let f = fisher_for(&view, sens, &gains, cfg)?;
            let v = Variance::of(&f)?;
            let e = f.entries;
            t.push(vec![
                Cell::from(play.name()),
                Cell::from(if true_b { "true" } else { "proxy" }),
                e[(0, 0)].into(),
                e[(0, 1)].into(),
                e[(0, 2)].into(),
                e[(1, 1)].into(),
                e[(1, 2)].into(),
                e[(2, 2)].into(),
                v.value.into(),
                v.ridged.into(),
            ])?;
        }
    }
    Ok(Outputs {
        tables: vec![("fisher.csv".into(), t)],
        blobs: Vec::new(),
    })
}

/// Detector profile for one play, simulated or read from a dump.
pub fn detect_outputs(cfg: &ExperimentConfig, play: Play, input: Option<TrajectoryBatch>) -> Result<Outputs> {
    let sc = scenario(cfg)?;
    let view = sc.view();
    let c = view.coefficients()?;
    let sol = match play {
        Play::Af => Some(view.optimize(&c, &cfg.af)?),
        Play::Baseline => None,
    };
    let gains = play_gains(&c, sol.as_ref(), &view, play, true)?;
    let batch = match input {
        Some(b) => {
            b.grid().ensure_same(&sc.grid, "dump vs configured grid")?;
            b
        }
        None => euler_maruyama(
            &gains,
            &sc.params,
            &SimConfig {
                n_paths: cfg.detect_reps,
                ..cfg.sim
            },
        )?,
    };
    let row_a = gains.row_a();
    let predicted = crate::afcontrol::resample(&c.avg.predicted_row_a(&sc.params), row_a.per_step())?;
    let drift = row_difference(&row_a, &predicted)?;
    let rep = detect(&batch, &predicted, Some(&drift), &sc.grid)?;
    Ok(Outputs {
        tables: vec![(format!("detect_{}.csv", play.name()), detection_table(&rep)?)],
        blobs: Vec::new(),
    })
}

pub fn detection_table(rep: &DetectionReport) -> Result<Table> {
    let mut t = Table::new(&["t", "alpha1", "alpha2", "se1", "se2", "target1", "target2"]);
    let p = &rep.profile;
    let nan = vec![f64::NAN; rep.t.len()];
    let (t1, t2) = (rep.target1.as_ref().unwrap_or(&nan), rep.target2.as_ref().unwrap_or(&nan));
    for k in 0..rep.t.len() {
        t.push(vec![
            rep.t[k].into(),
            p.alpha1[k].into(),
            p.alpha2[k].into(),
            p.se1[k].into(),
            p.se2[k].into(),
            t1[k].into(),
            t2[k].into(),
        ])?;
    }
    Ok(t)
}
