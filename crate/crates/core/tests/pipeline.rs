use std::fs;

use afgame::config::ExperimentConfig;
use afgame::experiments;
use afgame::simulate::TrajectoryBatch;

fn tractable(experiment: &str, sweep: &str) -> ExperimentConfig {
    let json = format!(
        r#"{{"experiment": "{experiment}", "af": {{"q_af": 10.0, "lam_af": 1.0, "max_iter": 30}},
            "sim": {{"n_paths": 400}}, "detect_reps": 400, "sweep": {sweep}}}"#
    );
    ExperimentConfig::from_json(&json, None).unwrap()
}

#[test]
fn belief_mean_sweep_writes_tables_and_dumps() {
    let cfg = tractable("fig2", r#"{"mu_b": [1.0, 1.5], "lam_af": [1.0]}"#);
    let out = experiments::run_fig2(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = out.write(dir.path(), &cfg).unwrap();
    let names: Vec<_> = files.iter().map(|f| f.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(
        names,
        [
            "fig2_variance.csv",
            "fig2_detect.csv",
            "fig2_trajectory.csv",
            "fig2_paths_af.bin",
            "fig2_paths_baseline.bin"
        ]
    );
    let v = out.table("fig2_variance.csv").unwrap();
    assert_eq!(v.len(), 2);
    assert!(v.column("var_true_af").unwrap().iter().all(|x| *x > 0.0));
    let dump = TrajectoryBatch::read_from(fs::File::open(dir.path().join("fig2_paths_af.bin")).unwrap()).unwrap();
    assert_eq!(dump.n_paths(), experiments::DUMP_PATHS);
    assert_eq!(dump.n_steps(), 100);
    assert_eq!(out.table("fig2_trajectory.csv").unwrap().len(), 101);
}

#[test]
fn grid_sweep_covers_cross_product() {
    let cfg = tractable("fig3", r#"{"mu_a": [1.0, 1.5], "mu_b": [1.0, 1.25, 1.5]}"#);
    let t = experiments::run_fig3(&cfg).unwrap();
    let t = t.table("fig3.csv").unwrap();
    assert_eq!(t.len(), 6);
    assert_eq!(t.column("mu_A").unwrap(), vec![1.0, 1.0, 1.0, 1.5, 1.5, 1.5]);
    assert_eq!(t.column("mu_B").unwrap(), vec![1.0, 1.25, 1.5, 1.0, 1.25, 1.5]);
}

#[test]
fn weight_sweep_at_zero_weight_keeps_start_point() {
    let cfg = tractable("fig4", r#"{"lam_af": [0.0], "rho": [0.1, 0.5]}"#);
    let sc = experiments::scenario(&cfg).unwrap();
    let view = sc.with_beliefs(cfg.beliefs_at(1.0, 1.0, 0.1).unwrap());
    let af = afgame::afcontrol::AFConfig {
        lam_af: 0.0,
        ..cfg.af.clone()
    };
    let p = experiments::evaluate_point(&view, &af, &cfg).unwrap();
    assert_eq!(p.solution.z_star, af.z0());
    assert!(p.solution.converged);
    let t = experiments::run_fig4(&cfg).unwrap();
    let t = t.table("fig4.csv").unwrap();
    assert_eq!(t.len(), 2);
    assert_eq!(t.column("var_true_af").unwrap()[0], p.variances.true_af.value);
}

#[test]
fn monte_carlo_fisher_mode_close_to_moments() {
    let mut cfg = tractable("custom", "{}");
    cfg.sim.n_paths = 20_000;
    let moments = experiments::fisher_outputs(&cfg).unwrap();
    cfg.fisher_mode = afgame::config::FisherMode::MonteCarlo;
    let mc = experiments::fisher_outputs(&cfg).unwrap();
    let (a, b) = (
        moments.table("fisher.csv").unwrap().column("i_mb_mb").unwrap(),
        mc.table("fisher.csv").unwrap().column("i_mb_mb").unwrap(),
    );
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 0.05 * x, "{x} vs {y}");
    }
}
