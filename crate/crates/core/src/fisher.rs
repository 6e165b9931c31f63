//! True and proxy Fisher information of `(m_B, mu_A, rho_A)` and its
//! reduction to the marginal asymptotic variance of `m_B`.

use nalgebra::{Matrix2, Matrix3, Vector2};

use crate::controls::{GainPath, SensitivityCoefficients, SensitivityKind};
use crate::error::{GameError, Result};
use crate::grid::TimeGrid;
use crate::model::GameParams;
use crate::simulate::{pathwise_quadratic, TrajectoryBatch};

/// Condition number above which the nuisance block counts as singular.
pub const MAX_BLOCK_CONDITION: f64 = 1e12;

/// How second moments are propagated between grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentScheme {
    /// Exact moments of the Euler–Maruyama chain on the grid:
    /// `m' = (I + K dt) m`, `P' = (I + K dt) P (I + K dt)^T + Sigma Sigma^T dt`.
    #[default]
    EulerChain,
    /// RK4 on the continuous-time mean and Lyapunov ODEs.
    Rk4,
}

/// Mean and second moment of the state on the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPath {
    pub grid: TimeGrid,
    pub mean: Vec<Vector2<f64>>,
    pub second: Vec<Matrix2<f64>>,
}

impl MomentPath {
    pub fn covariance(&self, k: usize) -> Matrix2<f64> {
        self.second[k] - self.mean[k] * self.mean[k].transpose()
    }

    /// Trapezoidal `int_0^T tr(C(t) P(t)) dt` for a node schedule `C`.
    pub fn integrate_quadratic(&self, weights: &[Matrix2<f64>]) -> Result<f64> {
        if weights.len() != self.second.len() {
            return Err(GameError::GridMismatch {
                context: "quadratic weight schedule",
            });
        }
        Ok(self
            .grid
            .trapezoid(weights.iter().zip(&self.second).map(|(c, p)| (c * p).trace())))
    }
}

/// Propagates mean and second moment under `dX = K(t) X dt + Sigma dW` from
/// the deterministic start `x0`.
pub fn moment_path(gains: &GainPath, params: &GameParams, x0: Vector2<f64>, grid: &TimeGrid, scheme: MomentScheme) -> Result<MomentPath> {
    gains.grid().ensure_same(grid, "moment path gains")?;
    let sigma = params.sigma();
    let noise = sigma * sigma.transpose();
    let dt = grid.dt();
    let n = grid.steps();
    let mut mean = Vec::with_capacity(n + 1);
    let mut second = Vec::with_capacity(n + 1);
    let mut m = x0;
    let mut p = x0 * x0.transpose();
    mean.push(m);
    second.push(p);
    for k in 0..n {
        match scheme {
            MomentScheme::EulerChain => {
                let a = Matrix2::identity() + gains.k.node(k) * dt;
                m = a * m;
                p = a * p * a.transpose() + noise * dt;
            }
            MomentScheme::Rk4 => {
                let (k0, kh, k1) = (gains.k.node(k), gains.k.midpoint(k), gains.k.node(k + 1));
                let fm = |kk: &Matrix2<f64>, m: &Vector2<f64>| kk * m;
                let fp = |kk: &Matrix2<f64>, p: &Matrix2<f64>| kk * p + p * kk.transpose() + noise;
                let (m1, p1) = (fm(&k0, &m), fp(&k0, &p));
                let (m2, p2) = (fm(&kh, &(m + m1 * (0.5 * dt))), fp(&kh, &(p + p1 * (0.5 * dt))));
                let (m3, p3) = (fm(&kh, &(m + m2 * (0.5 * dt))), fp(&kh, &(p + p2 * (0.5 * dt))));
                let (m4, p4) = (fm(&k1, &(m + m3 * dt)), fp(&k1, &(p + p3 * dt)));
                m += (m1 + m2 * 2.0 + m3 * 2.0 + m4) * (dt / 6.0);
                p += (p1 + p2 * 2.0 + p3 * 2.0 + p4) * (dt / 6.0);
                p = 0.5 * (p + p.transpose());
            }
        }
        if !(m.iter().all(|v| v.is_finite()) && p.iter().all(|v| v.is_finite())) {
            return Err(GameError::NonFinite {
                context: "moment propagation",
                t: grid.t(k + 1),
            });
        }
        mean.push(m);
        second.push(p);
    }
    Ok(MomentPath { grid: *grid, mean, second })
}

/// Fisher information in the fixed ordering `(m_B, mu_A, rho_A)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub entries: Matrix3<f64>,
    pub kind: SensitivityKind,
    pub label: String,
}

impl FisherMatrix {
    pub fn new(entries: Matrix3<f64>, kind: SensitivityKind, label: impl Into<String>) -> Self {
        Self {
            entries: 0.5 * (entries + entries.transpose()),
            kind,
            label: label.into(),
        }
    }

    pub fn m_b_m_b(&self) -> f64 {
        self.entries[(0, 0)]
    }

    /// `I_{(mu_A, rho_A), m_B}`.
    pub fn cross(&self) -> Vector2<f64> {
        Vector2::new(self.entries[(1, 0)], self.entries[(2, 0)])
    }

    /// `I_{(mu_A, rho_A), (mu_A, rho_A)}`.
    pub fn nuisance(&self) -> Matrix2<f64> {
        self.entries.fixed_view::<2, 2>(1, 1).into_owned()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.entries.symmetric_eigenvalues().min()
    }
}

fn info_scale(params: &GameParams) -> Result<f64> {
    if !(params.sigma_b > 0.0) {
        return Err(GameError::invalid("sigma_b", "Fisher information needs sigma_b > 0"));
    }
    Ok(1.0 / (params.sigma_b * params.sigma_b * params.r_b * params.r_b))
}

/// Symmetrized `a_j a_k^T` on the nodes for every entry `(j, k)`, `j <= k`.
fn outer_schedules(sens: &SensitivityCoefficients) -> Vec<((usize, usize), Vec<Matrix2<f64>>)> {
    let nodes: Vec<Vec<Vector2<f64>>> = sens.a.iter().map(|a| a.nodes().collect()).collect();
    let mut out = Vec::with_capacity(6);
    for j in 0..3 {
        for k in j..3 {
            let sched = nodes[j]
                .iter()
                .zip(&nodes[k])
                .map(|(aj, ak)| {
                    let o = aj * ak.transpose();
                    0.5 * (o + o.transpose())
                })
                .collect();
            out.push(((j, k), sched));
        }
    }
    out
}

/// `I_jk = 1/(sigma_B^2 r_B^2) int_0^T a_j^T P a_k dt` with trapezoidal time
/// integration.
pub fn fisher_from_moments(sens: &SensitivityCoefficients, moments: &MomentPath, params: &GameParams, grid: &TimeGrid) -> Result<FisherMatrix> {
    sens.grid().ensure_same(grid, "sensitivities vs grid")?;
    moments.grid.ensure_same(grid, "moments vs grid")?;
    let scale = info_scale(params)?;
    let mut f = Matrix3::zeros();
    for ((j, k), sched) in outer_schedules(sens) {
        let v = scale * moments.integrate_quadratic(&sched)?;
        f[(j, k)] = v;
        f[(k, j)] = v;
    }
    Ok(FisherMatrix::new(f, sens.kind, "moments"))
}

/// Monte Carlo Fisher matrix with per-entry standard errors.
pub fn fisher_mc(sens: &SensitivityCoefficients, batch: &TrajectoryBatch, params: &GameParams, grid: &TimeGrid) -> Result<(FisherMatrix, Matrix3<f64>)> {
    if batch.n_paths() == 0 {
        return Err(GameError::Empty("trajectory batch"));
    }
    sens.grid().ensure_same(grid, "sensitivities vs grid")?;
    batch.grid().ensure_same(grid, "batch vs grid")?;
    let scale = info_scale(params)?;
    let mut f = Matrix3::zeros();
    let mut se = Matrix3::zeros();
    for ((j, k), sched) in outer_schedules(sens) {
        let st = pathwise_quadratic(batch, &sched)?;
        f[(j, k)] = scale * st.mean;
        f[(k, j)] = scale * st.mean;
        se[(j, k)] = scale * st.se;
        se[(k, j)] = scale * st.se;
    }
    Ok((FisherMatrix::new(f, sens.kind, format!("mc:{}", batch.label)), se))
}

/// Ridge `1e-10 * trace / 2` added to the nuisance block on request.
pub fn nuisance_ridge(f: &FisherMatrix) -> f64 {
    1e-10 * f.nuisance().trace() / 2.0
}

fn block_condition(block: &Matrix2<f64>) -> f64 {
    let eig = block.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `[I^{-1}]_{m_B, m_B}` through the Schur complement of the nuisance block.
pub fn asymptotic_variance(f: &FisherMatrix) -> Result<f64> {
    schur_variance(f, 0.0)
}

/// As [`asymptotic_variance`] with an explicit ridge on the nuisance block.
pub fn asymptotic_variance_with_ridge(f: &FisherMatrix) -> Result<f64> {
    schur_variance(f, nuisance_ridge(f))
}

fn schur_variance(f: &FisherMatrix, ridge: f64) -> Result<f64> {
    let block = f.nuisance() + Matrix2::identity() * ridge;
    let condition = block_condition(&block);
    if !(condition <= MAX_BLOCK_CONDITION) {
        return Err(GameError::SingularBlock { condition });
    }
    let b = f.cross();
    let inv = block.try_inverse().ok_or(GameError::SingularBlock { condition })?;
    let schur = f.m_b_m_b() - (b.transpose() * inv * b)[0];
    if !(schur > 0.0) {
        return Err(GameError::invalid(
            "fisher",
            format!("Schur complement {schur:e} is not positive"),
        ));
    }
    Ok(1.0 / schur)
}

/// `I_{m_B m_B} + 2 z^T I_{(mu,rho), m_B} + z^T I_{(mu,rho),(mu,rho)} z`.
pub fn variational_value(f: &FisherMatrix, z: &Vector2<f64>) -> f64 {
    f.m_b_m_b() + 2.0 * z.dot(&f.cross()) + (z.transpose() * f.nuisance() * z)[0]
}

/// Minimizer `-I_block^{-1} I_{(mu,rho), m_B}` of [`variational_value`].
pub fn variational_minimizer(f: &FisherMatrix) -> Result<Vector2<f64>> {
    let block = f.nuisance();
    let condition = block_condition(&block);
    if !(condition <= MAX_BLOCK_CONDITION) {
        return Err(GameError::SingularBlock { condition });
    }
    let inv = block.try_inverse().ok_or(GameError::SingularBlock { condition })?;
    Ok(-(inv * f.cross()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Path;
    use crate::simulate::{euler_maruyama, SimConfig};
    use proptest::prelude::*;

    fn fm(e: Matrix3<f64>) -> FisherMatrix {
        FisherMatrix::new(e, SensitivityKind::Truth, "test")
    }

    fn const_gains(grid: TimeGrid, k: Matrix2<f64>) -> GainPath {
        GainPath {
            k: Path::constant(grid, k),
            label: "const".into(),
        }
    }

    #[test]
    fn driftless_second_moment_closed_form() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let p = GameParams::default();
        let x0 = Vector2::new(1.0, 1.0);
        for scheme in [MomentScheme::EulerChain, MomentScheme::Rk4] {
            let mp = moment_path(&const_gains(grid, Matrix2::zeros()), &p, x0, &grid, scheme).unwrap();
            for (k, pk) in mp.second.iter().enumerate() {
                let want = x0 * x0.transpose() + Matrix2::identity() * (0.01 * grid.t(k));
                assert!((pk - want).abs().max() < 1e-14);
            }
        }
    }

    #[test]
    fn decaying_mean_closed_form() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let p = GameParams {
            sigma_a: 0.0,
            sigma_b: 0.0,
            ..GameParams::default()
        };
        let x0 = Vector2::new(1.0, 1.0);
        let mp = moment_path(&const_gains(grid, -Matrix2::identity()), &p, x0, &grid, MomentScheme::Rk4).unwrap();
        for (k, m) in mp.mean.iter().enumerate() {
            assert!((m - x0 * (-grid.t(k)).exp()).norm() < 1e-9);
        }
        let chain = moment_path(&const_gains(grid, -Matrix2::identity()), &p, x0, &grid, MomentScheme::EulerChain).unwrap();
        assert!((chain.mean[100][0] - 0.99f64.powi(100)).abs() < 1e-14);
    }

    #[test]
    fn unit_fisher_entry() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let p = GameParams {
            sigma_a: 1.0,
            sigma_b: 1.0,
            x0: [0.0, 0.0],
            ..GameParams::default()
        };
        let e1 = Path::constant(grid, Vector2::new(1.0, 0.0));
        let sens = SensitivityCoefficients {
            a: [e1.clone(), e1.clone(), e1],
            kind: SensitivityKind::Truth,
        };
        let mp = moment_path(&const_gains(grid, Matrix2::zeros()), &p, p.x0(), &grid, MomentScheme::EulerChain).unwrap();
        let f = fisher_from_moments(&sens, &mp, &p, &grid).unwrap();
        assert!((f.entries[(0, 1)] - 0.5).abs() < 1e-12);
        let batch = euler_maruyama(
            &const_gains(grid, Matrix2::zeros()),
            &p,
            &SimConfig {
                n_steps: 100,
                n_paths: 50_000,
                seed: 5,
            },
        )
        .unwrap();
        let (fmc, se) = fisher_mc(&sens, &batch, &p, &grid).unwrap();
        assert!((fmc.entries[(0, 0)] - 0.5).abs() < 3.0 * se[(0, 0)]);
    }

    #[test]
    fn zero_sensitivities_zero_information() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let p = GameParams::default();
        let sens = SensitivityCoefficients::zeros(grid, SensitivityKind::Proxy);
        let mp = moment_path(&const_gains(grid, Matrix2::zeros()), &p, p.x0(), &grid, MomentScheme::EulerChain).unwrap();
        assert_eq!(fisher_from_moments(&sens, &mp, &p, &grid).unwrap().entries, Matrix3::zeros());
        let batch = euler_maruyama(&const_gains(grid, Matrix2::zeros()), &p, &SimConfig { n_steps: 10, n_paths: 1, seed: 0 }).unwrap();
        assert_eq!(fisher_mc(&sens, &batch, &p, &grid).unwrap().0.entries, Matrix3::zeros());
    }

    #[test]
    fn schur_examples() {
        let v = asymptotic_variance(&fm(Matrix3::from_diagonal(&nalgebra::Vector3::new(2.0, 3.0, 4.0)))).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let f = fm(Matrix3::new(2.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0));
        assert!((asymptotic_variance(&f).unwrap() - 1.0).abs() < 1e-14);
        assert!((variational_value(&f, &Vector2::zeros()) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn singular_block_is_reported() {
        let f = fm(Matrix3::new(2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0 + 1e-14));
        assert!(matches!(asymptotic_variance(&f), Err(GameError::SingularBlock { .. })));
        assert!(asymptotic_variance_with_ridge(&f).is_ok());
    }

    fn random_pd() -> impl Strategy<Value = Matrix3<f64>> {
        proptest::collection::vec(-1.0f64..1.0, 9).prop_map(|v| {
            let a = Matrix3::from_row_slice(&v);
            a * a.transpose() + Matrix3::identity() * 0.05
        })
    }

    proptest! {
        #[test]
        fn schur_matches_full_inverse(e in random_pd()) {
            let f = fm(e);
            let v = asymptotic_variance(&f).unwrap();
            let inv = f.entries.try_inverse().unwrap();
            prop_assert!((v - inv[(0, 0)]).abs() < 1e-10 * inv[(0, 0)].max(1.0));
        }

        #[test]
        fn variational_identity(e in random_pd(), dz in proptest::collection::vec(-1.0f64..1.0, 2)) {
            let f = fm(e);
            let z = variational_minimizer(&f).unwrap();
            let at_min = variational_value(&f, &z);
            prop_assert!((at_min - 1.0 / asymptotic_variance(&f).unwrap()).abs() < 1e-10);
            let d = Vector2::new(dz[0], dz[1]);
            if d.norm() > 1e-6 {
                prop_assert!(variational_value(&f, &(z + d)) > at_min);
            }
        }

        #[test]
        fn nuisance_permutation_invariance(e in random_pd()) {
            let perm = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0);
            let a = asymptotic_variance(&fm(e)).unwrap();
            let b = asymptotic_variance(&fm(perm * e * perm)).unwrap();
            prop_assert!((a - b).abs() < 1e-10 * a.max(1.0));
        }
    }
}
