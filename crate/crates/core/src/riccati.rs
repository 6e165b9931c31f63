//! Backward integration of the coupled Riccati system, its parameter
//! sensitivities, and the existence-horizon bounds.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Matrix2;

use crate::error::{GameError, Result};
use crate::grid::{Path, TimeGrid};
use crate::model::{cost_matrices_at, CostMatrices, GameParams};
use crate::ode::{rk4_backward, Stack};

/// RK4 substeps per grid interval; every substep sample is retained.
pub const SUBSTEPS: usize = 4;

pub type MatrixPath = Path<Matrix2<f64>>;

/// Value-function coefficients `theta_A`, `theta_B` of the full-information
/// equilibrium for one coupling pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiPath {
    pub theta_a: MatrixPath,
    pub theta_b: MatrixPath,
    pub m_a: f64,
    pub m_b: f64,
}

impl RiccatiPath {
    pub fn grid(&self) -> &TimeGrid {
        self.theta_a.grid()
    }

    /// Frobenius norm of `diag(theta_A, theta_B)` at every stored sample.
    pub fn block_norms(&self) -> Vec<f64> {
        self.theta_a
            .samples()
            .iter()
            .zip(self.theta_b.samples())
            .map(|(a, b)| (a.norm_squared() + b.norm_squared()).sqrt())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coupling {
    MA,
    MB,
}

/// Derivatives of `theta_A`, `theta_B` with respect to one coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityPath {
    pub d_theta_a: MatrixPath,
    pub d_theta_b: MatrixPath,
    pub wrt: Coupling,
}

/// Existence horizon `T(m_a, m_b)` below which the coupled system stays
/// inside the Frobenius ball of radius `1 + m_a^2 + m_b^2`.
pub fn horizon_bound(m_a: f64, m_b: f64, params: &GameParams) -> f64 {
    let radius = 1.0 + m_a * m_a + m_b * m_b;
    let c1 = 5.0 * (params.r_a.powi(-2) + params.r_b.powi(-2)).sqrt();
    let c2 = (params.q_a * params.q_a + params.q_b * params.q_b).sqrt() * radius;
    (c1 * c2).powf(-0.5) * (radius * (c2 / c1).powf(-0.5)).atan()
}

/// Existence horizon for the alignment-faking Riccati equation.
///
/// `c_theta` and `c_g` bound `||theta^i||_F` and `||g||` over the admissible
/// couplings and `||z|| < r`; `c_a`, `c_b` are the largest admissible
/// coupling magnitudes.
#[allow(clippy::too_many_arguments)]
pub fn af_horizon_bound(
    params: &GameParams,
    q_af: f64,
    r_af: f64,
    lam_af: f64,
    c_theta: f64,
    c_g: f64,
    c_a: f64,
    c_b: f64,
) -> f64 {
    let s = q_af + r_af;
    let (ra, rb) = (params.r_a, params.r_b);
    let d1 = 1.0 / (s * ra);
    let d2 = 2.0 * q_af * c_theta / (s * ra * ra) + 2.0 * c_theta / rb;
    let d3 = q_af * r_af * c_theta * c_theta / (s * ra.powi(3))
        + lam_af * c_g * c_g / (params.sigma_b * params.sigma_b);
    let quad = d1 + 0.5;
    let constant = 0.5 * d2 * d2 + d3;
    let second = if constant > 0.0 {
        FRAC_PI_2 / (quad * constant).sqrt()
    } else {
        f64::INFINITY
    };
    horizon_bound(c_a, c_b, params).min(second)
}

fn riccati_rhs(c: &CostMatrices, ta: &Matrix2<f64>, tb: &Matrix2<f64>) -> [Matrix2<f64>; 2] {
    let da = ta * c.r_a * ta + ta * c.r_b * tb + tb * c.r_b * ta - c.q_a;
    let db = tb * c.r_b * tb + ta * c.r_a * tb + tb * c.r_a * ta - c.q_b;
    [da, db]
}

fn check_grid_params(params: &GameParams, grid: &TimeGrid) -> Result<()> {
    params.validate()?;
    if (grid.horizon() - params.horizon).abs() > 1e-12 * params.horizon {
        return Err(GameError::GridMismatch {
            context: "grid horizon differs from game horizon",
        });
    }
    Ok(())
}

fn split_paths<const K: usize>(grid: &TimeGrid, states: &[Stack<K>], idx: usize) -> MatrixPath {
    Path::from_values(*grid, SUBSTEPS, states.iter().map(|s| s.0[idx]).collect())
        .expect("state count matches the substep grid")
}

/// Solves the coupled Riccati system backward from zero terminal data.
pub fn solve_riccati(params: &GameParams, m_a: f64, m_b: f64, grid: &TimeGrid) -> Result<RiccatiPath> {
    check_grid_params(params, grid)?;
    let c = cost_matrices_at(params, m_a, m_b);
    let n = grid.steps() * SUBSTEPS;
    let h = grid.dt() / SUBSTEPS as f64;
    let states = rk4_backward(n, h, Stack::<2>::zero(), "coupled Riccati system", |_, y| {
        Stack(riccati_rhs(&c, &y.0[0], &y.0[1]))
    })?;
    Ok(RiccatiPath {
        theta_a: split_paths(grid, &states, 0),
        theta_b: split_paths(grid, &states, 1),
        m_a,
        m_b,
    })
}

fn cost_derivatives(params: &GameParams, m_a: f64, m_b: f64, wrt: Coupling) -> (Matrix2<f64>, Matrix2<f64>) {
    match wrt {
        Coupling::MA => {
            let q = params.q_a;
            (Matrix2::new(0.0, -q, -q, 2.0 * m_a * q), Matrix2::zeros())
        }
        Coupling::MB => {
            let q = params.q_b;
            (Matrix2::zeros(), Matrix2::new(2.0 * m_b * q, -q, -q, 0.0))
        }
    }
}

/// Integrates the linearized Riccati system for the derivative of
/// `(theta_A, theta_B)` with respect to `wrt`.
///
/// The base solution is re-integrated jointly with the sensitivity so every
/// RK4 stage sees the exact base state; the result is the exact derivative
/// of the discrete base scheme. `base` must come from the same grid and
/// couplings.
pub fn solve_sensitivity(
    params: &GameParams,
    m_a: f64,
    m_b: f64,
    grid: &TimeGrid,
    wrt: Coupling,
    base: &RiccatiPath,
) -> Result<SensitivityPath> {
    base.grid().ensure_same(grid, "sensitivity base path")?;
    if base.m_a != m_a || base.m_b != m_b {
        return Err(GameError::invalid(
            "base",
            format!(
                "base path solved for ({}, {}), requested ({m_a}, {m_b})",
                base.m_a, base.m_b
            ),
        ));
    }
    Ok(solve_with_sensitivity(params, m_a, m_b, grid, wrt)?.1)
}

/// Joint base + sensitivity solve.
pub fn solve_with_sensitivity(
    params: &GameParams,
    m_a: f64,
    m_b: f64,
    grid: &TimeGrid,
    wrt: Coupling,
) -> Result<(RiccatiPath, SensitivityPath)> {
    solve_with_scaled_source(params, m_a, m_b, grid, wrt, 1.0)
}

/// [`solve_with_sensitivity`] with the forcing of the sensitivity equations
/// multiplied by `source_scale`; used to check that the validation suite
/// catches a corrupted derivative.
#[doc(hidden)]
pub fn solve_with_scaled_source(
    params: &GameParams,
    m_a: f64,
    m_b: f64,
    grid: &TimeGrid,
    wrt: Coupling,
    source_scale: f64,
) -> Result<(RiccatiPath, SensitivityPath)> {
    check_grid_params(params, grid)?;
    let c = cost_matrices_at(params, m_a, m_b);
    let (dqa, dqb) = cost_derivatives(params, m_a, m_b, wrt);
    let (dqa, dqb) = (dqa * source_scale, dqb * source_scale);
    let (ra, rb) = (c.r_a, c.r_b);
    let n = grid.steps() * SUBSTEPS;
    let h = grid.dt() / SUBSTEPS as f64;
    let states = rk4_backward(n, h, Stack::<4>::zero(), "Riccati sensitivity system", |_, y| {
        let [ta, tb, da, db] = y.0;
        let [fa, fb] = riccati_rhs(&c, &ta, &tb);
        let dfa = da * ra * ta + ta * ra * da + da * rb * tb + ta * rb * db + db * rb * ta + tb * rb * da - dqa;
        let dfb = db * rb * tb + tb * rb * db + da * ra * tb + ta * ra * db + db * ra * ta + tb * ra * da - dqb;
        Stack([fa, fb, dfa, dfb])
    })?;
    Ok((
        RiccatiPath {
            theta_a: split_paths(grid, &states, 0),
            theta_b: split_paths(grid, &states, 1),
            m_a,
            m_b,
        },
        SensitivityPath {
            d_theta_a: split_paths(grid, &states, 2),
            d_theta_b: split_paths(grid, &states, 3),
            wrt,
        },
    ))
}
