//! Game constants, cost matrices, truncated-Gaussian beliefs and the
//! quadrature rules used for every expectation over a belief.

mod prior;
mod quadrature;

pub use prior::{expect_over_prior, normal_cdf, normal_pdf, PriorNodes, TruncGaussPrior};
pub use quadrature::{QuadratureKind, QuadratureRule};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};

/// Public constants of the two-player game.
///
/// Player A tracks `m_a * x_B`, player B tracks `m_b * x_A`; `q_*` weigh the
/// tracking error and `r_*` the control effort.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameParams {
    pub q_a: f64,
    pub q_b: f64,
    pub r_a: f64,
    pub r_b: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub m_a: f64,
    pub m_b: f64,
    pub horizon: f64,
    pub x0: [f64; 2],
}

impl Default for GameParams {
    fn default() -> Self {
        Self {
            q_a: 1.0,
            q_b: 1.0,
            r_a: 1.0,
            r_b: 1.0,
            sigma_a: 0.1,
            sigma_b: 0.1,
            m_a: 1.0,
            m_b: 1.0,
            horizon: 1.0,
            x0: [1.0, 1.0],
        }
    }
}

/// The four quadratic-form matrices of the running costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostMatrices {
    pub q_a: Matrix2<f64>,
    pub q_b: Matrix2<f64>,
    pub r_a: Matrix2<f64>,
    pub r_b: Matrix2<f64>,
}

impl GameParams {
    /// Checks strict positivity of weights, noise levels and horizon.
    ///
    /// The tracking weights `q_a`, `q_b` may be zero: the degenerate
    /// zero-source games are useful test fixtures.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("r_a", self.r_a),
            ("r_b", self.r_b),
            ("horizon", self.horizon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(GameError::invalid(name, format!("must be > 0, got {v}")));
            }
        }
        let nonneg = [
            ("q_a", self.q_a),
            ("q_b", self.q_b),
            ("sigma_a", self.sigma_a),
            ("sigma_b", self.sigma_b),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(GameError::invalid(name, format!("must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("m_a", self.m_a), ("m_b", self.m_b)] {
            if !v.is_finite() {
                return Err(GameError::invalid(name, "must be finite"));
            }
        }
        if !self.x0.iter().all(|v| v.is_finite()) {
            return Err(GameError::invalid("x0", "must be finite"));
        }
        Ok(())
    }

    pub fn x0(&self) -> Vector2<f64> {
        Vector2::new(self.x0[0], self.x0[1])
    }

    /// Noise loading `diag(sigma_a, sigma_b)`.
    pub fn sigma(&self) -> Matrix2<f64> {
        Matrix2::new(self.sigma_a, 0.0, 0.0, self.sigma_b)
    }

    pub fn with_couplings(&self, m_a: f64, m_b: f64) -> Self {
        Self { m_a, m_b, ..*self }
    }
}

/// Cost matrices evaluated at the true couplings of `params`.
pub fn cost_matrices(params: &GameParams) -> CostMatrices {
    cost_matrices_at(params, params.m_a, params.m_b)
}

/// Cost matrices for arbitrary couplings, used inside the prior averages.
pub fn cost_matrices_at(params: &GameParams, m_a: f64, m_b: f64) -> CostMatrices {
    let (qa, qb) = (params.q_a, params.q_b);
    CostMatrices {
        q_a: Matrix2::new(qa, -m_a * qa, -m_a * qa, m_a * m_a * qa),
        q_b: Matrix2::new(m_b * m_b * qb, -m_b * qb, -m_b * qb, qb),
        r_a: Matrix2::new(1.0 / params.r_a, 0.0, 0.0, 0.0),
        r_b: Matrix2::new(0.0, 0.0, 0.0, 1.0 / params.r_b),
    }
}
