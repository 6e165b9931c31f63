//! Feedback gain schedules: full-information equilibrium, belief-averaged
//! implementable controls, player A's model of player B, and the parameter
//! sensitivities that feed the Fisher information.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{Matrix2, RowVector2, Vector2};
use rayon::prelude::*;

use crate::error::Result;
use crate::grid::{Path, TimeGrid};
use crate::model::{GameParams, PriorNodes, QuadratureRule, TruncGaussPrior};
use crate::riccati::{solve_riccati, solve_with_sensitivity, Coupling, MatrixPath, RiccatiPath, SensitivityPath};

pub type RowPath = Path<RowVector2<f64>>;
pub type VectorPath = Path<Vector2<f64>>;

/// Riccati solution at one coupling pair together with both sensitivities.
#[derive(Debug, Clone)]
pub struct NodeSolve {
    pub base: RiccatiPath,
    pub d_m_a: SensitivityPath,
    pub d_m_b: SensitivityPath,
}

/// Memoized node solves keyed by the exact coupling pair.
///
/// Every belief average touches the same quadrature nodes, so each pair is
/// integrated once per game and grid.
#[derive(Debug)]
pub struct SolveCache {
    params: GameParams,
    grid: TimeGrid,
    entries: Mutex<HashMap<(u64, u64), Arc<NodeSolve>>>,
}

impl SolveCache {
    pub fn new(params: GameParams, grid: TimeGrid) -> Result<Self> {
        params.validate()?;
        TimeGrid::new(params.horizon, grid.steps())?.ensure_same(&grid, "cache grid horizon")?;
        Ok(Self {
            params,
            grid,
            entries: Mutex::new(HashMap::new()),
        })
    }

    pub fn params(&self) -> &GameParams {
        &self.params
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn solve(&self, m_a: f64, m_b: f64) -> Result<NodeSolve> {
        let (base, d_m_a) = solve_with_sensitivity(&self.params, m_a, m_b, &self.grid, Coupling::MA)?;
        let (_, d_m_b) = solve_with_sensitivity(&self.params, m_a, m_b, &self.grid, Coupling::MB)?;
        Ok(NodeSolve { base, d_m_a, d_m_b })
    }

    pub fn get(&self, m_a: f64, m_b: f64) -> Result<Arc<NodeSolve>> {
        Ok(self.get_many(&[(m_a, m_b)])?.remove(0))
    }

    /// Returns the solves for `pairs` in order, integrating missing pairs in
    /// parallel.
    pub fn get_many(&self, pairs: &[(f64, f64)]) -> Result<Vec<Arc<NodeSolve>>> {
        let key = |&(a, b): &(f64, f64)| (a.to_bits(), b.to_bits());
        let missing: Vec<(f64, f64)> = {
            let map = self.entries.lock().expect("cache poisoned");
            let mut seen = std::collections::HashSet::new();
            pairs
                .iter()
                .filter(|p| !map.contains_key(&key(p)) && seen.insert(key(p)))
                .copied()
                .collect()
        };
        let solved: Vec<((u64, u64), NodeSolve)> = missing
            .par_iter()
            .map(|p| self.solve(p.0, p.1).map(|s| (key(p), s)))
            .collect::<Result<_>>()?;
        let mut map = self.entries.lock().expect("cache poisoned");
        for (k, s) in solved {
            map.entry(k).or_insert_with(|| Arc::new(s));
        }
        Ok(pairs.iter().map(|p| Arc::clone(&map[&key(p)])).collect())
    }
}

/// Linear state feedback `u = K(t) x` for both players, rows A then B.
#[derive(Debug, Clone, PartialEq)]
pub struct GainPath {
    pub k: Path<Matrix2<f64>>,
    pub label: String,
}

impl GainPath {
    pub fn grid(&self) -> &TimeGrid {
        self.k.grid()
    }

    pub fn row_a(&self) -> RowPath {
        self.k.map(|m| m.row(0).into_owned())
    }

    pub fn row_b(&self) -> RowPath {
        self.k.map(|m| m.row(1).into_owned())
    }
}

/// Player A's equilibrium row `-(1/r_A) (theta_11, theta_12)`.
pub fn row_a_from(theta_a: &MatrixPath, r_a: f64) -> RowPath {
    theta_a.map(|t| RowVector2::new(t[(0, 0)], t[(0, 1)]) * (-1.0 / r_a))
}

/// Player B's equilibrium row `-(1/r_B) (theta_12, theta_22)`.
pub fn row_b_from(theta_b: &MatrixPath, r_b: f64) -> RowPath {
    theta_b.map(|t| RowVector2::new(t[(0, 1)], t[(1, 1)]) * (-1.0 / r_b))
}

/// Stacks the two rows into a drift matrix path on the shared grid.
pub fn pair_gains(row_a: &RowPath, row_b: &RowPath, label: impl Into<String>) -> Result<GainPath> {
    let k = row_a.zip_with(row_b, |a, b| Matrix2::from_rows(&[*a, *b]))?;
    Ok(GainPath { k, label: label.into() })
}

/// Full-information equilibrium gains.
pub fn ne_gains(params: &GameParams, m_a: f64, m_b: f64, grid: &TimeGrid) -> Result<GainPath> {
    let sol = solve_riccati(params, m_a, m_b, grid)?;
    pair_gains(
        &row_a_from(&sol.theta_a, params.r_a),
        &row_b_from(&sol.theta_b, params.r_b),
        format!("ne({m_a},{m_b})"),
    )
}

/// The two beliefs: `prior_a` is B's belief about `m_A`, `prior_b` is A's
/// belief about `m_B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beliefs {
    pub prior_a: TruncGaussPrior,
    pub prior_b: TruncGaussPrior,
}

/// Belief-averaged value-function coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedCoefficients {
    /// `E_{pi^B}[theta^A(m_A, M_B)]`: A's implementable control.
    pub theta_a_bar: MatrixPath,
    /// `E_{pi^B}[theta^B(m_A, M_B)]`: A's model of B's control.
    pub theta_b_bar: MatrixPath,
    /// `E_{pi^A}[theta^B(M_A, m_B)]`: B's implementable control.
    pub theta_b_tilde: MatrixPath,
    /// `E_{pi^A}[theta^A(M_A, m_B)]`: B's prediction of A's baseline.
    pub theta_a_tilde: MatrixPath,
    pub beliefs: Beliefs,
    pub m_a: f64,
    pub m_b: f64,
    pub nodes: usize,
}

impl AveragedCoefficients {
    pub fn grid(&self) -> &TimeGrid {
        self.theta_a_bar.grid()
    }

    /// Baseline implementable play: A uses `theta_a_bar`, B uses `theta_b_tilde`.
    pub fn baseline_gains(&self, params: &GameParams) -> Result<GainPath> {
        pair_gains(&self.baseline_row_a(params), &self.true_row_b(params), "baseline/trueB")
    }

    pub fn baseline_row_a(&self, params: &GameParams) -> RowPath {
        row_a_from(&self.theta_a_bar, params.r_a)
    }

    /// B's actual control row.
    pub fn true_row_b(&self, params: &GameParams) -> RowPath {
        row_b_from(&self.theta_b_tilde, params.r_b)
    }

    /// A's model of B's control row.
    pub fn proxy_row_b(&self, params: &GameParams) -> RowPath {
        row_b_from(&self.theta_b_bar, params.r_b)
    }

    /// B's predicted row for A's baseline control.
    pub fn predicted_row_a(&self, params: &GameParams) -> RowPath {
        row_a_from(&self.theta_a_tilde, params.r_a)
    }
}

fn weighted<'a>(nodes: &PriorNodes, solves: &'a [Arc<NodeSolve>], pick: impl Fn(&'a NodeSolve) -> &'a MatrixPath) -> Result<MatrixPath> {
    Path::weighted_sum(solves.iter().zip(&nodes.weights).map(|(s, &w)| (pick(s), w)))
}

/// Belief averages of the equilibrium coefficients, one Riccati solve per
/// quadrature node.
pub fn averaged_coefficients(
    cache: &SolveCache,
    m_a: f64,
    m_b: f64,
    beliefs: &Beliefs,
    rule: &QuadratureRule,
) -> Result<AveragedCoefficients> {
    let nodes_b = beliefs.prior_b.discretize(rule)?;
    let nodes_a = beliefs.prior_a.discretize(rule)?;
    let pairs_b: Vec<_> = nodes_b.nodes.iter().map(|&mb| (m_a, mb)).collect();
    let pairs_a: Vec<_> = nodes_a.nodes.iter().map(|&ma| (ma, m_b)).collect();
    let over_b = cache.get_many(&pairs_b)?;
    let over_a = cache.get_many(&pairs_a)?;
    Ok(AveragedCoefficients {
        theta_a_bar: weighted(&nodes_b, &over_b, |s| &s.base.theta_a)?,
        theta_b_bar: weighted(&nodes_b, &over_b, |s| &s.base.theta_b)?,
        theta_b_tilde: weighted(&nodes_a, &over_a, |s| &s.base.theta_b)?,
        theta_a_tilde: weighted(&nodes_a, &over_a, |s| &s.base.theta_a)?,
        beliefs: *beliefs,
        m_a,
        m_b,
        nodes: rule.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityKind {
    /// Derivatives of B's actual implementable coefficients.
    Truth,
    /// Player A's stand-in built from its own belief.
    Proxy,
}

/// Index of each unknown in the parameter vector `(m_B, mu_A, rho_A)`.
pub const GAMMA_M_B: usize = 0;
pub const GAMMA_MU_A: usize = 1;
pub const GAMMA_RHO_A: usize = 2;

/// Per-parameter sensitivity vectors `a_j(t) = (d theta^B_12, d theta^B_22)`
/// for `j` over `(m_B, mu_A, rho_A)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityCoefficients {
    pub a: [VectorPath; 3],
    pub kind: SensitivityKind,
}

impl SensitivityCoefficients {
    pub fn grid(&self) -> &TimeGrid {
        self.a[0].grid()
    }

    pub fn zeros(grid: TimeGrid, kind: SensitivityKind) -> Self {
        let z = Path::constant(grid, Vector2::zeros());
        Self {
            a: [z.clone(), z.clone(), z],
            kind,
        }
    }

    fn from_matrices(m: [MatrixPath; 3], kind: SensitivityKind) -> Self {
        let pick = |p: &MatrixPath| p.map(|t| Vector2::new(t[(0, 1)], t[(1, 1)]));
        Self {
            a: [pick(&m[0]), pick(&m[1]), pick(&m[2])],
            kind,
        }
    }
}

/// Sensitivities of B's implementable coefficients `E_{pi^A}[theta^B(M_A, m_B)]`
/// in `(m_B, mu_A, rho_A)`, via score-weighted quadrature over the truncated
/// belief.
pub fn true_sensitivity_coefficients(
    cache: &SolveCache,
    m_b: f64,
    prior_a: &TruncGaussPrior,
    rule: &QuadratureRule,
) -> Result<SensitivityCoefficients> {
    let nodes = prior_a.discretize(rule)?;
    let pairs: Vec<_> = nodes.nodes.iter().map(|&ma| (ma, m_b)).collect();
    let solves = cache.get_many(&pairs)?;
    let d_mb = weighted(&nodes, &solves, |s| &s.d_m_b.d_theta_b)?;
    // Centering on the average leaves the exact expectation unchanged (the
    // scores have mean zero) and removes the quadrature error of E[s] != 0.
    let mean = weighted(&nodes, &solves, |s| &s.base.theta_b)?;
    let mut score_mu = Vec::with_capacity(nodes.len());
    let mut score_rho = Vec::with_capacity(nodes.len());
    for &m in &nodes.nodes {
        score_mu.push(prior_a.score_mu(m)?);
        score_rho.push(prior_a.score_rho(m)?);
    }
    let centered: Vec<MatrixPath> = solves
        .iter()
        .map(|s| s.base.theta_b.zip_with(&mean, |a, b| a - b))
        .collect::<Result<_>>()?;
    let d_mu = Path::weighted_sum(centered.iter().zip(&nodes.weights).zip(&score_mu).map(|((p, &w), &s)| (p, w * s)))?;
    let d_rho = Path::weighted_sum(centered.iter().zip(&nodes.weights).zip(&score_rho).map(|((p, &w), &s)| (p, w * s)))?;
    Ok(SensitivityCoefficients::from_matrices([d_mb, d_mu, d_rho], SensitivityKind::Truth))
}

/// Untruncated approximation of [`true_sensitivity_coefficients`] that writes
/// `M_A ~ mu_A + rho_A Z`; used to measure the effect of truncation.
pub fn true_sensitivity_coefficients_gaussian(
    cache: &SolveCache,
    m_b: f64,
    prior_a: &TruncGaussPrior,
    hermite: &QuadratureRule,
) -> Result<SensitivityCoefficients> {
    let pairs: Vec<_> = hermite.nodes().iter().map(|&z| (prior_a.mu + prior_a.rho * z, m_b)).collect();
    let solves = cache.get_many(&pairs)?;
    let w = hermite.weights();
    let z = hermite.nodes();
    let d_mb = Path::weighted_sum(solves.iter().zip(w).map(|(s, &w)| (&s.d_m_b.d_theta_b, w)))?;
    let d_mu = Path::weighted_sum(solves.iter().zip(w).map(|(s, &w)| (&s.d_m_a.d_theta_b, w)))?;
    let d_rho = Path::weighted_sum(solves.iter().zip(w).zip(z).map(|((s, &w), &z)| (&s.d_m_a.d_theta_b, w * z)))?;
    Ok(SensitivityCoefficients::from_matrices([d_mb, d_mu, d_rho], SensitivityKind::Truth))
}

/// Player A's proxy sensitivities: the untruncated form with the roles of
/// the beliefs exchanged, Gauss–Hermite over `mu_B + rho_B Z` for the two
/// belief parameters and truncated quadrature over `pi^B` for `m_B`.
pub fn proxy_sensitivity_coefficients(
    cache: &SolveCache,
    m_a: f64,
    prior_b: &TruncGaussPrior,
    hermite: &QuadratureRule,
    rule: &QuadratureRule,
) -> Result<SensitivityCoefficients> {
    let z = hermite.nodes();
    let w = hermite.weights();
    let gh_pairs: Vec<_> = z.iter().map(|&z| (m_a, prior_b.mu + prior_b.rho * z)).collect();
    let gh = cache.get_many(&gh_pairs)?;
    let d_mu = Path::weighted_sum(gh.iter().zip(w).map(|(s, &w)| (&s.d_m_a.d_theta_b, w)))?;
    let d_rho = Path::weighted_sum(gh.iter().zip(w).zip(z).map(|((s, &w), &z)| (&s.d_m_a.d_theta_b, w * z)))?;
    let nodes = prior_b.discretize(rule)?;
    let pairs: Vec<_> = nodes.nodes.iter().map(|&mb| (m_a, mb)).collect();
    let solves = cache.get_many(&pairs)?;
    let d_mb = weighted(&nodes, &solves, |s| &s.d_m_b.d_theta_b)?;
    Ok(SensitivityCoefficients::from_matrices([d_mb, d_mu, d_rho], SensitivityKind::Proxy))
}

/// Convenience bundle of the default quadrature rules.
#[derive(Debug, Clone)]
pub struct Rules {
    pub legendre: QuadratureRule,
    pub hermite: QuadratureRule,
}

impl Rules {
    pub fn new(legendre_nodes: usize, hermite_nodes: usize) -> Result<Self> {
        Ok(Self {
            legendre: QuadratureRule::gauss_legendre(legendre_nodes, -1.0, 1.0)?,
            hermite: QuadratureRule::gauss_hermite(hermite_nodes)?,
        })
    }
}

impl Default for Rules {
    fn default() -> Self {
        Self::new(64, 32).expect("default rule sizes are valid")
    }
}
