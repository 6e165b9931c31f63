//! One configured game: parameters, beliefs, grid and the shared node-solve
//! cache, with the derived coefficient bundles most drivers need.

use crate::afcontrol::{optimize_with, AFConfig, AFSolution, EvalMode};
use crate::controls::{
    averaged_coefficients, proxy_sensitivity_coefficients, true_sensitivity_coefficients, AveragedCoefficients, Beliefs,
    GainPath, Rules, SensitivityCoefficients, SolveCache,
};
use crate::error::Result;
use crate::fisher::{
    asymptotic_variance, asymptotic_variance_with_ridge, fisher_from_moments, moment_path, FisherMatrix, MomentScheme,
};
use crate::grid::TimeGrid;
use crate::model::{GameParams, TruncGaussPrior};

/// Averaged coefficients with both sensitivity families.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub avg: AveragedCoefficients,
    pub truth: SensitivityCoefficients,
    pub proxy: SensitivityCoefficients,
}

pub struct Scenario {
    pub params: GameParams,
    pub beliefs: Beliefs,
    pub grid: TimeGrid,
    pub rules: Rules,
    pub cache: SolveCache,
}

impl Scenario {
    pub fn new(params: GameParams, beliefs: Beliefs, steps: usize, rules: Rules) -> Result<Self> {
        params.validate()?;
        beliefs.prior_a.validate()?;
        beliefs.prior_b.validate()?;
        let grid = TimeGrid::new(params.horizon, steps)?;
        Ok(Self {
            params,
            beliefs,
            grid,
            rules,
            cache: SolveCache::new(params, grid)?,
        })
    }

    /// Same game and cache with different beliefs.
    pub fn with_beliefs(&self, beliefs: Beliefs) -> ScenarioView<'_> {
        ScenarioView { base: self, beliefs }
    }

    pub fn view(&self) -> ScenarioView<'_> {
        self.with_beliefs(self.beliefs)
    }
}

/// A borrowed scenario with its own beliefs; shares the node-solve cache.
#[derive(Clone, Copy)]
pub struct ScenarioView<'a> {
    pub base: &'a Scenario,
    pub beliefs: Beliefs,
}

impl ScenarioView<'_> {
    pub fn params(&self) -> &GameParams {
        &self.base.params
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.base.grid
    }

    pub fn coefficients(&self) -> Result<Coefficients> {
        let s = self.base;
        let (m_a, m_b) = (s.params.m_a, s.params.m_b);
        let avg = averaged_coefficients(&s.cache, m_a, m_b, &self.beliefs, &s.rules.legendre)?;
        let truth = true_sensitivity_coefficients(&s.cache, m_b, &self.beliefs.prior_a, &s.rules.legendre)?;
        let proxy =
            proxy_sensitivity_coefficients(&s.cache, m_a, &self.beliefs.prior_b, &s.rules.hermite, &s.rules.legendre)?;
        Ok(Coefficients { avg, truth, proxy })
    }

    pub fn optimize(&self, coeffs: &Coefficients, cfg: &AFConfig) -> Result<AFSolution> {
        optimize_with(cfg, &coeffs.avg, &coeffs.proxy, self.params(), self.grid(), EvalMode::default())
    }

    pub fn fisher(&self, sens: &SensitivityCoefficients, gains: &GainPath, scheme: MomentScheme) -> Result<FisherMatrix> {
        let mp = moment_path(gains, self.params(), self.params().x0(), self.grid(), scheme)?;
        fisher_from_moments(sens, &mp, self.params(), self.grid())
    }
}

/// Asymptotic variance, flagged when the ridge was needed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variance {
    pub value: f64,
    pub ridged: bool,
}

impl Variance {
    pub fn of(f: &FisherMatrix) -> Result<Self> {
        match asymptotic_variance(f) {
            Ok(value) => Ok(Self { value, ridged: false }),
            Err(crate::GameError::SingularBlock { .. }) => Ok(Self {
                value: asymptotic_variance_with_ridge(f)?,
                ridged: true,
            }),
            Err(e) => Err(e),
        }
    }
}

/// Beliefs centered at the given means with a common spread.
pub fn beliefs(mu_a: f64, mu_b: f64, rho: f64) -> Result<Beliefs> {
    let d = TruncGaussPrior::default();
    Ok(Beliefs {
        prior_a: TruncGaussPrior::new(mu_a, rho, d.lo, d.hi)?,
        prior_b: TruncGaussPrior::new(mu_b, rho, d.lo, d.hi)?,
    })
}
