//! JSON experiment configuration with embedded defaults.
//!
//! A document is merged key by key over the preset of its experiment, so an
//! empty object `{}` reproduces the reference settings of that experiment.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::afcontrol::AFConfig;
use crate::controls::{Beliefs, Rules};
use crate::error::{GameError, Result};
use crate::fisher::MomentScheme;
use crate::model::{GameParams, TruncGaussPrior};
use crate::simulate::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    Fig2,
    Fig3,
    Fig4,
    #[default]
    Custom,
}

impl ExperimentId {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Fig2 => "fig2",
            ExperimentId::Fig3 => "fig3",
            ExperimentId::Fig4 => "fig4",
            ExperimentId::Custom => "custom",
        }
    }
}

/// How sweep drivers obtain Fisher matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherMode {
    #[default]
    Moments,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub mu_a: Vec<f64>,
    pub mu_b: Vec<f64>,
    pub lam_af: Vec<f64>,
    pub rho: Vec<f64>,
}

impl Default for SweepAxes {
    fn default() -> Self {
        Self {
            mu_a: vec![1.0],
            mu_b: vec![1.0],
            lam_af: vec![2.5],
            rho: vec![0.1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub legendre_nodes: usize,
    pub hermite_nodes: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            legendre_nodes: 64,
            hermite_nodes: 32,
        }
    }
}

impl QuadratureConfig {
    pub fn rules(&self) -> Result<Rules> {
        Rules::new(self.legendre_nodes, self.hermite_nodes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub params: GameParams,
    /// B's belief about `m_A`.
    pub prior_a: TruncGaussPrior,
    /// A's belief about `m_B`.
    pub prior_b: TruncGaussPrior,
    pub af: AFConfig,
    pub sim: SimConfig,
    pub sweep: SweepAxes,
    pub out_dir: String,
    pub quadrature: QuadratureConfig,
    pub moment_scheme: MomentScheme,
    pub fisher_mode: FisherMode,
    /// Repeated plays observed by the detector.
    pub detect_reps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentId::Custom,
            params: GameParams::default(),
            prior_a: TruncGaussPrior::default(),
            prior_b: TruncGaussPrior::default(),
            af: AFConfig::default(),
            sim: SimConfig::default(),
            sweep: SweepAxes::default(),
            out_dir: "out".into(),
            quadrature: QuadratureConfig::default(),
            moment_scheme: MomentScheme::default(),
            fisher_mode: FisherMode::default(),
            detect_reps: 10_000,
        }
    }
}

fn steps(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

impl ExperimentConfig {
    pub fn preset(id: ExperimentId) -> Self {
        let mut c = Self {
            experiment: id,
            ..Self::default()
        };
        match id {
            ExperimentId::Fig2 => {
                c.sweep.mu_b = vec![1.0, 1.2, 1.5, 1.8, 2.0, 2.2];
            }
            ExperimentId::Fig3 => {
                c.sweep.mu_a = steps(1.0, 2.0, 0.25);
                c.sweep.mu_b = steps(1.0, 2.25, 0.25);
            }
            ExperimentId::Fig4 => {
                c.af.q_af = 10.0;
                c.sweep.lam_af = steps(0.0, 5.0, 1.0);
                c.sweep.rho = std::iter::once(1e-7).chain((1..=10).map(|i| i as f64 / 10.0)).collect();
            }
            ExperimentId::Custom => {}
        }
        c
    }

    /// Parses `json` over the preset selected by `id`, or by the document's
    /// own `experiment` key when `id` is `None`.
    pub fn from_json(json: &str, id: Option<ExperimentId>) -> Result<Self> {
        let user: Value = if json.trim().is_empty() {
            Value::Object(Default::default())
        } else {
            serde_json::from_str(json).map_err(|e| GameError::Config(format!("malformed JSON: {e}")))?
        };
        if !user.is_object() {
            return Err(GameError::Config("top level must be a JSON object".into()));
        }
        let declared = match user.get("experiment") {
            Some(v) => Some(
                serde_json::from_value::<ExperimentId>(v.clone()).map_err(|e| GameError::Config(format!("experiment: {e}")))?,
            ),
            None => None,
        };
        let id = match (id, declared) {
            (Some(a), Some(b)) if a != b => {
                return Err(GameError::Config(format!(
                    "config declares experiment `{}` but `{}` was requested",
                    b.name(),
                    a.name()
                )))
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => ExperimentId::Custom,
        };
        let mut merged = serde_json::to_value(Self::preset(id)).map_err(|e| GameError::Config(e.to_string()))?;
        merge(&mut merged, user);
        let cfg: Self = serde_json::from_value(merged).map_err(|e| GameError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: GameError| GameError::Config(e.to_string());
        self.params.validate().map_err(wrap)?;
        self.prior_a.validate().map_err(wrap)?;
        self.prior_b.validate().map_err(wrap)?;
        self.af.validate().map_err(wrap)?;
        self.sim.validate().map_err(wrap)?;
        self.quadrature.rules().map_err(wrap)?;
        let s = &self.sweep;
        for (name, axis) in [("mu_a", &s.mu_a), ("mu_b", &s.mu_b), ("lam_af", &s.lam_af), ("rho", &s.rho)] {
            if axis.is_empty() {
                return Err(GameError::Config(format!("sweep axis `{name}` is empty")));
            }
            if !axis.iter().all(|v| v.is_finite()) {
                return Err(GameError::Config(format!("sweep axis `{name}` has non-finite entries")));
            }
        }
        if !s.rho.iter().all(|&r| r > 0.0) {
            return Err(GameError::Config("sweep axis `rho` must be positive".into()));
        }
        if !s.lam_af.iter().all(|&l| l >= 0.0) {
            return Err(GameError::Config("sweep axis `lam_af` must be nonnegative".into()));
        }
        if self.detect_reps < 3 {
            return Err(GameError::Config("detect_reps must be at least 3".into()));
        }
        Ok(())
    }

    pub fn beliefs(&self) -> Beliefs {
        Beliefs {
            prior_a: self.prior_a,
            prior_b: self.prior_b,
        }
    }

    /// Beliefs with the given means and common spread, keeping the supports.
    pub fn beliefs_at(&self, mu_a: f64, mu_b: f64, rho: f64) -> Result<Beliefs> {
        Ok(Beliefs {
            prior_a: TruncGaussPrior::new(mu_a, rho, self.prior_a.lo, self.prior_a.hi)?,
            prior_b: TruncGaussPrior::new(mu_b, rho, self.prior_b.lo, self.prior_b.hi)?,
        })
    }

    /// Hash of everything except the output location.
    pub fn hash(&self) -> Result<String> {
        crate::report::config_hash(&Self {
            out_dir: String::new(),
            ..self.clone()
        })
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
