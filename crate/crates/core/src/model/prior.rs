use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use super::quadrature::{QuadratureKind, QuadratureRule};
use crate::error::{GameError, Result};

/// Half-width, in units of the scale, of the window that carries the
/// numerically relevant mass of a truncated Gaussian.
const WINDOW_SCALES: f64 = 12.0;

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `Phi(b) - Phi(a)` for `a < b`, evaluated on the side that avoids
/// cancellation in the tails.
fn normal_interval_mass(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        0.5 * (libm::erfc(a * FRAC_1_SQRT_2) - libm::erfc(b * FRAC_1_SQRT_2))
    } else if b < 0.0 {
        0.5 * (libm::erfc(-b * FRAC_1_SQRT_2) - libm::erfc(-a * FRAC_1_SQRT_2))
    } else {
        1.0 - 0.5 * libm::erfc(-a * FRAC_1_SQRT_2) - 0.5 * libm::erfc(b * FRAC_1_SQRT_2)
    }
}

/// Gaussian belief with location `mu` and scale `rho`, truncated to `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncGaussPrior {
    pub mu: f64,
    pub rho: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for TruncGaussPrior {
    fn default() -> Self {
        Self {
            mu: 1.0,
            rho: 0.1,
            lo: -5.0,
            hi: 5.0,
        }
    }
}

impl TruncGaussPrior {
    pub fn new(mu: f64, rho: f64, lo: f64, hi: f64) -> Result<Self> {
        let p = Self { mu, rho, lo, hi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(GameError::invalid("mu", "must be finite"));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(GameError::invalid("rho", format!("must be > 0, got {}", self.rho)));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(GameError::invalid(
                "bounds",
                format!("need lo < hi, got [{}, {}]", self.lo, self.hi),
            ));
        }
        Ok(())
    }

    fn standardized_bounds(&self) -> (f64, f64) {
        ((self.lo - self.mu) / self.rho, (self.hi - self.mu) / self.rho)
    }

    /// Normalizing mass `Phi(beta) - Phi(alpha)`.
    pub fn mass(&self) -> f64 {
        let (a, b) = self.standardized_bounds();
        normal_interval_mass(a, b)
    }

    pub fn contains(&self, m: f64) -> bool {
        (self.lo..=self.hi).contains(&m)
    }

    pub fn pdf(&self, m: f64) -> f64 {
        if !self.contains(m) {
            return 0.0;
        }
        normal_pdf((m - self.mu) / self.rho) / (self.rho * self.mass())
    }

    pub fn log_pdf(&self, m: f64) -> f64 {
        if !self.contains(m) {
            return f64::NEG_INFINITY;
        }
        let u = (m - self.mu) / self.rho;
        -0.5 * u * u - 0.5 * (2.0 * PI).ln() - self.rho.ln() - self.mass().ln()
    }

    fn check_support(&self, m: f64) -> Result<()> {
        if self.contains(m) {
            Ok(())
        } else {
            Err(GameError::OutsideSupport {
                value: m,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    /// Derivative of the log density in the location parameter.
    pub fn score_mu(&self, m: f64) -> Result<f64> {
        self.check_support(m)?;
        let (a, b) = self.standardized_bounds();
        let correction = (normal_pdf(b) - normal_pdf(a)) / (self.rho * self.mass());
        Ok((m - self.mu) / (self.rho * self.rho) + correction)
    }

    /// Derivative of the log density in the scale parameter.
    pub fn score_rho(&self, m: f64) -> Result<f64> {
        self.check_support(m)?;
        let (a, b) = self.standardized_bounds();
        let correction = (b * normal_pdf(b) - a * normal_pdf(a)) / (self.rho * self.mass());
        let d = m - self.mu;
        Ok(d * d / self.rho.powi(3) - 1.0 / self.rho + correction)
    }

    /// Sub-interval of `[lo, hi]` holding all but a negligible fraction of
    /// the mass. Quadrature is placed here so that narrow beliefs are
    /// resolved by the same node count as wide ones.
    pub fn effective_window(&self) -> (f64, f64) {
        let w = WINDOW_SCALES * self.rho;
        if self.mu > self.hi {
            ((self.hi - w).max(self.lo), self.hi)
        } else if self.mu < self.lo {
            (self.lo, (self.lo + w).min(self.hi))
        } else {
            ((self.mu - w).max(self.lo), (self.mu + w).min(self.hi))
        }
    }

    /// Maps a bounded reference rule onto the effective window and folds the
    /// density into the weights, which are rescaled to sum to one.
    pub fn discretize(&self, rule: &QuadratureRule) -> Result<PriorNodes> {
        let (a, b) = match (rule.kind(), rule.interval()) {
            (QuadratureKind::BoundedInterval, Some(iv)) => iv,
            _ => {
                return Err(GameError::invalid(
                    "rule",
                    "prior expectations need a bounded-interval rule",
                ))
            }
        };
        let (lo, hi) = self.effective_window();
        let scale = (hi - lo) / (b - a);
        let (nodes, mut weights): (Vec<f64>, Vec<f64>) = rule
            .iter()
            .map(|(x, w)| {
                let m = lo + (x - a) * scale;
                (m, w * scale * self.pdf(m))
            })
            .unzip();
        // Self-normalize so averages are exact convex combinations.
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(PriorNodes { nodes, weights })
    }
}

/// Belief-weighted nodes: `E[f(M)] ~ sum_q weights[q] * f(nodes[q])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorNodes {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PriorNodes {
    pub fn expect<T, F>(&self, mut f: F) -> T
    where
        T: Add<Output = T> + Mul<f64, Output = T>,
        F: FnMut(f64) -> T,
    {
        let mut it = self.nodes.iter().zip(&self.weights);
        let (&m0, &w0) = it.next().expect("prior nodes are never empty");
        it.fold(f(m0) * w0, |acc, (&m, &w)| acc + f(m) * w)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Quadrature approximation of `E[f(M)]` for `M` distributed by `prior`.
pub fn expect_over_prior<T, F>(f: F, prior: &TruncGaussPrior, rule: &QuadratureRule) -> Result<T>
where
    T: Add<Output = T> + Mul<f64, Output = T>,
    F: FnMut(f64) -> T,
{
    Ok(prior.discretize(rule)?.expect(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn gl64() -> QuadratureRule {
        QuadratureRule::gauss_legendre(64, -1.0, 1.0).unwrap()
    }

    /// Composite Simpson on a fine mesh, refined until successive values agree.
    fn adaptive_simpson_oracle(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let simpson = |n: usize| {
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for i in 1..n {
                let x = a + i as f64 * h;
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
            }
            s * h / 3.0
        };
        let mut n = 64;
        let mut prev = simpson(n);
        loop {
            n *= 2;
            let cur = simpson(n);
            if (cur - prev).abs() < 1e-13 || n > 1 << 22 {
                return cur;
            }
            prev = cur;
        }
    }

    #[test]
    fn pdf_zero_outside_support() {
        let p = TruncGaussPrior::new(0.0, 1.0, -1.0, 2.0).unwrap();
        assert_eq!(p.pdf(-1.5), 0.0);
        assert_eq!(p.pdf(2.01), 0.0);
        assert!(p.pdf(0.3) > 0.0);
    }

    #[test]
    fn near_standard_normal_peak() {
        let p = TruncGaussPrior::new(0.0, 1.0, -10.0, 10.0).unwrap();
        assert_abs_diff_eq!(p.pdf(0.0), 0.398_942_280_401_432_7, epsilon = 1e-12);
    }

    #[test]
    fn raw_density_quadrature_normalizes() {
        for p in [
            TruncGaussPrior::new(0.0, 1.0, -10.0, 10.0).unwrap(),
            TruncGaussPrior::new(1.0, 0.1, -5.0, 5.0).unwrap(),
            TruncGaussPrior::new(0.3, 2.0, -1.0, 1.5).unwrap(),
            TruncGaussPrior::new(1.0, 1e-7, -5.0, 5.0).unwrap(),
        ] {
            let (lo, hi) = p.effective_window();
            let rule = QuadratureRule::gauss_legendre(64, lo, hi).unwrap();
            assert_abs_diff_eq!(rule.integrate(|m| p.pdf(m)), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn density_normalizes() {
        for p in [
            TruncGaussPrior::new(0.0, 1.0, -10.0, 10.0).unwrap(),
            TruncGaussPrior::new(1.0, 0.1, -5.0, 5.0).unwrap(),
            TruncGaussPrior::new(0.3, 2.0, -1.0, 1.5).unwrap(),
            TruncGaussPrior::new(1.0, 1e-7, -5.0, 5.0).unwrap(),
        ] {
            let mass: f64 = expect_over_prior(|_| 1.0, &p, &gl64()).unwrap();
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn symmetric_truncation_mean_and_score() {
        let p = TruncGaussPrior::new(0.7, 0.5, 0.7 - 0.9, 0.7 + 0.9).unwrap();
        let mean: f64 = expect_over_prior(|m| m, &p, &gl64()).unwrap();
        assert_abs_diff_eq!(mean, 0.7, epsilon = 1e-12);
        for m in [0.0, 0.5, 1.2] {
            assert_abs_diff_eq!(p.score_mu(m).unwrap(), (m - 0.7) / 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn second_moment_matches_adaptive_oracle() {
        let p = TruncGaussPrior::new(1.0, 0.1, -5.0, 5.0).unwrap();
        let q: f64 = expect_over_prior(|m| m * m, &p, &gl64()).unwrap();
        let oracle = adaptive_simpson_oracle(|m| m * m * p.pdf(m), 0.0, 2.0);
        assert_abs_diff_eq!(q, oracle, epsilon = 1e-8);
        assert_abs_diff_eq!(q, 1.01, epsilon = 1e-8);
    }

    #[test]
    fn scores_reject_outside_support() {
        let p = TruncGaussPrior::default();
        assert!(matches!(p.score_mu(6.0), Err(GameError::OutsideSupport { .. })));
        assert!(p.score_rho(-5.5).is_err());
    }

    #[test]
    fn point_mass_limit() {
        let p = TruncGaussPrior::new(0.4, 1e-6, -5.0, 5.0).unwrap();
        let v: f64 = expect_over_prior(|m| m.sin() + m * m, &p, &gl64()).unwrap();
        assert_abs_diff_eq!(v, 0.4f64.sin() + 0.16, epsilon = 1e-4);
    }

    #[test]
    fn rejects_invalid_priors() {
        assert!(TruncGaussPrior::new(0.0, 0.0, -1.0, 1.0).is_err());
        assert!(TruncGaussPrior::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(TruncGaussPrior::new(f64::NAN, 1.0, -1.0, 1.0).is_err());
    }

    fn prior_strategy() -> impl Strategy<Value = TruncGaussPrior> {
        (-2.0f64..2.0, 0.05f64..1.5, 0.2f64..4.0, 0.2f64..4.0)
            .prop_map(|(mu, rho, wl, wh)| TruncGaussPrior::new(mu, rho, mu - wl, mu + wh).unwrap())
    }

    proptest! {
        #[test]
        fn score_identities(p in prior_strategy()) {
            let nodes = p.discretize(&gl64()).unwrap();
            let mass: f64 = nodes.expect(|_| 1.0);
            let e_mu: f64 = nodes.expect(|m| p.score_mu(m).unwrap());
            let e_rho: f64 = nodes.expect(|m| p.score_rho(m).unwrap());
            prop_assert!((mass - 1.0).abs() < 1e-8);
            prop_assert!(e_mu.abs() < 1e-8, "E[s_mu] = {e_mu}");
            prop_assert!(e_rho.abs() < 1e-8, "E[s_rho] = {e_rho}");
        }

        #[test]
        fn scores_match_log_density_differences(p in prior_strategy(), u in 0.05f64..0.95) {
            let h = 1e-6;
            let m = p.lo + u * (p.hi - p.lo);
            let shifted = |mu: f64, rho: f64| TruncGaussPrior { mu, rho, ..p }.log_pdf(m);
            let fd_mu = (shifted(p.mu + h, p.rho) - shifted(p.mu - h, p.rho)) / (2.0 * h);
            let fd_rho = (shifted(p.mu, p.rho + h) - shifted(p.mu, p.rho - h)) / (2.0 * h);
            let s_mu = p.score_mu(m).unwrap();
            let s_rho = p.score_rho(m).unwrap();
            prop_assert!((fd_mu - s_mu).abs() < 1e-5 * s_mu.abs().max(1.0), "{fd_mu} vs {s_mu}");
            prop_assert!((fd_rho - s_rho).abs() < 1e-5 * s_rho.abs().max(1.0), "{fd_rho} vs {s_rho}");
        }
    }
}
