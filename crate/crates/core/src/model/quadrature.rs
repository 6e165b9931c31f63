use std::f64::consts::PI;

use crate::error::{GameError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureKind {
    /// Lebesgue measure on a bounded interval; weights sum to its length.
    BoundedInterval,
    /// Standard normal measure on the real line; weights sum to one.
    UnboundedGaussian,
}

/// Fixed-node quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    kind: QuadratureKind,
    interval: Option<(f64, f64)>,
}

impl QuadratureRule {
    /// Gauss–Legendre rule with `n` nodes on `[a, b]`.
    pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<Self> {
        if n < 2 {
            return Err(GameError::invalid("nodes", "need at least 2 nodes"));
        }
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(GameError::invalid("interval", format!("[{a}, {b}] is not a bounded interval")));
        }
        let (x, w) = legendre_reference(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Ok(Self {
            nodes: x.iter().map(|&xi| mid + half * xi).collect(),
            weights: w.iter().map(|&wi| half * wi).collect(),
            kind: QuadratureKind::BoundedInterval,
            interval: Some((a, b)),
        })
    }

    /// Gauss–Hermite rule with `n` nodes for expectations against N(0, 1).
    pub fn gauss_hermite(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(GameError::invalid("nodes", "need at least 2 nodes"));
        }
        let (x, w) = hermite_physicists(n);
        // exp(-x^2) weight -> standard normal: node * sqrt(2), weight / sqrt(pi).
        Ok(Self {
            nodes: x.iter().map(|&xi| xi * std::f64::consts::SQRT_2).collect(),
            weights: w.iter().map(|&wi| wi / PI.sqrt()).collect(),
            kind: QuadratureKind::UnboundedGaussian,
            interval: None,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> QuadratureKind {
        self.kind
    }

    /// Integration interval of a bounded rule.
    pub fn interval(&self) -> Option<(f64, f64)> {
        self.interval
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Nodes and weights on [-1, 1] by Newton iteration on P_n.
fn legendre_reference(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_eval(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_eval(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_eval(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (z * p1 - p0) / (z * z - 1.0))
}

/// Physicists' Gauss–Hermite rule (weight exp(-x^2)) via Newton iteration on
/// orthonormal Hermite functions.
fn hermite_physicists(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let half = n.div_ceil(2);
    let mut z = 0.0;
    for i in 0..half {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    // ascending order
    x.reverse();
    w.reverse();
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = QuadratureRule::gauss_legendre(8, -1.0, 3.0).unwrap();
        assert_abs_diff_eq!(rule.weights().iter().sum::<f64>(), 4.0, epsilon = 1e-13);
        // degree 15 is exact for 8 nodes
        let exact = (3.0f64.powi(16) - 1.0) / 16.0;
        assert_abs_diff_eq!(rule.integrate(|x| x.powi(15)), exact, epsilon = 1e-8 * exact);
    }

    #[test]
    fn legendre_64_nodes() {
        let rule = QuadratureRule::gauss_legendre(64, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(rule.integrate(|x| x.exp()), std::f64::consts::E - 1.0, epsilon = 1e-14);
        assert!(rule.nodes().windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn hermite_normal_moments() {
        for n in [16, 32] {
            let rule = QuadratureRule::gauss_hermite(n).unwrap();
            assert_eq!(rule.kind(), QuadratureKind::UnboundedGaussian);
            assert_abs_diff_eq!(rule.integrate(|_| 1.0), 1.0, epsilon = 1e-13);
            assert_abs_diff_eq!(rule.integrate(|z| z), 0.0, epsilon = 1e-13);
            assert_abs_diff_eq!(rule.integrate(|z| z * z), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(rule.integrate(|z| z.powi(4)), 3.0, epsilon = 1e-11);
            assert_abs_diff_eq!(rule.integrate(|z| z.powi(6)), 15.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn too_few_nodes() {
        assert!(QuadratureRule::gauss_legendre(1, 0.0, 1.0).is_err());
        assert!(QuadratureRule::gauss_hermite(1).is_err());
        assert!(QuadratureRule::gauss_legendre(4, 1.0, 1.0).is_err());
    }
}
