//! Fixed-step RK4 on stacks of 2x2 matrices.

use std::ops::{Add, Mul};

use nalgebra::Matrix2;

use crate::error::{GameError, Result};

/// A fixed-size stack of 2x2 matrices treated as one ODE state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Stack<const K: usize>(pub [Matrix2<f64>; K]);

impl<const K: usize> Stack<K> {
    pub fn zero() -> Self {
        Stack([Matrix2::zeros(); K])
    }

    pub fn symmetrized(mut self) -> Self {
        for m in &mut self.0 {
            *m = 0.5 * (*m + m.transpose());
        }
        self
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|m| m.iter().all(|v| v.is_finite()))
    }
}

impl<const K: usize> Add for Stack<K> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
        self
    }
}

impl<const K: usize> Mul<f64> for Stack<K> {
    type Output = Self;
    fn mul(mut self, rhs: f64) -> Self {
        for a in &mut self.0 {
            *a *= rhs;
        }
        self
    }
}

/// Integrates `dy/dt = f(j, y)` backward from `terminal` at `t = n h` down to
/// `t = 0` in `n` RK4 steps, symmetrizing after every step.
///
/// `f` receives the stage time as an index in half-steps, so the steps from
/// sample `j + 1` to `j` call it with `2j + 2`, `2j + 1` and `2j`. Returns
/// the `n + 1` states in forward time order.
pub(crate) fn rk4_backward<const K: usize>(
    n: usize,
    h: f64,
    terminal: Stack<K>,
    context: &'static str,
    mut f: impl FnMut(usize, &Stack<K>) -> Stack<K>,
) -> Result<Vec<Stack<K>>> {
    let mut out = vec![Stack::zero(); n + 1];
    out[n] = terminal;
    let mut y = terminal;
    for j in (0..n).rev() {
        let k1 = f(2 * j + 2, &y);
        let k2 = f(2 * j + 1, &(y + k1 * (-0.5 * h)));
        let k3 = f(2 * j + 1, &(y + k2 * (-0.5 * h)));
        let k4 = f(2 * j, &(y + k3 * (-h)));
        y = (y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (-h / 6.0)).symmetrized();
        if !y.is_finite() {
            return Err(GameError::NonFinite {
                context,
                t: j as f64 * h,
            });
        }
        out[j] = y;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_decay_is_fourth_order() {
        // dy/dt = y, y(1) = I  ->  y(0) = e^{-1} I
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let ys = rk4_backward(n, h, Stack([Matrix2::identity()]), "test", |_, y| *y).unwrap();
            (ys[0].0[0][(0, 0)] - (-1.0f64).exp()).abs()
        };
        let ratio = err(20) / err(40);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn reports_blow_up() {
        // dy/dt = y^2 with y(10) = -10 escapes to -inf at t = 9.9
        let res = rk4_backward(1000, 1e-2, Stack([Matrix2::identity() * -10.0]), "blow", |_, y| {
            Stack([y.0[0] * y.0[0]])
        });
        assert!(matches!(res, Err(GameError::NonFinite { context: "blow", .. })));
    }
}
