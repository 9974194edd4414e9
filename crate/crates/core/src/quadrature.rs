//! Gauss-Lobatto quadrature on `[-1, 1]` and affinely mapped intervals.
//!
//! Error norms are always over-integrated with a fixed degree of precision of
//! 25 ([`OVER_INTEGRATION_DOP`]); assembly uses `p + 2` point rules per axis.

use crate::polybasis::gll_nodes;
use crate::{Error, Result};

/// Degree of precision used for all error-norm and projection-data integrals.
pub const OVER_INTEGRATION_DOP: usize = 25;

/// A Gauss-Lobatto rule on the reference interval `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct QuadRule {
    points: Vec<f64>,
    weights: Vec<f64>,
    degree_of_precision: usize,
}

impl QuadRule {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degree_of_precision(&self) -> usize {
        self.degree_of_precision
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// The `n_points` Gauss-Lobatto-Legendre rule; exact for polynomials of
/// degree `2 n_points - 3`.
pub fn gauss_lobatto_rule(n_points: usize) -> Result<QuadRule> {
    if n_points < 2 {
        return Err(Error::invalid("Gauss-Lobatto rule needs at least 2 points"));
    }
    let ns = gll_nodes(n_points - 1)?;
    Ok(QuadRule {
        weights: ns.weights(),
        points: ns.nodes().to_vec(),
        degree_of_precision: 2 * n_points - 3,
    })
}

/// Smallest Gauss-Lobatto rule with degree of precision at least `dop`.
pub fn rule_for_precision(dop: usize) -> Result<QuadRule> {
    if dop < 1 {
        return Err(Error::invalid("degree of precision must be >= 1"));
    }
    gauss_lobatto_rule((dop + 3).div_ceil(2))
}

/// Integrates `f` over `[a, b]` with the given rule, affinely mapped.
pub fn integrate<F: FnMut(f64) -> f64>(rule: &QuadRule, mut f: F, a: f64, b: f64) -> Result<f64> {
    if a >= b {
        return Err(Error::invalid(format!("degenerate interval [{a}, {b}]")));
    }
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut sum = 0.0;
    for (&x, &w) in rule.points.iter().zip(&rule.weights) {
        sum += w * f(mid + half * x);
    }
    Ok(sum * half)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_rule_is_trapezoid() {
        let r = gauss_lobatto_rule(2).unwrap();
        assert_eq!(r.points(), &[-1.0, 1.0]);
        assert_eq!(r.weights(), &[1.0, 1.0]);
        assert_eq!(r.degree_of_precision(), 1);
    }

    #[test]
    fn three_point_rule_weights() {
        // Hand oracle: with points {-1,0,1}, exactness on 1 and x^2 gives
        //   2 w0 + w1 = 2,  2 w0 = 2/3  =>  w0 = 1/3, w1 = 4/3.
        let w0 = (2.0 / 3.0) / 2.0;
        let w1 = 2.0 - 2.0 * w0;
        let r = gauss_lobatto_rule(3).unwrap();
        assert_eq!(r.points(), &[-1.0, 0.0, 1.0]);
        assert!((r.weights()[0] - w0).abs() < 1e-15);
        assert!((r.weights()[1] - w1).abs() < 1e-15);
        assert!((r.weights()[2] - w0).abs() < 1e-15);
        let v = integrate(&r, |x| x * x, -1.0, 1.0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_small_rules_and_bad_intervals() {
        assert!(gauss_lobatto_rule(1).is_err());
        assert!(rule_for_precision(0).is_err());
        let r = gauss_lobatto_rule(3).unwrap();
        assert!(integrate(&r, |x| x, 1.0, 1.0).is_err());
        assert!(integrate(&r, |x| x, 2.0, 1.0).is_err());
    }

    #[test]
    fn precision_to_point_count() {
        assert_eq!(rule_for_precision(25).unwrap().len(), 14);
        assert_eq!(rule_for_precision(1).unwrap().len(), 2);
        assert_eq!(rule_for_precision(3).unwrap().len(), 3);
    }

    #[test]
    fn mapped_integrals() {
        let r = gauss_lobatto_rule(3).unwrap();
        assert!((integrate(&r, |_| 1.0, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((integrate(&r, |x| x, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((integrate(&r, |x| x * x * x, 0.0, 1.0).unwrap() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn weights_positive_sum_to_measure_and_monomials_exact() {
        for n in 2..=20 {
            let r = gauss_lobatto_rule(n).unwrap();
            assert!(r.weights().iter().all(|&w| w > 0.0));
            let sum: f64 = r.weights().iter().sum();
            assert!((sum - 2.0).abs() < 1e-13, "n={n} sum={sum}");
            for m in 0..=r.degree_of_precision() {
                let exact = if m % 2 == 1 { 0.0 } else { 2.0 / (m as f64 + 1.0) };
                let got = integrate(&r, |x| x.powi(m as i32), -1.0, 1.0).unwrap();
                let tol = 1e-12 * exact.abs().max(1.0);
                assert!((got - exact).abs() < tol, "n={n} m={m} got={got}");
            }
        }
    }
}
