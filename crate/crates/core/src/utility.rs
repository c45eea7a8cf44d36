//! Network utilities and the rate-vector subproblem
//! `sup_x { f0(x) - lambda^T x }`.

use crate::error::{invalid, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub enum UtilityKind<T> {
    /// `w^T x`. The dual optimum is `lambda = w`, so the rate multipliers
    /// are pinned and `x` never enters the dual dynamics.
    Sumrate(Vec<T>),
    /// `sum_i log x_i`, maximised at `x = 1 / lambda`.
    ProportionalFairness,
}

impl<T: Real> UtilityKind<T> {
    pub fn sumrate(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|&w| !(w > T::zero() && w.is_finite())) {
            return Err(invalid(
                "weights",
                "sumrate weights must be strictly positive",
            ));
        }
        Ok(Self::Sumrate(weights))
    }

    pub fn pins_lambda(&self) -> bool {
        matches!(self, Self::Sumrate(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sumrate(_) => "sumrate",
            Self::ProportionalFairness => "proportional-fairness",
        }
    }
}

/// Optimal rate vector for the current rate multipliers.
///
/// For sumrate the subproblem is linear with `lambda = w`, so `x` is only
/// reported; `running_mean` (the empirical mean rate so far) is returned.
pub fn optimal_rate_vector<T: Real>(
    utility: &UtilityKind<T>,
    lambda: &[T],
    running_mean: &[T],
) -> Result<Vec<T>> {
    match utility {
        UtilityKind::Sumrate(_) => Ok(running_mean.to_vec()),
        UtilityKind::ProportionalFairness => {
            if lambda.iter().any(|&l| !(l > T::zero())) {
                return Err(invalid(
                    "lambda",
                    "proportional fairness needs strictly positive rate multipliers",
                ));
            }
            Ok(lambda.iter().map(|&l| l.recip()).collect())
        }
    }
}

pub fn utility_value<T: Real>(utility: &UtilityKind<T>, x: &[T]) -> Result<T> {
    match utility {
        UtilityKind::Sumrate(w) => {
            if w.len() != x.len() {
                return Err(invalid("x", "length differs from weight vector"));
            }
            Ok(w.iter().zip(x).map(|(&a, &b)| a * b).sum())
        }
        UtilityKind::ProportionalFairness => {
            if x.iter().any(|&v| !(v > T::zero())) {
                return Err(invalid("x", "proportional fairness needs positive rates"));
            }
            Ok(x.iter().map(|v| v.ln()).sum())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn pf_rate_vector_is_reciprocal() {
        let pf = UtilityKind::ProportionalFairness;
        assert_eq!(
            optimal_rate_vector(&pf, &[0.5, 2.0], &[]).unwrap(),
            vec![2.0, 0.5]
        );
        assert_eq!(
            optimal_rate_vector(&pf, &[1.0; 3], &[]).unwrap(),
            vec![1.0; 3]
        );
        assert!(optimal_rate_vector(&pf, &[1.0, 0.0], &[]).is_err());
    }

    #[test]
    fn sumrate_reports_running_mean() {
        let sr = UtilityKind::sumrate(vec![1.0 / 3.0; 3]).unwrap();
        let mean = [1.2, 0.4, 2.0];
        assert_eq!(
            optimal_rate_vector(&sr, &[1.0 / 3.0; 3], &mean).unwrap(),
            mean.to_vec()
        );
    }

    #[test]
    fn values() {
        let sr = UtilityKind::sumrate(vec![1.0 / 3.0; 3]).unwrap();
        assert!((utility_value(&sr, &[3.0_f64, 3.0, 3.0]).unwrap() - 3.0).abs() < 1e-15);
        let pf = UtilityKind::ProportionalFairness;
        assert_eq!(utility_value(&pf, &[1.0, 1.0]).unwrap(), 0.0);
        assert!((utility_value(&pf, &[E, E * E]).unwrap() - 3.0).abs() < 1e-15);
        assert!(utility_value(&pf, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn pf_stationarity() {
        let lambda = [0.3_f64, 1.7, 4.0];
        let x = optimal_rate_vector(&UtilityKind::ProportionalFairness, &lambda, &[]).unwrap();
        for (xi, li) in x.iter().zip(lambda) {
            assert!((1.0 / xi - li).abs() < 1e-15);
        }
    }

    #[test]
    fn sumrate_lagrangian_flat_in_x() {
        let w = vec![0.2, 0.5, 0.3];
        let sr = UtilityKind::sumrate(w.clone()).unwrap();
        let lag = |x: &[f64]| {
            utility_value(&sr, x).unwrap() - w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        };
        assert_eq!(lag(&[1.0, 2.0, 3.0]), lag(&[0.0, 7.5, 0.25]));
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(UtilityKind::sumrate(vec![1.0, 0.0]).is_err());
        assert!(UtilityKind::<f64>::sumrate(vec![]).is_err());
    }
}
