//! Observed test statistics for a hypothesised percentile value `mu0`.
//!
//! The weighted statistic gives each study's sign `I(theta < mu0) - I(theta > mu0)`
//! the weight `|Phi((mu0 - theta) / sigma) - 1/2|`; the unweighted statistic
//! is the plain sign count.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::effects::Dataset;

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn normal_quantile(prob: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(prob)
}

/// Student-t quantile with `df` degrees of freedom.
pub fn t_quantile(prob: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df).expect("valid t distribution").inverse_cdf(prob)
}

/// `Phi((mu0 - theta) / sigma) - 1/2`, with the step-function limit when
/// `sigma == 0` (zero exactly at `theta == mu0`).
pub fn centered_coverage(theta_hat: f64, sigma_hat: f64, mu0: f64) -> f64 {
    if sigma_hat > 0.0 {
        normal_cdf((mu0 - theta_hat) / sigma_hat) - 0.5
    } else if mu0 > theta_hat {
        0.5
    } else if mu0 < theta_hat {
        -0.5
    } else {
        0.0
    }
}

/// Per-study weight `|Phi((mu0 - theta) / sigma) - 1/2|`, in `[0, 1/2]`.
pub fn weight(theta_hat: f64, sigma_hat: f64, mu0: f64) -> f64 {
    centered_coverage(theta_hat, sigma_hat, mu0).abs()
}

/// `I(theta < mu0) - I(theta > mu0)`.
pub fn sign(theta_hat: f64, mu0: f64) -> i8 {
    if theta_hat < mu0 {
        1
    } else if theta_hat > mu0 {
        -1
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatisticValue {
    pub value: f64,
    pub weights: Vec<f64>,
    pub signs: Vec<i8>,
}

pub fn statistic_weighted(d: &Dataset, mu0: f64) -> StatisticValue {
    let mut weights = Vec::with_capacity(d.k());
    let mut signs = Vec::with_capacity(d.k());
    let mut value = 0.0;
    for s in d.studies() {
        let w = weight(s.theta_hat, s.sigma_hat, mu0);
        let b = sign(s.theta_hat, mu0);
        value += w * f64::from(b);
        weights.push(w);
        signs.push(b);
    }
    StatisticValue { value, weights, signs }
}

pub fn statistic_unweighted(d: &Dataset, mu0: f64) -> StatisticValue {
    let signs: Vec<i8> = d.studies().iter().map(|s| sign(s.theta_hat, mu0)).collect();
    let value = signs.iter().map(|&b| f64::from(b)).sum();
    StatisticValue {
        value,
        weights: vec![1.0; signs.len()],
        signs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effects::EffectMeasure;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn data(thetas: &[f64], sigmas: &[f64]) -> Dataset {
        Dataset::from_pairs(thetas, sigmas, EffectMeasure::LogRelativeRisk).unwrap()
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_eq!(normal_cdf(f64::INFINITY), 1.0);
        assert_eq!(normal_cdf(f64::NEG_INFINITY), 0.0);
        assert_abs_diff_eq!(normal_cdf(1.0), 0.8413447460685429, epsilon = 1e-15);
    }

    #[test]
    fn quantiles() {
        assert_abs_diff_eq!(normal_quantile(0.975), 1.959963984540054, epsilon = 1e-9);
        // t_{9, 0.975}
        assert_abs_diff_eq!(t_quantile(0.975, 9.0), 2.2621571627409915, epsilon = 1e-7);
    }

    #[test]
    fn weight_values() {
        assert_eq!(weight(1.0, 1.0, 1.0), 0.0);
        assert_eq!(weight(0.0, 0.0, 1.0), 0.5);
        assert_eq!(weight(0.0, 0.0, 0.0), 0.0);
        assert_abs_diff_eq!(weight(0.0, 1.0, 1.959964), 0.475, epsilon = 1e-6);
    }

    #[test]
    fn weighted_statistic_examples() {
        let d = data(&[0.3, 0.3, 0.3], &[1.0, 2.0, 0.5]);
        assert_eq!(statistic_weighted(&d, 0.3).value, 0.0);

        let d = data(&[-1.0, 0.0, 2.0], &[1.0, 1.0, 1.0]);
        let s = statistic_weighted(&d, 0.0);
        assert_abs_diff_eq!(s.value, -0.135905, epsilon = 1e-5);
        assert_eq!(s.signs, vec![1, 0, -1]);
        assert_eq!(s.weights[1], 0.0);

        let d = data(&[-0.7, 1.3], &[0.4, 0.4]);
        assert_abs_diff_eq!(statistic_weighted(&d, 0.3).value, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn unweighted_statistic_examples() {
        let s = statistic_unweighted(&data(&[-1.0, 0.0, 2.0], &[1.0; 3]), 0.0);
        assert_eq!(s.value, 0.0);
        assert_eq!(s.weights, vec![1.0; 3]);
        assert_eq!(statistic_unweighted(&data(&[1.0, 2.0, 3.0], &[1.0; 3]), 0.0).value, -3.0);
        assert_eq!(
            statistic_unweighted(&data(&[0.1, 0.4, 0.9, 1.2], &[1.0; 4]), 0.5).value,
            0.0
        );
    }

    #[test]
    fn shrinking_variances_recover_half_the_sign_count() {
        // theta bounded away from mu0 by at least 1
        let thetas = [-2.0, -1.0, 1.5, 2.0, 3.0];
        let sigmas = [0.5, 1.0, 0.8, 2.0, 1.2];
        let k = thetas.len() as f64;
        let half_sign = statistic_unweighted(&data(&thetas, &sigmas), 0.0).value / 2.0;
        let mut last = f64::INFINITY;
        for eps in [1e-2, 1e-4, 1e-6] {
            let scaled: Vec<f64> = sigmas.iter().map(|s| s * eps).collect();
            let t = statistic_weighted(&data(&thetas, &scaled), 0.0).value;
            let err = (t - half_sign).abs();
            // each study is at least 1/(eps * max sigma) standard errors away
            let eps_eff = eps * 2.0;
            assert!(err <= k * normal_cdf(-1.0 / eps_eff) + 1e-300, "eps={eps} err={err}");
            assert!(err <= last);
            last = err;
        }
    }

    proptest! {
        #[test]
        fn weighted_equals_sum_of_centered_coverages(
            studies in prop::collection::vec((-5.0f64..5.0, 0.01f64..3.0), 1..30),
            mu0 in -6.0f64..6.0,
        ) {
            let (t, s): (Vec<f64>, Vec<f64>) = studies.into_iter().unzip();
            let d = data(&t, &s);
            let direct: f64 = t.iter().zip(&s).map(|(&th, &sg)| normal_cdf((mu0 - th) / sg) - 0.5).sum();
            let v = statistic_weighted(&d, mu0).value;
            prop_assert!((v - direct).abs() <= 1e-12);
            prop_assert!(v.abs() <= t.len() as f64 / 2.0);
            prop_assert!(statistic_unweighted(&d, mu0).value.abs() <= t.len() as f64);
        }

        #[test]
        fn weighted_is_increasing_in_mu0(
            studies in prop::collection::vec((-5.0f64..5.0, 0.05f64..3.0), 1..20),
            mu0 in -4.0f64..4.0,
            step in 0.01f64..1.0,
        ) {
            let (t, s): (Vec<f64>, Vec<f64>) = studies.into_iter().unzip();
            let d = data(&t, &s);
            let (lo, hi) = (statistic_weighted(&d, mu0).value, statistic_weighted(&d, mu0 + step).value);
            // strict unless every study is saturated (Phi rounds to 0 or 1) at both points
            let live = t.iter().zip(&s).any(|(&th, &sg)| ((mu0 - th) / sg).abs() < 8.0);
            prop_assert!(hi >= lo);
            prop_assert!(!live || hi > lo);
        }

        #[test]
        fn statistics_are_affine_equivariant(
            studies in prop::collection::vec((-5.0f64..5.0, 0.0f64..3.0), 1..20),
            mu0 in -6.0f64..6.0,
            a in 0.5f64..4.0,
            b in -3.0f64..3.0,
        ) {
            let (t, s): (Vec<f64>, Vec<f64>) = studies.into_iter().unzip();
            let d = data(&t, &s);
            let mapped = d.affine(a, b);
            let w0 = statistic_weighted(&d, mu0);
            let w1 = statistic_weighted(&mapped, a * mu0 + b);
            prop_assert!((w0.value - w1.value).abs() <= 1e-9);
            prop_assert_eq!(
                statistic_unweighted(&d, mu0).value,
                statistic_unweighted(&mapped, a * mu0 + b).value
            );
        }
    }
}
