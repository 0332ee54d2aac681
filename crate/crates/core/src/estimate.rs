//! Point estimators for the mean outcome, influence-function variance
//! estimation, Wald confidence intervals, and the linear-regression
//! imputation baseline.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::Serialize;

use crate::data::ResponsePattern;
use crate::error::{Error, Result};
use crate::linalg;

/// Which estimator produced a report entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EstimatorKind {
    #[serde(rename = "KRR_IM")]
    KrrIm,
    #[serde(rename = "KRR_PS")]
    KrrPs,
    #[serde(rename = "LINEAR_IM")]
    LinearIm,
    #[serde(rename = "COMPLETE")]
    Complete,
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::KrrIm => "KRR_IM",
            EstimatorKind::KrrPs => "KRR_PS",
            EstimatorKind::LinearIm => "LINEAR_IM",
            EstimatorKind::Complete => "COMPLETE",
        }
    }
}

/// Point estimate with its influence-based uncertainty summary.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub method: EstimatorKind,
    pub theta_hat: f64,
    pub variance: f64,
    pub std_error: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
    #[serde(skip)]
    pub influence: Array1<f64>,
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
}

impl EstimateReport {
    pub fn from_influence(
        method: EstimatorKind,
        theta_hat: f64,
        influence: Array1<f64>,
        level: f64,
        lambda: Option<f64>,
        tau: Option<f64>,
    ) -> Result<Self> {
        let variance = variance_estimate(influence.view())?;
        let (ci_lower, ci_upper) = confidence_interval(theta_hat, variance, level)?;
        Ok(Self {
            method,
            theta_hat,
            variance,
            std_error: variance.sqrt(),
            ci_lower,
            ci_upper,
            level,
            influence,
            lambda,
            tau,
        })
    }
}

/// Imputation estimator: `n^-1 sum { delta_i y_i + (1 - delta_i) mhat_i }`.
pub fn impute_estimate(
    y: ArrayView1<'_, f64>,
    pattern: &ResponsePattern,
    mhat: ArrayView1<'_, f64>,
) -> Result<f64> {
    let n = pattern.len();
    if n == 0 {
        return Err(Error::EmptyData("imputation estimator input"));
    }
    if y.len() != n || mhat.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len().min(mhat.len()) });
    }
    let mut acc = 0.0;
    for i in 0..n {
        acc += if pattern.is_respondent(i) { y[i] } else { mhat[i] };
    }
    Ok(acc / n as f64)
}

/// Propensity score estimator: `n^-1 sum delta_i omega_i y_i`.
pub fn ps_estimate(
    y: ArrayView1<'_, f64>,
    pattern: &ResponsePattern,
    weights: ArrayView1<'_, f64>,
) -> Result<f64> {
    let n = pattern.len();
    if n == 0 {
        return Err(Error::EmptyData("propensity estimator input"));
    }
    if y.len() != n || weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len().min(weights.len()) });
    }
    let mut acc = 0.0;
    for i in 0..n {
        if pattern.is_respondent(i) {
            acc += weights[i] * y[i];
        }
    }
    Ok(acc / n as f64)
}

/// Influence values `eta_i = mhat_i + delta_i omega_i (y_i - mhat_i)`.
/// Weights are only consulted at respondent indices.
pub fn influence_values(
    y: ArrayView1<'_, f64>,
    pattern: &ResponsePattern,
    mhat: ArrayView1<'_, f64>,
    weights: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    let n = pattern.len();
    if y.len() != n || mhat.len() != n || weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len().min(mhat.len()).min(weights.len()) });
    }
    let mut eta = Array1::zeros(n);
    for i in 0..n {
        if pattern.is_respondent(i) {
            let w = weights[i];
            if !w.is_finite() {
                return Err(Error::Numerical(format!("missing weight at respondent {i}")));
            }
            eta[i] = mhat[i] + w * (y[i] - mhat[i]);
        } else {
            eta[i] = mhat[i];
        }
    }
    Ok(eta)
}

/// `V = n^-1 (n-1)^-1 sum (eta_i - mean)^2`, the variance of the mean of the
/// estimated influence values.
pub fn variance_estimate(eta: ArrayView1<'_, f64>) -> Result<f64> {
    let n = eta.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mean = eta.sum() / n as f64;
    let ss: f64 = eta.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok(ss / (n as f64 * (n as f64 - 1.0)))
}

/// Two-sided Wald interval `theta +- z_(1+level)/2 sqrt(variance)`.
pub fn confidence_interval(theta_hat: f64, variance: f64, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    if !(variance >= 0.0) {
        return Err(Error::Numerical(format!("negative variance {variance}")));
    }
    let z = normal_quantile(0.5 * (1.0 + level));
    let half = z * variance.sqrt();
    Ok((theta_hat - half, theta_hat + half))
}

/// Standard normal quantile (Acklam's rational approximation, relative error
/// below 1.2e-9 across the open unit interval).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile defined on (0,1), got {p}");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Ordinary least squares imputation baseline: intercept plus linear terms
/// fit on respondents, predictions for every unit.
pub fn linear_imputation_baseline(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    pattern: &ResponsePattern,
) -> Result<Array1<f64>> {
    let n = x.nrows();
    let d = x.ncols();
    if y.len() != n || pattern.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len().min(pattern.len()) });
    }
    if pattern.n1() <= d + 1 {
        return Err(Error::InsufficientData { needed: d + 2, got: pattern.n1() });
    }
    let p = d + 1;

    // normal equations over respondents
    let mut xtx = Array2::<f64>::zeros((p, p));
    let mut xty = Array1::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for i in 0..n {
        if !pattern.is_respondent(i) {
            continue;
        }
        if !y[i].is_finite() {
            return Err(Error::NonFiniteOutcome { index: i });
        }
        row[0] = 1.0;
        for j in 0..d {
            row[j + 1] = x[[i, j]];
        }
        for a in 0..p {
            for b in a..p {
                xtx[[a, b]] += row[a] * row[b];
            }
            xty[a] += row[a] * y[i];
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[[a, b]] = xtx[[b, a]];
        }
    }
    // rank check through the pivots of an unjittered Cholesky
    let beta = linalg::spd_solve(xtx.view(), xty.view(), 0.0).map_err(|_| Error::RankDeficient)?;

    let mut mhat = Array1::zeros(n);
    for i in 0..n {
        let mut acc = beta[0];
        for j in 0..d {
            acc += beta[j + 1] * x[[i, j]];
        }
        mhat[i] = acc;
    }
    Ok(mhat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn impute_collapses_to_sample_mean_under_full_response() {
        let y = array![1.0, 2.0, 3.0, 4.0];
        let pat = ResponsePattern::new(vec![1, 1, 1, 1]).unwrap();
        let mhat = array![9.0, 9.0, 9.0, 9.0];
        assert_eq!(impute_estimate(y.view(), &pat, mhat.view()).unwrap(), 2.5);
    }

    #[test]
    fn impute_uses_predictions_when_all_missing() {
        let y = array![f64::NAN, f64::NAN];
        let pat = ResponsePattern::new(vec![0, 0]).unwrap();
        let mhat = array![1.0, 3.0];
        assert_eq!(impute_estimate(y.view(), &pat, mhat.view()).unwrap(), 2.0);
    }

    #[test]
    fn impute_hand_example() {
        let y = array![2.0, f64::NAN, 4.0];
        let pat = ResponsePattern::new(vec![1, 0, 1]).unwrap();
        let mhat = array![0.0, 3.0, 0.0];
        assert_eq!(impute_estimate(y.view(), &pat, mhat.view()).unwrap(), 3.0);
    }

    #[test]
    fn ps_hand_examples() {
        let y = array![1.0, 2.0, 3.0];
        let pat = ResponsePattern::new(vec![1, 1, 1]).unwrap();
        let w = array![1.0, 1.0, 1.0];
        assert_eq!(ps_estimate(y.view(), &pat, w.view()).unwrap(), 2.0);

        let y2 = array![5.0, f64::NAN];
        let pat2 = ResponsePattern::new(vec![1, 0]).unwrap();
        let w2 = array![2.0, f64::NAN];
        assert_eq!(ps_estimate(y2.view(), &pat2, w2.view()).unwrap(), 5.0);
    }

    #[test]
    fn ps_normalized_weights_reproduce_constant() {
        let y = array![7.0, 7.0, f64::NAN, 7.0];
        let pat = ResponsePattern::new(vec![1, 1, 0, 1]).unwrap();
        // weights satisfying n^-1 sum delta w = 1
        let w = array![4.0 / 3.0, 4.0 / 3.0, f64::NAN, 4.0 / 3.0];
        assert_relative_eq!(
            ps_estimate(y.view(), &pat, w.view()).unwrap(),
            7.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn influence_cases() {
        let y = array![2.0, f64::NAN, 5.0];
        let pat = ResponsePattern::new(vec![1, 0, 1]).unwrap();
        let mhat = array![1.5, 2.5, 5.0];
        let w = array![2.0, f64::NAN, 3.0];
        let eta = influence_values(y.view(), &pat, mhat.view(), w.view()).unwrap();
        // nonrespondent: eta = mhat
        assert_eq!(eta[1], 2.5);
        // exact fit: eta = mhat
        assert_eq!(eta[2], 5.0);
        // respondent: mhat + w (y - mhat)
        assert_relative_eq!(eta[0], 1.5 + 2.0 * 0.5, max_relative = 1e-15);

        // unit weights: eta = delta y + (1 - delta) mhat
        let ones = array![1.0, 1.0, 1.0];
        let eta1 = influence_values(y.view(), &pat, mhat.view(), ones.view()).unwrap();
        assert_eq!(eta1[0], 2.0);
        assert_eq!(eta1[1], 2.5);
        assert_eq!(eta1[2], 5.0);

        // missing weight on a respondent is an error
        let bad = array![f64::NAN, 1.0, 1.0];
        assert!(influence_values(y.view(), &pat, mhat.view(), bad.view()).is_err());
    }

    #[test]
    fn variance_basics() {
        assert_eq!(variance_estimate(array![3.0, 3.0, 3.0].view()).unwrap(), 0.0);
        assert_eq!(variance_estimate(array![0.0, 2.0].view()).unwrap(), 1.0);
        assert!(variance_estimate(array![1.0].view()).is_err());
    }

    #[test]
    fn interval_quantiles() {
        let (lo, hi) = confidence_interval(0.0, 1.0, 0.95).unwrap();
        assert_relative_eq!(hi, 1.959964, epsilon = 1e-5);
        assert_relative_eq!(lo, -1.959964, epsilon = 1e-5);

        let (lo, hi) = confidence_interval(1.0, 4.0, 0.90).unwrap();
        assert_relative_eq!(hi - 1.0, 2.0 * 1.644854, epsilon = 2e-5);
        assert_relative_eq!(1.0 - lo, 2.0 * 1.644854, epsilon = 2e-5);

        let (lo, hi) = confidence_interval(5.0, 0.0, 0.5).unwrap();
        assert_eq!((lo, hi), (5.0, 5.0));

        assert!(confidence_interval(0.0, 1.0, 1.0).is_err());
        assert!(confidence_interval(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn ols_reproduces_linear_truth() {
        let x = array![[1.0, 2.0], [2.0, 1.0], [3.0, 5.0], [4.0, 3.0], [5.0, 0.5], [0.5, 4.0]];
        let beta = [0.7, 2.0, -1.0];
        let mut y = Array1::zeros(6);
        for i in 0..6 {
            y[i] = beta[0] + beta[1] * x[[i, 0]] + beta[2] * x[[i, 1]];
        }
        let pat = ResponsePattern::new(vec![1, 1, 1, 0, 1, 1]).unwrap();
        let mhat = linear_imputation_baseline(x.view(), y.view(), &pat).unwrap();
        for i in 0..6 {
            assert_relative_eq!(mhat[i], y[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn ols_single_column_slope() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = array![2.0, 4.0, 6.0, 8.0];
        let pat = ResponsePattern::new(vec![1, 1, 1, 1]).unwrap();
        let mhat = linear_imputation_baseline(x.view(), y.view(), &pat).unwrap();
        for i in 0..4 {
            assert_relative_eq!(mhat[i], y[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn ols_rejects_rank_deficiency() {
        // duplicated column
        let x = array![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0], [5.0, 5.0]];
        let y = array![1.0, 2.0, 3.0, 4.0, 5.0];
        let pat = ResponsePattern::new(vec![1, 1, 1, 1, 1]).unwrap();
        assert!(matches!(
            linear_imputation_baseline(x.view(), y.view(), &pat),
            Err(Error::RankDeficient)
        ));
    }

    #[test]
    fn mean_influence_equals_impute_estimate_with_unit_weights() {
        let y = array![1.0, f64::NAN, 3.0, 4.0, f64::NAN];
        let pat = ResponsePattern::new(vec![1, 0, 1, 1, 0]).unwrap();
        let mhat = array![1.1, 2.2, 2.9, 4.2, 0.3];
        let ones = Array1::ones(5);
        let eta = influence_values(y.view(), &pat, mhat.view(), ones.view()).unwrap();
        let theta = impute_estimate(y.view(), &pat, mhat.view()).unwrap();
        assert_relative_eq!(eta.sum() / 5.0, theta, max_relative = 1e-15);
    }
}
