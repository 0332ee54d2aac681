//! The two-step estimation pipeline shared by the CLI and the simulation
//! lab: rescale covariates, fit kernel ridge regression with tuned lambda,
//! then fit the maximum-entropy density ratio with tau tuned against the
//! ridge predictions.

use ndarray::Array1;
use serde::Serialize;

use crate::balance::{self, DensityRatioModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimate::{self, EstimateReport, EstimatorKind};
use crate::kernels::{gram_matrix_resolved, GramMatrix, KernelSpec, UnitRescaler};
use crate::optim::{OptimizerConfig, OptimizerReport};
use crate::ridge::{self, FittedRegression, GcvDenominator};

/// How a tuning parameter is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum Tuning {
    /// Grid search over the library default grid.
    Auto,
    /// Grid search over an explicit grid.
    Grid(Vec<f64>),
    /// No search; use the given value.
    Fixed(f64),
}

/// Configuration of the two-step procedure.
#[derive(Debug, Clone)]
pub struct TwoStepConfig {
    pub kernel: KernelSpec,
    pub lambda: Tuning,
    pub tau: Tuning,
    pub gcv_denominator: GcvDenominator,
    /// Optional cap `lambda <= n^(-kappa)` applied to the default grid.
    pub kappa: Option<f64>,
    pub optimizer: OptimizerConfig,
}

impl TwoStepConfig {
    pub fn new(kernel: KernelSpec) -> Self {
        Self {
            kernel,
            lambda: Tuning::Auto,
            tau: Tuning::Auto,
            gcv_denominator: GcvDenominator::default(),
            kappa: None,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Everything the two-step procedure produced.
pub struct TwoStepFit {
    pub regression: FittedRegression,
    /// None when the sample has no nonrespondents (weights are then unit).
    pub ratio: Option<DensityRatioModel>,
    pub ratio_report: Option<OptimizerReport>,
    /// Ridge predictions at every sample point.
    pub mhat: Array1<f64>,
    /// Propensity weights at every sample point (1 everywhere under full
    /// response).
    pub weights: Array1<f64>,
    /// (tau, D(tau)) path; None entries mark non-converged fits.
    pub d_path: Vec<(f64, Option<f64>)>,
    pub gram: GramMatrix,
    pub rescaler: UnitRescaler,
}

impl TwoStepFit {
    pub fn lambda(&self) -> f64 {
        self.regression.lambda()
    }

    pub fn tau(&self) -> Option<f64> {
        self.ratio.as_ref().map(|r| r.tau())
    }
}

/// Run Step 1 (ridge fit with GCV-tuned lambda) and Step 2 (density ratio
/// with calibration-tuned tau) on a dataset.
pub fn two_step_fit(data: &Dataset, config: &TwoStepConfig) -> Result<TwoStepFit> {
    let n = data.n();
    let pattern = &data.response;
    if pattern.n1() == 0 {
        return Err(Error::NoRespondents);
    }
    if config.kernel.dim() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), got: config.kernel.dim() });
    }

    let rescaler = UnitRescaler::fit(data.x.view())?;
    let training = rescaler.apply(data.x.view())?;

    // Gaussian bandwidths resolve on the respondents' rescaled covariates.
    let resp_rows = pattern.respondent_indices();
    let mut resp_mat = ndarray::Array2::zeros((resp_rows.len(), data.dim()));
    for (a, &i) in resp_rows.iter().enumerate() {
        resp_mat.row_mut(a).assign(&training.row(i));
    }
    let kernel = config.kernel.resolve(resp_mat.view())?;
    let gram = gram_matrix_resolved(training.view(), &kernel)?;

    // Step 1: ridge regression
    let regression = match &config.lambda {
        Tuning::Fixed(lambda) => {
            ridge::fit_krr(&gram, training.view(), &rescaler, data.y.view(), pattern, *lambda)?
        }
        Tuning::Grid(grid) => ridge::select_lambda(
            &gram,
            training.view(),
            &rescaler,
            data.y.view(),
            pattern,
            grid,
            config.gcv_denominator,
        )?,
        Tuning::Auto => {
            let grid = ridge::default_lambda_grid(n, pattern.n1(), config.kappa)?;
            ridge::select_lambda(
                &gram,
                training.view(),
                &rescaler,
                data.y.view(),
                pattern,
                &grid,
                config.gcv_denominator,
            )?
        }
    };
    let mhat = regression.fitted_from_gram(&gram)?;

    // Step 2: density ratio (skipped under full response)
    if pattern.n0() == 0 {
        return Ok(TwoStepFit {
            regression,
            ratio: None,
            ratio_report: None,
            mhat,
            weights: Array1::ones(n),
            d_path: Vec::new(),
            gram,
            rescaler,
        });
    }

    let (ratio, report, d_path) = match &config.tau {
        Tuning::Fixed(tau) => {
            let (model, report) = balance::fit_density_ratio(
                &gram,
                training.view(),
                &rescaler,
                pattern,
                *tau,
                &config.optimizer,
            )?;
            let d = if report.converged {
                Some(balance::calibration_discrepancy(&model, pattern, mhat.view())?)
            } else {
                None
            };
            (model, report, vec![(*tau, d)])
        }
        Tuning::Grid(grid) => {
            let sel = balance::select_tau(
                &gram,
                training.view(),
                &rescaler,
                pattern,
                mhat.view(),
                grid,
                &config.optimizer,
            )?;
            (sel.model, sel.report, sel.d_path)
        }
        Tuning::Auto => {
            let grid = balance::default_tau_grid(pattern.n1())?;
            let sel = balance::select_tau(
                &gram,
                training.view(),
                &rescaler,
                pattern,
                mhat.view(),
                &grid,
                &config.optimizer,
            )?;
            (sel.model, sel.report, sel.d_path)
        }
    };

    let weights = ratio.weights_training();
    Ok(TwoStepFit {
        regression,
        ratio: Some(ratio),
        ratio_report: Some(report),
        mhat,
        weights,
        d_path,
        gram,
        rescaler,
    })
}

/// Estimate reports for the requested estimators from one two-step fit.
pub fn estimate_reports(
    data: &Dataset,
    fit: &TwoStepFit,
    estimators: &[EstimatorKind],
    level: f64,
) -> Result<Vec<EstimateReport>> {
    let pattern = &data.response;
    let mut out = Vec::with_capacity(estimators.len());
    for &kind in estimators {
        let report = match kind {
            EstimatorKind::KrrIm => {
                let theta =
                    estimate::impute_estimate(data.y.view(), pattern, fit.mhat.view())?;
                let eta = estimate::influence_values(
                    data.y.view(),
                    pattern,
                    fit.mhat.view(),
                    fit.weights.view(),
                )?;
                EstimateReport::from_influence(
                    kind,
                    theta,
                    eta,
                    level,
                    Some(fit.lambda()),
                    fit.tau(),
                )?
            }
            EstimatorKind::KrrPs => {
                let theta = estimate::ps_estimate(data.y.view(), pattern, fit.weights.view())?;
                let eta = estimate::influence_values(
                    data.y.view(),
                    pattern,
                    fit.mhat.view(),
                    fit.weights.view(),
                )?;
                EstimateReport::from_influence(
                    kind,
                    theta,
                    eta,
                    level,
                    Some(fit.lambda()),
                    fit.tau(),
                )?
            }
            EstimatorKind::LinearIm => {
                let mlin =
                    estimate::linear_imputation_baseline(data.x.view(), data.y.view(), pattern)?;
                let theta = estimate::impute_estimate(data.y.view(), pattern, mlin.view())?;
                let eta = estimate::influence_values(
                    data.y.view(),
                    pattern,
                    mlin.view(),
                    fit.weights.view(),
                )?;
                EstimateReport::from_influence(kind, theta, eta, level, None, fit.tau())?
            }
            EstimatorKind::Complete => complete_case_report(data, level)?,
        };
        out.push(report);
    }
    Ok(out)
}

/// Complete-case row: the sample mean of observed outcomes with the usual
/// mean standard error over respondents.
pub fn complete_case_report(data: &Dataset, level: f64) -> Result<EstimateReport> {
    let pattern = &data.response;
    let n1 = pattern.n1();
    if n1 == 0 {
        return Err(Error::NoRespondents);
    }
    let mut vals = Vec::with_capacity(n1);
    for i in 0..data.n() {
        if pattern.is_respondent(i) {
            if !data.y[i].is_finite() {
                return Err(Error::NonFiniteOutcome { index: i });
            }
            vals.push(data.y[i]);
        }
    }
    let mean = vals.iter().sum::<f64>() / n1 as f64;
    let variance = if n1 >= 2 {
        vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / ((n1 - 1) as f64 * n1 as f64)
    } else {
        0.0
    };
    let (lo, hi) = estimate::confidence_interval(mean, variance, level)?;
    Ok(EstimateReport {
        method: EstimatorKind::Complete,
        theta_hat: mean,
        variance,
        std_error: variance.sqrt(),
        ci_lower: lo,
        ci_upper: hi,
        level,
        influence: Array1::from(vals),
        lambda: None,
        tau: None,
    })
}

/// Fit diagnostics destined for the estimate report file.
#[derive(Debug, Clone, Serialize)]
pub struct FitDiagnostics {
    pub n: usize,
    pub n_respondents: usize,
    pub n_nonrespondents: usize,
    pub lambda: f64,
    pub gcv_path: Vec<(f64, f64)>,
    pub tau: Option<f64>,
    pub d_path: Vec<(f64, Option<f64>)>,
    pub optimizer: Option<OptimizerReport>,
    pub gaussian_bandwidth: Option<f64>,
}

impl FitDiagnostics {
    pub fn from_fit(data: &Dataset, fit: &TwoStepFit) -> Self {
        Self {
            n: data.n(),
            n_respondents: data.response.n1(),
            n_nonrespondents: data.response.n0(),
            lambda: fit.lambda(),
            gcv_path: fit.regression.gcv_path().to_vec(),
            tau: fit.tau(),
            d_path: fit.d_path.clone(),
            optimizer: fit.ratio_report.clone(),
            gaussian_bandwidth: fit.gram.kernel().bandwidth(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use approx::assert_relative_eq;
    use ndarray::{Array2, Array1};

    fn synthetic(n: usize, seed: u64, respond_all: bool) -> Dataset {
        // simple deterministic synthetic data over (1,3)
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut x = Array2::zeros((n, 2));
        let mut y = Array1::zeros(n);
        let mut delta = vec![1u8; n];
        for i in 0..n {
            let (a, b) = (1.0 + 2.0 * next(), 1.0 + 2.0 * next());
            x[[i, 0]] = a;
            x[[i, 1]] = b;
            y[i] = 1.0 + 2.0 * a - b + 0.1 * (next() - 0.5);
            if !respond_all && next() < 0.4 {
                delta[i] = 0;
            }
        }
        if !respond_all {
            delta[0] = 1; // keep at least one respondent
        }
        Dataset::new(x, y, delta).unwrap()
    }

    #[test]
    fn full_response_collapses_to_sample_mean() {
        let data = synthetic(40, 7, true);
        let config = TwoStepConfig::new(KernelSpec::sobolev(2, 2));
        let fit = two_step_fit(&data, &config).unwrap();
        assert!(fit.ratio.is_none());
        assert!(fit.weights.iter().all(|&w| w == 1.0));
        let reports =
            estimate_reports(&data, &fit, &[EstimatorKind::KrrIm, EstimatorKind::KrrPs], 0.95)
                .unwrap();
        let ybar = data.y.sum() / data.n() as f64;
        assert_relative_eq!(reports[0].theta_hat, ybar, max_relative = 1e-12);
        assert_relative_eq!(reports[1].theta_hat, ybar, max_relative = 1e-12);
    }

    #[test]
    fn two_step_produces_consistent_reports() {
        let data = synthetic(60, 3, false);
        let config = TwoStepConfig::new(KernelSpec::sobolev(2, 2));
        let fit = two_step_fit(&data, &config).unwrap();
        assert!(fit.ratio.is_some());
        assert!(fit.weights.iter().all(|&w| w >= 1.0));
        let reports = estimate_reports(
            &data,
            &fit,
            &[EstimatorKind::KrrIm, EstimatorKind::KrrPs, EstimatorKind::LinearIm],
            0.95,
        )
        .unwrap();
        for r in &reports {
            assert!(r.theta_hat.is_finite());
            assert!(r.variance >= 0.0);
            assert!(r.ci_lower <= r.theta_hat && r.theta_hat <= r.ci_upper);
            assert_relative_eq!(r.std_error, r.variance.sqrt(), max_relative = 1e-15);
        }
    }

    #[test]
    fn mean_influence_identity_with_unit_weights() {
        // with unit weights mean(eta) equals the imputation estimator exactly
        let data = synthetic(30, 11, false);
        let config = TwoStepConfig::new(KernelSpec::sobolev(1, 2));
        let fit = two_step_fit(&data, &config).unwrap();
        let ones = Array1::ones(data.n());
        let eta = crate::estimate::influence_values(
            data.y.view(),
            &data.response,
            fit.mhat.view(),
            ones.view(),
        )
        .unwrap();
        let theta =
            crate::estimate::impute_estimate(data.y.view(), &data.response, fit.mhat.view())
                .unwrap();
        assert_relative_eq!(eta.sum() / data.n() as f64, theta, max_relative = 1e-13);
    }
}
