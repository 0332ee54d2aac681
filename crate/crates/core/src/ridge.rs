//! Kernel ridge regression on respondents: closed-form coefficients,
//! prediction, and lambda selection by generalized cross-validation.
//!
//! With `Delta = diag(delta)` the full-system coefficients solve
//! `(Delta K + lambda I) alpha = Delta y`. Rows with `delta_i = 0` force
//! `alpha_i = 0`, so the system reduces to the symmetric positive-definite
//! respondent block `(K_rr + lambda I) alpha_r = y_r`, which is what gets
//! solved here.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::data::ResponsePattern;
use crate::error::{Error, Result};
use crate::kernels::{GramMatrix, ResolvedKernel, UnitRescaler};
use crate::linalg;

/// Denominator convention for the GCV criterion: the classical squared
/// trace, or an un-squared variant. The un-squared form is degenerate for
/// a strictly positive-definite Gram matrix (its score tends to zero with
/// lambda, so grid search always returns the smallest grid point and the
/// fit interpolates), hence the classical form is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GcvDenominator {
    Linear,
    #[default]
    Squared,
}

/// A fitted kernel ridge regression.
#[derive(Debug, Clone)]
pub struct FittedRegression {
    coefficients: Array1<f64>,
    lambda: f64,
    training: Array2<f64>,
    rescaler: UnitRescaler,
    kernel: ResolvedKernel,
    gcv_path: Vec<(f64, f64)>,
}

impl FittedRegression {
    /// Coefficient vector over the full sample; exactly zero at
    /// nonrespondent indices.
    pub fn coefficients(&self) -> ArrayView1<'_, f64> {
        self.coefficients.view()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kernel(&self) -> &ResolvedKernel {
        &self.kernel
    }

    /// Rescaled training covariates.
    pub fn training_points(&self) -> ArrayView2<'_, f64> {
        self.training.view()
    }

    /// (lambda, GCV(lambda)) pairs recorded during selection; empty when the
    /// fit used a fixed lambda.
    pub fn gcv_path(&self) -> &[(f64, f64)] {
        &self.gcv_path
    }

    pub(crate) fn set_gcv_path(&mut self, path: Vec<(f64, f64)>) {
        self.gcv_path = path;
    }

    /// Predict at a single raw (unscaled) point.
    pub fn predict_point(&self, x: &[f64]) -> Result<f64> {
        let d = self.training.ncols();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        let mut u = vec![0.0; d];
        self.rescaler.apply_point(x, &mut u)?;
        let mut acc = 0.0;
        for (i, &a) in self.coefficients.iter().enumerate() {
            if a != 0.0 {
                acc += a * self.kernel.eval(&u, self.training.row(i).as_slice().unwrap())?;
            }
        }
        Ok(acc)
    }

    /// Predict at each row of a raw covariate matrix.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let mut out = Array1::zeros(x.nrows());
        for (i, row) in x.rows().into_iter().enumerate() {
            out[i] = self.predict_point(row.as_slice().unwrap_or(&row.to_vec()))?;
        }
        Ok(out)
    }

    /// Fitted values at the training points, computed from the Gram matrix
    /// rows: `(K alpha)_i`.
    pub fn fitted_from_gram(&self, gram: &GramMatrix) -> Result<Array1<f64>> {
        let n = self.coefficients.len();
        if gram.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: gram.n() });
        }
        let k = gram.matrix();
        let mut out = Array1::zeros(n);
        for i in 0..n {
            let mut acc = 0.0;
            for (j, &a) in self.coefficients.iter().enumerate() {
                if a != 0.0 {
                    acc += k[[i, j]] * a;
                }
            }
            out[i] = acc;
        }
        Ok(out)
    }
}

fn validate_inputs(
    gram: &GramMatrix,
    y: ArrayView1<'_, f64>,
    pattern: &ResponsePattern,
) -> Result<()> {
    let n = gram.n();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if pattern.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: pattern.len() });
    }
    if pattern.n1() == 0 {
        return Err(Error::NoRespondents);
    }
    for i in 0..n {
        if pattern.is_respondent(i) && !y[i].is_finite() {
            return Err(Error::NonFiniteOutcome { index: i });
        }
    }
    Ok(())
}

/// Fit kernel ridge regression on respondents at a fixed `lambda`.
///
/// `training` holds the rescaled covariates matching `gram`; `rescaler` is
/// kept so later predictions can map raw points into the kernel domain.
pub fn fit_krr(
    gram: &GramMatrix,
    training: ArrayView2<'_, f64>,
    rescaler: &UnitRescaler,
    y: ArrayView1<'_, f64>,
    pattern: &ResponsePattern,
    lambda: f64,
) -> Result<FittedRegression> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
    }
    validate_inputs(gram, y, pattern)?;
    let resp = pattern.respondent_indices();
    let n1 = resp.len();
    let k = gram.matrix();

    // respondent block K_rr + lambda I
    let mut krr = Array2::zeros((n1, n1));
    for (a, &i) in resp.iter().enumerate() {
        for (b, &j) in resp.iter().enumerate() {
            krr[[a, b]] = k[[i, j]];
        }
        krr[[a, a]] += lambda;
    }
    let y_r = Array1::from_iter(resp.iter().map(|&i| y[i]));
    let trace_krr: f64 = resp.iter().map(|&i| k[[i, i]]).sum();
    let jitter = 1e-10 * trace_krr / n1 as f64;
    let alpha_r = linalg::spd_solve(krr.view(), y_r.view(), jitter)?;

    let mut coefficients = Array1::zeros(gram.n());
    for (a, &i) in resp.iter().enumerate() {
        coefficients[i] = alpha_r[a];
    }
    Ok(FittedRegression {
        coefficients,
        lambda,
        training: training.to_owned(),
        rescaler: rescaler.clone(),
        kernel: *gram.kernel(),
        gcv_path: Vec::new(),
    })
}

/// Shared eigendecomposition of the respondent block, reused across a
/// lambda grid: every GCV evaluation is O(n1) once this is built.
pub(crate) struct RidgeEngine {
    /// eigenvalues of K_rr, clamped at zero
    values: Array1<f64>,
    /// z = Q^T y_r
    z: Array1<f64>,
    n: usize,
    n1: usize,
}

impl RidgeEngine {
    pub fn new(gram: &GramMatrix, y: ArrayView1<'_, f64>, pattern: &ResponsePattern) -> Result<Self> {
        validate_inputs(gram, y, pattern)?;
        let resp = pattern.respondent_indices();
        let n1 = resp.len();
        let k = gram.matrix();
        let mut krr = Array2::zeros((n1, n1));
        for (a, &i) in resp.iter().enumerate() {
            for (b, &j) in resp.iter().enumerate() {
                krr[[a, b]] = k[[i, j]];
            }
        }
        let eig = linalg::sym_eigen(krr.view())?;
        let values = eig.values.mapv(|v| v.max(0.0));
        let y_r = Array1::from_iter(resp.iter().map(|&i| y[i]));
        // z = Q^T y_r
        let mut z = Array1::zeros(n1);
        for j in 0..n1 {
            let mut acc = 0.0;
            for i in 0..n1 {
                acc += eig.vectors[[i, j]] * y_r[i];
            }
            z[j] = acc;
        }
        Ok(Self { values, z, n: gram.n(), n1 })
    }

    /// GCV(lambda) computed from the spectral form:
    /// residual sum = sum ((lambda/(mu+lambda)) z)^2,
    /// tr(Delta - A) = n1 - sum mu/(mu+lambda).
    pub fn gcv(&self, lambda: f64, denominator: GcvDenominator) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
        }
        let n = self.n as f64;
        let mut rss = 0.0;
        let mut tr_a = 0.0;
        for (&mu, &zj) in self.values.iter().zip(self.z.iter()) {
            let shrink = mu / (mu + lambda);
            tr_a += shrink;
            let r = (1.0 - shrink) * zj;
            rss += r * r;
        }
        let trace = self.n1 as f64 - tr_a;
        if trace <= 0.0 {
            return Err(Error::DegenerateSmoother { trace });
        }
        let num = rss / n;
        let den = match denominator {
            GcvDenominator::Linear => trace / n,
            GcvDenominator::Squared => (trace / n) * (trace / n),
        };
        Ok(num / den)
    }
}

/// GCV score at a single lambda; `n1 >= 2` required.
pub fn gcv_score(
    gram: &GramMatrix,
    y: ArrayView1<'_, f64>,
    pattern: &ResponsePattern,
    lambda: f64,
    denominator: GcvDenominator,
) -> Result<f64> {
    if pattern.n1() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: pattern.n1() });
    }
    RidgeEngine::new(gram, y, pattern)?.gcv(lambda, denominator)
}

/// Default lambda grid: 40 log-spaced points on [1e-8, 1e4] scaled by 1/n1,
/// optionally restricted to `lambda <= n^(-kappa)` with `kappa > 1`. The
/// upper end is generous so the GCV minimum sits strictly inside the grid
/// rather than saturating at an endpoint.
pub fn default_lambda_grid(n: usize, n1: usize, kappa: Option<f64>) -> Result<Vec<f64>> {
    if n1 == 0 {
        return Err(Error::NoRespondents);
    }
    let scale = 1.0 / n1 as f64;
    let mut grid: Vec<f64> = log_spaced(1e-8, 1e4, 40).map(|v| v * scale).collect();
    if let Some(k) = kappa {
        if k <= 1.0 {
            return Err(Error::InvalidConfig(format!("kappa must exceed 1, got {k}")));
        }
        let cap = (n as f64).powf(-k);
        grid.retain(|&l| l <= cap);
        if grid.is_empty() {
            return Err(Error::InvalidGrid);
        }
    }
    Ok(grid)
}

pub(crate) fn log_spaced(lo: f64, hi: f64, count: usize) -> impl Iterator<Item = f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count).map(move |i| {
        if count == 1 {
            lo
        } else {
            (llo + (lhi - llo) * i as f64 / (count - 1) as f64).exp()
        }
    })
}

/// Pick the grid lambda minimizing GCV (ties go to the smallest lambda) and
/// fit at the winner. Returns the fitted model with its GCV path attached.
pub fn select_lambda(
    gram: &GramMatrix,
    training: ArrayView2<'_, f64>,
    rescaler: &UnitRescaler,
    y: ArrayView1<'_, f64>,
    pattern: &ResponsePattern,
    grid: &[f64],
    denominator: GcvDenominator,
) -> Result<FittedRegression> {
    if grid.is_empty() || grid.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidGrid);
    }
    if pattern.n1() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: pattern.n1() });
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let engine = RidgeEngine::new(gram, y, pattern)?;
    let mut path = Vec::with_capacity(sorted.len());
    let mut best: Option<(f64, f64)> = None;
    for &lambda in &sorted {
        let score = engine.gcv(lambda, denominator)?;
        path.push((lambda, score));
        // strict improvement only: equal scores keep the earlier (smaller) lambda
        if best.map_or(true, |(_, s)| score < s) {
            best = Some((lambda, score));
        }
    }
    let (lambda_star, _) = best.expect("non-empty grid");
    let mut fit = fit_krr(gram, training, rescaler, y, pattern, lambda_star)?;
    fit.set_gcv_path(path);
    Ok(fit)
}
