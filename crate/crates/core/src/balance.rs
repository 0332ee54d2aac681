//! Maximum-entropy density ratio estimation in the RKHS, yielding the
//! propensity weights `omega(x) = 1 + (n0/n1) g(x)`.
//!
//! The dual parameterization is log-linear in kernel sections,
//! `log g(x; phi) = phi_0 + sum_j phi_j K(x, x_j)`, and the fit minimizes
//!
//! ```text
//! U(phi) = (1/n1) sum_i delta_i g(x_i; phi)
//!        - (1/n0) sum_i (1 - delta_i) log g(x_i; phi)
//!        + tau phi_s' K phi_s
//! ```
//!
//! jointly over `(phi_0, phi_s)` by L-BFGS from a zero start. Internally the
//! coefficients are optimized in the exactly equivalent coordinates
//! `psi = L' phi_s` with `K = L L'` (Cholesky), where the penalty is
//! `tau ||psi||^2`; this preconditions the search without changing the
//! objective, the start point, or the stationary points. Convergence is
//! always judged by the gradient norm in the original `(phi_0, phi_s)`
//! coordinates.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::data::ResponsePattern;
use crate::error::{Error, Result};
use crate::kernels::{GramMatrix, ResolvedKernel, UnitRescaler};
use crate::linalg;
use crate::optim::{self, OptimizerConfig, OptimizerReport, Problem};

/// Linear predictors beyond this magnitude are refused rather than
/// exponentiated.
pub const LINEAR_PREDICTOR_CLAMP: f64 = 35.0;

/// Fitted density ratio model: evaluates `g(x)` and the propensity weight
/// `omega(x) = 1 + (n0/n1) g(x)`.
#[derive(Debug, Clone)]
pub struct DensityRatioModel {
    phi0: f64,
    phi_s: Array1<f64>,
    tau: f64,
    training: Array2<f64>,
    rescaler: UnitRescaler,
    kernel: ResolvedKernel,
    n1: usize,
    n0: usize,
    /// g evaluated at the training points (respondents and nonrespondents)
    g_training: Array1<f64>,
}

impl DensityRatioModel {
    pub fn phi0(&self) -> f64 {
        self.phi0
    }

    pub fn phi_s(&self) -> ArrayView1<'_, f64> {
        self.phi_s.view()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// (n0, n1) counts behind the weight formula.
    pub fn counts(&self) -> (usize, usize) {
        (self.n0, self.n1)
    }

    /// `c = n0 / n1`, the estimated odds of nonresponse.
    pub fn ratio_c(&self) -> f64 {
        self.n0 as f64 / self.n1 as f64
    }

    /// Density ratio at a raw covariate point.
    pub fn g_at(&self, x: &[f64]) -> Result<f64> {
        let d = self.training.ncols();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        let mut u = vec![0.0; d];
        self.rescaler.apply_point(x, &mut u)?;
        let mut lin = self.phi0;
        for (j, &phi) in self.phi_s.iter().enumerate() {
            if phi != 0.0 {
                lin += phi * self.kernel.eval(&u, self.training.row(j).as_slice().unwrap())?;
            }
        }
        if lin.abs() > LINEAR_PREDICTOR_CLAMP {
            return Err(Error::LinearPredictorOverflow { magnitude: lin.abs() });
        }
        Ok(lin.exp())
    }

    /// Density ratio at the i-th training point.
    pub fn g_training(&self) -> ArrayView1<'_, f64> {
        self.g_training.view()
    }

    /// Propensity weight at a raw point; always >= 1.
    pub fn weight(&self, x: &[f64]) -> Result<f64> {
        Ok(1.0 + self.ratio_c() * self.g_at(x)?)
    }

    /// Propensity weights at the training points.
    pub fn weights_training(&self) -> Array1<f64> {
        let c = self.ratio_c();
        self.g_training.mapv(|g| 1.0 + c * g)
    }
}

fn validate(gram: &GramMatrix, pattern: &ResponsePattern, tau: f64) -> Result<()> {
    if pattern.len() != gram.n() {
        return Err(Error::DimensionMismatch { expected: gram.n(), got: pattern.len() });
    }
    if pattern.n1() == 0 {
        return Err(Error::NoRespondents);
    }
    if pattern.n0() == 0 {
        return Err(Error::NoNonrespondents);
    }
    if !(tau >= 0.0) {
        return Err(Error::InvalidConfig(format!("tau must be non-negative, got {tau}")));
    }
    Ok(())
}

/// Linear predictors `phi_0 + (K phi_s)_i` for all i, refusing overflow.
fn linear_predictors(
    phi: ArrayView1<'_, f64>,
    gram: &GramMatrix,
) -> Result<Array1<f64>> {
    let n = gram.n();
    if phi.len() != n + 1 {
        return Err(Error::DimensionMismatch { expected: n + 1, got: phi.len() });
    }
    let phi0 = phi[0];
    let k = gram.matrix();
    let mut u = Array1::zeros(n);
    for i in 0..n {
        let mut acc = phi0;
        for j in 0..n {
            acc += k[[i, j]] * phi[j + 1];
        }
        if acc.abs() > LINEAR_PREDICTOR_CLAMP {
            return Err(Error::LinearPredictorOverflow { magnitude: acc.abs() });
        }
        u[i] = acc;
    }
    Ok(u)
}

/// The entropy objective `U(phi)` with `phi = (phi_0, phi_1..phi_n)`.
pub fn entropy_objective(
    phi: ArrayView1<'_, f64>,
    gram: &GramMatrix,
    pattern: &ResponsePattern,
    tau: f64,
) -> Result<f64> {
    validate(gram, pattern, tau)?;
    let u = linear_predictors(phi, gram)?;
    let (n1, n0) = (pattern.n1() as f64, pattern.n0() as f64);
    let mut resp_term = 0.0;
    let mut miss_term = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        if pattern.is_respondent(i) {
            resp_term += ui.exp();
        } else {
            miss_term += ui;
        }
    }
    // penalty tau * phi_s' K phi_s
    let k = gram.matrix();
    let n = gram.n();
    let mut penalty = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += k[[i, j]] * phi[j + 1];
        }
        penalty += phi[i + 1] * row;
    }
    Ok(resp_term / n1 - miss_term / n0 + tau * penalty)
}

/// Exact gradient of [`entropy_objective`], length n+1.
pub fn entropy_gradient(
    phi: ArrayView1<'_, f64>,
    gram: &GramMatrix,
    pattern: &ResponsePattern,
    tau: f64,
) -> Result<Array1<f64>> {
    validate(gram, pattern, tau)?;
    let u = linear_predictors(phi, gram)?;
    let n = gram.n();
    let (n1, n0) = (pattern.n1() as f64, pattern.n0() as f64);
    let k = gram.matrix();

    // w_i = delta_i g_i / n1 - (1 - delta_i) / n0
    let mut w = Array1::zeros(n);
    let mut resp_mean = 0.0;
    for i in 0..n {
        if pattern.is_respondent(i) {
            let g = u[i].exp();
            w[i] = g / n1;
            resp_mean += g;
        } else {
            w[i] = -1.0 / n0;
        }
    }

    let mut grad = Array1::zeros(n + 1);
    grad[0] = resp_mean / n1 - 1.0;
    for kk in 0..n {
        let mut acc = 0.0;
        let mut kphi = 0.0;
        for i in 0..n {
            acc += k[[i, kk]] * w[i];
            kphi += k[[i, kk]] * phi[i + 1];
        }
        grad[kk + 1] = acc + 2.0 * tau * kphi;
    }
    Ok(grad)
}

/// Optimization state shared across tau values: the Cholesky factor of K and
/// the respondent layout. Building it once makes a tau grid search cheap.
pub struct DensityRatioEngine<'a> {
    gram: &'a GramMatrix,
    pattern: &'a ResponsePattern,
    /// lower Cholesky factor of K
    l: Array2<f64>,
    /// rows of `l` at respondent indices, densely packed
    l_resp: Array2<f64>,
    resp_idx: Vec<usize>,
    /// (1/n0) L' 1_m over nonrespondents
    lt_miss: Array1<f64>,
}

impl<'a> DensityRatioEngine<'a> {
    pub fn new(gram: &'a GramMatrix, pattern: &'a ResponsePattern) -> Result<Self> {
        validate(gram, pattern, 0.0)?;
        let n = gram.n();
        let trace: f64 = (0..n).map(|i| gram.matrix()[[i, i]]).sum();
        let l = linalg::cholesky_lower(gram.matrix().view(), 1e-10 * trace / n as f64)?;

        let resp_idx = pattern.respondent_indices();
        let mut l_resp = Array2::zeros((resp_idx.len(), n));
        for (a, &i) in resp_idx.iter().enumerate() {
            for j in 0..=i {
                l_resp[[a, j]] = l[[i, j]];
            }
        }
        let n0 = pattern.n0() as f64;
        let mut lt_miss = Array1::zeros(n);
        for i in 0..n {
            if !pattern.is_respondent(i) {
                for j in 0..=i {
                    lt_miss[j] += l[[i, j]] / n0;
                }
            }
        }
        Ok(Self { gram, pattern, l, l_resp, resp_idx, lt_miss })
    }

    /// Fit at a single tau from the zero start.
    pub fn fit(
        &self,
        tau: f64,
        rescaler: &UnitRescaler,
        training: ArrayView2<'_, f64>,
        config: &OptimizerConfig,
    ) -> Result<(DensityRatioModel, OptimizerReport)> {
        if !(tau > 0.0) {
            return Err(Error::InvalidConfig(format!("tau must be positive, got {tau}")));
        }
        let n = self.gram.n();
        let mut problem = PsiProblem {
            engine: self,
            tau,
            cached_x: Vec::new(),
            cached_u_resp: vec![0.0; self.resp_idx.len()],
            scratch: vec![0.0; n],
        };
        let (theta, report) = optim::minimize(&mut problem, vec![0.0; n + 1], config);

        if !report.converged {
            log::warn!(
                "density ratio fit at tau={tau:.3e} stopped after {} iterations with gradient norm {:.3e}",
                report.iterations,
                report.final_gradient_norm
            );
        }

        // recover phi_s from psi: L' phi_s = psi
        let phi0 = theta[0];
        let psi = &theta[1..];
        let phi_s = solve_upper_transposed(&self.l, psi);

        // g at every training point: exp(phi0 + L psi)
        let mut g_training = Array1::zeros(n);
        for i in 0..n {
            let mut acc = phi0;
            for j in 0..=i {
                acc += self.l[[i, j]] * psi[j];
            }
            g_training[i] = acc.clamp(-LINEAR_PREDICTOR_CLAMP, LINEAR_PREDICTOR_CLAMP).exp();
        }

        let model = DensityRatioModel {
            phi0,
            phi_s: Array1::from(phi_s),
            tau,
            training: training.to_owned(),
            rescaler: rescaler.clone(),
            kernel: *self.gram.kernel(),
            n1: self.pattern.n1(),
            n0: self.pattern.n0(),
            g_training,
        };

        if report.converged {
            // stationarity in phi_0 is the normalization identity
            let mean_g: f64 = self
                .resp_idx
                .iter()
                .map(|&i| model.g_training[i])
                .sum::<f64>()
                / self.pattern.n1() as f64;
            debug_assert!(
                (mean_g - 1.0).abs() <= 1e-5,
                "normalization identity violated: {mean_g}"
            );
        }
        Ok((model, report))
    }
}

/// Solve `L' phi = psi` for `phi` (back substitution on the transpose).
fn solve_upper_transposed(l: &Array2<f64>, psi: &[f64]) -> Vec<f64> {
    let n = psi.len();
    let mut phi = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = psi[i];
        for j in (i + 1)..n {
            acc -= l[[j, i]] * phi[j];
        }
        phi[i] = acc / l[[i, i]];
    }
    phi
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The objective in `(phi_0, psi)` coordinates.
struct PsiProblem<'a, 'b> {
    engine: &'b DensityRatioEngine<'a>,
    tau: f64,
    cached_x: Vec<f64>,
    cached_u_resp: Vec<f64>,
    scratch: Vec<f64>,
}

impl PsiProblem<'_, '_> {
    /// u at respondent rows: phi0 + L_r psi. Returns None on overflow.
    fn respondent_predictors(&mut self, x: &[f64]) -> Option<()> {
        let phi0 = x[0];
        let psi = &x[1..];
        let lr = &self.engine.l_resp;
        for (a, &i) in self.engine.resp_idx.iter().enumerate() {
            let row = lr.row(a);
            let acc = phi0 + dot(&row.as_slice().unwrap()[..=i], &psi[..=i]);
            if acc.abs() > LINEAR_PREDICTOR_CLAMP {
                return None;
            }
            self.cached_u_resp[a] = acc;
        }
        self.cached_x.clear();
        self.cached_x.extend_from_slice(x);
        Some(())
    }

    fn objective_from_cache(&self, x: &[f64]) -> f64 {
        let n1 = self.engine.pattern.n1() as f64;
        let phi0 = x[0];
        let psi = &x[1..];
        let resp: f64 = self.cached_u_resp.iter().map(|&u| u.exp()).sum();
        // nonrespondent part: -(1/n0) sum_m (phi0 + (L psi)_i) = -phi0 - lt_miss . psi
        let miss: f64 = phi0 + dot(self.engine.lt_miss.as_slice().unwrap(), psi);
        let penalty: f64 = dot(psi, psi);
        resp / n1 - miss + self.tau * penalty
    }
}

impl Problem for PsiProblem<'_, '_> {
    fn dim(&self) -> usize {
        self.engine.gram.n() + 1
    }

    fn eval_f(&mut self, x: &[f64]) -> Option<f64> {
        if self.cached_x.as_slice() != x {
            self.respondent_predictors(x)?;
        }
        Some(self.objective_from_cache(x))
    }

    fn eval_fg(&mut self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
        if self.cached_x.as_slice() != x {
            self.respondent_predictors(x)?;
        }
        let f = self.objective_from_cache(x);
        let n1 = self.engine.pattern.n1() as f64;
        let psi = &x[1..];

        // d/d phi0 = (1/n1) sum_r exp(u) - 1
        let mut sum_g = 0.0;
        // d/d psi = (1/n1) L_r' exp(u_r) - lt_miss + 2 tau psi
        let gpsi = &mut self.scratch;
        gpsi.iter_mut().for_each(|v| *v = 0.0);
        let lr = &self.engine.l_resp;
        for (a, &i) in self.engine.resp_idx.iter().enumerate() {
            let g = self.cached_u_resp[a].exp();
            sum_g += g;
            let row = lr.row(a);
            let row = &row.as_slice().unwrap()[..=i];
            let scale = g / n1;
            for (out, &v) in gpsi[..=i].iter_mut().zip(row) {
                *out += scale * v;
            }
        }
        grad[0] = sum_g / n1 - 1.0;
        let lt_miss = self.engine.lt_miss.as_slice().unwrap();
        for j in 0..psi.len() {
            grad[j + 1] = gpsi[j] - lt_miss[j] + 2.0 * self.tau * psi[j];
        }
        Some(f)
    }

    /// Gradient norm in the original (phi_0, phi_s) coordinates:
    /// grad_phi = L grad_psi, so the norm is ||(grad_0, L grad_psi)||.
    fn convergence_norm(&mut self, grad: &[f64]) -> f64 {
        let l = &self.engine.l;
        let n = l.nrows();
        let gpsi = &grad[1..];
        let mut acc = grad[0] * grad[0];
        for i in 0..n {
            let row = l.row(i);
            let v = dot(&row.as_slice().unwrap()[..=i], &gpsi[..=i]);
            acc += v * v;
        }
        acc.sqrt()
    }
}

/// Fit the density ratio model at one tau. Non-convergence is reported, not
/// an error; the caller decides what to do with a `converged = false` fit.
pub fn fit_density_ratio(
    gram: &GramMatrix,
    training: ArrayView2<'_, f64>,
    rescaler: &UnitRescaler,
    pattern: &ResponsePattern,
    tau: f64,
    config: &OptimizerConfig,
) -> Result<(DensityRatioModel, OptimizerReport)> {
    DensityRatioEngine::new(gram, pattern)?.fit(tau, rescaler, training, config)
}

/// Calibration discrepancy of fitted weights against the full-sample mean of
/// `mhat`:
/// `D = | n^-1 sum_i delta_i omega_i mhat_i - n^-1 sum_i mhat_i |`.
pub fn calibration_discrepancy(
    model: &DensityRatioModel,
    pattern: &ResponsePattern,
    mhat: ArrayView1<'_, f64>,
) -> Result<f64> {
    let n = pattern.len();
    if mhat.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: mhat.len() });
    }
    let c = model.ratio_c();
    let mut weighted = 0.0;
    let mut full = 0.0;
    for i in 0..n {
        full += mhat[i];
        if pattern.is_respondent(i) {
            weighted += (1.0 + c * model.g_training[i]) * mhat[i];
        }
    }
    Ok(((weighted - full) / n as f64).abs())
}

/// Default tau grid: 20 log-spaced points on [1e-6, 1] scaled by 1/n1.
pub fn default_tau_grid(n1: usize) -> Result<Vec<f64>> {
    if n1 == 0 {
        return Err(Error::NoRespondents);
    }
    let scale = 1.0 / n1 as f64;
    Ok(crate::ridge::log_spaced(1e-6, 1.0, 20).map(|v| v * scale).collect())
}

/// Outcome of a tau grid search.
pub struct TauSelection {
    pub tau: f64,
    pub model: DensityRatioModel,
    pub report: OptimizerReport,
    /// (tau, D(tau)) for converged fits; None marks a skipped fit.
    pub d_path: Vec<(f64, Option<f64>)>,
}

/// Two-step tuning: given `mhat` from the ridge fit, pick the tau minimizing
/// the calibration discrepancy D(tau). Non-converged fits are skipped with a
/// warning; it is an error if every fit fails.
pub fn select_tau(
    gram: &GramMatrix,
    training: ArrayView2<'_, f64>,
    rescaler: &UnitRescaler,
    pattern: &ResponsePattern,
    mhat: ArrayView1<'_, f64>,
    grid: &[f64],
    config: &OptimizerConfig,
) -> Result<TauSelection> {
    if grid.is_empty() || grid.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidGrid);
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let engine = DensityRatioEngine::new(gram, pattern)?;
    let mut d_path = Vec::with_capacity(sorted.len());
    let mut best: Option<(f64, f64, DensityRatioModel, OptimizerReport)> = None;
    for &tau in &sorted {
        let (model, report) = engine.fit(tau, rescaler, training, config)?;
        if !report.converged {
            d_path.push((tau, None));
            continue;
        }
        let d = calibration_discrepancy(&model, pattern, mhat)?;
        d_path.push((tau, Some(d)));
        // strict improvement: ties keep the earlier (smaller) tau
        if best.as_ref().map_or(true, |(bd, ..)| d < *bd) {
            best = Some((d, tau, model, report));
        }
    }
    match best {
        Some((_, tau, model, report)) => Ok(TauSelection { tau, model, report, d_path }),
        None => Err(Error::AllFitsFailed),
    }
}
