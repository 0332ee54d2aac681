//! Mercer kernels, coordinate rescaling, and Gram matrix construction.
//!
//! The Sobolev reproducing kernel of order `l` on [0,1] is built from scaled
//! Bernoulli polynomials `k_q = B_q / q!`:
//!
//! ```text
//! K(x, y) = sum_{q=0}^{l-1} k_q(x) k_q(y) + k_l(x) k_l(y)
//!           + (-1)^(l-1) k_{2l}(|x - y|)
//! ```
//!
//! Multivariate covariates use the plain tensor product of univariate
//! kernels, evaluated on min-max rescaled coordinates.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Tolerance for Sobolev domain checks: inputs may stray this far outside
/// [0,1] before evaluation is refused.
const DOMAIN_TOL: f64 = 1e-12;

/// Bernoulli polynomial `B_q(x)` for `q <= 4`, the orders needed by Sobolev
/// kernels up to order 2.
pub fn bernoulli_polynomial(q: u32, x: f64) -> Result<f64> {
    match q {
        0 => Ok(1.0),
        1 => Ok(x - 0.5),
        2 => Ok(x * x - x + 1.0 / 6.0),
        3 => Ok(x * x * x - 1.5 * x * x + 0.5 * x),
        4 => {
            let x2 = x * x;
            Ok(x2 * x2 - 2.0 * x2 * x + x2 - 1.0 / 30.0)
        }
        _ => Err(Error::UnsupportedOrder(q)),
    }
}

/// `k_q(x) = B_q(x) / q!`.
fn scaled_bernoulli(q: u32, x: f64) -> f64 {
    const FACTORIALS: [f64; 5] = [1.0, 1.0, 2.0, 6.0, 24.0];
    // orders are internal and <= 4 by construction
    bernoulli_polynomial(q, x).expect("internal Bernoulli order") / FACTORIALS[q as usize]
}

fn check_unit_interval(v: f64) -> Result<f64> {
    if !(-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(&v) {
        return Err(Error::OutsideUnitInterval { value: v });
    }
    Ok(v.clamp(0.0, 1.0))
}

/// Univariate Sobolev reproducing kernel of order `l` (1 or 2) on [0,1].
pub fn sobolev_kernel_1d(x: f64, y: f64, order: u32) -> Result<f64> {
    if !(1..=2).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    let x = check_unit_interval(x)?;
    let y = check_unit_interval(y)?;
    Ok(sobolev_unchecked(x, y, order))
}

/// Kernel evaluation without domain validation; callers guarantee x, y in [0,1].
#[inline]
fn sobolev_unchecked(x: f64, y: f64, order: u32) -> f64 {
    let d = (x - y).abs();
    match order {
        1 => 1.0 + scaled_bernoulli(1, x) * scaled_bernoulli(1, y) + scaled_bernoulli(2, d),
        2 => {
            1.0 + scaled_bernoulli(1, x) * scaled_bernoulli(1, y)
                + scaled_bernoulli(2, x) * scaled_bernoulli(2, y)
                - scaled_bernoulli(4, d)
        }
        _ => unreachable!("order validated by caller"),
    }
}

/// Gaussian kernel `exp(-||x - y||^2 / (2 h^2))`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], bandwidth: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-sq / (2.0 * bandwidth * bandwidth)).exp())
}

/// Gaussian bandwidth: fixed, or resolved from data by the median heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    MedianHeuristic,
}

/// Kernel family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    /// Sobolev reproducing kernel of the given order (1 or 2) on [0,1].
    Sobolev { order: u32 },
    Gaussian { bandwidth: Bandwidth },
}

/// How a univariate kernel extends to multivariate covariates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Composition {
    Univariate,
    /// Plain tensor product over the given number of coordinates.
    TensorProduct(usize),
}

/// Declarative kernel choice; resolve against data to obtain an evaluator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub composition: Composition,
}

impl KernelSpec {
    pub fn sobolev(order: u32, dim: usize) -> Self {
        Self {
            family: KernelFamily::Sobolev { order },
            composition: if dim == 1 { Composition::Univariate } else { Composition::TensorProduct(dim) },
        }
    }

    pub fn gaussian(bandwidth: Bandwidth, dim: usize) -> Self {
        Self {
            family: KernelFamily::Gaussian { bandwidth },
            composition: if dim == 1 { Composition::Univariate } else { Composition::TensorProduct(dim) },
        }
    }

    pub fn dim(&self) -> usize {
        match self.composition {
            Composition::Univariate => 1,
            Composition::TensorProduct(d) => d,
        }
    }

    /// Validate the spec and fix any data-dependent parameter (the Gaussian
    /// median-heuristic bandwidth) using the supplied points.
    pub fn resolve(&self, points: ArrayView2<'_, f64>) -> Result<ResolvedKernel> {
        let d = self.dim();
        if points.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: points.ncols() });
        }
        let family = match self.family {
            KernelFamily::Sobolev { order } => {
                if !(1..=2).contains(&order) {
                    return Err(Error::UnsupportedOrder(order));
                }
                ResolvedFamily::Sobolev { order }
            }
            KernelFamily::Gaussian { bandwidth } => {
                let h = match bandwidth {
                    Bandwidth::Fixed(h) if h > 0.0 => h,
                    Bandwidth::Fixed(h) => {
                        return Err(Error::InvalidConfig(format!(
                            "bandwidth must be positive, got {h}"
                        )))
                    }
                    Bandwidth::MedianHeuristic => median_heuristic_bandwidth(points)?,
                };
                ResolvedFamily::Gaussian { bandwidth: h }
            }
        };
        Ok(ResolvedKernel { family, dim: d })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ResolvedFamily {
    Sobolev { order: u32 },
    Gaussian { bandwidth: f64 },
}

/// A kernel with all parameters fixed; immutable and cheap to copy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedKernel {
    family: ResolvedFamily,
    dim: usize,
}

impl ResolvedKernel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Resolved Gaussian bandwidth, if this is a Gaussian kernel.
    pub fn bandwidth(&self) -> Option<f64> {
        match self.family {
            ResolvedFamily::Gaussian { bandwidth } => Some(bandwidth),
            ResolvedFamily::Sobolev { .. } => None,
        }
    }

    /// Evaluate the kernel at a pair of points (rescaled coordinates for the
    /// Sobolev family).
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: if x.len() != self.dim { x.len() } else { y.len() },
            });
        }
        match self.family {
            ResolvedFamily::Sobolev { order } => {
                let mut prod = 1.0;
                for j in 0..self.dim {
                    let a = check_unit_interval(x[j])?;
                    let b = check_unit_interval(y[j])?;
                    prod *= sobolev_unchecked(a, b, order);
                }
                Ok(prod)
            }
            ResolvedFamily::Gaussian { bandwidth } => gaussian_kernel(x, y, bandwidth),
        }
    }
}

/// Tensor product of the base kernel over coordinates: `prod_j K(x_j, y_j)`.
pub fn tensor_product_kernel(x: &[f64], y: &[f64], base: &KernelSpec) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    match base.family {
        KernelFamily::Sobolev { order } => {
            let mut prod = 1.0;
            for (&a, &b) in x.iter().zip(y) {
                prod *= sobolev_kernel_1d(a, b, order)?;
            }
            Ok(prod)
        }
        KernelFamily::Gaussian { bandwidth } => {
            let h = match bandwidth {
                Bandwidth::Fixed(h) => h,
                Bandwidth::MedianHeuristic => {
                    return Err(Error::InvalidConfig(
                        "resolve the median-heuristic bandwidth before pointwise evaluation".into(),
                    ))
                }
            };
            // product of univariate Gaussians equals the multivariate Gaussian
            gaussian_kernel(x, y, h)
        }
    }
}

/// Median of the nonzero pairwise Euclidean distances.
pub fn median_heuristic_bandwidth(points: ArrayView2<'_, f64>) -> Result<f64> {
    let n = points.nrows();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d > 0.0 {
                dists.push(d.sqrt());
            }
        }
    }
    if dists.is_empty() {
        return Err(Error::Numerical(
            "median heuristic undefined: all pairwise distances are zero".into(),
        ));
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = dists.len();
    let median = if m % 2 == 1 { dists[m / 2] } else { 0.5 * (dists[m / 2 - 1] + dists[m / 2]) };
    Ok(median)
}

/// Min-max rescaler onto [0,1] per coordinate, fit on training data.
/// Out-of-range future points clip to the unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRescaler {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl UnitRescaler {
    pub fn fit(x: ArrayView2<'_, f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::InsufficientData { needed: 2, got: n });
        }
        let d = x.ncols();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for row in x.rows() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Numerical(format!("non-finite covariate in column {j}")));
                }
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        for j in 0..d {
            if hi[j] <= lo[j] {
                return Err(Error::ConstantColumn { column: j });
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn apply_point(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.lo.len() {
            return Err(Error::DimensionMismatch { expected: self.lo.len(), got: x.len() });
        }
        for j in 0..x.len() {
            out[j] = ((x[j] - self.lo[j]) / (self.hi[j] - self.lo[j])).clamp(0.0, 1.0);
        }
        Ok(())
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.lo.len() {
            return Err(Error::DimensionMismatch { expected: self.lo.len(), got: x.ncols() });
        }
        let mut u = x.to_owned();
        for mut row in u.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = ((*v - self.lo[j]) / (self.hi[j] - self.lo[j])).clamp(0.0, 1.0);
            }
        }
        Ok(u)
    }

    /// Affine inverse of `apply` (no clipping); recovers training data exactly.
    pub fn invert(&self, u: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if u.ncols() != self.lo.len() {
            return Err(Error::DimensionMismatch { expected: self.lo.len(), got: u.ncols() });
        }
        let mut x = u.to_owned();
        for mut row in x.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.lo[j] + *v * (self.hi[j] - self.lo[j]);
            }
        }
        Ok(x)
    }
}

/// Symmetric kernel matrix `K[i][j] = K(x_i, x_j)`.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    k: Array2<f64>,
    kernel: ResolvedKernel,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.k
    }

    pub fn kernel(&self) -> &ResolvedKernel {
        &self.kernel
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.k.row(i)
    }
}

/// Build the Gram matrix of `spec` over the rows of `x` (rescaled coordinates
/// for the Sobolev family). A median-heuristic Gaussian bandwidth is resolved
/// here from the same rows if still unresolved. Entries are computed once on
/// the upper triangle and mirrored, so symmetry is exact.
pub fn gram_matrix(x: ArrayView2<'_, f64>, spec: &KernelSpec) -> Result<GramMatrix> {
    let kernel = spec.resolve(x)?;
    gram_matrix_resolved(x, &kernel)
}

/// Gram matrix for an already-resolved kernel.
pub fn gram_matrix_resolved(x: ArrayView2<'_, f64>, kernel: &ResolvedKernel) -> Result<GramMatrix> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyData("gram matrix input"));
    }
    if x.ncols() != kernel.dim() {
        return Err(Error::DimensionMismatch { expected: kernel.dim(), got: x.ncols() });
    }

    let mut k = Array2::<f64>::zeros((n, n));
    match kernel.family {
        ResolvedFamily::Sobolev { order } => {
            // validate the whole point set once, then evaluate unchecked
            for row in x.rows() {
                for &v in row {
                    check_unit_interval(v)?;
                }
            }
            // accumulate the tensor product one coordinate at a time
            k.fill(1.0);
            for j in 0..x.ncols() {
                let col: Vec<f64> = x.column(j).iter().map(|v| v.clamp(0.0, 1.0)).collect();
                for i in 0..n {
                    for l in i..n {
                        k[[i, l]] *= sobolev_unchecked(col[i], col[l], order);
                    }
                }
            }
        }
        ResolvedFamily::Gaussian { bandwidth } => {
            let denom = 2.0 * bandwidth * bandwidth;
            for i in 0..n {
                let xi = x.row(i);
                for l in i..n {
                    let sq: f64 =
                        xi.iter().zip(x.row(l).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                    k[[i, l]] = (-sq / denom).exp();
                }
            }
        }
    }
    // mirror the upper triangle
    for i in 0..n {
        for l in (i + 1)..n {
            k[[l, i]] = k[[i, l]];
        }
    }
    Ok(GramMatrix { k, kernel: *kernel })
}
