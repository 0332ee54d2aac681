//! Shared helpers for oracle tests: independent dense solvers and random
//! test instances. Everything here is deliberately written from scratch so
//! the oracles share no code path with the library implementation.

use krrimpute::kernels::{gram_matrix, GramMatrix, KernelSpec, UnitRescaler};
use krrimpute::ResponsePattern;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Dense LU solve with partial pivoting (independent oracle path).
pub fn lu_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().map(|row| row.clone()).collect();
    let mut x: Vec<f64> = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();

    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if m[perm[row]][col].abs() > m[perm[pivot]][col].abs() {
                pivot = row;
            }
        }
        perm.swap(col, pivot);
        let p = perm[col];
        let diag = m[p][col];
        assert!(diag.abs() > 1e-300, "singular oracle system");
        for row in (col + 1)..n {
            let r = perm[row];
            let f = m[r][col] / diag;
            if f != 0.0 {
                for k in col..n {
                    m[r][k] -= f * m[p][k];
                }
                x[r] -= f * x[p];
            }
        }
    }
    let mut out = vec![0.0; n];
    for col in (0..n).rev() {
        let p = perm[col];
        let mut acc = x[p];
        for k in (col + 1)..n {
            acc -= m[p][k] * out[k];
        }
        out[col] = acc / m[p][col];
    }
    out
}

/// Dense matrix inverse through the LU oracle.
pub fn lu_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut inv = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = lu_solve(a, &e);
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    inv
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations
/// (independent of the library's eigensolver).
pub fn jacobi_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.iter().map(|r| r.clone()).collect();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i][j] * m[i][j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}

/// A random small KRR instance over rescaled covariates.
pub struct Instance {
    pub gram: GramMatrix,
    pub training: Array2<f64>,
    pub rescaler: UnitRescaler,
    pub y: Array1<f64>,
    pub pattern: ResponsePattern,
    pub lambda: f64,
}

pub fn random_instance(seed: u64, max_n: usize) -> Instance {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=max_n);
    let d = rng.gen_range(1..=3usize);
    let order = if rng.gen::<bool>() { 1 } else { 2 };

    let mut raw = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            raw[[i, j]] = 1.0 + 2.0 * rng.gen::<f64>();
        }
    }
    let rescaler = UnitRescaler::fit(raw.view()).unwrap();
    let training = rescaler.apply(raw.view()).unwrap();
    let gram = gram_matrix(training.view(), &KernelSpec::sobolev(order, d)).unwrap();

    let mut y = Array1::zeros(n);
    for i in 0..n {
        y[i] = 2.0 * rng.gen::<f64>() - 1.0 + raw[[i, 0]];
    }
    // at least one respondent and one nonrespondent where possible
    let mut delta = vec![0u8; n];
    for d in delta.iter_mut() {
        *d = u8::from(rng.gen::<f64>() < 0.7);
    }
    delta[0] = 1;
    if n > 1 {
        delta[1] = 0;
    }
    let pattern = ResponsePattern::new(delta).unwrap();
    let lambda = 10f64.powf(rng.gen_range(-4.0..0.5));
    Instance { gram, training, rescaler, y, pattern, lambda }
}
