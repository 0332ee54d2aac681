//! Sample containers: covariates, outcomes, and the response pattern.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Which units responded. Wraps the 0/1 indicator vector together with the
/// respondent and nonrespondent counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponsePattern {
    delta: Vec<u8>,
    n1: usize,
    n0: usize,
}

impl ResponsePattern {
    pub fn new(delta: Vec<u8>) -> Result<Self> {
        if delta.is_empty() {
            return Err(Error::EmptyData("response indicators"));
        }
        if let Some(&bad) = delta.iter().find(|&&d| d > 1) {
            return Err(Error::InvalidConfig(format!(
                "response indicator must be 0 or 1, got {bad}"
            )));
        }
        let n1 = delta.iter().filter(|&&d| d == 1).count();
        let n0 = delta.len() - n1;
        Ok(Self { delta, n1, n0 })
    }

    pub fn delta(&self) -> &[u8] {
        &self.delta
    }

    pub fn is_respondent(&self, i: usize) -> bool {
        self.delta[i] == 1
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    /// Number of respondents.
    pub fn n1(&self) -> usize {
        self.n1
    }

    /// Number of nonrespondents.
    pub fn n0(&self) -> usize {
        self.n0
    }

    /// Indices of respondents, in sample order.
    pub fn respondent_indices(&self) -> Vec<usize> {
        (0..self.delta.len()).filter(|&i| self.delta[i] == 1).collect()
    }
}

/// A sample of (x_i, y_i, delta_i) triples. Covariates are always observed;
/// the outcome is meaningful only where `delta_i = 1` (missing entries may
/// hold NaN).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub response: ResponsePattern,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, delta: Vec<u8>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::EmptyData("covariate matrix"));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y.len() });
        }
        if delta.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: delta.len() });
        }
        let response = ResponsePattern::new(delta)?;
        Ok(Self { x, y, response })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}
