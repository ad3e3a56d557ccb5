use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Squared-exponential kernel `σ² exp(-‖x - x'‖² / 2ℓ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    pub sigma2: f64,
    pub ell: f64,
    /// Added to the diagonal of training Gram matrices.
    pub jitter: f64,
}

impl RbfKernel {
    /// From natural-log amplitude `log σ` and lengthscale `log ℓ`, with the
    /// default jitter `1e-8·σ²`.
    pub fn from_log(log_sigma: f64, log_ell: f64) -> Self {
        let sigma2 = (2.0 * log_sigma).exp();
        Self { sigma2, ell: log_ell.exp(), jitter: 1e-8 * sigma2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.ell > 0.0 && self.jitter >= 0.0) {
            return Err(invalid(format!("kernel needs sigma2 > 0, ell > 0, jitter >= 0; got {self:?}")));
        }
        Ok(())
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.sigma2 * (-d2 / (2.0 * self.ell * self.ell)).exp()
    }

    /// Prior variance at any single input.
    pub fn diag(&self) -> f64 {
        self.sigma2
    }

    /// Cross-covariance between the rows of `a` and the rows of `b`.
    pub fn cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
            let ra: Vec<f64> = a.row(i).iter().copied().collect();
            let rb: Vec<f64> = b.row(j).iter().copied().collect();
            self.eval(&ra, &rb)
        })
    }
}

/// Gram matrix of the rows of `x` plus `jitter·I`.
pub fn kernel_matrix(x: &DMatrix<f64>, kernel: &RbfKernel) -> Result<DMatrix<f64>> {
    kernel.validate()?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("inputs must be finite"));
    }
    let mut k = kernel.cross(x, x);
    for i in 0..k.nrows() {
        k[(i, i)] += kernel.jitter;
    }
    if k.clone().cholesky().is_none() {
        return Err(Error::CholeskyFailure { jitter: kernel.jitter });
    }
    Ok(k)
}
