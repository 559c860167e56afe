//! Gaussian pose prior `||A (theta - mu)||^2`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::container::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct PosePrior {
    /// Whitening transform, `rows x dim`.
    pub a: DMatrix<f64>,
    pub mu: DVector<f64>,
}

/// Descriptive metadata stored next to the prior tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorMeta {
    pub network: String,
    /// Model joint names whose three angles, in order, form the pose vector.
    pub joints: Vec<String>,
    pub samples: usize,
    pub eps: f64,
}

impl PosePrior {
    /// Mean and inverse Cholesky factor of `cov + eps I` from pose samples.
    pub fn fit(samples: &[DVector<f64>], eps: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::NotEnoughSamples {
                need: 2,
                got: samples.len(),
            });
        }
        let dim = samples[0].len();
        if samples.iter().any(|s| s.len() != dim) {
            return Err(Error::Dimension("pose samples differ in length".into()));
        }
        let n = samples.len() as f64;
        let mu = samples.iter().fold(DVector::zeros(dim), |acc, s| acc + s) / n;
        let mut cov = DMatrix::zeros(dim, dim);
        for s in samples {
            let d = s - &mu;
            cov.ger(1.0, &d, &d, 1.0);
        }
        cov /= n - 1.0;
        for i in 0..dim {
            cov[(i, i)] += eps;
        }
        let chol = cov.cholesky().ok_or_else(|| {
            Error::Config("prior covariance is not positive definite; increase eps".into())
        })?;
        let l = chol.l();
        let a = l
            .solve_lower_triangular(&DMatrix::identity(dim, dim))
            .ok_or(Error::Singular(eps))?;
        Ok(Self { a, mu })
    }

    pub fn identity(mu: DVector<f64>) -> Self {
        let n = mu.len();
        Self {
            a: DMatrix::identity(n, n),
            mu,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.ncols() != self.mu.len() {
            return Err(Error::Dimension(format!(
                "prior matrix has {} columns for a {}-dim mean",
                self.a.ncols(),
                self.mu.len()
            )));
        }
        if self.a.iter().chain(self.mu.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("prior has non-finite entries".into()));
        }
        Ok(())
    }

    /// `sqrt(w) A (theta - mu)`.
    pub fn residual(&self, theta: &DVector<f64>, weight: f64) -> Result<DVector<f64>> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "pose has {} entries, prior expects {}",
                theta.len(),
                self.dim()
            )));
        }
        Ok(&self.a * (theta - &self.mu) * weight.sqrt())
    }

    pub fn mahalanobis_sq(&self, theta: &DVector<f64>) -> Result<f64> {
        Ok(self.residual(theta, 1.0)?.norm_squared())
    }

    pub fn to_tensors(&self) -> Result<[Tensor; 2]> {
        // nalgebra is column-major; tensors are row-major
        let rows: Vec<f64> = self.a.transpose().iter().copied().collect();
        Ok([
            Tensor::f64(vec![self.a.nrows(), self.a.ncols()], rows)?,
            Tensor::f64(vec![self.mu.len()], self.mu.iter().copied().collect())?,
        ])
    }

    pub fn from_tensors(a: &Tensor, mu: &Tensor) -> Result<Self> {
        if a.dims.len() != 2 || mu.dims.len() != 1 || a.dims[1] != mu.dims[0] {
            return Err(Error::Container(format!(
                "prior tensors have incompatible dims {:?} and {:?}",
                a.dims, mu.dims
            )));
        }
        let prior = Self {
            a: DMatrix::from_row_slice(a.dims[0], a.dims[1], &a.to_f64()),
            mu: DVector::from_vec(mu.to_f64()),
        };
        prior
            .validate()
            .map_err(|e| Error::Container(e.to_string()))?;
        Ok(prior)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_samples_give_zero_residual_at_mean() {
        let t0 = DVector::from_vec(vec![0.1, -0.4, 0.7]);
        let prior = PosePrior::fit(&[t0.clone(), t0.clone(), t0.clone()], DEFAULT_EPS).unwrap();
        assert!((&prior.mu - &t0).norm() < 1e-15);
        assert!(prior.residual(&prior.mu, 200.0).unwrap().norm() == 0.0);
        assert!(prior.residual(&t0, 200.0).unwrap().norm() < 1e-12);
    }

    #[test]
    fn unit_variance_samples_give_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<DVector<f64>> = (0..200_000)
            .map(|_| DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        let prior = PosePrior::fit(&samples, 0.0).unwrap();
        // oracle: sample covariance computed independently, compared with A^-1 A^-T
        let n = samples.len() as f64;
        let mean = samples.iter().fold(DVector::zeros(3), |a, s| a + s) / n;
        let mut cov = DMatrix::<f64>::zeros(3, 3);
        for s in &samples {
            for i in 0..3 {
                for j in 0..3 {
                    cov[(i, j)] += (s[i] - mean[i]) * (s[j] - mean[j]) / (n - 1.0);
                }
            }
        }
        let ainv = prior.a.clone().try_inverse().unwrap();
        assert!((&ainv * ainv.transpose() - &cov).abs().max() < 1e-9);
        assert!((prior.a - DMatrix::identity(3, 3)).abs().max() < 1e-2);
    }

    #[test]
    fn one_sample_is_an_error() {
        let err = PosePrior::fit(&[DVector::zeros(2)], DEFAULT_EPS).unwrap_err();
        assert!(matches!(err, Error::NotEnoughSamples { need: 2, got: 1 }));
    }

    #[test]
    fn weight_and_scale_examples() {
        let prior = PosePrior::identity(DVector::zeros(4));
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        assert!((prior.residual(&e1, 200.0).unwrap().norm_squared() - 200.0).abs() < 1e-12);
        let theta = DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1]);
        let doubled = PosePrior {
            a: &prior.a * 2.0,
            mu: prior.mu.clone(),
        };
        let base = prior.residual(&theta, 1.0).unwrap().norm_squared();
        assert!((doubled.residual(&theta, 1.0).unwrap().norm_squared() - 4.0 * base).abs() < 1e-12);
    }

    #[test]
    fn tensor_round_trip() {
        let prior = PosePrior {
            a: DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            mu: DVector::from_vec(vec![0.5, -1.0, 2.0]),
        };
        let [a, mu] = prior.to_tensors().unwrap();
        assert_eq!(a.to_f64(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(PosePrior::from_tensors(&a, &mu).unwrap(), prior);
    }
}
