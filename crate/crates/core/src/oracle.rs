//! Closed-form ground truth for Gaussian data `x0 ~ N(mu, sigma_d^2)`
//! (scalar or diagonal), with noising `x_t = x0 + t z`.

use crate::denoiser::Denoise;
use crate::error::{Error, Result};
use crate::numcore::{Scalar, Tensor};

/// Diagonal Gaussian. `mu` and `sigma_d` hold either one value (shared by
/// every element) or one value per element of the tensors they act on.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    pub mu: Vec<Scalar>,
    pub sigma_d: Vec<Scalar>,
}

impl GaussianSpec {
    pub fn scalar(mu: Scalar, sigma_d: Scalar) -> Result<Self> {
        Self::diagonal(vec![mu], vec![sigma_d])
    }

    pub fn diagonal(mu: Vec<Scalar>, sigma_d: Vec<Scalar>) -> Result<Self> {
        if mu.is_empty() || sigma_d.is_empty() {
            return Err(Error::invalid("gaussian spec needs at least one value"));
        }
        if sigma_d.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("sigma_d must be positive and finite"));
        }
        Ok(Self { mu, sigma_d })
    }

    fn params_for(&self, x: &Tensor) -> Result<impl Fn(usize) -> (Scalar, Scalar) + '_> {
        for v in [&self.mu, &self.sigma_d] {
            if v.len() != 1 && v.len() != x.len() {
                return Err(Error::invalid(format!(
                    "gaussian spec of length {} does not fit tensor of {} elements",
                    v.len(),
                    x.len()
                )));
            }
        }
        Ok(move |i: usize| {
            let mu = self.mu[if self.mu.len() == 1 { 0 } else { i }];
            let sd = self.sigma_d[if self.sigma_d.len() == 1 { 0 } else { i }];
            (mu, sd)
        })
    }

    fn map(&self, x: &Tensor, f: impl Fn(Scalar, Scalar, Scalar) -> Scalar) -> Result<Tensor> {
        let p = self.params_for(x)?;
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let (mu, sd) = p(i);
                f(v, mu, sd)
            })
            .collect();
        Tensor::new(x.shape(), data)
    }

    /// Posterior mean `E[x0 | x_t]`, the optimal denoiser.
    pub fn denoiser(&self, x: &Tensor, t: Scalar) -> Result<Tensor> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("denoiser needs t >= 0, got {t}")));
        }
        self.map(x, |v, mu, sd| {
            let sd2 = sd * sd;
            (sd2 * v + t * t * mu) / (sd2 + t * t)
        })
    }

    /// Exact probability-flow ODE solution from `(x_big, t_big)` to `t`.
    pub fn trajectory(&self, x_big: &Tensor, t_big: Scalar, t: Scalar) -> Result<Tensor> {
        if !(t > 0.0) {
            return Err(Error::invalid(format!("trajectory needs t > 0, got {t}")));
        }
        if t > t_big {
            return Err(Error::invalid(format!(
                "trajectory runs from {t_big} down, asked for {t}"
            )));
        }
        self.map(x_big, |v, mu, sd| {
            let sd2 = sd * sd;
            mu + (v - mu) * ((sd2 + t * t) / (sd2 + t_big * t_big)).sqrt()
        })
    }

    /// Exact consistency function: follow the trajectory down to `epsilon`.
    pub fn consistency(&self, x_t: &Tensor, t: Scalar, epsilon: Scalar) -> Result<Tensor> {
        if t < epsilon {
            return Err(Error::invalid(format!(
                "consistency needs t >= epsilon, got t={t} < {epsilon}"
            )));
        }
        if t == epsilon {
            return Ok(x_t.clone());
        }
        self.trajectory(x_t, t, epsilon)
    }
}

/// [`GaussianSpec::denoiser`] as a drop-in denoiser; ignores conditioning.
#[derive(Debug, Clone)]
pub struct AnalyticDenoiser(pub GaussianSpec);

impl Denoise for AnalyticDenoiser {
    fn denoise(&self, x_t: &Tensor, t: Scalar, _cond: Option<&Tensor>) -> Result<Tensor> {
        self.0.denoiser(x_t, t)
    }
}

/// [`GaussianSpec::consistency`] as a drop-in one-step student.
#[derive(Debug, Clone)]
pub struct AnalyticConsistency {
    pub spec: GaussianSpec,
    pub epsilon: Scalar,
}

impl Denoise for AnalyticConsistency {
    fn denoise(&self, x_t: &Tensor, t: Scalar, _cond: Option<&Tensor>) -> Result<Tensor> {
        self.spec.consistency(x_t, t, self.epsilon)
    }
}
