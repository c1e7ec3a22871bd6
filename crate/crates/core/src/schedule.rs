//! Noise levels and the scalar coefficient functions of `t` shared by
//! training, distillation and sampling.

use crate::error::{Error, Result};
use crate::numcore::{Rng, Scalar};

/// Smallest noise level; the denoiser is the identity here.
pub const DEFAULT_EPSILON: Scalar = 0.002;
pub const DEFAULT_T_MAX: Scalar = 80.0;
pub const DEFAULT_RHO: Scalar = 7.0;
pub const DEFAULT_STEPS: usize = 50;

/// Discretised noise levels `times[0] = epsilon < ... < times[n] = t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub epsilon: Scalar,
    pub t_max: Scalar,
    pub n_steps: usize,
    pub rho: Scalar,
    times: Vec<Scalar>,
}

impl TimeGrid {
    /// Karras et al. style grid: uniform in `t^(1/rho)`.
    pub fn karras(n_steps: usize, epsilon: Scalar, t_max: Scalar, rho: Scalar) -> Result<Self> {
        if n_steps < 1 {
            return Err(Error::invalid("time grid needs at least one step"));
        }
        if !(epsilon > 0.0 && epsilon < t_max && t_max.is_finite()) {
            return Err(Error::invalid(format!(
                "time grid needs 0 < epsilon < t_max, got epsilon={epsilon}, t_max={t_max}"
            )));
        }
        if !(rho >= 1.0 && rho.is_finite()) {
            return Err(Error::invalid(format!("rho must be >= 1, got {rho}")));
        }
        let lo = epsilon.powf(1.0 / rho);
        let hi = t_max.powf(1.0 / rho);
        let mut times: Vec<Scalar> = (0..=n_steps)
            .map(|i| (lo + (i as Scalar / n_steps as Scalar) * (hi - lo)).powf(rho))
            .collect();
        // pin endpoints exactly; powf round trips are not exact
        times[0] = epsilon;
        times[n_steps] = t_max;
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("time grid is not strictly increasing"));
        }
        Ok(Self {
            epsilon,
            t_max,
            n_steps,
            rho,
            times,
        })
    }

    pub fn times(&self) -> &[Scalar] {
        &self.times
    }

    pub fn t(&self, i: usize) -> Scalar {
        self.times[i]
    }
}

/// Preconditioning for a data distribution with standard deviation `sigma_data`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Precond {
    pub sigma_data: Scalar,
    pub epsilon: Scalar,
}

/// The four scalar coefficients wrapping the raw network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coeffs {
    pub c_skip: Scalar,
    pub c_out: Scalar,
    pub c_in: Scalar,
    pub c_noise: Scalar,
}

impl Precond {
    pub fn new(sigma_data: Scalar, epsilon: Scalar) -> Result<Self> {
        if !(sigma_data > 0.0 && sigma_data.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma_data must be finite and positive, got {sigma_data}"
            )));
        }
        if !(epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        Ok(Self {
            sigma_data,
            epsilon,
        })
    }

    /// `c_skip` and `c_out` vanish/saturate so that `D(x, epsilon) = x` exactly.
    pub fn coeffs(&self, t: Scalar) -> Result<Coeffs> {
        if !(t >= self.epsilon && t.is_finite()) {
            return Err(Error::invalid(format!(
                "noise level {t} below epsilon {}",
                self.epsilon
            )));
        }
        let sd2 = self.sigma_data * self.sigma_data;
        let shifted = t - self.epsilon;
        let norm = (sd2 + t * t).sqrt();
        Ok(Coeffs {
            c_skip: sd2 / (shifted * shifted + sd2),
            c_out: self.sigma_data * shifted / norm,
            c_in: 1.0 / norm,
            c_noise: t.ln() / 4.0,
        })
    }

    /// Loss weight `(t^2 + sd^2) / (t * sd)^2`.
    pub fn loss_weight(&self, t: Scalar) -> Result<Scalar> {
        if !(t > 0.0) {
            return Err(Error::invalid(format!("loss weight needs t > 0, got {t}")));
        }
        let sd2 = self.sigma_data * self.sigma_data;
        Ok((t * t + sd2) / (t * t * sd2))
    }
}

/// Log-normal distribution of training noise levels, clamped to the grid range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLevelDist {
    pub p_mean: Scalar,
    pub p_std: Scalar,
    pub epsilon: Scalar,
    pub t_max: Scalar,
}

impl Default for NoiseLevelDist {
    fn default() -> Self {
        Self {
            p_mean: -1.2,
            p_std: 1.2,
            epsilon: DEFAULT_EPSILON,
            t_max: DEFAULT_T_MAX,
        }
    }
}

impl NoiseLevelDist {
    /// Draws `ln t` before clamping; exposed for distribution tests.
    pub fn sample_log(&self, rng: &mut Rng) -> Scalar {
        self.p_mean + self.p_std * rng.normal()
    }

    pub fn sample(&self, rng: &mut Rng) -> Scalar {
        self.sample_log(rng).exp().clamp(self.epsilon, self.t_max)
    }
}
