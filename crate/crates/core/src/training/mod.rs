//! Teacher training, consistency distillation and the optimizer they share.

mod distill;
mod gradcheck;
mod optim;
mod teacher;

pub use gradcheck::grad_check_params;
pub use distill::{consistency_loss, distill_step, ema_update, euler_solver_step, DistillState};
pub use optim::AdamW;
pub use teacher::{add_noise, teacher_loss, teacher_loss_graph, train_step, TrainState};

use crate::denoiser::{denoise_on, DenoiserParams, NetDenoiser, WaveNetConfig};
use crate::error::{Error, Result};
use crate::features::{build_cond, init_encoder_params, DataItem, EncoderConfig, FeatureSet};
use crate::numcore::{Eval, Rng, Scalar, Tensor};
use crate::schedule::Precond;

/// One training example: a clean target and optionally the inputs to the
/// conditioning encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// `[mel_bins, frames]`
    pub x0: Tensor,
    pub cond: Option<(FeatureSet, usize)>,
}

impl Example {
    pub fn unconditional(x0: Tensor) -> Self {
        Self { x0, cond: None }
    }
}

impl From<DataItem> for Example {
    fn from(d: DataItem) -> Self {
        Self {
            x0: d.target,
            cond: Some((d.features, d.singer_id)),
        }
    }
}

/// Everything needed to run a denoiser besides its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub net: WaveNetConfig,
    /// `None` trains an unconditional model; `net.cond_dim` must then be 0.
    pub enc: Option<EncoderConfig>,
    pub precond: Precond,
    pub t_max: Scalar,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        let want = self.enc.as_ref().map_or(0, EncoderConfig::cond_dim);
        if self.net.cond_dim != want {
            return Err(Error::Config(format!(
                "network expects cond_dim {} but the encoder produces {want}",
                self.net.cond_dim
            )));
        }
        Ok(())
    }

    /// Fresh network and encoder parameters.
    pub fn init(&self, rng: &mut Rng, output: crate::denoiser::OutputInit) -> Result<DenoiserParams> {
        self.validate()?;
        let mut p = crate::denoiser::init_params(&self.net, rng, output)?;
        if let Some(enc) = &self.enc {
            p.extend(init_encoder_params(enc, rng));
        }
        Ok(p)
    }

    /// Conditioning matrix for an example, built from the encoder weights in `params`.
    pub fn cond(&self, params: &DenoiserParams, ex: &Example) -> Result<Option<Tensor>> {
        match (&self.enc, &ex.cond) {
            (Some(enc), Some((fs, singer))) => Ok(Some(build_cond(enc, params, fs, *singer)?.0)),
            (None, _) => Ok(None),
            (Some(_), None) => Err(Error::invalid("conditional model given an example without features")),
        }
    }

    pub fn denoise(
        &self,
        params: &DenoiserParams,
        x_t: &Tensor,
        t: Scalar,
        cond: Option<&Tensor>,
    ) -> Result<Tensor> {
        denoise_on(&mut Eval, &self.net, params, &self.precond, self.t_max, x_t, t, cond)
    }

    /// Tape-free denoiser owning a copy of `params`.
    pub fn denoiser(&self, params: &DenoiserParams) -> NetDenoiser {
        NetDenoiser {
            cfg: self.net.clone(),
            params: params.clone(),
            precond: self.precond,
            t_max: self.t_max,
        }
    }
}

pub(crate) fn is_net_param(name: &str) -> bool {
    name.starts_with("net/")
}
