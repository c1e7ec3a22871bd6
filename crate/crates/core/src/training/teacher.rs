use super::{Example, ModelSpec};
use crate::denoiser::{denoise_on, DenoiserParams};
use crate::error::{Error, Result};
use crate::features::build_cond_on;
use crate::numcore::{randn, Graph, Rng, Scalar, Tensor, Var};
use crate::schedule::NoiseLevelDist;

use super::optim::AdamW;

/// `x0 + t z` with `z ~ N(0, I)`.
pub fn add_noise(x0: &Tensor, t: Scalar, rng: &mut Rng) -> Result<Tensor> {
    let z = randn(rng, x0.shape());
    x0.axpby(1.0, &z, t)
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: DenoiserParams,
    pub opt: AdamW,
    pub step: u64,
    pub rng: Rng,
}

impl TrainState {
    pub fn new(params: DenoiserParams, lr: Scalar, seed: u64) -> Self {
        Self {
            params,
            opt: AdamW::new(lr),
            step: 0,
            rng: Rng::new(seed),
        }
    }
}

fn with_level(t: Scalar) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { op } => Error::NonFinite {
            op: format!("{op} (teacher loss at t={t})"),
        },
        e => e,
    }
}

/// Records the weighted denoising loss, averaged over the batch, on `g`.
pub fn teacher_loss_graph(
    g: &mut Graph,
    model: &ModelSpec,
    params: &DenoiserParams,
    batch: &[Example],
    noise: &NoiseLevelDist,
    rng: &mut Rng,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut total: Option<Var> = None;
    for ex in batch {
        let t = noise.sample(rng);
        let x_t = add_noise(&ex.x0, t, rng)?;
        let cond = match (&model.enc, &ex.cond) {
            (Some(enc), Some((fs, singer))) => Some(build_cond_on(g, enc, params, fs, *singer)?),
            (None, _) => None,
            (Some(_), None) => return Err(Error::invalid("conditional model given an example without features")),
        };
        let lam = model.precond.loss_weight(t)?;
        let item = (|| {
            let d = denoise_on(g, &model.net, params, &model.precond, model.t_max, &x_t, t, cond.as_ref())?;
            let x0 = g.constant(ex.x0.clone());
            let diff = g.sub(d, x0)?;
            let sq = g.sum_sq(diff)?;
            g.scale(sq, lam / (ex.x0.len() * batch.len()) as Scalar)
        })()
        .map_err(with_level(t))?;
        total = Some(match total {
            None => item,
            Some(acc) => g.add(acc, item)?,
        });
    }
    Ok(total.expect("non-empty batch"))
}

/// `E[lambda(t) ||D(x0 + t z, t) - x0||^2]` over the batch, per element.
pub fn teacher_loss(
    model: &ModelSpec,
    params: &DenoiserParams,
    batch: &[Example],
    noise: &NoiseLevelDist,
    rng: &mut Rng,
) -> Result<Scalar> {
    let mut g = Graph::new();
    let l = teacher_loss_graph(&mut g, model, params, batch, noise, rng)?;
    g.value(l).item()
}

/// One optimizer step on the teacher loss. Parameters are untouched on error.
pub fn train_step(
    state: &mut TrainState,
    model: &ModelSpec,
    noise: &NoiseLevelDist,
    batch: &[Example],
) -> Result<Scalar> {
    let mut g = Graph::new();
    let l = teacher_loss_graph(&mut g, model, &state.params, batch, noise, &mut state.rng)?;
    let loss = g.value(l).item()?;
    let grads = g.backward(l)?;
    state.opt.step(&mut state.params, &grads, |_| true)?;
    state.step += 1;
    Ok(loss)
}
