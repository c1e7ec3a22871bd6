//! Trains a small unconditional denoiser on Gaussian data, where the ideal
//! denoiser is known in closed form, and measures how close it gets.
//!
//! `cargo run --release --example teacher_training`

use svc_decoder::denoiser::{DenoiserParams, OutputInit, WaveNetConfig};
use svc_decoder::numcore::{randn, Rng, Scalar, Tensor};
use svc_decoder::oracle::GaussianSpec;
use svc_decoder::schedule::{NoiseLevelDist, Precond};
use svc_decoder::training::{train_step, Example, ModelSpec, TrainState};
use svc_decoder::Result;

/// Mean `|D - D*|` over a fixed sweep of inputs and noise levels, before
/// and after training. The loss itself has a nonzero floor here.
pub struct TeacherSummary {
    pub err_before: Scalar,
    pub err_after: Scalar,
}

fn sweep_error(model: &ModelSpec, params: &DenoiserParams, spec: &GaussianSpec, verbose: bool) -> Result<Scalar> {
    let xs = Tensor::new(&[1, 25], (0..25).map(|i| -1.5 + 3.0 * i as Scalar / 24.0).collect())?;
    let levels = [0.01, 0.1, 0.3, 1.0, 3.0];
    let mut err = 0.0;
    for &t in &levels {
        let got = model.denoise(params, &xs, t, None)?;
        let want = spec.denoiser(&xs, t)?;
        let e = got.data().iter().zip(want.data()).map(|(a, b)| (a - b).abs()).sum::<Scalar>() / 25.0;
        if verbose {
            println!("t = {t:<5} mean |D - D*| = {e:.4}");
        }
        err += e;
    }
    Ok(err / levels.len() as Scalar)
}

pub fn run_example() -> Result<TeacherSummary> {
    let sigma_data = 0.5;
    let model = ModelSpec {
        net: WaveNetConfig::tiny(),
        enc: None,
        precond: Precond::new(sigma_data, 0.002)?,
        t_max: 80.0,
    };
    // offset and narrower than the preconditioning assumes, so the
    // zero-initialised network starts out wrong
    let (mu, sd) = (0.3, 0.4);
    let spec = GaussianSpec::scalar(mu, sd)?;
    let mut rng = Rng::new(1);
    let mut state = TrainState::new(model.init(&mut rng, OutputInit::Zero)?, 1e-3, 2);
    let noise = NoiseLevelDist::default();
    let err_before = sweep_error(&model, &state.params, &spec, false)?;

    let steps = 600;
    for i in 0..steps {
        let batch: Vec<Example> = (0..8)
            .map(|_| Ok(Example::unconditional(randn(&mut rng, &[1, 8]).axpby(sd, &Tensor::full(&[1, 8], mu), 1.0)?)))
            .collect::<Result<_>>()?;
        let loss = train_step(&mut state, &model, &noise, &batch)?;
        if i % 100 == 0 {
            println!("step {i:>4}  loss {loss:.4}");
        }
    }

    let summary = TeacherSummary {
        err_before,
        err_after: sweep_error(&model, &state.params, &spec, true)?,
    };
    println!("mean abs error {:.4} -> {:.4}", summary.err_before, summary.err_after);
    Ok(summary)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
