//! Distills a one-step student from an exact teacher (the closed-form
//! Gaussian denoiser), then compares one-step samples with the exact
//! consistency function.
//!
//! `cargo run --release --example distillation`

use svc_decoder::denoiser::{Denoise, OutputInit, WaveNetConfig};
use svc_decoder::numcore::{randn, Rng, Scalar};
use svc_decoder::oracle::{AnalyticDenoiser, GaussianSpec};
use svc_decoder::sampler::sample_student;
use svc_decoder::schedule::{Precond, TimeGrid};
use svc_decoder::training::{distill_step, DistillState, Example, ModelSpec};
use svc_decoder::Result;

pub struct DistillSummary {
    pub before: Scalar,
    pub after: Scalar,
}

/// Mean absolute gap between one-step samples and the exact map.
fn one_step_gap<D: Denoise>(d: &D, spec: &GaussianSpec, grid: &TimeGrid) -> Result<Scalar> {
    let mut total = 0.0;
    for s in 0..8 {
        let out = sample_student(d, None, [1, 16], 1, grid, &mut Rng::new(100 + s), true)?;
        let start = &out.trajectory.as_ref().expect("recorded")[0].1;
        let exact = spec.consistency(start, grid.t_max, grid.epsilon)?;
        total += out.x.data().iter().zip(exact.data()).map(|(a, b)| (a - b).abs()).sum::<Scalar>() / 16.0;
    }
    Ok(total / 8.0)
}

pub fn run_example() -> Result<DistillSummary> {
    let model = ModelSpec {
        net: WaveNetConfig::tiny(),
        enc: None,
        precond: Precond::new(1.0, 0.002)?,
        t_max: 80.0,
    };
    let spec = GaussianSpec::scalar(0.0, 1.0)?;
    let grid = TimeGrid::karras(50, 0.002, 80.0, 7.0)?;
    let mut rng = Rng::new(1);
    let init = model.init(&mut rng, OutputInit::Zero)?;
    let mut state = DistillState::new(init, AnalyticDenoiser(spec.clone()), grid.clone(), 5e-4, 3);

    let before = one_step_gap(&model.denoiser(&state.theta_minus), &spec, &grid)?;
    for i in 0..800 {
        let batch: Vec<Example> = (0..8)
            .map(|_| Example::unconditional(randn(&mut rng, &[1, 8])))
            .collect();
        let loss = distill_step(&mut state, &model, &batch)?;
        if i % 200 == 0 {
            println!("step {i:>4}  consistency loss {loss:.5}");
        }
    }
    let after = one_step_gap(&model.denoiser(&state.theta_minus), &spec, &grid)?;
    println!("one-step gap to the exact map: {before:.4} -> {after:.4}");

    // the boundary condition holds for any weights
    let x = randn(&mut rng, &[1, 16]);
    let at_eps = model.denoiser(&state.theta_minus).denoise(&x, 0.002, None)?;
    println!("max |f(x, eps) - x| = {:e}", at_eps.max_abs_diff(&x)?);
    Ok(DistillSummary { before, after })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
