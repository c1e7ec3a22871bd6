//! Samplers driven by the closed-form denoiser of Gaussian data: the
//! multi-step Euler and Heun solvers against the exact ODE solution, and
//! the exact consistency function sampled in one and several steps.
//!
//! `cargo run --release --example analytic_sampling`

use svc_decoder::numcore::{Rng, Scalar};
use svc_decoder::oracle::{AnalyticConsistency, AnalyticDenoiser, GaussianSpec};
use svc_decoder::sampler::{sample_student, sample_teacher, CountingDenoiser, Solver};
use svc_decoder::schedule::TimeGrid;
use svc_decoder::Result;

pub struct SolverErrors {
    pub euler: Scalar,
    pub heun: Scalar,
    pub one_step: Scalar,
}

pub fn run_example() -> Result<SolverErrors> {
    let spec = GaussianSpec::scalar(0.2, 0.5)?;
    let shape = [4, 32];
    let grid = TimeGrid::karras(50, 0.002, 80.0, 7.0)?;

    let mut errs = Vec::new();
    for solver in [Solver::Euler, Solver::Heun] {
        let d = CountingDenoiser::new(AnalyticDenoiser(spec.clone()));
        let out = sample_teacher(&d, None, shape, &grid, &mut Rng::new(1), solver, true)?;
        let start = &out.trajectory.as_ref().expect("recorded")[0].1;
        let exact = spec.trajectory(start, 80.0, 0.002)?;
        let err = out.x.max_abs_diff(&exact)?;
        println!("{solver:?}: nfe {} (counted {}), max error vs exact {err:.2e}", out.nfe, d.count());
        errs.push(err);
    }

    let student = AnalyticConsistency { spec: spec.clone(), epsilon: 0.002 };
    let out = sample_student(&student, None, shape, 1, &grid, &mut Rng::new(2), true)?;
    let start = &out.trajectory.as_ref().expect("recorded")[0].1;
    let one_step = out.x.max_abs_diff(&spec.consistency(start, 80.0, 0.002)?)?;
    println!("consistency sampler, 1 step: nfe {}, error vs exact {one_step:.2e}", out.nfe);
    for steps in [2, 4] {
        let out = sample_student(&student, None, shape, steps, &grid, &mut Rng::new(2), false)?;
        println!("consistency sampler, {steps} steps: nfe {}, sample mean {:.3}", out.nfe, out.x.mean_value());
    }
    Ok(SolverErrors {
        euler: errs[0],
        heun: errs[1],
        one_step,
    })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
