//! The sampling grid and the preconditioning coefficients around the raw
//! network, including the exact identity at the smallest noise level.
//!
//! `cargo run --release --example schedule`

use svc_decoder::numcore::Scalar;
use svc_decoder::schedule::{NoiseLevelDist, Precond, TimeGrid};
use svc_decoder::numcore::Rng;
use svc_decoder::Result;

pub struct ScheduleSummary {
    pub grid: Vec<Scalar>,
    pub c_skip_at_epsilon: Scalar,
    pub c_out_at_epsilon: Scalar,
}

pub fn run_example() -> Result<ScheduleSummary> {
    let grid = TimeGrid::karras(50, 0.002, 80.0, 7.0)?;
    let precond = Precond::new(0.5, 0.002)?;

    println!("{:>4} {:>10} {:>8} {:>8} {:>8} {:>8} {:>10}", "i", "t", "c_skip", "c_out", "c_in", "c_noise", "weight");
    for i in (0..=50).step_by(5) {
        let t = grid.t(i);
        let c = precond.coeffs(t)?;
        println!(
            "{i:>4} {t:>10.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>10.2}",
            c.c_skip,
            c.c_out,
            c.c_in,
            c.c_noise,
            precond.loss_weight(t)?
        );
    }

    let dist = NoiseLevelDist::default();
    let mut rng = Rng::new(0);
    let mut draws: Vec<Scalar> = (0..10_000).map(|_| dist.sample(&mut rng)).collect();
    draws.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    println!("training noise level: median {:.3}, 1% {:.4}, 99% {:.2}", draws[5000], draws[100], draws[9900]);

    let edge = precond.coeffs(grid.t(0))?;
    Ok(ScheduleSummary {
        grid: grid.times().to_vec(),
        c_skip_at_epsilon: edge.c_skip,
        c_out_at_epsilon: edge.c_out,
    })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
