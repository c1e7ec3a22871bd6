//! Records a small two-layer network on the tape, backpropagates, and
//! checks the result against central finite differences.
//!
//! `cargo run --release --example autodiff`

use svc_decoder::numcore::{grad_check, randn, Graph, Rng, Scalar, Var};
use svc_decoder::Result;

/// `mean(tanh(W2 · silu(W1 · x))^2)` over a `[4, 6]` input.
fn loss(g: &mut Graph, p: &[Var]) -> Result<Var> {
    let h = g.matmul(p[0], p[2])?;
    let h = g.silu(h)?;
    let y = g.matmul(p[1], h)?;
    let y = g.tanh(y)?;
    let sq = g.mul(y, y)?;
    g.mean(sq)
}

/// Returns the worst relative error over all inputs.
pub fn run_example() -> Result<Scalar> {
    let mut rng = Rng::new(7);
    let params = vec![randn(&mut rng, &[5, 4]), randn(&mut rng, &[3, 5]), randn(&mut rng, &[4, 6])];

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone())).collect();
    let out = loss(&mut g, &vars)?;
    let grads = g.backward(out)?;
    println!("loss = {:.6}, tape length = {}", g.value(out).item()?, g.len());
    for (i, v) in vars.iter().enumerate() {
        let d = grads.get(*v).expect("leaf gradient");
        println!("  |dL/dp{i}|_max = {:.3e}", d.data().iter().fold(0.0 as Scalar, |m, x| m.max(x.abs())));
    }

    let report = grad_check(loss, &params, 1e-5, 1e-4)?;
    println!("finite-difference check: worst rel err {:.2e}, passed = {}", report.worst(), report.passed());
    Ok(report.worst())
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
