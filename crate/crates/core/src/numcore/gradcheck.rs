//! Central finite-difference verification of tape gradients.

use super::graph::{Graph, Var};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Worst relative error per parameter tensor.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: Vec<Scalar>,
    pub tol: Scalar,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err.iter().all(|&e| e <= self.tol)
    }

    pub fn worst(&self) -> Scalar {
        self.max_rel_err.iter().cloned().fold(0.0, Scalar::max)
    }
}

/// Compares `d f / d params` from the tape against central differences.
///
/// `f` builds a scalar on a fresh graph from leaves for `params` (in order).
/// Relative error for one entry is `|a - n| / max(|a|, |n|, 1e-3 * g_max)`
/// where `g_max` is the largest analytic magnitude in that tensor, so
/// entries that are tiny compared to their neighbours are judged on
/// absolute scale.
pub fn grad_check<F>(f: F, params: &[Tensor], step: Scalar, tol: Scalar) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor]| -> Result<Scalar> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.constant(p.clone())).collect();
        let out = f(&mut g, &vars)?;
        g.value(out).item()
    };

    let base = eval(params)?;
    let again = eval(params)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::invalid(format!(
            "grad_check: function is not deterministic ({base} vs {again})"
        )));
    }

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut max_rel_err = Vec::with_capacity(params.len());
    for (pi, p) in params.iter().enumerate() {
        let analytic = grads.get(vars[pi]).expect("leaf gradient");
        let g_max = analytic.data().iter().fold(0.0 as Scalar, |m, v| m.max(v.abs()));
        let floor = (1e-3 * g_max).max(Scalar::MIN_POSITIVE);
        let mut worst: Scalar = 0.0;
        for j in 0..p.len() {
            let mut shifted: Vec<Tensor> = params.to_vec();
            shifted[pi].data_mut()[j] += step;
            let plus = eval(&shifted)?;
            shifted[pi].data_mut()[j] -= 2.0 * step;
            let minus = eval(&shifted)?;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.data()[j];
            let denom = a.abs().max(numeric.abs()).max(floor);
            worst = worst.max((a - numeric).abs() / denom);
        }
        max_rel_err.push(worst);
    }
    Ok(GradCheckReport { max_rel_err, tol })
}
