use std::collections::BTreeMap;

use crate::denoiser::DenoiserParams;
use crate::error::{Error, Result};
use crate::numcore::{Graph, Scalar, Var};

/// Finite-difference check of every named parameter a loss registers with
/// [`Graph::param`]. Same relative-error rule as
/// [`crate::numcore::grad_check`]; returns the worst error per name.
pub fn grad_check_params<F>(f: F, params: &DenoiserParams, step: Scalar) -> Result<BTreeMap<String, Scalar>>
where
    F: Fn(&mut Graph, &DenoiserParams) -> Result<Var>,
{
    let eval = |p: &DenoiserParams| -> Result<Scalar> {
        let mut g = Graph::new();
        let l = f(&mut g, p)?;
        g.value(l).item()
    };
    if eval(params)?.to_bits() != eval(params)?.to_bits() {
        return Err(Error::invalid("grad_check_params: loss is not deterministic"));
    }
    let mut g = Graph::new();
    let l = f(&mut g, params)?;
    let grads = g.backward(l)?;

    let mut out = BTreeMap::new();
    let mut shifted = params.clone();
    for (name, p) in params.iter() {
        let Some(analytic) = grads.named(name) else { continue };
        let g_max = analytic.data().iter().fold(0.0 as Scalar, |m, v| m.max(v.abs()));
        let floor = (1e-3 * g_max).max(Scalar::MIN_POSITIVE);
        let mut worst: Scalar = 0.0;
        for j in 0..p.len() {
            let orig = p.data()[j];
            shifted.get_mut(name)?.data_mut()[j] = orig + step;
            let plus = eval(&shifted)?;
            shifted.get_mut(name)?.data_mut()[j] = orig - step;
            let minus = eval(&shifted)?;
            shifted.get_mut(name)?.data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.data()[j];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(floor));
        }
        out.insert(name.to_string(), worst);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Rng, Tensor};

    #[test]
    fn quadratic_in_named_params() {
        let mut p = DenoiserParams::new();
        p.insert("a", crate::numcore::randn(&mut Rng::new(1), &[3, 2]));
        p.insert("b", Tensor::new(&[2, 1], vec![0.5, -1.5]).unwrap());
        let report = grad_check_params(
            |g, p| {
                let a = g.param("a", p.get("a")?);
                let b = g.param("b", p.get("b")?);
                let y = g.matmul(a, b)?;
                let y = g.tanh(y)?;
                g.sum_sq(y)
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert_eq!(report.len(), 2);
        assert!(report.values().all(|&e| e < 1e-6), "{report:?}");
    }
}
