//! Reconstruction and pitch metrics.

use crate::error::{Error, Result};
use crate::numcore::{Scalar, Tensor};

pub fn mse(a: &Tensor, b: &Tensor) -> Result<Scalar> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op: "mse",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let s: Scalar = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.len() as Scalar)
}

pub fn pearson(x: &[Scalar], y: &[Scalar]) -> Result<Scalar> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("pearson: lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::invalid("pearson needs at least 2 points"));
    }
    let n = x.len() as Scalar;
    let (mx, my) = (x.iter().sum::<Scalar>() / n, y.iter().sum::<Scalar>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("pearson of a constant sequence"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Pearson correlation of F0 over frames voiced (`f0 > 0`) in both tracks.
pub fn fpc(f0_ref: &[Scalar], f0_gen: &[Scalar]) -> Result<Scalar> {
    if f0_ref.len() != f0_gen.len() {
        return Err(Error::invalid(format!(
            "f0 tracks differ in length: {} vs {}",
            f0_ref.len(),
            f0_gen.len()
        )));
    }
    let (a, b): (Vec<Scalar>, Vec<Scalar>) = f0_ref
        .iter()
        .zip(f0_gen)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (*a, *b))
        .unzip();
    pearson(&a, &b)
}

/// Decode time over the audio duration implied by `frames * hop / sample_rate`.
pub fn rtf(decode_secs: Scalar, frames: usize, hop: usize, sample_rate: u32) -> Result<Scalar> {
    if frames == 0 || hop == 0 || sample_rate == 0 {
        return Err(Error::invalid("rtf needs positive frames, hop and sample rate"));
    }
    Ok(decode_secs / (frames * hop) as Scalar * sample_rate as Scalar)
}
