//! Teacher ODE sampling and student one-/multi-step sampling.

use std::cell::Cell;

use crate::denoiser::Denoise;
use crate::error::{Error, Result};
use crate::numcore::{randn, Rng, Scalar, Tensor};
use crate::schedule::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Euler,
    Heun,
}

impl std::str::FromStr for Solver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Self::Euler),
            "heun" => Ok(Self::Heun),
            _ => Err(Error::invalid(format!("unknown solver {s:?}, expected euler or heun"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleOutput {
    /// `[mel_bins, frames]`
    pub x: Tensor,
    /// Denoiser evaluations performed.
    pub nfe: usize,
    /// `(t, x)` states visited, when recording was requested.
    pub trajectory: Option<Vec<(Scalar, Tensor)>>,
}

/// Counts calls to the wrapped denoiser.
pub struct CountingDenoiser<D> {
    pub inner: D,
    count: Cell<usize>,
}

impl<D> CountingDenoiser<D> {
    pub fn new(inner: D) -> Self {
        Self {
            inner,
            count: Cell::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.count.get()
    }
}

impl<D: Denoise> Denoise for CountingDenoiser<D> {
    fn denoise(&self, x_t: &Tensor, t: Scalar, cond: Option<&Tensor>) -> Result<Tensor> {
        self.count.set(self.count.get() + 1);
        self.inner.denoise(x_t, t, cond)
    }
}

fn check_shape(shape: [usize; 2], cond: Option<&Tensor>) -> Result<()> {
    if shape.contains(&0) {
        return Err(Error::invalid(format!("empty sample shape {shape:?}")));
    }
    if let Some(c) = cond {
        let (_, frames) = c.dims2("sample cond")?;
        if frames != shape[1] {
            return Err(Error::Shape {
                op: "sample cond frames",
                lhs: shape.to_vec(),
                rhs: c.shape().to_vec(),
            });
        }
    }
    Ok(())
}

fn finite(x: &Tensor, step: usize) -> Result<()> {
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            op: format!("sampler state at step {step}"),
        });
    }
    Ok(())
}

fn at_step(step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { op } => Error::NonFinite {
            op: format!("{op} at sampler step {step}"),
        },
        e => e,
    }
}

/// Integrates the probability-flow ODE from `t_N` down to `epsilon` over `grid`.
pub fn sample_teacher<D: Denoise + ?Sized>(
    d: &D,
    cond: Option<&Tensor>,
    shape: [usize; 2],
    grid: &TimeGrid,
    rng: &mut Rng,
    solver: Solver,
    record: bool,
) -> Result<SampleOutput> {
    check_shape(shape, cond)?;
    let ts = grid.times();
    let n = ts.len() - 1;
    let mut x = randn(rng, &shape).axpby(ts[n], &Tensor::zeros(&shape), 0.0)?;
    let mut traj = record.then(|| vec![(ts[n], x.clone())]);
    let mut nfe = 0;
    for i in (1..=n).rev() {
        let step = n - i;
        let (t, t_prev) = (ts[i], ts[i - 1]);
        let h = t_prev - t;
        x = (|| {
            let den = d.denoise(&x, t, cond)?;
            nfe += 1;
            let slope = x.axpby(1.0 / t, &den, -1.0 / t)?;
            let euler = x.axpby(1.0, &slope, h)?;
            if solver == Solver::Heun && i > 1 {
                let den2 = d.denoise(&euler, t_prev, cond)?;
                nfe += 1;
                let slope2 = euler.axpby(1.0 / t_prev, &den2, -1.0 / t_prev)?;
                let avg = slope.axpby(0.5, &slope2, 0.5)?;
                x.axpby(1.0, &avg, h)
            } else {
                Ok(euler)
            }
        })()
        .map_err(at_step(step))?;
        finite(&x, step)?;
        if let Some(tr) = traj.as_mut() {
            tr.push((t_prev, x.clone()));
        }
    }
    Ok(SampleOutput {
        x,
        nfe,
        trajectory: traj,
    })
}

/// Grid indices visited by a `steps`-step student: `round(N (s - k) / s)` for
/// `k = 0..s`, descending from `N`.
pub fn student_subgrid(n: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > n {
        return Err(Error::invalid(format!("student steps {steps} outside [1, {n}]")));
    }
    Ok((0..steps)
        .map(|k| ((n * (steps - k)) as Scalar / steps as Scalar).round() as usize)
        .collect())
}

/// One denoise from pure noise at `t_N`, then `steps - 1` re-noise/denoise rounds.
pub fn sample_student<D: Denoise + ?Sized>(
    d: &D,
    cond: Option<&Tensor>,
    shape: [usize; 2],
    steps: usize,
    grid: &TimeGrid,
    rng: &mut Rng,
    record: bool,
) -> Result<SampleOutput> {
    check_shape(shape, cond)?;
    let ts = grid.times();
    let n = ts.len() - 1;
    let idx = student_subgrid(n, steps)?;
    let eps = ts[0];
    let mut traj = record.then(Vec::new);
    let mut x = Tensor::zeros(&shape);
    for (k, &i) in idx.iter().enumerate() {
        let t = ts[i];
        let z = randn(rng, &shape);
        let x_in = if k == 0 {
            z.axpby(t, &x, 0.0)
        } else {
            x.axpby(1.0, &z, (t * t - eps * eps).sqrt())
        }
        .map_err(at_step(k))?;
        if let Some(tr) = traj.as_mut() {
            tr.push((t, x_in.clone()));
        }
        x = d.denoise(&x_in, t, cond).map_err(at_step(k))?;
        finite(&x, k)?;
    }
    if let Some(tr) = traj.as_mut() {
        tr.push((eps, x.clone()));
    }
    Ok(SampleOutput {
        x,
        nfe: steps,
        trajectory: traj,
    })
}
