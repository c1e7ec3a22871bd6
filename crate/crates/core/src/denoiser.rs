//! Conditional denoiser: a non-causal WaveNet-style network `F` wrapped by
//! the skip/out preconditioning
//! `D(x, t) = c_skip(t) x + c_out(t) F(c_in(t) x, c_noise(t), cond)`.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numcore::{Backend, Eval, Rng, Scalar, Tensor};
use crate::schedule::Precond;

/// Anything that maps a noisy sample at level `t` to an estimate of clean data.
///
/// `cond` is the channel-major conditioning matrix `[d_cond, frames]`.
pub trait Denoise {
    fn denoise(&self, x_t: &Tensor, t: Scalar, cond: Option<&Tensor>) -> Result<Tensor>;
}

impl<D: Denoise + ?Sized> Denoise for &D {
    fn denoise(&self, x_t: &Tensor, t: Scalar, cond: Option<&Tensor>) -> Result<Tensor> {
        (**self).denoise(x_t, t, cond)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaveNetConfig {
    pub n_layers: usize,
    pub residual_channels: usize,
    /// Dilations run 1, 2, 4, .., 2^(cycle-1) and repeat.
    pub dilation_cycle: usize,
    pub kernel_size: usize,
    /// Rows of the conditioning matrix; 0 disables conditioning.
    pub cond_dim: usize,
    pub mel_bins: usize,
    pub time_embed_dim: usize,
}

impl WaveNetConfig {
    pub fn full() -> Self {
        Self {
            n_layers: 20,
            residual_channels: 256,
            dilation_cycle: 10,
            kernel_size: 3,
            cond_dim: 1024,
            mel_bins: 80,
            time_embed_dim: 128,
        }
    }

    pub fn tiny() -> Self {
        Self {
            n_layers: 4,
            residual_channels: 16,
            dilation_cycle: 2,
            kernel_size: 3,
            cond_dim: 0,
            mel_bins: 1,
            time_embed_dim: 16,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::Config(format!("unknown network preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size % 2 == 0 {
            return Err(Error::invalid(format!(
                "kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        let dims = [
            self.n_layers,
            self.residual_channels,
            self.dilation_cycle,
            self.kernel_size,
            self.mel_bins,
            self.time_embed_dim,
        ];
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("network dims must be positive: {self:?}")));
        }
        if self.time_embed_dim % 2 != 0 {
            return Err(Error::invalid("time_embed_dim must be even"));
        }
        Ok(())
    }

    pub fn dilation(&self, layer: usize) -> usize {
        1 << (layer % self.dilation_cycle)
    }
}

/// Named parameter tensors. Network weights live under `net/`, the
/// conditioning encoder under `enc/`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenoiserParams {
    tensors: BTreeMap<String, Tensor>,
}

impl DenoiserParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn extend(&mut self, other: DenoiserParams) {
        self.tensors.extend(other.tensors);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Same names and same shapes.
    pub fn same_shape(&self, other: &DenoiserParams) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|((ka, va), (kb, vb))| ka == kb && va.shape() == vb.shape())
    }

    pub fn check_same_shape(&self, other: &DenoiserParams) -> Result<()> {
        if self.same_shape(other) {
            return Ok(());
        }
        for (k, v) in &self.tensors {
            match other.tensors.get(k) {
                None => return Err(Error::MissingParam(k.clone())),
                Some(o) if o.shape() != v.shape() => {
                    return Err(Error::Shape {
                        op: "params",
                        lhs: v.shape().to_vec(),
                        rhs: o.shape().to_vec(),
                    })
                }
                _ => {}
            }
        }
        let extra = other.names().find(|k| !self.tensors.contains_key(*k));
        Err(Error::MissingParam(extra.unwrap_or("?").to_string()))
    }

    /// `self <- mu * self + (1 - mu) * other`, elementwise over every tensor.
    /// Entries already equal to `other` stay bit-identical, and `mu = 0`
    /// is an exact copy.
    pub fn blend_toward(&mut self, other: &DenoiserParams, mu: Scalar) -> Result<()> {
        self.check_same_shape(other)?;
        for (k, v) in self.tensors.iter_mut() {
            let o = &other.tensors[k];
            let blend = |(a, &b): (&mut Scalar, &Scalar)| {
                *a = if mu == 0.0 { b } else { *a + (1.0 - mu) * (b - *a) }
            };
            v.data_mut().iter_mut().zip(o.data()).for_each(blend);
        }
        Ok(())
    }

    /// SHA-256 over names, shapes and raw little-endian values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.tensors {
            h.update(k.as_bytes());
            for &d in v.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for x in v.data() {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Sub-map of names with the given prefix.
    pub fn with_prefix(&self, prefix: &str) -> DenoiserParams {
        DenoiserParams {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }
}

/// How the final projection of `F` is initialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputInit {
    /// `F == 0` at step 0, so `D(x, t) = c_skip(t) x`.
    Zero,
    Random,
}

pub(crate) fn random_matrix(rng: &mut Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let std = 1.0 / (fan_in as Scalar).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| std * rng.normal()).collect()).expect("positive dims")
}

fn layer_key(i: usize, name: &str) -> String {
    format!("net/layer{i}/{name}")
}

/// Fresh network parameters.
pub fn init_params(cfg: &WaveNetConfig, rng: &mut Rng, output: OutputInit) -> Result<DenoiserParams> {
    cfg.validate()?;
    let c = cfg.residual_channels;
    let h = cfg.time_embed_dim;
    let k = cfg.kernel_size;
    let mut p = DenoiserParams::new();
    let mut w = |p: &mut DenoiserParams, name: String, shape: &[usize], fan_in: usize| {
        p.insert(name, random_matrix(rng, shape, fan_in));
    };
    w(&mut p, "net/in_proj/w".into(), &[c, cfg.mel_bins], cfg.mel_bins);
    p.insert("net/in_proj/b", Tensor::zeros(&[c, 1]));
    w(&mut p, "net/time/w1".into(), &[h, h], h);
    p.insert("net/time/b1", Tensor::zeros(&[h, 1]));
    w(&mut p, "net/time/w2".into(), &[h, h], h);
    p.insert("net/time/b2", Tensor::zeros(&[h, 1]));
    for i in 0..cfg.n_layers {
        for gate in ["filter", "gate"] {
            w(&mut p, layer_key(i, &format!("{gate}_kernel")), &[c, c, k], c * k);
            p.insert(layer_key(i, &format!("{gate}_bias")), Tensor::zeros(&[c, 1]));
            w(&mut p, layer_key(i, &format!("{gate}_time")), &[c, h], h);
            if cfg.cond_dim > 0 {
                let d = cfg.cond_dim;
                w(&mut p, layer_key(i, &format!("{gate}_cond")), &[c, d], d);
            }
        }
        for out in ["res", "skip"] {
            w(&mut p, layer_key(i, &format!("{out}_w")), &[c, c], c);
            p.insert(layer_key(i, &format!("{out}_b")), Tensor::zeros(&[c, 1]));
        }
    }
    w(&mut p, "net/out/w1".into(), &[c, c], c);
    p.insert("net/out/b1", Tensor::zeros(&[c, 1]));
    match output {
        OutputInit::Zero => {
            p.insert("net/out/w2", Tensor::zeros(&[cfg.mel_bins, c]));
            p.insert("net/out/b2", Tensor::zeros(&[cfg.mel_bins, 1]));
        }
        OutputInit::Random => {
            w(&mut p, "net/out/w2".into(), &[cfg.mel_bins, c], c);
            w(&mut p, "net/out/b2".into(), &[cfg.mel_bins, 1], 1);
        }
    }
    Ok(p)
}

/// Sinusoidal features of `c_noise` as a column `[dim, 1]`: the first half
/// holds `sin(c * w_k)`, the second `cos(c * w_k)`, with `w_k` spaced
/// geometrically from 1 to 16.
pub fn time_embedding(c_noise: Scalar, dim: usize) -> Result<Tensor> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::invalid(format!("time embedding dim must be even, got {dim}")));
    }
    let half = dim / 2;
    let freq = |k: usize| -> Scalar {
        if half == 1 {
            1.0
        } else {
            (16.0 as Scalar).powf(k as Scalar / (half - 1) as Scalar)
        }
    };
    let mut data: Vec<Scalar> = (0..half).map(|k| (c_noise * freq(k)).sin()).collect();
    data.extend((0..half).map(|k| (c_noise * freq(k)).cos()));
    Tensor::new(&[dim, 1], data)
}

/// Raw network `F(x_scaled, c_noise, cond)` on any backend.
///
/// `x_scaled` is `[mel_bins, frames]`, `cond` is `[cond_dim, frames]`.
pub fn f_forward<B: Backend>(
    b: &mut B,
    cfg: &WaveNetConfig,
    params: &DenoiserParams,
    x_scaled: &B::Value,
    c_noise: Scalar,
    cond: Option<&B::Value>,
) -> Result<B::Value> {
    let frames = b.value(x_scaled).shape()[1];
    if b.value(x_scaled).shape() != [cfg.mel_bins, frames] {
        return Err(Error::Shape {
            op: "denoiser input",
            lhs: vec![cfg.mel_bins, frames],
            rhs: b.value(x_scaled).shape().to_vec(),
        });
    }
    match (cfg.cond_dim, cond) {
        (0, _) => {}
        (d, Some(c)) if b.value(c).shape() == [d, frames] => {}
        (d, c) => {
            return Err(Error::Shape {
                op: "denoiser cond (frame count must match input)",
                lhs: vec![d, frames],
                rhs: c.map(|c| b.value(c).shape().to_vec()).unwrap_or_default(),
            })
        }
    }
    let p = |b: &mut B, name: &str| -> Result<B::Value> { Ok(b.param(name, params.get(name)?)) };

    let w_in = p(b, "net/in_proj/w")?;
    let b_in = p(b, "net/in_proj/b")?;
    let h0 = b.matmul(&w_in, x_scaled)?;
    let h0 = b.add(&h0, &b_in)?;
    let mut h = b.silu(&h0)?;

    let e = b.constant(time_embedding(c_noise, cfg.time_embed_dim)?);
    let (w1, b1) = (p(b, "net/time/w1")?, p(b, "net/time/b1")?);
    let (w2, b2) = (p(b, "net/time/w2")?, p(b, "net/time/b2")?);
    let t1 = b.matmul(&w1, &e)?;
    let t1 = b.add(&t1, &b1)?;
    let t1 = b.silu(&t1)?;
    let t2 = b.matmul(&w2, &t1)?;
    let t2 = b.add(&t2, &b2)?;
    let temb = b.silu(&t2)?;

    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2 as Scalar;
    let mut skip_acc: Option<B::Value> = None;
    for i in 0..cfg.n_layers {
        let dil = cfg.dilation(i);
        let branch = |b: &mut B, gate: &str| -> Result<B::Value> {
            let kernel = p(b, &layer_key(i, &format!("{gate}_kernel")))?;
            let bias = p(b, &layer_key(i, &format!("{gate}_bias")))?;
            let wt = p(b, &layer_key(i, &format!("{gate}_time")))?;
            let shift = b.matmul(&wt, &temb)?;
            let shift = b.add(&shift, &bias)?;
            let a = b.conv1d(&h, &kernel, dil)?;
            let mut a = b.add(&a, &shift)?;
            if let (true, Some(c)) = (cfg.cond_dim > 0, cond) {
                let wc = p(b, &layer_key(i, &format!("{gate}_cond")))?;
                let ca = b.matmul(&wc, c)?;
                a = b.add(&a, &ca)?;
            }
            Ok(a)
        };
        let af = branch(b, "filter")?;
        let ag = branch(b, "gate")?;
        let zf = b.tanh(&af)?;
        let zg = b.sigmoid(&ag)?;
        let z = b.mul(&zf, &zg)?;

        let proj = |b: &mut B, out: &str| -> Result<B::Value> {
            let w = p(b, &layer_key(i, &format!("{out}_w")))?;
            let bias = p(b, &layer_key(i, &format!("{out}_b")))?;
            let y = b.matmul(&w, &z)?;
            b.add(&y, &bias)
        };
        let res = proj(b, "res")?;
        let skip = proj(b, "skip")?;
        let hn = b.add(&h, &res)?;
        h = b.scale(&hn, inv_sqrt2)?;
        skip_acc = Some(match skip_acc {
            None => skip,
            Some(acc) => b.add(&acc, &skip)?,
        });
    }

    let s = skip_acc.expect("n_layers > 0");
    let s = b.scale(&s, 1.0 / (cfg.n_layers as Scalar).sqrt())?;
    let s = b.silu(&s)?;
    let (wo1, bo1) = (p(b, "net/out/w1")?, p(b, "net/out/b1")?);
    let (wo2, bo2) = (p(b, "net/out/w2")?, p(b, "net/out/b2")?);
    let o = b.matmul(&wo1, &s)?;
    let o = b.add(&o, &bo1)?;
    let o = b.silu(&o)?;
    let o = b.matmul(&wo2, &o)?;
    b.add(&o, &bo2)
}

/// Preconditioned denoiser on any backend. `x_t` is data, never a trainable input.
#[allow(clippy::too_many_arguments)]
pub fn denoise_on<B: Backend>(
    b: &mut B,
    cfg: &WaveNetConfig,
    params: &DenoiserParams,
    precond: &Precond,
    t_max: Scalar,
    x_t: &Tensor,
    t: Scalar,
    cond: Option<&B::Value>,
) -> Result<B::Value> {
    if !(t <= t_max) {
        return Err(Error::invalid(format!(
            "noise level {t} outside [{}, {t_max}]",
            precond.epsilon
        )));
    }
    let c = precond.coeffs(t)?;
    let x = b.constant(x_t.clone());
    let x_in = b.scale(&x, c.c_in)?;
    let f = f_forward(b, cfg, params, &x_in, c.c_noise, cond)?;
    let skip = b.scale(&x, c.c_skip)?;
    let out = b.scale(&f, c.c_out)?;
    b.add(&skip, &out)
}

/// Network-backed denoiser evaluated without a tape.
#[derive(Debug, Clone)]
pub struct NetDenoiser {
    pub cfg: WaveNetConfig,
    pub params: DenoiserParams,
    pub precond: Precond,
    pub t_max: Scalar,
}

impl Denoise for NetDenoiser {
    fn denoise(&self, x_t: &Tensor, t: Scalar, cond: Option<&Tensor>) -> Result<Tensor> {
        denoise_on(
            &mut Eval,
            &self.cfg,
            &self.params,
            &self.precond,
            self.t_max,
            x_t,
            t,
            cond,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{randn, Graph};

    fn net(cfg: WaveNetConfig, seed: u64, output: OutputInit) -> NetDenoiser {
        NetDenoiser {
            params: init_params(&cfg, &mut Rng::new(seed), output).unwrap(),
            cfg,
            precond: Precond::new(0.5, 0.002).unwrap(),
            t_max: 80.0,
        }
    }

    #[test]
    fn time_embedding_at_zero() {
        let e = time_embedding(0.0, 8).unwrap();
        assert_eq!(&e.data()[..4], &[0.0; 4]);
        assert_eq!(&e.data()[4..], &[1.0; 4]);
        assert!(time_embedding(0.3, 7).is_err());
    }

    #[test]
    fn time_embedding_separates_noise_levels() {
        let a = time_embedding((0.1 as Scalar).ln() / 4.0, 16).unwrap();
        let b = time_embedding((10.0 as Scalar).ln() / 4.0, 16).unwrap();
        assert_eq!(a, time_embedding((0.1 as Scalar).ln() / 4.0, 16).unwrap());
        let d: Scalar = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
        assert!(d.sqrt() > 0.1);
    }

    #[test]
    fn zero_output_projection_gives_zero_network() {
        let mut cfg = WaveNetConfig::tiny();
        cfg.mel_bins = 3;
        let d = net(cfg.clone(), 1, OutputInit::Zero);
        let x = randn(&mut Rng::new(2), &[3, 17]);
        let f = f_forward(&mut Eval, &cfg, &d.params, &x, 0.3, None).unwrap();
        assert_eq!(f.shape(), &[3, 17]);
        assert!(f.data().iter().all(|&v| v == 0.0));
        let out = d.denoise(&x, 1.0, None).unwrap();
        let expect = crate::numcore::kernels::scale(&x, 0.25 / (0.998 * 0.998 + 0.25)).unwrap();
        assert!(out.max_abs_diff(&expect).unwrap() < 1e-15);
        assert!((0.25 / (0.998 * 0.998 + 0.25) - 0.200642 as Scalar).abs() < 1e-6);
    }

    #[test]
    fn boundary_is_exact_identity() {
        let mut cfg = WaveNetConfig::tiny();
        cfg.mel_bins = 4;
        cfg.cond_dim = 6;
        let d = net(cfg, 3, OutputInit::Random);
        let mut rng = Rng::new(4);
        let x = randn(&mut rng, &[4, 9]);
        let cond = randn(&mut rng, &[6, 9]);
        assert_eq!(d.denoise(&x, 0.002, Some(&cond)).unwrap(), x);
    }

    #[test]
    fn deterministic_and_shape_preserving() {
        let mut cfg = WaveNetConfig::tiny();
        cfg.mel_bins = 2;
        let d = net(cfg, 5, OutputInit::Random);
        let x = randn(&mut Rng::new(6), &[2, 17]);
        let a = d.denoise(&x, 0.7, None).unwrap();
        let b = d.denoise(&x, 0.7, None).unwrap();
        assert_eq!(a.shape(), &[2, 17]);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn errors_on_bad_inputs() {
        let mut cfg = WaveNetConfig::tiny();
        cfg.cond_dim = 3;
        let d = net(cfg, 7, OutputInit::Random);
        let x = Tensor::ones(&[1, 5]);
        let short = Tensor::ones(&[3, 4]);
        assert!(d.denoise(&x, 1.0, Some(&short)).is_err());
        assert!(d.denoise(&x, 1.0, None).is_err());
        let cond = Tensor::ones(&[3, 5]);
        assert!(d.denoise(&x, 0.001, Some(&cond)).is_err());
        assert!(d.denoise(&x, 81.0, Some(&cond)).is_err());
    }

    #[test]
    fn graph_and_eval_agree() {
        let mut cfg = WaveNetConfig::tiny();
        cfg.mel_bins = 2;
        cfg.cond_dim = 3;
        let d = net(cfg.clone(), 8, OutputInit::Random);
        let mut rng = Rng::new(9);
        let x = randn(&mut rng, &[2, 6]);
        let cond = randn(&mut rng, &[3, 6]);
        let eval = d.denoise(&x, 2.0, Some(&cond)).unwrap();
        let mut g = Graph::new();
        let c = g.constant(cond);
        let v = denoise_on(&mut g, &cfg, &d.params, &d.precond, 80.0, &x, 2.0, Some(&c)).unwrap();
        assert_eq!(g.value(v), &eval);
    }

    #[test]
    fn blend_and_shape_checks() {
        let cfg = WaveNetConfig::tiny();
        let a = init_params(&cfg, &mut Rng::new(1), OutputInit::Random).unwrap();
        let mut b = init_params(&cfg, &mut Rng::new(2), OutputInit::Random).unwrap();
        assert!(a.same_shape(&b));
        b.blend_toward(&a, 0.0).unwrap();
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.residual_channels = 8;
        let c = init_params(&other, &mut Rng::new(1), OutputInit::Random).unwrap();
        assert!(!a.same_shape(&c));
        assert!(b.blend_toward(&c, 0.5).is_err());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn preset_lookup() {
        assert_eq!(WaveNetConfig::preset("full").unwrap().n_layers, 20);
        assert_eq!(WaveNetConfig::preset("tiny").unwrap().residual_channels, 16);
        assert!(WaveNetConfig::preset("huge").is_err());
    }
}
