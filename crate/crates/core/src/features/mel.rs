use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::wav::Wave;
use crate::error::{Error, Result};
use crate::numcore::{kernels, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub win_length: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: Scalar,
    pub f_max: Scalar,
    pub log_floor: Scalar,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 24_000,
            n_fft: 512,
            win_length: 512,
            hop: 128,
            n_mels: 80,
            f_min: 0.0,
            f_max: 12_000.0,
            log_floor: 1e-5,
        }
    }
}

impl MelConfig {
    /// `1 + floor(len / hop)` with centred framing.
    pub fn n_frames(&self, len: usize) -> usize {
        1 + len / self.hop
    }
}

/// Log-mel spectrogram stored frame-major: `[frames, n_mels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpec {
    pub data: Tensor,
    pub hop: usize,
}

impl MelSpec {
    pub fn frames(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn bins(&self) -> usize {
        self.data.shape()[1]
    }

    /// `[n_mels, frames]`, the layout the denoiser works in.
    pub fn to_channels(&self) -> Result<Tensor> {
        kernels::transpose(&self.data)
    }

    pub fn from_channels(x: &Tensor, hop: usize) -> Result<Self> {
        Ok(Self {
            data: kernels::transpose(x)?,
            hop,
        })
    }
}

// Slaney mel scale: linear below 1 kHz, logarithmic above.
const F_SP: Scalar = 200.0 / 3.0;
const MIN_LOG_HZ: Scalar = 1000.0;
const MIN_LOG_MEL: Scalar = MIN_LOG_HZ / F_SP;

fn log_step() -> Scalar {
    (6.4 as Scalar).ln() / 27.0
}

pub fn hz_to_mel(hz: Scalar) -> Scalar {
    if hz < MIN_LOG_HZ {
        hz / F_SP
    } else {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / log_step()
    }
}

pub fn mel_to_hz(mel: Scalar) -> Scalar {
    if mel < MIN_LOG_MEL {
        mel * F_SP
    } else {
        MIN_LOG_HZ * ((mel - MIN_LOG_MEL) * log_step()).exp()
    }
}

/// `n_mels + 2` band edges in Hz, equally spaced on the mel scale.
fn band_edges(cfg: &MelConfig) -> Vec<Scalar> {
    let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
    (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as Scalar / (cfg.n_mels + 1) as Scalar))
        .collect()
}

/// Peak frequency of each triangular filter.
pub fn mel_center_frequencies(cfg: &MelConfig) -> Vec<Scalar> {
    band_edges(cfg)[1..=cfg.n_mels].to_vec()
}

/// Area-normalised triangular filters, `[n_mels, n_fft / 2 + 1]`.
fn filterbank(cfg: &MelConfig) -> Vec<Vec<Scalar>> {
    let edges = band_edges(cfg);
    let n_bins = cfg.n_fft / 2 + 1;
    let bin_hz = cfg.sample_rate as Scalar / cfg.n_fft as Scalar;
    (0..cfg.n_mels)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            let norm = 2.0 / (r - l);
            (0..n_bins)
                .map(|k| {
                    let f = k as Scalar * bin_hz;
                    let up = (f - l) / (c - l);
                    let down = (r - f) / (r - c);
                    norm * up.min(down).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Index into a signal of length `n` mirrored at both ends (no edge repeat).
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Window of `len` samples centred on `center`, reflect-padded.
pub(crate) fn centered_frame(samples: &[Scalar], center: usize, len: usize) -> Vec<Scalar> {
    let start = center as isize - (len / 2) as isize;
    (0..len)
        .map(|j| samples[reflect_index(start + j as isize, samples.len())])
        .collect()
}

fn hann(n: usize) -> Vec<Scalar> {
    // periodic Hann
    (0..n)
        .map(|i| {
            let x = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            (0.5 - 0.5 * x.cos()) as Scalar
        })
        .collect()
}

struct Stft {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<Scalar>,
}

impl Stft {
    fn new(cfg: &MelConfig) -> Self {
        let mut window = vec![0.0; cfg.n_fft];
        let off = (cfg.n_fft - cfg.win_length) / 2;
        window[off..off + cfg.win_length].copy_from_slice(&hann(cfg.win_length));
        Self {
            fft: FftPlanner::new().plan_fft_forward(cfg.n_fft),
            window,
        }
    }

    fn power(&self, frame: &[Scalar]) -> Vec<Scalar> {
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&self.window)
            .map(|(&x, &w)| Complex::new((x * w) as f64, 0.0))
            .collect();
        self.fft.process(&mut buf);
        buf[..buf.len() / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr() as Scalar)
            .collect()
    }
}

/// Hann-windowed STFT power, slaney mel filterbank, natural log with floor.
pub fn mel_spectrogram(w: &Wave, cfg: &MelConfig) -> Result<MelSpec> {
    if w.sample_rate != cfg.sample_rate {
        return Err(Error::Audio(format!(
            "sample rate {} Hz, expected {} Hz (resampling is not supported)",
            w.sample_rate, cfg.sample_rate
        )));
    }
    if w.samples.is_empty() {
        return Err(Error::Audio("empty signal".into()));
    }
    if cfg.win_length > cfg.n_fft || cfg.hop == 0 || cfg.n_mels == 0 {
        return Err(Error::invalid(format!("bad mel config {cfg:?}")));
    }
    let stft = Stft::new(cfg);
    let fb = filterbank(cfg);
    let frames = cfg.n_frames(w.samples.len());
    let mut data = Vec::with_capacity(frames * cfg.n_mels);
    for i in 0..frames {
        let frame = centered_frame(&w.samples, i * cfg.hop, cfg.n_fft);
        let power = stft.power(&frame);
        for filt in &fb {
            let e: Scalar = filt.iter().zip(&power).map(|(a, b)| a * b).sum();
            data.push(e.max(cfg.log_floor).ln());
        }
    }
    Ok(MelSpec {
        data: Tensor::new(&[frames, cfg.n_mels], data)?,
        hop: cfg.hop,
    })
}
