//! Synthetic singing-like dataset. Each target is a deterministic function
//! of its F0 contour, loudness contour, vowel sequence (visible through the
//! content features) and the singer's spectral tilt, so the conditional
//! generation task is solvable from the conditioning alone.

use super::cond::FeatureSet;
use super::mel::{mel_center_frequencies, MelConfig};
use crate::error::{Error, Result};
use crate::numcore::{Rng, Scalar, Tensor};

const VOWEL_SEED: u64 = 0x5EED_70CA_1;
// Affine map from log power to the normalised target scale (std ~ 0.5).
const LOG_OFFSET: Scalar = -3.66;
const LOG_SCALE: Scalar = 0.29;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub frames_min: usize,
    pub frames_max: usize,
    pub n_singers: usize,
    pub mel_bins: usize,
    pub content_dim: usize,
    pub n_vowels: usize,
    pub sample_rate: u32,
    pub hop: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            frames_min: 32,
            frames_max: 64,
            n_singers: 4,
            mel_bins: 80,
            content_dim: 768,
            n_vowels: 5,
            sample_rate: 24_000,
            hop: 128,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.frames_min == 0 || self.frames_min > self.frames_max {
            return Err(Error::invalid(format!(
                "frame range [{}, {}] is empty",
                self.frames_min, self.frames_max
            )));
        }
        if self.n_singers == 0 || self.mel_bins == 0 || self.content_dim == 0 {
            return Err(Error::invalid("synth spec dims must be positive"));
        }
        if !(1..=5).contains(&self.n_vowels) {
            return Err(Error::invalid("n_vowels must be in 1..=5"));
        }
        Ok(())
    }

    fn frame_rate(&self) -> Scalar {
        self.sample_rate as Scalar / self.hop as Scalar
    }

    fn vowel_table(&self) -> Vec<Vec<Scalar>> {
        let mut rng = Rng::new(VOWEL_SEED);
        (0..self.n_vowels)
            .map(|_| (0..self.content_dim).map(|_| rng.normal()).collect())
            .collect()
    }

    /// Per-kHz log-power slope for a singer.
    fn tilt(&self, singer: usize) -> Scalar {
        let span = (self.n_singers.max(2) - 1) as Scalar;
        0.15 + 0.35 * singer as Scalar / span
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataItem {
    /// Normalised target, channel-major `[mel_bins, frames]`.
    pub target: Tensor,
    pub features: FeatureSet,
    pub singer_id: usize,
}

fn formants(vowel: usize) -> (Scalar, Scalar) {
    const F1: [Scalar; 5] = [300.0, 450.0, 700.0, 550.0, 350.0];
    const F2: [Scalar; 5] = [2300.0, 1900.0, 1200.0, 900.0, 1500.0];
    (F1[vowel], F2[vowel])
}

/// Recovers the vowel index of a content row (nearest table entry).
fn vowel_of(row: &[Scalar], table: &[Vec<Scalar>]) -> usize {
    let dist = |v: &Vec<Scalar>| -> Scalar { v.iter().zip(row).map(|(a, b)| (a - b).powi(2)).sum() };
    (0..table.len())
        .min_by(|&a, &b| dist(&table[a]).partial_cmp(&dist(&table[b])).expect("finite"))
        .expect("non-empty table")
}

/// Target spectrogram for a feature set and singer, `[mel_bins, frames]`.
pub fn render_mel(fs: &FeatureSet, singer_id: usize, spec: &SynthSpec) -> Result<Tensor> {
    spec.validate()?;
    fs.check()?;
    if singer_id >= spec.n_singers {
        return Err(Error::invalid(format!("singer id {singer_id} out of range")));
    }
    let mel_cfg = MelConfig {
        n_mels: spec.mel_bins,
        f_max: spec.sample_rate as Scalar / 2.0,
        ..MelConfig::default()
    };
    let centers = mel_center_frequencies(&mel_cfg);
    let table = spec.vowel_table();
    let tilt = spec.tilt(singer_id);
    let frames = fs.frames();
    let dim = spec.content_dim;
    let nyquist = spec.sample_rate as Scalar / 2.0;

    let mut out = vec![0.0; spec.mel_bins * frames];
    for i in 0..frames {
        let vowel = vowel_of(&fs.content.data()[i * dim..(i + 1) * dim], &table);
        let (f1, f2) = formants(vowel);
        let f0 = fs.f0[i];
        for (b, &fc) in centers.iter().enumerate() {
            let env = 1.0
                + 4.0 * (-(fc - f1).powi(2) / (2.0 * 150.0 * 150.0)).exp()
                + 3.0 * (-(fc - f2).powi(2) / (2.0 * 250.0 * 250.0)).exp();
            let gain = (-tilt * fc / 1000.0).exp();
            let source = if fs.vuv[i] && f0 > 0.0 {
                let bw = 60.0 + 0.03 * fc;
                let mut comb = 0.0;
                let mut h = 1.0;
                while h * f0 < nyquist {
                    comb += (-(fc - h * f0).powi(2) / (2.0 * bw * bw)).exp();
                    h += 1.0;
                }
                comb
            } else {
                0.05
            };
            let power = fs.loudness[i] * source * env * gain + 1e-4;
            out[b * frames + i] = (power.ln() - LOG_OFFSET) * LOG_SCALE;
        }
    }
    Tensor::new(&[spec.mel_bins, frames], out)
}

fn synth_features(rng: &mut Rng, spec: &SynthSpec, table: &[Vec<Scalar>]) -> Result<FeatureSet> {
    use std::f64::consts::PI;
    let pi = PI as Scalar;
    let frames = rng.int_inclusive(spec.frames_min, spec.frames_max);
    let fps = spec.frame_rate();

    let base = rng.uniform_range(180.0, 520.0);
    let vib_rate = rng.uniform_range(4.5, 6.5);
    let vib_phase = rng.uniform_range(0.0, 2.0 * pi);
    let glide = rng.uniform_range(-0.1, 0.1);
    let level = rng.uniform_range(0.02, 0.2);
    let unvoiced = if rng.uniform() < 0.3 {
        rng.int_inclusive(1, (frames / 4).max(1))
    } else {
        0
    };

    let mut f0 = Vec::with_capacity(frames);
    let mut vuv = Vec::with_capacity(frames);
    let mut loudness = Vec::with_capacity(frames);
    for i in 0..frames {
        let pos = i as Scalar / frames as Scalar;
        let vib = 1.0 + 0.02 * (2.0 * pi * vib_rate * i as Scalar / fps + vib_phase).sin();
        let voiced = i >= unvoiced;
        f0.push(if voiced { base * (1.0 + glide * pos) * vib } else { 0.0 });
        vuv.push(voiced);
        loudness.push(level * (0.6 + 0.4 * (pi * pos).sin()).powi(2));
    }

    let mut content = Vec::with_capacity(frames * spec.content_dim);
    let mut i = 0;
    while i < frames {
        let vowel = rng.int_inclusive(0, spec.n_vowels - 1);
        let len = rng.int_inclusive(8, 24).min(frames - i);
        for _ in 0..len {
            content.extend_from_slice(&table[vowel]);
        }
        i += len;
    }
    Ok(FeatureSet {
        content: Tensor::new(&[frames, spec.content_dim], content)?,
        f0,
        vuv,
        loudness,
    })
}

/// Generates `n_items` items; deterministic in the rng state.
pub fn synth_dataset(rng: &mut Rng, n_items: usize, spec: &SynthSpec) -> Result<Vec<DataItem>> {
    spec.validate()?;
    let table = spec.vowel_table();
    (0..n_items)
        .map(|_| {
            let mut item_rng = rng.fork();
            let features = synth_features(&mut item_rng, spec, &table)?;
            let singer_id = item_rng.int_inclusive(0, spec.n_singers - 1);
            let target = render_mel(&features, singer_id, spec)?;
            Ok(DataItem {
                target,
                features,
                singer_id,
            })
        })
        .collect()
}

/// Least-squares slope of the time-averaged spectrum against bin index.
pub fn column_slope(x: &Tensor) -> Result<Scalar> {
    let (bins, frames) = x.dims2("column_slope")?;
    let means: Vec<Scalar> = (0..bins)
        .map(|b| x.data()[b * frames..(b + 1) * frames].iter().sum::<Scalar>() / frames as Scalar)
        .collect();
    let xm = (bins as Scalar - 1.0) / 2.0;
    let ym = means.iter().sum::<Scalar>() / bins as Scalar;
    let (mut num, mut den) = (0.0, 0.0);
    for (b, &y) in means.iter().enumerate() {
        let dx = b as Scalar - xm;
        num += dx * (y - ym);
        den += dx * dx;
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}
