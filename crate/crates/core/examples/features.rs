//! Encoding stage on a synthetic sung tone: log-mel target, loudness and
//! F0 tracks, then the conditioning matrix built from a synthetic item.
//!
//! `cargo run --release --example features`

use svc_decoder::features::{
    build_cond, estimate_f0, init_encoder_params, loudness, mel_spectrogram, synth_dataset, EncoderConfig,
    F0Config, MelConfig, SynthSpec, Wave,
};
use svc_decoder::numcore::{Rng, Scalar};
use svc_decoder::Result;

pub struct FeatureSummary {
    pub mel_shape: [usize; 2],
    /// Median relative F0 error on voiced frames.
    pub f0_rel_err: Scalar,
    pub cond_shape: [usize; 2],
}

pub fn run_example() -> Result<FeatureSummary> {
    let sr = 24_000;
    let f0 = 330.0;
    let samples: Vec<Scalar> = (0..sr / 2)
        .map(|n| {
            let t = n as Scalar / sr as Scalar;
            // three harmonics with a slow swell
            let amp = 0.2 + 0.1 * (std::f64::consts::PI as Scalar * 2.0 * t).sin();
            (1..=3)
                .map(|h| amp / h as Scalar * (2.0 * std::f64::consts::PI as Scalar * f0 * h as Scalar * t).sin())
                .sum()
        })
        .collect();
    let wave = Wave::new(samples, sr as u32)?;

    let mel = mel_spectrogram(&wave, &MelConfig::default())?;
    let (track, vuv) = estimate_f0(&wave, &F0Config::default())?;
    let loud = loudness(&wave, 128, 512)?;
    println!("{:.2} s of audio -> {} frames x {} mel bins", wave.duration_secs(), mel.frames(), mel.bins());

    let mut errs: Vec<Scalar> = track
        .iter()
        .zip(&vuv)
        .filter(|(_, &v)| v)
        .map(|(&f, _)| (f - f0).abs() / f0)
        .collect();
    errs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let f0_rel_err = errs.get(errs.len() / 2).copied().unwrap_or(Scalar::INFINITY);
    println!(
        "F0: {} of {} frames voiced, median relative error {:.2e}; loudness range [{:.4}, {:.4}]",
        errs.len(),
        track.len(),
        f0_rel_err,
        loud.iter().cloned().fold(Scalar::INFINITY, Scalar::min),
        loud.iter().cloned().fold(0.0, Scalar::max)
    );

    let spec = SynthSpec {
        content_dim: 32,
        ..SynthSpec::default()
    };
    let item = &synth_dataset(&mut Rng::new(3), 1, &spec)?[0];
    let enc = EncoderConfig {
        content_dim: 32,
        proj_dim: 16,
        singer_dim: 16,
        n_singers: spec.n_singers,
    };
    let params = init_encoder_params(&enc, &mut Rng::new(4));
    let cond = build_cond(&enc, &params, &item.features, item.singer_id)?;
    println!(
        "synthetic item: target {:?}, singer {}, conditioning {} x {}",
        item.target.shape(),
        item.singer_id,
        cond.dim(),
        cond.frames()
    );

    Ok(FeatureSummary {
        mel_shape: [mel.frames(), mel.bins()],
        f0_rel_err,
        cond_shape: [cond.dim(), cond.frames()],
    })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
