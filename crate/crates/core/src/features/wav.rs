use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::Scalar;

pub const SAMPLE_RATE: u32 = 24_000;

/// Mono waveform with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Wave {
    pub samples: Vec<Scalar>,
    pub sample_rate: u32,
}

impl Wave {
    pub fn new(samples: Vec<Scalar>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Audio("empty signal".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Audio("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration_secs(&self) -> Scalar {
        self.samples.len() as Scalar / self.sample_rate as Scalar
    }
}

/// Reads a 16-bit PCM mono 24 kHz WAV file; anything else is rejected.
pub fn read_wav(path: &Path) -> Result<Wave> {
    let reader = hound::WavReader::open(path)
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.channels != 1
        || spec.bits_per_sample != 16
        || spec.sample_format != hound::SampleFormat::Int
        || spec.sample_rate != SAMPLE_RATE
    {
        return Err(Error::Audio(format!(
            "{}: expected 16-bit PCM mono {SAMPLE_RATE} Hz, got {} ch {}-bit {:?} {} Hz",
            path.display(),
            spec.channels,
            spec.bits_per_sample,
            spec.sample_format,
            spec.sample_rate
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as Scalar / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    Wave::new(samples, spec.sample_rate)
}

pub fn write_wav(path: &Path, wave: &Wave) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let audio = |e: hound::Error| Error::Audio(format!("{}: {e}", path.display()));
    let mut w = hound::WavWriter::create(path, spec).map_err(audio)?;
    for &s in &wave.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(audio)?;
    }
    w.finalize().map_err(audio)
}
