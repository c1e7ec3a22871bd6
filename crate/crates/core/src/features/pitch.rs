use super::mel::centered_frame;
use super::wav::Wave;
use crate::error::{Error, Result};
use crate::numcore::Scalar;

/// Per-frame mean of squared samples over a `win`-sample window, framed
/// like the mel spectrogram (centred, reflect-padded).
pub fn loudness(w: &Wave, hop: usize, win: usize) -> Result<Vec<Scalar>> {
    if hop == 0 || win < hop {
        return Err(Error::invalid(format!(
            "loudness needs win >= hop > 0, got win={win} hop={hop}"
        )));
    }
    let frames = 1 + w.samples.len() / hop;
    Ok((0..frames)
        .map(|i| {
            let frame = centered_frame(&w.samples, i * hop, win);
            frame.iter().map(|x| x * x).sum::<Scalar>() / win as Scalar
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct F0Config {
    pub hop: usize,
    pub f_min: Scalar,
    pub f_max: Scalar,
    /// Peak normalised autocorrelation below this marks a frame unvoiced.
    pub voicing_threshold: Scalar,
}

impl Default for F0Config {
    fn default() -> Self {
        Self {
            hop: 128,
            f_min: 50.0,
            f_max: 1100.0,
            voicing_threshold: 0.5,
        }
    }
}

/// Autocorrelation pitch tracker. Returns `(f0, vuv)` per frame, with
/// `f0 = 0` on unvoiced frames.
///
/// Each frame correlates a window of `sr / f_min` samples against lagged
/// copies for lags in `[sr / f_max, sr / f_min]`. The earliest local
/// maximum within 90% of the best peak is taken (avoids octave-down
/// errors) and refined by parabolic interpolation.
/// Window of `size` samples centred on `center`, shifted to lie inside the
/// signal where possible; reflect-padded only when the signal is shorter.
fn analysis_window(x: &[Scalar], center: usize, size: usize) -> Vec<Scalar> {
    if x.len() < size {
        return centered_frame(x, center, size);
    }
    let start = center.saturating_sub(size / 2).min(x.len() - size);
    x[start..start + size].to_vec()
}

pub fn estimate_f0(w: &Wave, cfg: &F0Config) -> Result<(Vec<Scalar>, Vec<bool>)> {
    let sr = w.sample_rate as Scalar;
    if !(cfg.f_min > 0.0 && cfg.f_min < cfg.f_max && cfg.f_max < sr / 2.0) || cfg.hop == 0 {
        return Err(Error::invalid(format!(
            "f0 range needs 0 < f_min < f_max < sr/2, got [{}, {}] at {sr} Hz",
            cfg.f_min, cfg.f_max
        )));
    }
    let lag_min = ((sr / cfg.f_max).floor() as usize).max(2);
    let lag_max = (sr / cfg.f_min).ceil() as usize;
    let len = lag_max;
    let frames = 1 + w.samples.len() / cfg.hop;

    let mut f0 = Vec::with_capacity(frames);
    let mut vuv = Vec::with_capacity(frames);
    for i in 0..frames {
        let seg = analysis_window(&w.samples, i * cfg.hop, len + lag_max + 1);
        let head = &seg[..len];
        let e0: Scalar = head.iter().map(|x| x * x).sum();
        let corr: Vec<Scalar> = (lag_min - 1..=lag_max)
            .map(|lag| {
                let tail = &seg[lag..lag + len];
                let el: Scalar = tail.iter().map(|x| x * x).sum();
                let denom = (e0 * el).sqrt();
                if denom <= 1e-12 {
                    0.0
                } else {
                    head.iter().zip(tail).map(|(a, b)| a * b).sum::<Scalar>() / denom
                }
            })
            .collect();
        // corr[j] is the lag lag_min - 1 + j; peaks are searched on 1..len-1
        let best = corr[1..corr.len() - 1].iter().cloned().fold(Scalar::MIN, Scalar::max);
        if best < cfg.voicing_threshold {
            f0.push(0.0);
            vuv.push(false);
            continue;
        }
        let j = (1..corr.len() - 1)
            .find(|&j| corr[j] >= 0.9 * best && corr[j] >= corr[j - 1] && corr[j] >= corr[j + 1])
            .expect("the best peak qualifies");
        let (a, b, c) = (corr[j - 1], corr[j], corr[j + 1]);
        let curv = a - 2.0 * b + c;
        let shift = if curv.abs() > 1e-12 { 0.5 * (a - c) / curv } else { 0.0 };
        let lag = (lag_min - 1 + j) as Scalar + shift.clamp(-0.5, 0.5);
        f0.push(sr / lag);
        vuv.push(true);
    }
    Ok((f0, vuv))
}
