//! Flat `key=value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::denoiser::WaveNetConfig;
use crate::error::{Error, Result};
use crate::features::{EncoderConfig, SynthSpec};
use crate::numcore::Scalar;
use crate::sampler::Solver;
use crate::schedule::{NoiseLevelDist, Precond, TimeGrid};
use crate::training::ModelSpec;

/// Every tunable of a run. Unset keys keep the defaults shown by
/// [`Config::to_text`] on `Config::default()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub epsilon: Scalar,
    pub t_max: Scalar,
    pub rho: Scalar,
    pub n_steps: usize,
    pub sigma_data: Scalar,
    pub p_mean: Scalar,
    pub p_std: Scalar,

    /// `tiny` or `full`.
    pub preset: String,
    pub mel_bins: usize,
    pub conditional: bool,
    pub content_dim: usize,
    pub proj_dim: usize,
    pub singer_dim: usize,
    pub n_singers: usize,

    pub lr_teacher: Scalar,
    pub lr_distill: Scalar,
    pub mu: Scalar,
    pub batch_size: usize,
    pub teacher_iters: u64,
    pub distill_iters: u64,
    pub checkpoint_every: u64,
    pub log_every: u64,

    pub n_items: usize,
    pub frames_min: usize,
    pub frames_max: usize,

    pub solver: Solver,
    /// Sample students with the target (EMA) weights.
    pub use_ema: bool,

    pub seed: u64,
    /// `f32` or `f64`; must match the build.
    pub precision: String,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            epsilon: 0.002,
            t_max: 80.0,
            rho: 7.0,
            n_steps: 50,
            sigma_data: 0.5,
            p_mean: -1.2,
            p_std: 1.2,
            preset: "tiny".into(),
            mel_bins: 80,
            conditional: true,
            content_dim: 768,
            proj_dim: 256,
            singer_dim: 256,
            n_singers: 20,
            lr_teacher: 1e-4,
            lr_distill: 5e-5,
            mu: 0.95,
            batch_size: 48,
            teacher_iters: 1000,
            distill_iters: 1000,
            checkpoint_every: 100,
            log_every: 10,
            n_items: 100,
            frames_min: 32,
            frames_max: 64,
            solver: Solver::Euler,
            use_ema: true,
            seed: 0,
            precision: build_precision().into(),
            data_dir: "data".into(),
            out_dir: "out".into(),
        }
    }
}

/// Precision this crate was compiled for.
pub fn build_precision() -> &'static str {
    if crate::numcore::SCALAR_BYTES == 4 {
        "f32"
    } else {
        "f64"
    }
}

pub fn check_precision(requested: &str) -> Result<()> {
    match requested {
        "f32" | "f64" if requested == build_precision() => Ok(()),
        "f32" | "f64" => Err(Error::Config(format!(
            "precision {requested} requested but this build computes in {}; rebuild {} the `f32` feature",
            build_precision(),
            if requested == "f32" { "with" } else { "without" }
        ))),
        other => Err(Error::Config(format!("unknown precision {other:?}, expected f32 or f64"))),
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value {v:?} for key {key}")))
}

impl Config {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "epsilon" => self.epsilon = parse(key, v)?,
            "t_max" => self.t_max = parse(key, v)?,
            "rho" => self.rho = parse(key, v)?,
            "n_steps" => self.n_steps = parse(key, v)?,
            "sigma_data" => self.sigma_data = parse(key, v)?,
            "p_mean" => self.p_mean = parse(key, v)?,
            "p_std" => self.p_std = parse(key, v)?,
            "preset" => self.preset = v.to_string(),
            "mel_bins" => self.mel_bins = parse(key, v)?,
            "conditional" => self.conditional = parse(key, v)?,
            "content_dim" => self.content_dim = parse(key, v)?,
            "proj_dim" => self.proj_dim = parse(key, v)?,
            "singer_dim" => self.singer_dim = parse(key, v)?,
            "n_singers" => self.n_singers = parse(key, v)?,
            "lr_teacher" => self.lr_teacher = parse(key, v)?,
            "lr_distill" => self.lr_distill = parse(key, v)?,
            "mu" => self.mu = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "teacher_iters" => self.teacher_iters = parse(key, v)?,
            "distill_iters" => self.distill_iters = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "log_every" => self.log_every = parse(key, v)?,
            "n_items" => self.n_items = parse(key, v)?,
            "frames_min" => self.frames_min = parse(key, v)?,
            "frames_max" => self.frames_max = parse(key, v)?,
            "solver" => self.solver = v.parse()?,
            "use_ema" => self.use_ema = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "precision" => self.precision = v.to_string(),
            "data_dir" => self.data_dir = v.into(),
            "out_dir" => self.out_dir = v.into(),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {raw:?}", i + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text form; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let solver = match self.solver {
            Solver::Euler => "euler",
            Solver::Heun => "heun",
        };
        let rows: Vec<(&str, String)> = vec![
            ("epsilon", self.epsilon.to_string()),
            ("t_max", self.t_max.to_string()),
            ("rho", self.rho.to_string()),
            ("n_steps", self.n_steps.to_string()),
            ("sigma_data", self.sigma_data.to_string()),
            ("p_mean", self.p_mean.to_string()),
            ("p_std", self.p_std.to_string()),
            ("preset", self.preset.clone()),
            ("mel_bins", self.mel_bins.to_string()),
            ("conditional", self.conditional.to_string()),
            ("content_dim", self.content_dim.to_string()),
            ("proj_dim", self.proj_dim.to_string()),
            ("singer_dim", self.singer_dim.to_string()),
            ("n_singers", self.n_singers.to_string()),
            ("lr_teacher", self.lr_teacher.to_string()),
            ("lr_distill", self.lr_distill.to_string()),
            ("mu", self.mu.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("teacher_iters", self.teacher_iters.to_string()),
            ("distill_iters", self.distill_iters.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("log_every", self.log_every.to_string()),
            ("n_items", self.n_items.to_string()),
            ("frames_min", self.frames_min.to_string()),
            ("frames_max", self.frames_max.to_string()),
            ("solver", solver.to_string()),
            ("use_ema", self.use_ema.to_string()),
            ("seed", self.seed.to_string()),
            ("precision", self.precision.clone()),
            ("data_dir", self.data_dir.display().to_string()),
            ("out_dir", self.out_dir.display().to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.model()?.validate()?;
        if !(0.0..1.0).contains(&self.mu) {
            return Err(Error::Config(format!("mu {} outside [0, 1)", self.mu)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.frames_min == 0 || self.frames_min > self.frames_max {
            return Err(Error::Config(format!(
                "frame range [{}, {}] is empty",
                self.frames_min, self.frames_max
            )));
        }
        if !(self.lr_teacher >= 0.0 && self.lr_distill >= 0.0) {
            return Err(Error::Config("learning rates must be non-negative".into()));
        }
        match self.precision.as_str() {
            "f32" | "f64" => Ok(()),
            p => Err(Error::Config(format!("unknown precision {p:?}, expected f32 or f64"))),
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::karras(self.n_steps, self.epsilon, self.t_max, self.rho)
    }

    pub fn noise(&self) -> NoiseLevelDist {
        NoiseLevelDist {
            p_mean: self.p_mean,
            p_std: self.p_std,
            epsilon: self.epsilon,
            t_max: self.t_max,
        }
    }

    pub fn encoder(&self) -> Option<EncoderConfig> {
        self.conditional.then(|| EncoderConfig {
            content_dim: self.content_dim,
            proj_dim: self.proj_dim,
            singer_dim: self.singer_dim,
            n_singers: self.n_singers,
        })
    }

    pub fn model(&self) -> Result<ModelSpec> {
        let mut net = WaveNetConfig::preset(&self.preset)?;
        net.mel_bins = self.mel_bins;
        let enc = self.encoder();
        net.cond_dim = enc.as_ref().map_or(0, EncoderConfig::cond_dim);
        Ok(ModelSpec {
            net,
            enc,
            precond: Precond::new(self.sigma_data, self.epsilon)?,
            t_max: self.t_max,
        })
    }

    pub fn synth(&self) -> SynthSpec {
        SynthSpec {
            frames_min: self.frames_min,
            frames_max: self.frames_max,
            n_singers: self.n_singers,
            mel_bins: self.mel_bins,
            content_dim: self.content_dim,
            ..SynthSpec::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = Config::parse("# run\n\nseed = 7 # trailing\npreset=full\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.preset, "full");
        assert_eq!(c.model().unwrap().net.n_layers, 20);
    }

    #[test]
    fn unknown_key_rejected() {
        let e = Config::parse("sed=7").unwrap_err();
        assert_eq!(e.kind(), "config");
        assert!(e.to_string().contains("sed"));
    }

    #[test]
    fn bad_values_rejected() {
        assert!(Config::parse("seed=x").is_err());
        assert!(Config::parse("mu=1.0").is_err());
        assert!(Config::parse("preset=huge").is_err());
        assert!(Config::parse("no equals sign").is_err());
        assert!(Config::parse("precision=f16").is_err());
    }

    #[test]
    fn cond_dim_follows_encoder() {
        let c = Config::parse("proj_dim=4\nsinger_dim=3").unwrap();
        assert_eq!(c.model().unwrap().net.cond_dim, 15);
        let c = Config::parse("conditional=false").unwrap();
        assert_eq!(c.model().unwrap().net.cond_dim, 0);
    }

    #[test]
    fn precision_must_match_build() {
        assert!(check_precision(build_precision()).is_ok());
        let other = if build_precision() == "f64" { "f32" } else { "f64" };
        assert_eq!(check_precision(other).unwrap_err().kind(), "config");
    }
}
