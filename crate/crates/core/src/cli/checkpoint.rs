//! `COMC` checkpoint files.
//!
//! Layout (little-endian): magic `COMC`, `u32` version, `u8` role, `u8`
//! float width in bytes, `u64` step, `u64` optimizer step, `u64` rng seed,
//! `u128` rng word position, schedule (`f64` epsilon, t_max, rho,
//! sigma_data, `u32` n_steps), `u32`-prefixed UTF-8 config text, `u32` blob
//! count, then per blob a `u32`-prefixed name, `u32` rank, `u32` dims and
//! the values at the stored width.

use std::collections::BTreeMap;
use std::path::Path;

use crate::denoiser::DenoiserParams;
use crate::error::{Error, Result};
use crate::numcore::{RngState, Scalar, Tensor, SCALAR_BYTES};
use crate::training::AdamW;

use super::config::Config;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"COMC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Teacher,
    Student,
    Ema,
}

impl Role {
    fn tag(self) -> u8 {
        match self {
            Role::Teacher => 0,
            Role::Student => 1,
            Role::Ema => 2,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(Role::Teacher),
            1 => Ok(Role::Student),
            2 => Ok(Role::Ema),
            _ => Err(bad(format!("unknown role tag {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Teacher => "teacher",
            Role::Student => "student",
            Role::Ema => "ema",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSnapshot {
    pub epsilon: f64,
    pub t_max: f64,
    pub rho: f64,
    pub sigma_data: f64,
    pub n_steps: u32,
}

impl ScheduleSnapshot {
    pub fn of(cfg: &Config) -> Self {
        Self {
            epsilon: cfg.epsilon as f64,
            t_max: cfg.t_max as f64,
            rho: cfg.rho as f64,
            sigma_data: cfg.sigma_data as f64,
            n_steps: cfg.n_steps as u32,
        }
    }
}

/// Parameter groups stored in a checkpoint.
pub mod group {
    /// Teacher weights, or the student's online weights.
    pub const PARAMS: &str = "params";
    /// Student target (EMA) weights.
    pub const EMA: &str = "ema";
    pub const ADAM_M: &str = "adam_m";
    pub const ADAM_V: &str = "adam_v";
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub role: Role,
    pub step: u64,
    pub opt_step: u64,
    pub rng: RngState,
    pub schedule: ScheduleSnapshot,
    pub config: String,
    /// `group/param_name` → tensor.
    pub blobs: BTreeMap<String, Tensor>,
}

fn bad(reason: String) -> Error {
    Error::Format {
        kind: "checkpoint",
        reason,
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(bad(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().expect("16 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| bad("string is not UTF-8".into()))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn new(role: Role, cfg: &Config) -> Self {
        Self {
            role,
            step: 0,
            opt_step: 0,
            rng: RngState {
                seed: cfg.seed,
                word_pos: 0,
            },
            schedule: ScheduleSnapshot::of(cfg),
            config: cfg.to_text(),
            blobs: BTreeMap::new(),
        }
    }

    pub fn put_group(&mut self, group: &str, params: &DenoiserParams) {
        for (name, t) in params.iter() {
            self.blobs.insert(format!("{group}/{name}"), t.clone());
        }
    }

    pub fn put_tensors(&mut self, group: &str, tensors: &BTreeMap<String, Tensor>) {
        for (name, t) in tensors {
            self.blobs.insert(format!("{group}/{name}"), t.clone());
        }
    }

    pub fn group(&self, group: &str) -> DenoiserParams {
        let prefix = format!("{group}/");
        let mut p = DenoiserParams::new();
        for (name, t) in &self.blobs {
            if let Some(rest) = name.strip_prefix(&prefix) {
                p.insert(rest, t.clone());
            }
        }
        p
    }

    pub fn has_group(&self, group: &str) -> bool {
        let prefix = format!("{group}/");
        self.blobs.keys().any(|k| k.starts_with(&prefix))
    }

    /// Stores optimizer moments and step.
    pub fn put_optimizer(&mut self, opt: &AdamW) {
        self.opt_step = opt.step;
        self.put_tensors(group::ADAM_M, &opt.m);
        self.put_tensors(group::ADAM_V, &opt.v);
    }

    /// Optimizer with the stored moments and the given learning rate.
    pub fn optimizer(&self, lr: Scalar) -> AdamW {
        let mut opt = AdamW::new(lr);
        opt.step = self.opt_step;
        let tensors = |g: &str| self.group(g).iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        opt.m = tensors(group::ADAM_M);
        opt.v = tensors(group::ADAM_V);
        opt
    }

    pub fn config(&self) -> Result<Config> {
        Config::parse(&self.config)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.role.tag());
        out.push(SCALAR_BYTES as u8);
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.opt_step.to_le_bytes());
        out.extend_from_slice(&self.rng.seed.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        let s = &self.schedule;
        for v in [s.epsilon, s.t_max, s.rho, s.sigma_data] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&s.n_steps.to_le_bytes());
        put_str(&mut out, &self.config);
        out.extend_from_slice(&(self.blobs.len() as u32).to_le_bytes());
        for (name, t) in &self.blobs {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(bad("bad magic, expected COMC".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let role = Role::from_tag(r.u8()?)?;
        let width = r.u8()? as usize;
        if width != 4 && width != 8 {
            return Err(bad(format!("unsupported float width {width}")));
        }
        let step = r.u64()?;
        let opt_step = r.u64()?;
        let rng = RngState {
            seed: r.u64()?,
            word_pos: r.u128()?,
        };
        let schedule = ScheduleSnapshot {
            epsilon: r.f64()?,
            t_max: r.f64()?,
            rho: r.f64()?,
            sigma_data: r.f64()?,
            n_steps: r.u32()?,
        };
        let config = r.string()?;
        let n = r.u32()?;
        let mut blobs = BTreeMap::new();
        for _ in 0..n {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let raw = r.take(numel * width)?;
            let data = if width == 8 {
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")) as Scalar)
                    .collect()
            } else {
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as Scalar)
                    .collect()
            };
            let t = Tensor::new(&shape, data).map_err(|e| bad(format!("blob {name}: {e}")))?;
            blobs.insert(name, t);
        }
        if r.pos != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            role,
            step,
            opt_step,
            rng,
            schedule,
            config,
            blobs,
        })
    }

    /// Writes through a temporary file so an interrupted save never
    /// replaces a good checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("comc.tmp");
        std::fs::write(&tmp, self.encode()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Errors unless `group` matches the parameter shapes `cfg` would create.
    pub fn check_shapes(&self, group: &str, cfg: &Config) -> Result<DenoiserParams> {
        let params = self.group(group);
        let model = cfg.model()?;
        let fresh = model.init(&mut crate::numcore::Rng::new(0), crate::denoiser::OutputInit::Zero)?;
        fresh.check_same_shape(&params).map_err(|e| {
            Error::Config(format!("{} checkpoint does not fit the configured model: {e}", self.role.name()))
        })?;
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{randn, Rng};

    fn sample() -> Checkpoint {
        let cfg = Config::default();
        let mut c = Checkpoint::new(Role::Student, &cfg);
        c.step = 17;
        c.rng.word_pos = 1 << 70;
        let mut rng = Rng::new(3);
        c.blobs.insert("params/a".into(), randn(&mut rng, &[3, 4]));
        c.blobs.insert("ema/a".into(), randn(&mut rng, &[3, 4]));
        c.blobs.insert("params/b".into(), randn(&mut rng, &[5]));
        c
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let back = Checkpoint::decode(&c.encode()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.encode(), c.encode());
    }

    #[test]
    fn groups_split_by_prefix() {
        let c = sample();
        assert_eq!(c.group("params").len(), 2);
        assert_eq!(c.group("ema").len(), 1);
        assert!(!c.has_group("adam_m"));
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let bytes = sample().encode();
        assert_eq!(Checkpoint::decode(&bytes[..bytes.len() - 1]).unwrap_err().kind(), "format");
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::decode(&wrong).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::decode(&extra).is_err());
    }

    #[test]
    fn shape_check_against_config() {
        let cfg = Config::parse("proj_dim=2\nsinger_dim=2\nn_singers=2\ncontent_dim=4\nmel_bins=3").unwrap();
        let p = cfg.model().unwrap().init(&mut Rng::new(1), crate::denoiser::OutputInit::Zero).unwrap();
        let mut c = Checkpoint::new(Role::Teacher, &cfg);
        c.put_group(group::PARAMS, &p);
        assert!(c.check_shapes(group::PARAMS, &cfg).is_ok());
        let other = Config::parse("proj_dim=3\nsinger_dim=2\nn_singers=2\ncontent_dim=4\nmel_bins=3").unwrap();
        assert_eq!(c.check_shapes(group::PARAMS, &other).unwrap_err().kind(), "config");
    }
}
