use crate::denoiser::{random_matrix, DenoiserParams};
use crate::error::{Error, Result};
use crate::numcore::{Backend, Eval, Rng, Scalar, Tensor};

/// Per-frame input streams for the conditioning encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    /// `[frames, content_dim]`
    pub content: Tensor,
    /// Hz, 0 on unvoiced frames.
    pub f0: Vec<Scalar>,
    pub vuv: Vec<bool>,
    pub loudness: Vec<Scalar>,
}

impl FeatureSet {
    pub fn frames(&self) -> usize {
        self.content.shape()[0]
    }

    pub fn check(&self) -> Result<()> {
        let n = self.frames();
        if self.f0.len() != n || self.vuv.len() != n || self.loudness.len() != n {
            return Err(Error::invalid(format!(
                "feature streams disagree on frame count: content {n}, f0 {}, vuv {}, loudness {}",
                self.f0.len(),
                self.vuv.len(),
                self.loudness.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub content_dim: usize,
    /// Width each of content, pitch and loudness is projected to.
    pub proj_dim: usize,
    pub singer_dim: usize,
    pub n_singers: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            content_dim: 768,
            proj_dim: 256,
            singer_dim: 256,
            n_singers: 20,
        }
    }
}

impl EncoderConfig {
    /// Rows of the conditioning matrix: `3 * proj_dim + singer_dim`.
    pub fn cond_dim(&self) -> usize {
        3 * self.proj_dim + self.singer_dim
    }
}

const CONTENT: &str = "enc/content_proj";
const PITCH: &str = "enc/pitch_proj";
const LOUDNESS: &str = "enc/loudness_proj";
const SINGERS: &str = "enc/singer_table";

pub fn init_encoder_params(cfg: &EncoderConfig, rng: &mut Rng) -> DenoiserParams {
    let mut p = DenoiserParams::new();
    p.insert(CONTENT, random_matrix(rng, &[cfg.proj_dim, cfg.content_dim], cfg.content_dim));
    p.insert(PITCH, random_matrix(rng, &[cfg.proj_dim, 2], 2));
    p.insert(LOUDNESS, random_matrix(rng, &[cfg.proj_dim, 1], 1));
    p.insert(SINGERS, random_matrix(rng, &[cfg.n_singers, cfg.singer_dim], 1));
    p
}

/// Read-only view of the `[n_singers, singer_dim]` embedding table.
#[derive(Debug, Clone, Copy)]
pub struct SingerTable<'a> {
    table: &'a Tensor,
}

impl<'a> SingerTable<'a> {
    pub fn from_params(params: &'a DenoiserParams) -> Result<Self> {
        let table = params.get(SINGERS)?;
        table.dims2("singer table")?;
        Ok(Self { table })
    }

    pub fn n_singers(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn lookup(&self, id: usize) -> Result<&'a [Scalar]> {
        let (n, d) = (self.table.shape()[0], self.table.shape()[1]);
        if id >= n {
            return Err(Error::invalid(format!(
                "singer id {id} out of range [0, {n})"
            )));
        }
        Ok(&self.table.data()[id * d..(id + 1) * d])
    }
}

/// Conditioning matrix, channel-major `[cond_dim, frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondInput(pub Tensor);

impl CondInput {
    pub fn frames(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn dim(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

/// Projects content, `(ln(1 + f0), vuv)` and `ln(1 + loudness)` to
/// `proj_dim` rows each, stacks them and appends the singer embedding
/// repeated over frames.
pub fn build_cond_on<B: Backend>(
    b: &mut B,
    cfg: &EncoderConfig,
    params: &DenoiserParams,
    fs: &FeatureSet,
    singer_id: usize,
) -> Result<B::Value> {
    fs.check()?;
    let frames = fs.frames();
    if fs.content.shape()[1] != cfg.content_dim {
        return Err(Error::Shape {
            op: "content features",
            lhs: vec![frames, cfg.content_dim],
            rhs: fs.content.shape().to_vec(),
        });
    }
    let table = SingerTable::from_params(params)?;
    table.lookup(singer_id)?;

    let content_t = b.constant(crate::numcore::kernels::transpose(&fs.content)?);
    let mut pitch = fs.f0.iter().map(|&f| (1.0 + f.max(0.0)).ln()).collect::<Vec<_>>();
    pitch.extend(fs.vuv.iter().map(|&v| if v { 1.0 } else { 0.0 }));
    let pitch = b.constant(Tensor::new(&[2, frames], pitch)?);
    let loud = fs.loudness.iter().map(|&l| (1.0 + l.max(0.0)).ln()).collect();
    let loud = b.constant(Tensor::new(&[1, frames], loud)?);

    let pc = b.param(CONTENT, params.get(CONTENT)?);
    let pp = b.param(PITCH, params.get(PITCH)?);
    let pl = b.param(LOUDNESS, params.get(LOUDNESS)?);
    let st = b.param(SINGERS, params.get(SINGERS)?);

    let c = b.matmul(&pc, &content_t)?;
    let p = b.matmul(&pp, &pitch)?;
    let l = b.matmul(&pl, &loud)?;

    let mut onehot = vec![0.0; table.n_singers()];
    onehot[singer_id] = 1.0;
    let onehot = b.constant(Tensor::new(&[table.n_singers(), 1], onehot)?);
    let st_t = b.transpose(&st)?;
    let emb = b.matmul(&st_t, &onehot)?;
    let ones = b.constant(Tensor::ones(&[1, frames]));
    let s = b.matmul(&emb, &ones)?;

    b.concat_rows(&[c, p, l, s])
}

pub fn build_cond(
    cfg: &EncoderConfig,
    params: &DenoiserParams,
    fs: &FeatureSet,
    singer_id: usize,
) -> Result<CondInput> {
    build_cond_on(&mut Eval, cfg, params, fs, singer_id).map(CondInput)
}
