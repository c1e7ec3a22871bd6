//! The six pipeline commands as library functions.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::denoiser::{Denoise, NetDenoiser};
use crate::error::{Error, Result};
use crate::features::{build_cond, synth_dataset, FeatureSet};
use crate::numcore::{Rng, Scalar, Tensor};
use crate::sampler::{sample_student, sample_teacher, CountingDenoiser, Solver};
use crate::schedule::TimeGrid;
use crate::training::{distill_step, train_step, DistillState, Example, TrainState};

use super::checkpoint::{group, Checkpoint, Role};
use super::config::Config;
use super::data::{load_dataset, read_features, read_f0, read_mel, write_dataset, write_mel};
use super::log::Logger;
use super::metrics;

fn fmt(v: Scalar) -> String {
    format!("{v:.6e}")
}

/// Generates `cfg.n_items` synthetic items into `out_dir`; returns the manifest hash.
pub fn gen_data(cfg: &Config, out_dir: &Path, log: &mut Logger) -> Result<String> {
    let mut rng = Rng::new(cfg.seed);
    let items = synth_dataset(&mut rng, cfg.n_items, &cfg.synth())?;
    let hash = write_dataset(out_dir, &items)?;
    log.record(
        "gen_data",
        &[
            ("items", items.len().to_string()),
            ("dir", out_dir.display().to_string()),
            ("manifest_sha256", hash.clone()),
        ],
    );
    Ok(hash)
}

fn draw_batch(data: &[Example], size: usize, rng: &mut Rng) -> Vec<Example> {
    (0..size)
        .map(|_| data[rng.int_inclusive(0, data.len() - 1)].clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Loss of every step run in this invocation.
    pub losses: Vec<Scalar>,
    pub final_step: u64,
    pub params_digest: String,
}

pub fn teacher_checkpoint(cfg: &Config, state: &TrainState) -> Checkpoint {
    let mut c = Checkpoint::new(Role::Teacher, cfg);
    c.step = state.step;
    c.rng = state.rng.state();
    c.put_group(group::PARAMS, &state.params);
    c.put_optimizer(&state.opt);
    c
}

/// Fresh teacher state, or the state stored in `resume`.
pub fn teacher_state(cfg: &Config, resume: Option<&Path>) -> Result<TrainState> {
    match resume {
        None => {
            let mut init_rng = Rng::new(cfg.seed);
            let params = cfg.model()?.init(&mut init_rng, crate::denoiser::OutputInit::Zero)?;
            let mut state = TrainState::new(params, cfg.lr_teacher, cfg.seed);
            state.rng = init_rng;
            Ok(state)
        }
        Some(path) => {
            let c = Checkpoint::load(path)?;
            if c.role != Role::Teacher {
                return Err(Error::Config(format!("cannot resume teacher training from a {} checkpoint", c.role.name())));
            }
            Ok(TrainState {
                params: c.check_shapes(group::PARAMS, cfg)?,
                opt: c.optimizer(cfg.lr_teacher),
                step: c.step,
                rng: Rng::from_state(c.rng),
            })
        }
    }
}

/// Runs teacher steps until `cfg.teacher_iters`, checkpointing to `out`
/// every `cfg.checkpoint_every` steps and at the end. On a non-finite step
/// the last written checkpoint is left in place.
pub fn train_teacher(
    cfg: &Config,
    data_dir: &Path,
    out: &Path,
    resume: Option<&Path>,
    log: &mut Logger,
) -> Result<TrainReport> {
    let data = load_dataset(data_dir)?;
    let model = cfg.model()?;
    let noise = cfg.noise();
    let mut state = teacher_state(cfg, resume)?;
    let mut losses = Vec::new();
    while state.step < cfg.teacher_iters {
        let batch = draw_batch(&data, cfg.batch_size, &mut state.rng);
        let loss = train_step(&mut state, &model, &noise, &batch).inspect_err(|e| {
            log.record("abort", &[("step", state.step.to_string()), ("error", e.to_string())]);
        })?;
        losses.push(loss);
        if cfg.log_every > 0 && state.step % cfg.log_every == 0 {
            log.record("train", &[("step", state.step.to_string()), ("loss", fmt(loss))]);
        }
        if cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 {
            teacher_checkpoint(cfg, &state).save(out)?;
        }
    }
    teacher_checkpoint(cfg, &state).save(out)?;
    let digest = state.params.digest();
    log.record(
        "train_done",
        &[
            ("step", state.step.to_string()),
            ("final_loss", losses.last().map_or("nan".into(), |l| fmt(*l))),
            ("params_sha256", digest.clone()),
        ],
    );
    Ok(TrainReport {
        losses,
        final_step: state.step,
        params_digest: digest,
    })
}

pub fn student_checkpoint<T>(cfg: &Config, state: &DistillState<T>) -> Checkpoint {
    let mut c = Checkpoint::new(Role::Student, cfg);
    c.step = state.step;
    c.rng = state.rng.state();
    c.put_group(group::PARAMS, &state.theta);
    c.put_group(group::EMA, &state.theta_minus);
    c.put_optimizer(&state.opt);
    c
}

fn load_teacher(cfg: &Config, path: &Path) -> Result<NetDenoiser> {
    let c = Checkpoint::load(path)?;
    if c.role != Role::Teacher {
        return Err(Error::Config(format!("expected a teacher checkpoint, got {}", c.role.name())));
    }
    let params = c.check_shapes(group::PARAMS, cfg)?;
    Ok(cfg.model()?.denoiser(&params))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillReport {
    pub losses: Vec<Scalar>,
    pub final_step: u64,
    pub teacher_digest_before: String,
    pub teacher_digest_after: String,
}

/// Distills a student from the teacher checkpoint; `theta` and `theta_minus`
/// both start from the teacher weights.
pub fn distill(
    cfg: &Config,
    teacher_ckpt: &Path,
    data_dir: &Path,
    out: &Path,
    resume: Option<&Path>,
    log: &mut Logger,
) -> Result<DistillReport> {
    let data = load_dataset(data_dir)?;
    let model = cfg.model()?;
    let teacher = load_teacher(cfg, teacher_ckpt)?;
    let before = teacher.params.digest();
    let grid = cfg.grid()?;
    let mut state = match resume {
        None => DistillState::new(teacher.params.clone(), teacher, grid, cfg.lr_distill, cfg.seed),
        Some(path) => {
            let c = Checkpoint::load(path)?;
            if c.role != Role::Student {
                return Err(Error::Config(format!("cannot resume distillation from a {} checkpoint", c.role.name())));
            }
            DistillState {
                theta: c.check_shapes(group::PARAMS, cfg)?,
                theta_minus: c.check_shapes(group::EMA, cfg)?,
                teacher,
                grid,
                mu: cfg.mu,
                opt: c.optimizer(cfg.lr_distill),
                step: c.step,
                rng: Rng::from_state(c.rng),
            }
        }
    };
    state.mu = cfg.mu;
    log.record(
        "distill_start",
        &[
            ("mu", state.mu.to_string()),
            ("n_steps", cfg.n_steps.to_string()),
            ("teacher_sha256", before.clone()),
        ],
    );
    let mut losses = Vec::new();
    while state.step < cfg.distill_iters {
        let batch = draw_batch(&data, cfg.batch_size, &mut state.rng);
        let loss = distill_step(&mut state, &model, &batch)?;
        losses.push(loss);
        if cfg.log_every > 0 && state.step % cfg.log_every == 0 {
            log.record(
                "distill",
                &[("step", state.step.to_string()), ("loss", fmt(loss)), ("mu", state.mu.to_string())],
            );
        }
        if cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 {
            student_checkpoint(cfg, &state).save(out)?;
        }
    }
    student_checkpoint(cfg, &state).save(out)?;
    let after = state.teacher.params.digest();
    log.record(
        "distill_done",
        &[
            ("step", state.step.to_string()),
            ("final_loss", losses.last().map_or("nan".into(), |l| fmt(*l))),
            ("teacher_sha256", after.clone()),
        ],
    );
    Ok(DistillReport {
        losses,
        final_step: state.step,
        teacher_digest_before: before,
        teacher_digest_after: after,
    })
}

/// Where a sample's conditioning comes from.
#[derive(Debug, Clone)]
pub enum SampleInput {
    /// Feature file stem (see [`super::data`]) and target singer.
    Features { stem: PathBuf, singer_id: usize },
    /// Unconditional model: just a frame count.
    Frames(usize),
}

#[derive(Debug, Clone)]
pub struct SampleReport {
    pub role: Role,
    pub nfe: usize,
    pub wall_secs: Scalar,
    /// `[mel_bins, frames]`
    pub mel: Tensor,
}

/// Loads a checkpoint as a ready-to-run denoiser. Students use the target
/// weights unless `use_ema` is false.
pub fn load_denoiser(path: &Path, use_ema: bool) -> Result<(Config, Role, NetDenoiser)> {
    let c = Checkpoint::load(path)?;
    let cfg = c.config()?;
    let g = match c.role {
        Role::Student if use_ema => group::EMA,
        _ => group::PARAMS,
    };
    let params = c.check_shapes(g, &cfg)?;
    let d = cfg.model()?.denoiser(&params);
    Ok((cfg, c.role, d))
}

fn cond_for(cfg: &Config, d: &NetDenoiser, input: &SampleInput) -> Result<(Option<Tensor>, usize)> {
    match (cfg.encoder(), input) {
        (Some(enc), SampleInput::Features { stem, singer_id }) => {
            let fs = read_features(stem)?;
            let c = build_cond(&enc, &d.params, &fs, *singer_id)?;
            Ok((Some(c.0), fs.frames()))
        }
        (Some(_), SampleInput::Frames(_)) => Err(Error::invalid("conditional checkpoint needs --features")),
        (None, SampleInput::Frames(n)) => Ok((None, *n)),
        (None, SampleInput::Features { stem, .. }) => Ok((None, read_features(stem)?.frames())),
    }
}

/// Generates one mel with the sampler matching the checkpoint role and
/// writes it to `out`. `steps` is the student step count, or the teacher
/// grid size (default: the configured grid).
pub fn sample(
    ckpt: &Path,
    input: &SampleInput,
    steps: Option<usize>,
    seed: u64,
    use_ema: bool,
    out: &Path,
    log: &mut Logger,
) -> Result<SampleReport> {
    let (cfg, role, d) = load_denoiser(ckpt, use_ema)?;
    let (cond, frames) = cond_for(&cfg, &d, input)?;
    let shape = [cfg.mel_bins, frames];
    let mut rng = Rng::new(seed);
    let counter = CountingDenoiser::new(&d);
    let start = Instant::now();
    let out_x = match role {
        Role::Teacher => {
            let n = steps.unwrap_or(cfg.n_steps);
            if n == 0 {
                return Err(Error::invalid("teacher sampling needs at least one step"));
            }
            let grid = TimeGrid::karras(n, cfg.epsilon, cfg.t_max, cfg.rho)?;
            sample_teacher(&counter, cond.as_ref(), shape, &grid, &mut rng, cfg.solver, false)?
        }
        Role::Student | Role::Ema => {
            let grid = cfg.grid()?;
            sample_student(&counter, cond.as_ref(), shape, steps.unwrap_or(1), &grid, &mut rng, false)?
        }
    };
    let wall = start.elapsed().as_secs_f64() as Scalar;
    debug_assert_eq!(counter.count(), out_x.nfe);
    write_mel(out, &out_x.x)?;
    log.record(
        "sample",
        &[
            ("role", role.name().into()),
            ("nfe", counter.count().to_string()),
            ("wall_ms", format!("{:.3}", wall * 1e3)),
            ("frames", frames.to_string()),
            ("out", out.display().to_string()),
        ],
    );
    Ok(SampleReport {
        role,
        nfe: counter.count(),
        wall_secs: wall,
        mel: out_x.x,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemMetrics {
    pub mse: Scalar,
    pub fpc: Option<Scalar>,
    pub rtf: Option<Scalar>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub items: Vec<ItemMetrics>,
    pub mean_mse: Scalar,
    pub mean_fpc: Option<Scalar>,
    pub mean_rtf: Option<Scalar>,
}

fn mean_of(v: impl Iterator<Item = Option<Scalar>>) -> Option<Scalar> {
    let v: Option<Vec<Scalar>> = v.collect();
    v.filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<Scalar>() / v.len() as Scalar)
}

/// Per-item and mean metrics. F0 tracks and decode times are optional but,
/// when given, must have one entry per item.
pub fn eval(
    refs: &[Tensor],
    gens: &[Tensor],
    f0: Option<(&[Vec<Scalar>], &[Vec<Scalar>])>,
    decode_secs: Option<&[Scalar]>,
    hop: usize,
    sample_rate: u32,
) -> Result<EvalReport> {
    let n = refs.len();
    let count_ok = gens.len() == n
        && f0.is_none_or(|(a, b)| a.len() == n && b.len() == n)
        && decode_secs.is_none_or(|d| d.len() == n);
    if !count_ok || n == 0 {
        return Err(Error::invalid("eval inputs must be non-empty with one entry per item"));
    }
    let items = (0..n)
        .map(|i| {
            Ok(ItemMetrics {
                mse: metrics::mse(&refs[i], &gens[i])?,
                fpc: f0.map(|(a, b)| metrics::fpc(&a[i], &b[i])).transpose()?,
                rtf: decode_secs
                    .map(|d| metrics::rtf(d[i], refs[i].shape()[1], hop, sample_rate))
                    .transpose()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        mean_mse: items.iter().map(|m| m.mse).sum::<Scalar>() / n as Scalar,
        mean_fpc: mean_of(items.iter().map(|m| m.fpc)),
        mean_rtf: mean_of(items.iter().map(|m| m.rtf)),
        items,
    })
}

/// [`eval`] over files: mel files, optional pitch files, optional decode times.
pub fn eval_files(
    refs: &[PathBuf],
    gens: &[PathBuf],
    f0: Option<(&[PathBuf], &[PathBuf])>,
    decode_secs: Option<&[Scalar]>,
    hop: usize,
    sample_rate: u32,
    log: &mut Logger,
) -> Result<EvalReport> {
    let load = |ps: &[PathBuf]| ps.iter().map(|p| read_mel(p)).collect::<Result<Vec<_>>>();
    let f0s = |ps: &[PathBuf]| ps.iter().map(|p| read_f0(p)).collect::<Result<Vec<_>>>();
    let (r, g) = (load(refs)?, load(gens)?);
    let tracks = f0.map(|(a, b)| Ok::<_, Error>((f0s(a)?, f0s(b)?))).transpose()?;
    let report = eval(
        &r,
        &g,
        tracks.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice())),
        decode_secs,
        hop,
        sample_rate,
    )?;
    let opt = |v: Option<Scalar>| v.map_or("na".into(), fmt);
    for (i, m) in report.items.iter().enumerate() {
        log.record(
            "eval_item",
            &[("item", i.to_string()), ("mse", fmt(m.mse)), ("fpc", opt(m.fpc)), ("rtf", opt(m.rtf))],
        );
    }
    log.record(
        "eval",
        &[
            ("items", report.items.len().to_string()),
            ("mse", fmt(report.mean_mse)),
            ("fpc", opt(report.mean_fpc)),
            ("rtf", opt(report.mean_rtf)),
        ],
    );
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub nfe: usize,
    pub median_secs: Scalar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub teacher: BenchRow,
    pub student: BenchRow,
    /// Teacher median time over student median time.
    pub speedup: Scalar,
}

fn median(mut v: Vec<Scalar>) -> Scalar {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times Euler teacher sampling over `grid` against one-step student
/// sampling on the calling thread.
pub fn bench_denoisers<T: Denoise, S: Denoise>(
    teacher: &T,
    student: &S,
    cond: Option<&Tensor>,
    shape: [usize; 2],
    grid: &TimeGrid,
    repeats: usize,
    seed: u64,
) -> Result<BenchReport> {
    if repeats == 0 {
        return Err(Error::invalid("bench needs at least one repeat"));
    }
    let (mut tt, mut ts) = (Vec::new(), Vec::new());
    let (mut nfe_t, mut nfe_s) = (0, 0);
    for r in 0..repeats {
        let t = CountingDenoiser::new(teacher);
        let start = Instant::now();
        sample_teacher(&t, cond, shape, grid, &mut Rng::new(seed + r as u64), Solver::Euler, false)?;
        tt.push(start.elapsed().as_secs_f64() as Scalar);
        nfe_t = t.count();

        let s = CountingDenoiser::new(student);
        let start = Instant::now();
        sample_student(&s, cond, shape, 1, grid, &mut Rng::new(seed + r as u64), false)?;
        ts.push(start.elapsed().as_secs_f64() as Scalar);
        nfe_s = s.count();
    }
    let (mt, ms) = (median(tt), median(ts));
    Ok(BenchReport {
        teacher: BenchRow {
            method: format!("teacher-euler-{}", grid.times().len() - 1),
            nfe: nfe_t,
            median_secs: mt,
        },
        student: BenchRow {
            method: "student-1-step".into(),
            nfe: nfe_s,
            median_secs: ms,
        },
        speedup: mt / ms,
    })
}

/// Benchmarks two checkpoints built on the same network preset.
pub fn bench(
    teacher_ckpt: &Path,
    student_ckpt: &Path,
    frames: usize,
    repeats: usize,
    seed: u64,
    log: &mut Logger,
) -> Result<BenchReport> {
    let (tcfg, trole, teacher) = load_denoiser(teacher_ckpt, true)?;
    let (scfg, srole, student) = load_denoiser(student_ckpt, true)?;
    if trole != Role::Teacher || srole == Role::Teacher {
        return Err(Error::Config("bench needs a teacher and a student checkpoint".into()));
    }
    if tcfg.model()? != scfg.model()? {
        return Err(Error::Config(format!(
            "preset mismatch: teacher {} vs student {}; timings would not be comparable",
            tcfg.preset, scfg.preset
        )));
    }
    let cond = match tcfg.encoder() {
        Some(enc) => {
            let fs = bench_features(&tcfg, frames, seed)?;
            Some(build_cond(&enc, &teacher.params, &fs, 0)?.0)
        }
        None => None,
    };
    let grid = tcfg.grid()?;
    let report = bench_denoisers(&teacher, &student, cond.as_ref(), [tcfg.mel_bins, frames], &grid, repeats, seed)?;
    for row in [&report.teacher, &report.student] {
        log.record(
            "bench",
            &[
                ("method", row.method.clone()),
                ("nfe", row.nfe.to_string()),
                ("median_ms", format!("{:.3}", row.median_secs * 1e3)),
            ],
        );
    }
    log.record("bench_speedup", &[("speedup", format!("{:.2}", report.speedup))]);
    Ok(report)
}

fn bench_features(cfg: &Config, frames: usize, seed: u64) -> Result<FeatureSet> {
    let mut spec = cfg.synth();
    spec.frames_min = frames;
    spec.frames_max = frames;
    let mut item = synth_dataset(&mut Rng::new(seed), 1, &spec)?;
    Ok(item.remove(0).features)
}
