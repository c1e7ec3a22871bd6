use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use svc_decoder::cli::commands::{self, SampleInput};
use svc_decoder::cli::config::check_precision;
use svc_decoder::cli::{log::format_record, Config, Logger};
use svc_decoder::features::MelConfig;
use svc_decoder::numcore::Scalar;
use svc_decoder::Result;

#[derive(Parser)]
#[command(name = "svc-decoder", version, about = "Consistency-model mel decoder: data, training, distillation, sampling")]
struct Cli {
    /// key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Must match the precision this binary was built with
    #[arg(long, global = true, value_parser = ["f32", "f64"])]
    precision: Option<String>,
    /// Output path (directory for gen-data, file otherwise)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic dataset and its manifest
    GenData,
    /// Train the teacher denoiser
    TrainTeacher {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Distill a consistency student from a teacher checkpoint
    Distill {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Generate a mel file from a checkpoint
    Sample {
        #[arg(long)]
        ckpt: PathBuf,
        /// Feature file stem: reads STEM.comf and STEM.pitch.comf
        #[arg(long)]
        features: Option<PathBuf>,
        /// Target singer; differing from the source singer converts the voice
        #[arg(long, default_value_t = 0)]
        singer: usize,
        /// Student steps, or teacher grid size
        #[arg(long)]
        steps: Option<usize>,
        /// Frame count for unconditional checkpoints
        #[arg(long)]
        frames: Option<usize>,
        /// Sample a student with its online weights instead of the target weights
        #[arg(long)]
        theta: bool,
    },
    /// Compare generated mels with references
    Eval {
        #[arg(long = "ref", value_delimiter = ',', required = true)]
        refs: Vec<PathBuf>,
        #[arg(long = "gen", value_delimiter = ',', required = true)]
        gens: Vec<PathBuf>,
        /// Pitch files (first column F0) for the references
        #[arg(long, value_delimiter = ',')]
        f0_ref: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        f0_gen: Vec<PathBuf>,
        /// Decode wall time per item in seconds, for RTF
        #[arg(long, value_delimiter = ',')]
        decode_secs: Vec<Scalar>,
    },
    /// Time 50-step teacher sampling against 1-step student sampling
    Bench {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        student: PathBuf,
        #[arg(long, default_value_t = 64)]
        frames: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = cli.precision {
        cfg.precision = p;
    }
    check_precision(&cfg.precision)?;
    let mut log = Logger::stderr();
    let out_or = |default: PathBuf| cli.out.clone().unwrap_or(default);
    match cli.cmd {
        Cmd::GenData => {
            let dir = out_or(cfg.data_dir.clone());
            commands::gen_data(&cfg, &dir, &mut log)?;
        }
        Cmd::TrainTeacher { data, resume } => {
            let out = out_or(cfg.out_dir.join("teacher.comc"));
            create_parent(&out)?;
            let data = data.unwrap_or_else(|| cfg.data_dir.clone());
            commands::train_teacher(&cfg, &data, &out, resume.as_deref(), &mut log)?;
        }
        Cmd::Distill { teacher, data, resume } => {
            let out = out_or(cfg.out_dir.join("student.comc"));
            create_parent(&out)?;
            let data = data.unwrap_or_else(|| cfg.data_dir.clone());
            commands::distill(&cfg, &teacher, &data, &out, resume.as_deref(), &mut log)?;
        }
        Cmd::Sample { ckpt, features, singer, steps, frames, theta } => {
            let out = out_or(cfg.out_dir.join("sample.comm"));
            create_parent(&out)?;
            let input = match features {
                Some(stem) => SampleInput::Features { stem, singer_id: singer },
                None => SampleInput::Frames(frames.unwrap_or(64)),
            };
            commands::sample(&ckpt, &input, steps, cfg.seed, !theta, &out, &mut log)?;
        }
        Cmd::Eval { refs, gens, f0_ref, f0_gen, decode_secs } => {
            let f0 = (!f0_ref.is_empty() || !f0_gen.is_empty()).then_some((f0_ref.as_slice(), f0_gen.as_slice()));
            let secs = (!decode_secs.is_empty()).then_some(decode_secs.as_slice());
            let mel = MelConfig::default();
            commands::eval_files(&refs, &gens, f0, secs, mel.hop, mel.sample_rate, &mut log)?;
        }
        Cmd::Bench { teacher, student, frames, repeats } => {
            commands::bench(&teacher, &student, frames, repeats, cfg.seed, &mut log)?;
        }
    }
    Ok(())
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| svc_decoder::Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", format_record("error", &[("kind", e.kind().into()), ("message", e.to_string())]));
            ExitCode::from(2)
        }
    }
}
