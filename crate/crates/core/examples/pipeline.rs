//! End to end through the library entry points the binary uses: synthetic
//! dataset, teacher training, distillation, sampling from both checkpoints
//! and evaluation. Everything lands in a temporary directory.
//!
//! `cargo run --release --example pipeline`

use svc_decoder::cli::commands::{self, SampleInput};
use svc_decoder::cli::data::read_mel;
use svc_decoder::cli::{Config, Logger};

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

pub struct PipelineSummary {
    pub teacher_nfe: usize,
    pub student_nfe: usize,
    pub teacher_frozen: bool,
}

pub fn run_example() -> Result<PipelineSummary> {
    let dir = tempfile::tempdir()?;
    let path = |name: &str| dir.path().join(name);
    let cfg = Config::parse(
        "# small enough to finish in seconds\n\
         mel_bins=16\ncontent_dim=16\nproj_dim=8\nsinger_dim=8\nn_singers=4\n\
         n_items=12\nframes_min=12\nframes_max=20\nbatch_size=4\n\
         teacher_iters=200\ndistill_iters=100\ncheckpoint_every=100\nlog_every=50\n\
         lr_teacher=2e-3\nlr_distill=5e-4\nn_steps=18\nseed=5\n",
    )?;
    let mut log = Logger::stderr();

    let manifest_sha = commands::gen_data(&cfg, &path("data"), &mut log)?;
    println!("dataset manifest sha256 {manifest_sha}");
    let teacher = commands::train_teacher(&cfg, &path("data"), &path("teacher.comc"), None, &mut log)?;
    let student = commands::distill(&cfg, &path("teacher.comc"), &path("data"), &path("student.comc"), None, &mut log)?;

    let input = SampleInput::Features {
        stem: path("data/item_00000"),
        singer_id: 1,
    };
    let t = commands::sample(&path("teacher.comc"), &input, None, 9, true, &path("teacher.comm"), &mut log)?;
    let s = commands::sample(&path("student.comc"), &input, Some(1), 9, true, &path("student.comm"), &mut log)?;

    let reference = read_mel(&path("data/item_00000.comm"))?;
    let report = commands::eval(&[reference.clone(), reference], &[t.mel, s.mel], None, None, 128, 24_000)?;
    println!(
        "teacher: {} steps, nfe {}, mse {:.4} | student: {} steps, nfe {}, mse {:.4}",
        teacher.final_step, t.nfe, report.items[0].mse, student.final_step, s.nfe, report.items[1].mse
    );
    Ok(PipelineSummary {
        teacher_nfe: t.nfe,
        student_nfe: s.nfe,
        teacher_frozen: student.teacher_digest_before == student.teacher_digest_after,
    })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
