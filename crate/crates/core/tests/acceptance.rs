//! End-to-end acceptance checks. Runs as a plain binary so each criterion
//! prints one result line; exits non-zero if any criterion fails.

use std::time::Instant;

use svc_decoder::cli::commands::{self, bench_denoisers};
use svc_decoder::cli::{Checkpoint, Config, Logger};
use svc_decoder::cli::metrics::{fpc, mse};
use svc_decoder::denoiser::{Denoise, OutputInit, WaveNetConfig};
use svc_decoder::features::{
    build_cond, estimate_f0, mel_spectrogram, synth_dataset, EncoderConfig, F0Config, MelConfig, SynthSpec, Wave,
};
use svc_decoder::numcore::{grad_check, randn, Graph, Rng, Scalar, Tensor, Var};
use svc_decoder::oracle::{AnalyticDenoiser, GaussianSpec};
use svc_decoder::sampler::{sample_student, sample_teacher, Solver};
use svc_decoder::schedule::{NoiseLevelDist, Precond, TimeGrid};
use svc_decoder::training::{
    distill_step, grad_check_params, teacher_loss_graph, train_step, DistillState, Example, ModelSpec, TrainState,
};

type Outcome = Result<(bool, String), svc_decoder::Error>;

fn gaussian_model(sigma_data: Scalar) -> ModelSpec {
    ModelSpec {
        net: WaveNetConfig::tiny(),
        enc: None,
        precond: Precond::new(sigma_data, 0.002).unwrap(),
        t_max: 80.0,
    }
}

fn gaussian_batch(rng: &mut Rng, size: usize, frames: usize) -> Vec<Example> {
    (0..size)
        .map(|_| Example::unconditional(randn(rng, &[1, frames])))
        .collect()
}

fn small_conditional(mel_bins: usize) -> (ModelSpec, SynthSpec) {
    let enc = EncoderConfig {
        content_dim: 32,
        proj_dim: 8,
        singer_dim: 8,
        n_singers: 4,
    };
    let mut net = WaveNetConfig::tiny();
    net.mel_bins = mel_bins;
    net.cond_dim = enc.cond_dim();
    let synth = SynthSpec {
        frames_min: 32,
        frames_max: 48,
        n_singers: 4,
        mel_bins,
        content_dim: 32,
        ..SynthSpec::default()
    };
    let model = ModelSpec {
        net,
        enc: Some(enc),
        precond: Precond::new(0.5, 0.002).unwrap(),
        t_max: 80.0,
    };
    (model, synth)
}

fn boundary_condition() -> Outcome {
    let (model, synth) = small_conditional(12);
    let items = synth_dataset(&mut Rng::new(1), 10, &synth)?;
    let mut rng = Rng::new(2);
    let mut worst: Scalar = 0.0;
    for k in 0..1000 {
        if k % 100 == 0 {
            rng = Rng::new(1000 + k as u64);
        }
        let params = model.init(&mut rng, OutputInit::Random)?;
        let item = &items[k % items.len()];
        let cond = build_cond(model.enc.as_ref().unwrap(), &params, &item.features, item.singer_id)?;
        let x = randn(&mut rng, &[12, item.features.frames()]).axpby(3.0, &Tensor::zeros(&[12, item.features.frames()]), 0.0)?;
        let d = model.denoise(&params, &x, 0.002, Some(&cond.0))?;
        worst = worst.max(d.max_abs_diff(&x)?);
    }
    Ok((worst == 0.0, format!("1000 draws, max|D(x, eps) - x| = {worst:e}")))
}

fn op_cases() -> Vec<(&'static str, Vec<Tensor>, Box<dyn Fn(&mut Graph, &[Var]) -> svc_decoder::Result<Var>>)> {
    let mut rng = Rng::new(5);
    let mut r = |s: &[usize]| randn(&mut rng, s);
    vec![
        ("add", vec![r(&[3, 4]), r(&[3, 1])], Box::new(|g, v| { let y = g.add(v[0], v[1])?; g.sum_sq(y) })),
        ("sub", vec![r(&[3, 4]), r(&[1, 4])], Box::new(|g, v| { let y = g.sub(v[0], v[1])?; g.sum_sq(y) })),
        ("mul", vec![r(&[3, 4]), r(&[3, 4])], Box::new(|g, v| { let y = g.mul(v[0], v[1])?; g.sum_sq(y) })),
        ("scale", vec![r(&[5])], Box::new(|g, v| { let y = g.scale(v[0], -1.7)?; g.sum_sq(y) })),
        ("tanh", vec![r(&[2, 3])], Box::new(|g, v| { let y = g.tanh(v[0])?; g.sum_sq(y) })),
        ("sigmoid", vec![r(&[2, 3])], Box::new(|g, v| { let y = g.sigmoid(v[0])?; g.sum_sq(y) })),
        ("silu", vec![r(&[2, 3])], Box::new(|g, v| { let y = g.silu(v[0])?; g.sum_sq(y) })),
        ("relu", vec![Tensor::new(&[4], vec![0.7, -0.4, 1.2, -2.0]).unwrap()], Box::new(|g, v| { let y = g.relu(v[0])?; g.sum_sq(y) })),
        ("matmul", vec![r(&[3, 4]), r(&[4, 2])], Box::new(|g, v| { let y = g.matmul(v[0], v[1])?; g.sum_sq(y) })),
        ("conv1d", vec![r(&[2, 9]), r(&[3, 2, 3])], Box::new(|g, v| { let y = g.conv1d(v[0], v[1], 2)?; g.sum_sq(y) })),
        ("transpose", vec![r(&[2, 5]), r(&[5, 2])], Box::new(|g, v| { let t = g.transpose(v[0])?; let y = g.mul(t, v[1])?; g.sum(y) })),
        ("concat_rows", vec![r(&[1, 3]), r(&[2, 3])], Box::new(|g, v| { let y = g.concat_rows(&[v[0], v[1]])?; let y = g.tanh(y)?; g.sum_sq(y) })),
        ("mean", vec![r(&[3, 3])], Box::new(|g, v| { let y = g.tanh(v[0])?; g.mean(y) })),
        ("map", vec![r(&[4])], Box::new(|g, v| g.map(v[0], |x| x.sin(), |x| x.cos()).and_then(|y| g.sum(y)))),
    ]
}

fn gradient_correctness() -> Outcome {
    let mut worst_op: (Scalar, &str) = (0.0, "");
    for (name, inputs, f) in op_cases() {
        let rep = grad_check(|g, v| f(g, v), &inputs, 1e-5, 1e-4)?;
        if rep.worst() > worst_op.0 {
            worst_op = (rep.worst(), name);
        }
    }
    let model = gaussian_model(0.5);
    let params = model.init(&mut Rng::new(3), OutputInit::Random)?;
    let batch = gaussian_batch(&mut Rng::new(4), 2, 6);
    let noise = NoiseLevelDist::default();
    let report = grad_check_params(
        |g, p| teacher_loss_graph(g, &model, p, &batch, &noise, &mut Rng::new(9)),
        &params,
        1e-5,
    )?;
    let (worst_name, worst_loss) = report
        .iter()
        .fold(("", 0.0 as Scalar), |acc, (k, &v)| if v > acc.1 { (k.as_str(), v) } else { acc });
    let ok = worst_op.0 <= 1e-4 && worst_loss <= 1e-3 && report.len() == params.len();
    Ok((
        ok,
        format!(
            "ops worst {:.2e} ({}), full loss worst {:.2e} ({worst_name}) over {} tensors",
            worst_op.0,
            worst_op.1,
            worst_loss,
            report.len()
        ),
    ))
}

fn teacher_vs_analytic() -> Outcome {
    let model = gaussian_model(1.0);
    let spec = GaussianSpec::scalar(0.0, 1.0)?;
    let mut state = TrainState::new(model.init(&mut Rng::new(1), OutputInit::Zero)?, 1e-4, 3);
    let noise = NoiseLevelDist::default();
    let mut data = Rng::new(2);
    for _ in 0..5000 {
        train_step(&mut state, &model, &noise, &gaussian_batch(&mut data, 8, 8))?;
    }
    let x = Tensor::new(&[1, 25], (0..25).map(|i| -3.0 + 0.25 * i as Scalar).collect())?;
    let (lo, hi) = ((0.002 as Scalar).ln(), (10.0 as Scalar).ln());
    let mut total = 0.0;
    for k in 0..20 {
        let t = (lo + (hi - lo) * k as Scalar / 19.0).exp();
        let d = model.denoise(&state.params, &x, t, None)?;
        let exact = spec.denoiser(&x, t)?;
        total += d.data().iter().zip(exact.data()).map(|(a, b)| (a - b).abs()).sum::<Scalar>();
    }
    let err = total / 500.0;
    Ok((err <= 0.05, format!("5000 steps, mean |D - D*| = {err:.5} on 20x25 grid")))
}

fn solver_order() -> Outcome {
    let spec = GaussianSpec::scalar(0.3, 0.8)?;
    let d = AnalyticDenoiser(spec.clone());
    let err = |n: usize| -> svc_decoder::Result<Scalar> {
        let grid = TimeGrid::karras(n, 0.002, 80.0, 7.0)?;
        let out = sample_teacher(&d, None, [1, 64], &grid, &mut Rng::new(8), Solver::Euler, true)?;
        let start = &out.trajectory.as_ref().unwrap()[0].1;
        out.x.max_abs_diff(&spec.trajectory(start, 80.0, 0.002)?)
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [10, 20, 40] {
        let ratio = err(n)? / err(2 * n)?;
        ok &= (1.5..=2.5).contains(&ratio);
        parts.push(format!("N={n}: {ratio:.3}"));
    }
    Ok((ok, format!("err(N)/err(2N) {}", parts.join(", "))))
}

fn distillation() -> Outcome {
    let model = gaussian_model(1.0);
    let spec = GaussianSpec::scalar(0.0, 1.0)?;
    let grid = TimeGrid::karras(50, 0.002, 80.0, 7.0)?;
    let init = model.init(&mut Rng::new(1), OutputInit::Zero)?;
    let mut state = DistillState::new(init, AnalyticDenoiser(spec.clone()), grid.clone(), 5e-4, 3);
    let mut data = Rng::new(2);
    for _ in 0..3000 {
        distill_step(&mut state, &model, &gaussian_batch(&mut data, 8, 8))?;
    }
    let student = model.denoiser(&state.theta_minus);

    let (mut total, mut n) = (0.0, 0);
    for s in 0..20 {
        let out = sample_student(&student, None, [1, 16], 1, &grid, &mut Rng::new(100 + s), true)?;
        let x_big = &out.trajectory.as_ref().unwrap()[0].1;
        let exact = spec.consistency(x_big, 80.0, 0.002)?;
        total += out.x.data().iter().zip(exact.data()).map(|(a, b)| (a - b).abs()).sum::<Scalar>();
        n += 16;
    }
    let one_step = total / n as Scalar;

    let x_big = randn(&mut Rng::new(7), &[1, 16]).axpby(80.0, &Tensor::zeros(&[1, 16]), 0.0)?;
    let outs = [50, 40, 30, 20, 10]
        .iter()
        .map(|&i| {
            let t = grid.t(i);
            student.denoise(&spec.trajectory(&x_big, 80.0, t)?, t, None)
        })
        .collect::<svc_decoder::Result<Vec<_>>>()?;
    let (mut pair_mean, mut pair_max): (Scalar, Scalar) = (0.0, 0.0);
    for a in 0..outs.len() {
        for b in a + 1..outs.len() {
            let diff: Vec<Scalar> = outs[a].data().iter().zip(outs[b].data()).map(|(x, y)| (x - y).abs()).collect();
            pair_mean = pair_mean.max(diff.iter().sum::<Scalar>() / diff.len() as Scalar);
            pair_max = pair_max.max(diff.iter().cloned().fold(0.0, Scalar::max));
        }
    }
    Ok((
        one_step <= 0.1 && pair_mean <= 0.15,
        format!(
            "3000 steps; (a) one-step mean abs err {one_step:.4}; (b) worst pairwise mean abs diff {pair_mean:.4} (max element {pair_max:.4})"
        ),
    ))
}

fn speed_ratio() -> Outcome {
    let mut cfg = Config::default();
    cfg.preset = "full".into();
    let model = cfg.model()?;
    let teacher = model.denoiser(&model.init(&mut Rng::new(1), OutputInit::Random)?);
    let student = model.denoiser(&model.init(&mut Rng::new(2), OutputInit::Random)?);
    let frames = 32;
    let item = synth_dataset(&mut Rng::new(3), 1, &SynthSpec { frames_min: frames, frames_max: frames, ..cfg.synth() })?;
    let cond = build_cond(model.enc.as_ref().unwrap(), &teacher.params, &item[0].features, 0)?;
    let grid = cfg.grid()?;
    let r = bench_denoisers(&teacher, &student, Some(&cond.0), [80, frames], &grid, 3, 0)?;
    let ok = r.speedup >= 10.0 && r.teacher.nfe == 50 && r.student.nfe == 1;
    Ok((
        ok,
        format!(
            "full preset, {frames} frames: {} NFE {} {:.1} ms, {} NFE {} {:.2} ms, speedup {:.1}x",
            r.teacher.method,
            r.teacher.nfe,
            r.teacher.median_secs * 1e3,
            r.student.method,
            r.student.nfe,
            r.student.median_secs * 1e3,
            r.speedup
        ),
    ))
}

fn step_count_study() -> Outcome {
    let (model, synth) = small_conditional(20);
    let items: Vec<Example> = synth_dataset(&mut Rng::new(11), 32, &synth)?.into_iter().map(Example::from).collect();
    let noise = NoiseLevelDist::default();
    let mut teacher = TrainState::new(model.init(&mut Rng::new(1), OutputInit::Zero)?, 1e-3, 2);
    let mut pick = Rng::new(3);
    let batch = |rng: &mut Rng| -> Vec<Example> {
        (0..8).map(|_| items[rng.int_inclusive(0, items.len() - 1)].clone()).collect()
    };
    for _ in 0..5000 {
        let b = batch(&mut pick);
        train_step(&mut teacher, &model, &noise, &b)?;
    }
    let grid = TimeGrid::karras(50, 0.002, 80.0, 7.0)?;
    let phi = teacher.params.clone();
    let teacher_net = model.denoiser(&phi);
    let mut teacher_mse = 0.0;
    for (i, ex) in items.iter().take(8).enumerate() {
        let cond = model.cond(&phi, ex)?;
        let shape = [synth.mel_bins, ex.x0.shape()[1]];
        let out = sample_teacher(&teacher_net, cond.as_ref(), shape, &grid, &mut Rng::new(50 + i as u64), Solver::Euler, false)?;
        teacher_mse += mse(&out.x, &ex.x0)? / 8.0;
    }
    let mut st = DistillState::new(phi.clone(), teacher_net, grid.clone(), 1e-4, 4);
    for _ in 0..1600 {
        let b = batch(&mut pick);
        distill_step(&mut st, &model, &b)?;
    }
    let student = model.denoiser(&st.theta_minus);
    let mut per_steps = Vec::new();
    let mut finite = true;
    for steps in [1, 2, 4] {
        let mut total = 0.0;
        for (i, ex) in items.iter().take(8).enumerate() {
            let cond = model.cond(&st.theta_minus, ex)?;
            let shape = [synth.mel_bins, ex.x0.shape()[1]];
            let out = sample_student(&student, cond.as_ref(), shape, steps, &grid, &mut Rng::new(50 + i as u64), false)?;
            finite &= out.x.data().iter().all(|v| v.is_finite());
            total += mse(&out.x, &ex.x0)?;
        }
        per_steps.push(total / 8.0);
    }
    let (lo, hi) = per_steps.iter().fold((Scalar::MAX, 0.0 as Scalar), |(a, b), &v| (a.min(v), b.max(v)));
    let spread = (hi - lo) / lo;
    Ok((
        finite,
        format!(
            "report-only; student mse steps 1/2/4 = {:.4}/{:.4}/{:.4}, spread {:.1}% ({} 25%), trend {}; teacher 50-step mse {teacher_mse:.4}",
            per_steps[0],
            per_steps[1],
            per_steps[2],
            100.0 * spread,
            if spread < 0.25 { "under" } else { "over" },
            if per_steps[2] <= per_steps[0] { "improves with steps" } else { "worsens with steps" }
        ),
    ))
}

fn signal_chain() -> Outcome {
    let cfg = MelConfig::default();
    let sine = |n: usize, hz: Scalar| Wave {
        samples: (0..n).map(|i| 0.5 * (2.0 * std::f64::consts::PI as Scalar * hz * i as Scalar / 24000.0).sin()).collect(),
        sample_rate: 24000,
    };
    let mel = mel_spectrogram(&sine(1280, 440.0), &cfg)?;
    let shape_ok = mel.data.shape() == [11, 80];
    let (f0, vuv) = estimate_f0(&sine(24000, 440.0), &F0Config::default())?;
    let voiced: Vec<Scalar> = f0.iter().zip(&vuv).filter(|(_, v)| **v).map(|(f, _)| *f).collect();
    let worst = voiced.iter().map(|f| (f - 440.0).abs() / 440.0).fold(0.0, Scalar::max);
    let self_fpc = fpc(&voiced, &voiced)?;
    let ok = shape_ok && !voiced.is_empty() && worst <= 0.01 && self_fpc == 1.0;
    Ok((
        ok,
        format!(
            "mel shape {:?}, f0 worst rel err {:.4}% over {} voiced frames, FPC(x,x) = {self_fpc}",
            mel.data.shape(),
            100.0 * worst,
            voiced.len()
        ),
    ))
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| svc_decoder::Error::InvalidArgument(e.to_string()))?;
    let root = dir.path();
    let cfg = Config::parse(
        "mel_bins=6\ncontent_dim=8\nproj_dim=3\nsinger_dim=3\nn_singers=2\nn_items=4\nframes_min=6\nframes_max=8\n\
         batch_size=2\nteacher_iters=100\ncheckpoint_every=0\nlog_every=0\nlr_teacher=1e-3\nseed=5",
    )?;
    let data = root.join("data");
    commands::gen_data(&cfg, &data, &mut Logger::null())?;

    let (a, b) = (root.join("a.comc"), root.join("b.comc"));
    commands::train_teacher(&cfg, &data, &a, None, &mut Logger::null())?;
    commands::train_teacher(&cfg, &data, &b, None, &mut Logger::null())?;
    let bytes_a = std::fs::read(&a).unwrap();
    let identical = bytes_a == std::fs::read(&b).unwrap();

    let round_trip = Checkpoint::decode(&bytes_a)?.encode() == bytes_a;

    let half = root.join("half.comc");
    let mut first = cfg.clone();
    first.teacher_iters = 50;
    commands::train_teacher(&first, &data, &half, None, &mut Logger::null())?;
    let resumed = root.join("resumed.comc");
    commands::train_teacher(&cfg, &data, &resumed, Some(&half), &mut Logger::null())?;
    let resume_equal = std::fs::read(&resumed).unwrap() == bytes_a;

    Ok((
        identical && round_trip && resume_equal,
        format!("same-seed checkpoints identical: {identical}; round trip exact: {round_trip}; resume 50+50 == 100: {resume_equal}"),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("boundary condition", boundary_condition),
        ("gradient correctness", gradient_correctness),
        ("teacher vs analytic denoiser", teacher_vs_analytic),
        ("solver order", solver_order),
        ("distillation end to end", distillation),
        ("speed ratio", speed_ratio),
        ("step-count study", step_count_study),
        ("signal chain", signal_chain),
        ("reproducibility and persistence", reproducibility),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        println!(
            "[{}] criterion {} {name}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
