//! The `svc-decoder` executable: verbs, flags, exit codes and error lines.

use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svc-decoder"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CONFIG: &str = "# small run\nmel_bins=6\ncontent_dim=8\nproj_dim=3\nsinger_dim=3\nn_singers=3\nn_items=4\n\
frames_min=6\nframes_max=8\nbatch_size=2\nteacher_iters=6\ndistill_iters=4\ncheckpoint_every=3\nlog_every=2\nn_steps=6\n";

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.cfg"), CONFIG).unwrap();
    let ok = |args: &[&str]| {
        let o = run(d, args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        stderr(&o)
    };
    let log = ok(&["--config", "run.cfg", "--out", "data", "gen-data"]);
    assert!(log.contains("event=gen_data items=4"));
    ok(&["--config", "run.cfg", "--out", "t.comc", "train-teacher", "--data", "data"]);
    let log = ok(&["--config", "run.cfg", "--out", "s.comc", "distill", "--teacher", "t.comc", "--data", "data"]);
    assert!(log.contains("mu=0.95"));
    let log = ok(&["--seed", "4", "--out", "a.comm", "sample", "--ckpt", "s.comc", "--features", "data/item_00001", "--singer", "2"]);
    assert!(log.contains("nfe=1 "));
    ok(&["--seed", "4", "--out", "b.comm", "sample", "--ckpt", "s.comc", "--features", "data/item_00001", "--singer", "2"]);
    assert_eq!(std::fs::read(d.join("a.comm")).unwrap(), std::fs::read(d.join("b.comm")).unwrap());
    assert_eq!(&std::fs::read(d.join("a.comm")).unwrap()[..4], b"COMM");
    let log = ok(&["--out", "t.comm", "sample", "--ckpt", "t.comc", "--features", "data/item_00001"]);
    assert!(log.contains("nfe=6 "));
    let log = ok(&["eval", "--ref", "data/item_00001.comm", "--gen", "a.comm", "--f0-ref", "data/item_00001.pitch.comf", "--f0-gen", "data/item_00001.pitch.comf"]);
    assert!(log.contains("fpc=1.000000e0"));
    let log = ok(&["bench", "--teacher", "t.comc", "--student", "s.comc", "--frames", "8", "--repeats", "1"]);
    assert!(log.contains("nfe=6") && log.contains("speedup="));
}

#[test]
fn errors_are_one_machine_readable_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.cfg"), "seed=1\nunknown_key=3\n").unwrap();
    let cases: [(&[&str], &str); 3] = [
        (&["--config", "bad.cfg", "gen-data"], "config"),
        (&["sample", "--ckpt", "missing.comc"], "io"),
        (
            &["--precision", if cfg!(feature = "f32") { "f64" } else { "f32" }, "gen-data"],
            "config",
        ),
    ];
    for (args, kind) in cases {
        let o = run(d, args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = stderr(&o);
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with(&format!("event=error kind={kind} ")), "{err}");
    }
}

#[test]
fn wrong_file_kind_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("x.comc"), b"COMM\x01\x00\x00\x00").unwrap();
    let o = run(d, &["sample", "--ckpt", "x.comc"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("kind=format"));
}
