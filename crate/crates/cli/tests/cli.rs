use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hint(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hint"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run hint")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

#[test]
fn train_infer_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&hint(
            &["synth", "--out", "data", "--count", "2", "--size", "16", "--bucket", "small"],
            d
        )),
        0
    );
    fs::write(
        d.join("cfg.txt"),
        "image_size = 16\ndepths = 1,1,1,1,1,1,1\nheads = 1,1,1,1,1,1,1\nsteps = 4\n",
    )
    .unwrap();
    let o = hint(
        &[
            "train", "--config", "cfg.txt", "--data", "data", "--out", "run", "--seed", "3",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.txt", "train_log.csv", "final.ckpt", "eval.csv"] {
        assert!(d.join("run").join(f).exists(), "{f}");
    }
    assert!(fs::read_to_string(d.join("run/config.txt"))
        .unwrap()
        .contains("seed = 3"));
    assert_eq!(
        fs::read_to_string(d.join("run/train_log.csv"))
            .unwrap()
            .lines()
            .count(),
        5
    );

    let o = hint(
        &[
            "infer",
            "--ckpt",
            "run/final.ckpt",
            "--image",
            "data/images/synth000.ppm",
            "--mask",
            "data/masks/synth000.pgm",
            "--out",
            "out.ppm",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read(d.join("out.ppm")).unwrap().starts_with(b"P6"));

    let o = hint(
        &[
            "eval",
            "--ckpt",
            "run/final.ckpt",
            "--data",
            "data",
            "--buckets",
            "small",
            "--csv",
            "e.csv",
        ],
        d,
    );
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(d.join("e.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("small,2,"), "{csv}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    hint(
        &["synth", "--out", "data", "--count", "1", "--size", "16"],
        d,
    );
    fs::write(d.join("bad.txt"), "stepz = 4\n").unwrap();
    assert_eq!(
        code(&hint(
            &["train", "--config", "bad.txt", "--data", "data", "--out", "r"],
            d
        )),
        2
    );
    fs::write(d.join("cfg.txt"), "steps = 1\n").unwrap();
    assert_eq!(
        code(&hint(
            &[
                "ablate",
                "--variant",
                "nope",
                "--config",
                "cfg.txt",
                "--data",
                "data",
                "--out",
                "a"
            ],
            d
        )),
        2
    );
    assert_eq!(
        code(&hint(
            &[
                "train",
                "--config",
                "missing.txt",
                "--data",
                "data",
                "--out",
                "r"
            ],
            d
        )),
        4
    );
    fs::write(d.join("junk.ckpt"), b"NOPE").unwrap();
    assert_eq!(
        code(&hint(
            &[
                "infer",
                "--ckpt",
                "junk.ckpt",
                "--image",
                "a.ppm",
                "--mask",
                "a.pgm",
                "--out",
                "o.ppm"
            ],
            d
        )),
        4
    );
    assert_eq!(code(&hint(&["frobnicate"], d)), 2);
}

#[test]
fn ablate_appends_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    hint(
        &["synth", "--out", "data", "--count", "1", "--size", "16"],
        d,
    );
    fs::write(
        d.join("cfg.txt"),
        "image_size = 16\ndepths = 1,1,1,1,1,1,1\nheads = 1,1,1,1,1,1,1\nsteps = 2\n",
    )
    .unwrap();
    let o = hint(
        &[
            "ablate",
            "--variant",
            "full,pd",
            "--config",
            "cfg.txt",
            "--data",
            "data",
            "--out",
            "abl",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(d.join("abl/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(d.join("abl/pd/final.ckpt").exists());
}

#[test]
fn selftest_passes() {
    let o = hint(&["selftest"], Path::new("."));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(
        String::from_utf8_lossy(&o.stdout).matches("PASS").count(),
        9
    );
}
