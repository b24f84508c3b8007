use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sgan_core::image_io::save_image;
use sgan_core::Tensor;

fn sgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgan")).args(args).output().expect("run sgan")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_texture(path: &Path) {
    let img = Tensor::<f32>::from_fn(&[16, 16, 3], |i| ((i * 37 % 255) as f32 / 127.5) - 1.0);
    save_image(&img, path).unwrap();
}

/// Config for a two-layer model on a 16x16 texture.
fn tiny_run(dir: &Path, name: &str) -> PathBuf {
    let tex = dir.join("tex.png");
    if !tex.exists() {
        write_texture(&tex);
    }
    let cfg = dir.join(format!("{name}.cfg"));
    let text = format!(
        "# tiny\ntexture = tex.png\narch = custom\nd = 4\ng_hidden = 8\nbatch_size = 4\nz_l = 2\nz_m = 2\n\
         checkpoint_every = 5\nsteps = 3\nout_dir = {name}\n"
    );
    fs::write(&cfg, text).unwrap();
    cfg
}

fn log_columns(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once('\t').unwrap().0.to_string())
        .collect()
}

#[test]
fn fields_reports() {
    let o = sgan(&["fields", "--depth", "5"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("pf_size 125") && s.contains("ratio 32"), "{s}");
    let s = stdout(&sgan(&["fields", "--depth", "4", "--interval", "0", "1"]));
    assert!(s.contains("pf_interval [-30, 31)"), "{s}");
    let s = stdout(&sgan(&["fields", "--depth", "1"]));
    assert!(s.contains("pf_size 5"), "{s}");
    let s = stdout(&sgan(&["fields", "--depth", "2", "--interval", "-3", "-1"]));
    assert!(s.contains("interval [-3, -1)"), "{s}");
}

#[test]
fn help_and_usage_codes() {
    for sub in [vec!["--help"], vec!["train", "--help"], vec!["generate", "--help"], vec!["fields", "--help"], vec!["autocorr", "--help"]] {
        assert_eq!(sgan(&sub).status.code(), Some(0), "{sub:?}");
    }
    assert_eq!(sgan(&["fields"]).status.code(), Some(1));
    assert_eq!(sgan(&["nonsense"]).status.code(), Some(1));
    assert_eq!(sgan(&["fields", "--depth", "0"]).status.code(), Some(1));
}

#[test]
fn train_smoke_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_run(dir.path(), "a");
    let cfg = cfg.to_str().unwrap();
    let o = sgan(&["train", "-c", cfg, "--steps", "10", "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log_a = dir.path().join("a/loss.log");
    assert_eq!(fs::read_to_string(&log_a).unwrap().lines().count(), 10);
    assert!(dir.path().join("a/step_00000010.sgan").exists());
    assert!(dir.path().join("a/step_00000000.sgan").exists());

    let out_b = dir.path().join("b");
    let o = sgan(&["train", "-c", cfg, "--steps", "10", "--seed", "7", "--out-dir", out_b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(log_columns(&log_a), log_columns(&out_b.join("loss.log")));
}

#[test]
fn resume_matches_uninterrupted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_run(dir.path(), "r");
    let cfg = cfg.to_str().unwrap();
    let full = dir.path().join("full");
    assert!(sgan(&["train", "-c", cfg, "--steps", "6", "--out-dir", full.to_str().unwrap()]).status.success());
    assert!(sgan(&["train", "-c", cfg, "--steps", "3"]).status.success());
    let o = sgan(&["train", "-c", cfg, "--steps", "6", "--resume"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(log_columns(&full.join("loss.log")), log_columns(&dir.path().join("r/loss.log")));
    assert_eq!(
        fs::read(full.join("step_00000006.sgan")).unwrap(),
        fs::read(dir.path().join("r/step_00000006.sgan")).unwrap()
    );
}

#[test]
fn train_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.cfg");
    fs::write(&cfg, "steps = 3\n").unwrap();
    let o = sgan(&["train", "-c", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("texture"), "{}", stderr(&o));

    fs::write(&cfg, "texture = nowhere.png\nsteps = 3\n").unwrap();
    let o = sgan(&["train", "-c", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.png"));

    fs::write(&cfg, "texture = a.png\nstepz = 3\n").unwrap();
    let o = sgan(&["train", "-c", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(":2:"), "{}", stderr(&o));
}

#[test]
fn generate_chunks_and_seamless() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_run(dir.path(), "g");
    assert!(sgan(&["train", "-c", cfg.to_str().unwrap(), "--steps", "2"]).status.success());
    let model = dir.path().join("g/step_00000002.sgan");
    let model = model.to_str().unwrap();
    let run = |extra: &[&str], out: &str| {
        let out = dir.path().join(out);
        let mut args = vec!["generate", model, "--width", "48", "--height", "64", "--seed", "3", "-o", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = sgan(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out).unwrap()
    };
    let one = run(&[], "one.png");
    assert_eq!(run(&["--chunks", "4"], "four.png"), one);
    assert_eq!(run(&["--chunks", "1"], "again.png"), one);
    let s1 = run(&["--seamless"], "s1.ppm");
    assert_eq!(run(&["--seamless", "--chunks", "3"], "s3.ppm"), s1);
    assert!(s1.starts_with(b"P6\n48 64\n255\n"));

    let o = sgan(&["generate", model, "--width", "50", "--height", "64", "-o", "x.png"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("48") && stderr(&o).contains("52"), "{}", stderr(&o));

    let bad = dir.path().join("bad.sgan");
    fs::write(&bad, b"NOPE....").unwrap();
    let o = sgan(&["generate", bad.to_str().unwrap(), "--width", "48", "--height", "64", "-o", "x.png"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("magic"), "{}", stderr(&o));
}

#[test]
fn autocorr_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let stripes = dir.path().join("stripes.png");
    save_image(&Tensor::<f32>::from_fn(&[8, 8, 3], |i| if (i / 3) % 2 == 0 { -1.0 } else { 1.0 }), &stripes).unwrap();
    let out = dir.path().join("ac.png");
    let o = sgan(&["autocorr", stripes.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.exists());
    let dump = fs::read_to_string(dir.path().join("ac.txt")).unwrap();
    let rows: Vec<Vec<f64>> = dump
        .lines()
        .skip(1)
        .map(|l| l.split(' ').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!((rows.len(), rows[0].len()), (15, 15));
    let center = &rows[7];
    assert!((center[7] - 1.0).abs() < 1e-12);
    for dx in 1..7 {
        let expect = if dx % 2 == 0 { 1.0 } else { -1.0 };
        assert!((center[7 + dx] - expect).abs() < 1e-9);
        assert!((center[7 - dx] - expect).abs() < 1e-9);
    }

    let flat = dir.path().join("flat.png");
    save_image(&Tensor::<f32>::full(&[4, 4, 3], 0.2), &flat).unwrap();
    let o = sgan(&["autocorr", flat.to_str().unwrap(), "-o", dir.path().join("f.png").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("variance"));
}
