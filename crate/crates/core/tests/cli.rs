use std::path::Path;
use std::process::{Command, Output};

use dsd::dataset::{load_dir, save_dir, synth_blobs};
use dsd::lattice::{load_image, save_image};
use dsd::IntensityGrid;

fn dsd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsd")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = dsd(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(dsd(&["--help"]).status.code(), Some(0));
    for sub in ["kernel", "corrupt", "calibrate", "train", "generate", "inpaint", "metrics"] {
        assert_eq!(dsd(&[sub, "--help"]).status.code(), Some(0), "{sub}");
    }
    let bad = dsd(&["corrupt", "--no-such-flag"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("Usage"));
    let neg = dsd(&["kernel", "--boundary", "periodic", "--width", "4", "--height", "4", "--time", "-1", "--out", "/dev/null"]);
    assert_eq!(neg.status.code(), Some(2));
}

#[test]
fn kernel_dump_reports_row_sums() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k.dsdk");
    let text = ok(&["kernel", "--boundary", "noflux", "--width", "6", "--height", "5", "--rate", "3", "--time", "0.2", "--out", s(&out)]);
    assert!(text.contains("max row-sum deviation"));
    let k = dsd::TransitionKernel::load(&out).unwrap();
    assert_eq!((k.width(), k.height()), (6, 5));
}

#[test]
fn corrupt_conserves_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("in.pgm");
    let grid = synth_blobs(16, 16, 1, 0.25, 1.5, 1).unwrap().remove(0);
    save_image(&grid, &img).unwrap();
    let run = |k: &str, seed: &str, name: &str| {
        let out = dir.path().join(name);
        let ledger = dir.path().join(format!("{name}.csv"));
        let text = ok(&[
            "corrupt", "--in", s(&img), "--k", k, "--T", "50", "--seed", seed, "--out", s(&out), "--ledger-out", s(&ledger),
        ]);
        assert!(text.contains("channel 0: OK, delta 0"), "{text}");
        (load_image(&out).unwrap(), std::fs::read_to_string(&ledger).unwrap())
    };
    assert_eq!(run("0", "1", "zero.pgm").0, grid);
    let a = run("30", "5", "a.pgm");
    let b = run("30", "5", "b.pgm");
    let c = run("30", "6", "c.pgm");
    assert_eq!(a, b);
    assert_ne!(a.1, c.1);
    assert_eq!(a.0.totals(), grid.totals());
}

#[test]
fn calibrate_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    save_dir(dir.path(), "b_", &synth_blobs(16, 16, 6, 0.25, 1.5, 2).unwrap()).unwrap();
    let csv = dir.path().join("cal.csv");
    let text = ok(&["calibrate", "--data", s(dir.path()), "--T", "20", "--out", s(&csv)]);
    assert!(text.contains("unevenness"));
    let body = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[0], "k,t_k,mean_ssim,stderr");
    assert_eq!(lines.len(), 22);
}

#[test]
fn train_generate_and_metrics_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    save_dir(&data, "b_", &synth_blobs(8, 8, 10, 0.25, 1.0, 3).unwrap()).unwrap();
    let ckpt = dir.path().join("m.dsdm");
    let history = dir.path().join("h.csv");
    for loss in ["l1", "likelihood"] {
        ok(&[
            "train", "--data", s(&data), "--loss", loss, "--iters", "20", "--batch", "2", "--T", "20", "--rate", "20",
            "--hidden", "4", "--seed", "3", "--ckpt-out", s(&ckpt), "--history-out", s(&history),
        ]);
    }
    let first = std::fs::read(&ckpt).unwrap();
    ok(&[
        "train", "--data", s(&data), "--loss", "likelihood", "--iters", "20", "--batch", "2", "--T", "20", "--rate", "20",
        "--hidden", "4", "--seed", "3", "--ckpt-out", s(&ckpt),
    ]);
    assert_eq!(std::fs::read(&ckpt).unwrap(), first, "training is deterministic");
    assert!(std::fs::read_to_string(&history).unwrap().starts_with("iter,loss\n"));

    for eps in ["0.01", "0.05", "0.1", "0.15"] {
        let out = dir.path().join(format!("gen_{eps}"));
        let trace = dir.path().join(format!("trace_{eps}.csv"));
        ok(&[
            "generate", "--ckpt", s(&ckpt), "--totals", "16", "--width", "8", "--height", "8", "--rate", "20", "--eps", eps,
            "--n", "3", "--seed", "4", "--out", s(&out), "--trace", s(&trace),
        ]);
        let samples = load_dir(&out, "*.pgm").unwrap();
        assert_eq!(samples.len(), 3);
        assert!(samples.iter().all(|g| g.totals() == vec![16]));
        let t = std::fs::read_to_string(&trace).unwrap();
        assert!(t.starts_with("step,t,tau,max_rate,total_intensity_per_channel\n"));
    }
    let csv = dir.path().join("s2.csv");
    let text = ok(&[
        "metrics", "--generated", s(&dir.path().join("gen_0.05")), "--reference", s(&data), "--max-lag", "4", "--out", s(&csv),
    ]);
    assert!(text.contains("3/3 generated images match"), "{text}");
    let body = std::fs::read_to_string(&csv).unwrap();
    assert!(body.starts_with("lag,S2_generated,S2_reference\n"));
    assert_eq!(body.lines().count(), 6);
}

#[test]
fn oracle_generation_from_a_corrupt_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let mut clean = IntensityGrid::zeros(8, 8, 1);
    clean.set(2, 2, 0, 3);
    clean.set(6, 1, 0, 1);
    let img = dir.path().join("c.pgm");
    save_image(&clean, &img).unwrap();
    let ledger = dir.path().join("l.csv");
    ok(&[
        "corrupt", "--in", s(&img), "--schedule", "poly", "--T", "10", "--k", "10", "--rate", "10", "--out",
        s(&dir.path().join("noisy.pgm")), "--ledger-out", s(&ledger),
    ]);
    let out = dir.path().join("gen");
    ok(&[
        "generate", "--oracle-ledger", s(&ledger), "--width", "8", "--height", "8", "--rate", "10", "--totals", "4",
        "--eps", "0.01", "--out", s(&out),
    ]);
    let got = load_dir(&out, "*.pgm").unwrap();
    assert_eq!(got[0].totals(), vec![4]);
}

#[test]
fn inpaint_keeps_frozen_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    save_dir(&data, "b_", &synth_blobs(8, 8, 4, 0.25, 1.0, 3).unwrap()).unwrap();
    let ckpt = dir.path().join("m.dsdm");
    ok(&["train", "--data", s(&data), "--iters", "2", "--T", "10", "--rate", "20", "--hidden", "4", "--ckpt-out", s(&ckpt)]);
    let partial = synth_blobs(8, 8, 1, 0.25, 1.0, 9).unwrap().remove(0);
    let mut mask = IntensityGrid::zeros(8, 8, 1);
    for y in 0..8 {
        for x in 0..8 {
            if !(2..6).contains(&x) || !(2..6).contains(&y) {
                mask.set(x, y, 0, 1);
            }
        }
    }
    let (pp, mp, out) = (dir.path().join("p.pgm"), dir.path().join("m.pgm"), dir.path().join("o.pgm"));
    save_image(&partial, &pp).unwrap();
    save_image(&mask, &mp).unwrap();
    ok(&[
        "inpaint", "--partial", s(&pp), "--mask", s(&mp), "--region-totals", "5", "--ckpt", s(&ckpt), "--rate", "20",
        "--out", s(&out),
    ]);
    let got = load_image(&out).unwrap();
    let mut free = 0;
    for y in 0..8 {
        for x in 0..8 {
            if mask.get(x, y, 0) == 1 {
                assert_eq!(got.get(x, y, 0), partial.get(x, y, 0));
            } else {
                free += got.get(x, y, 0);
            }
        }
    }
    assert_eq!(free, 5);
}

#[test]
fn missing_data_is_a_data_error() {
    let out = dsd(&["corrupt", "--in", "/nonexistent/x.pgm", "--k", "1", "--out", "/tmp/never.pgm"]);
    assert_eq!(out.status.code(), Some(3));
}
