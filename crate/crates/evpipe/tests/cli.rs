use std::path::Path;
use std::process::{Command, Output};

use clap::CommandFactory;
use evpipe::cli::Cli;

fn evpipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evpipe"))
        .args(args)
        .env_remove("EVPIPE_THREADS")
        .output()
        .expect("spawn evpipe")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_dataset(dir: &Path, seqs: &str, seed: &str) {
    let o = evpipe(&[
        "simulate", "--out", s(dir), "--sequences", seqs, "--duration", "1", "--size", "32x32", "--seed", seed,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

const TINY_TRAIN: [&str; 14] = [
    "--net", "tiny", "--window", "300", "--bins", "3", "--k", "2", "--seq-len", "2", "--batch-size", "2", "--checkpoint-every", "1",
];

#[test]
fn every_subcommand_documents_every_flag() {
    let cmd = Cli::command();
    for sub in cmd.get_subcommands() {
        let name = sub.get_name();
        let o = evpipe(&[name, "--help"]);
        assert_eq!(code(&o), 0, "{name} --help");
        let text = String::from_utf8(o.stdout).unwrap();
        for arg in sub.get_arguments() {
            let Some(long) = arg.get_long() else { continue };
            assert!(text.contains(&format!("--{long}")), "{name}: --{long} missing from help");
            if long != "help" && long != "version" {
                assert!(arg.get_help().is_some(), "{name}: --{long} has no help text");
            }
        }
    }
    assert_eq!(code(&evpipe(&["--help"])), 0);
}

#[test]
fn usage_errors_exit_1() {
    let o = evpipe(&["frobnicate"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = evpipe(&["latency", "--events", "x", "--no-such-flag"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&evpipe(&[])), 1);
}

#[test]
fn missing_input_is_a_data_error() {
    let o = evpipe(&["latency", "--events", "/nonexistent/events.bin"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_reconstruct_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = evpipe(&["simulate", "--out", s(&data), "--sequences", "40", "--duration", "2", "--size", "64x64", "--seed", "7"]);
    assert_eq!(code(&o), 0);
    let names = evpipe::dataset::read_manifest(&data).unwrap();
    assert_eq!(names.len(), 40);
    assert!(names.iter().all(|n| data.join(n).join("events.bin").is_file()));

    let recon = dir.path().join("recon");
    let o = evpipe(&["reconstruct", "--method", "integrate", "--events", s(&data), "--out", s(&recon), "--window", "2000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = dir.path().join("out.csv");
    let o = evpipe(&["eval", "--recon", s(&recon), "--gt", s(&data), "--warmup", "0.5", "--csv", s(&csv)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sequence,method,mse,ssim,frames");
    assert_eq!(lines.len(), 1 + 40 + 1);
    assert!(lines[41].starts_with("Mean,recon,"));
}

#[test]
fn e2v_with_mismatched_k_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    small_dataset(&data, "2", "1");
    let out = dir.path().join("train");
    let mut args = vec!["train", "--data", s(&data), "--out", s(&out), "--epochs", "1"];
    args.extend(TINY_TRAIN);
    let o = evpipe(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let w = out.join("weights.e2vw");
    let seq = data.join("seq_00000");
    let ev = seq.join("events.bin");
    let o = evpipe(&[
        "reconstruct", "--method", "e2v", "--weights", s(&w), "--events", s(&ev), "--out", s(&dir.path().join("r")), "--k", "3",
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("K"));
    let o = evpipe(&[
        "reconstruct", "--method", "e2v", "--weights", s(&w), "--events", s(&seq), "--out", s(&dir.path().join("r")), "--k", "2",
        "--bins", "3", "--window", "300",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("r").join("timestamps.txt").is_file());
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    small_dataset(&data, "2", "3");
    let run = |out: &Path, epochs: &str, resume: bool| {
        let mut args = vec!["train", "--data", s(&data), "--out", s(out), "--epochs", epochs, "--lr", "1e-3"];
        args.extend(TINY_TRAIN);
        if resume {
            args.push("--resume");
        }
        let o = evpipe(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    let full = dir.path().join("full");
    run(&full, "3", false);
    let split = dir.path().join("split");
    run(&split, "1", false);
    run(&split, "3", true);
    let a = std::fs::read(full.join("weights.e2vw")).unwrap();
    let b = std::fs::read(split.join("weights.e2vw")).unwrap();
    assert_eq!(a, b);
    let log = std::fs::read_to_string(split.join("loss.csv")).unwrap();
    assert_eq!(log, std::fs::read_to_string(full.join("loss.csv")).unwrap());
    assert_eq!(log.lines().count(), 4);
}

#[test]
fn divergence_exits_3_with_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    small_dataset(&data, "2", "4");
    let out = dir.path().join("t");
    let mut args = vec!["train", "--data", s(&data), "--out", s(&out), "--epochs", "3", "--lr", "1e38"];
    args.extend(TINY_TRAIN);
    let o = evpipe(&args);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let w = evpipe::weights_file::load_weights(&out.join("checkpoint.e2vw")).unwrap();
    assert!(w.is_finite());
}

#[test]
fn short_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    small_dataset(&data, "1", "5");
    let out = dir.path().join("t");
    let o = evpipe(&[
        "train", "--data", s(&data), "--out", s(&out), "--net", "tiny", "--window", "25000", "--bins", "3", "--k", "2", "--epochs", "1",
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seq_00000"));
}

#[test]
fn config_file_supplies_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# latency settings\nwindow = 3000\nsize=10x8\n").unwrap();
    let o = evpipe(&["latency", "--config", s(&cfg), "--events", "e.txt", "--dump-config"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("window=3000"), "{text}");
    assert!(text.contains("size=10x8"));
    let o = evpipe(&["latency", "--config", s(&cfg), "--events", "e.txt", "--window", "40", "--dump-config"]);
    let dumped = String::from_utf8(o.stdout).unwrap();
    assert!(dumped.contains("window=40"));

    // The dump is itself a valid config file.
    let again = dir.path().join("again.cfg");
    std::fs::write(&again, &dumped).unwrap();
    let o = evpipe(&["latency", "--config", s(&again), "--dump-config"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), dumped);

    std::fs::write(&cfg, "window\n").unwrap();
    assert_eq!(code(&evpipe(&["latency", "--config", s(&cfg), "--events", "e"])), 2);
}

#[test]
fn latency_and_bench_report() {
    let dir = tempfile::tempdir().unwrap();
    let ev = dir.path().join("ev.txt");
    let text: String = (0..100).map(|i| format!("{:.6} {} 0 1\n", i as f64 * 1e-6, i % 4)).collect();
    std::fs::write(&ev, text).unwrap();
    let o = evpipe(&["latency", "--events", s(&ev), "--size", "4x1", "--window", "25"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("windows 4"));
    assert!(out.contains("median 0.024"), "{out}");

    let csv = dir.path().join("b.csv");
    let o = evpipe(&[
        "bench", "--synthetic-events", "20000", "--window", "1000", "--repetitions", "1", "--method", "voxelize", "--method", "highpass",
        "--csv", s(&csv),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<String> = std::fs::read_to_string(&csv).unwrap().lines().map(String::from).collect();
    assert_eq!(rows[0], "method,mev_per_s,frame_ms");
    assert!(rows[1].starts_with("voxelize,") && rows[2].starts_with("highpass,"));
    let o = evpipe(&["bench", "--method", "e2v", "--synthetic-events", "5000", "--window", "100"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--weights"));
}

#[test]
fn threads_flag_and_env_agree_on_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    small_dataset(&a, "3", "9");
    let o = Command::new(env!("CARGO_BIN_EXE_evpipe"))
        .args(["simulate", "--out", s(&b), "--sequences", "3", "--duration", "1", "--size", "32x32", "--seed", "9"])
        .env("EVPIPE_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    for n in ["seq_00000", "seq_00001", "seq_00002"] {
        assert_eq!(std::fs::read(a.join(n).join("events.bin")).unwrap(), std::fs::read(b.join(n).join("events.bin")).unwrap());
    }
}
