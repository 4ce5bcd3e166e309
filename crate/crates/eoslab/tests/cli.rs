//! End-to-end CLI pipeline on a temporary directory: generate, train,
//! decode, sweep, patch, report, verify — checking files and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn eoslab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eoslab"))
        .current_dir(dir)
        .env("EOSLAB_THREADS", "2")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = eoslab(dir, args);
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn full_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    // gen-data
    let out = ok(d, &["gen-data", "--task", "addition", "--seed", "1", "--out", "data.jsonl"]);
    assert!(out.contains("1000 instances"), "{out}");
    assert!(d.join("data.jsonl").exists());

    // train (tiny slice, tiny model)
    ok(
        d,
        &[
            "train", "--data", "data.jsonl", "--out", "model.ckpt", "--vocab-out", "vocab.json",
            "--train-csv", "train.csv", "--limit", "8", "--steps", "30", "--batch-size", "4",
            "--pad-max", "8", "--layers", "2", "--d-model", "16", "--n-heads", "4",
            "--d-ff", "32", "--log-every", "10", "--seed", "3",
        ],
    );
    assert!(d.join("model.ckpt").exists());
    let train_csv = std::fs::read_to_string(d.join("train.csv")).unwrap();
    assert!(train_csv.starts_with("step,loss,masked_acc,ms\n"));

    // decode
    let out = ok(
        d,
        &[
            "decode", "--model", "model.ckpt", "--vocab", "vocab.json", "--data", "data.jsonl",
            "--out", "eval.csv", "--limit", "6", "--steps", "6",
        ],
    );
    assert!(out.contains("decoded 6 instances"), "{out}");
    let eval = std::fs::read_to_string(d.join("eval.csv")).unwrap();
    assert!(eval.starts_with("id,kind,score,semantic,eos,"), "{eval}");

    // eos sweep with a short ladder
    ok(
        d,
        &[
            "sweep-eos", "--model", "model.ckpt", "--vocab", "vocab.json", "--data",
            "data.jsonl", "--out", "eos.csv", "--manifest", "eos.json", "--limit", "3",
            "--steps", "6", "--pads", "1,2,4",
        ],
    );

    // length sweep with small even lengths
    ok(
        d,
        &[
            "sweep-length", "--model", "model.ckpt", "--vocab", "vocab.json", "--data",
            "data.jsonl", "--out", "len.csv", "--manifest", "len.json", "--limit", "3",
            "--lengths", "8,12",
        ],
    );

    // patch
    ok(
        d,
        &[
            "patch", "--model", "model.ckpt", "--vocab", "vocab.json", "--data", "data.jsonl",
            "--out", "patch.jsonl", "--summary", "patch.csv", "--manifest", "patch.json",
            "--limit", "2", "--eos-pad", "16", "--steps", "4",
        ],
    );
    let patch_csv = std::fs::read_to_string(d.join("patch.csv")).unwrap();
    assert!(
        patch_csv.starts_with("layer,n_eos,control,frac_clean,frac_cf,frac_neither,count\n"),
        "{patch_csv}"
    );
    // self-control must be a perfect identity on an untrained deterministic model
    for line in patch_csv.lines().filter(|l| l.contains(",self,")) {
        assert!(line.contains(",1.000000,0.000000,0.000000,"), "self control broken: {line}");
    }
    // full-replacement control transfers exactly at every layer
    for line in patch_csv.lines().filter(|l| l.contains(",full,")) {
        assert!(line.contains(",1.000000,0.000000,0.000000,"), "full control broken: {line}");
    }

    // report over a difficulty axis
    ok(d, &["report", "--in", "eval.csv", "--axis", "operand_count", "--out", "axis.csv"]);
    let axis = std::fs::read_to_string(d.join("axis.csv")).unwrap();
    assert!(axis.starts_with("axis_value,mean,count\n"));

    // verify everything that was produced
    let out = ok(
        d,
        &[
            "verify", "--data", "data.jsonl", "--manifest", "eos.json", "--manifest",
            "len.json", "--manifest", "patch.json", "--checkpoint", "model.ckpt",
        ],
    );
    assert!(out.contains("ok"), "{out}");
}

#[test]
fn verify_fails_on_corrupt_dataset_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data", "--task", "sudoku", "--seed", "2", "--out", "data.jsonl"]);
    let text = std::fs::read_to_string(d.join("data.jsonl")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // break one target
    lines[0] = lines[0].replace("\"target\":\"", "\"target\":\"4");
    std::fs::write(d.join("data.jsonl"), lines.join("\n")).unwrap();
    let out = eoslab(d, &["verify", "--data", "data.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("violation"));
}

#[test]
fn usage_errors_exit_2_and_io_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = eoslab(d, &["gen-data", "--task", "nonsense", "--out", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let out = eoslab(d, &["decode", "--model", "missing.ckpt", "--vocab", "v.json", "--data",
        "d.jsonl", "--out", "e.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn training_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data", "--task", "addition", "--seed", "5", "--out", "data.jsonl"]);
    for run in ["a", "b"] {
        ok(
            d,
            &[
                "train", "--data", "data.jsonl", "--out", &format!("{run}.ckpt"),
                "--vocab-out", &format!("{run}.vocab.json"), "--limit", "6", "--steps", "20",
                "--batch-size", "4", "--pad-max", "6", "--layers", "1", "--d-model", "16",
                "--n-heads", "2", "--d-ff", "32", "--seed", "9",
            ],
        );
    }
    assert_eq!(
        std::fs::read(d.join("a.ckpt")).unwrap(),
        std::fs::read(d.join("b.ckpt")).unwrap()
    );
    assert_eq!(
        std::fs::read(d.join("a.vocab.json")).unwrap(),
        std::fs::read(d.join("b.vocab.json")).unwrap()
    );
}
