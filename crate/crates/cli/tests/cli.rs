use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pcst::manifest::{parse_manifest, serialize_manifest, PairRecord};
use serde_json::Value;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn json(&self) -> Value {
        let lines: Vec<&str> = self.stdout.lines().collect();
        assert_eq!(
            lines.len(),
            1,
            "expected one summary line, got {:?}",
            self.stdout
        );
        serde_json::from_str(lines[0]).expect("summary is JSON")
    }
}

fn pcst_env(args: &[&str], threads: Option<&str>) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pcst"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("PCST_THREADS", t),
        None => cmd.env_remove("PCST_THREADS"),
    };
    let out = cmd.output().expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn pcst(args: &[&str]) -> Run {
    pcst_env(args, None)
}

fn ok(args: &[&str]) -> Value {
    let r = pcst(args);
    assert_eq!(r.code, 0, "{args:?} failed: {}", r.stderr);
    r.json()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn record(input: &str, s_yr: f64) -> PairRecord {
    PairRecord {
        input: input.into(),
        targets: vec![format!("{input}.t")],
        offset_used: (0, 0),
        s_yr: Some(s_yr),
        retained: None,
        seed_trail: vec![],
    }
}

#[test]
fn lemma11_summary_reports_small_discrepancy() {
    let v = ok(&["verify", "--check", "lemma11", "--n", "8"]);
    assert_eq!(v["passed"], true);
    assert!(v["checks"]["lemma11"]["max_discrepancy"].as_f64().unwrap() < 1e-10);
}

#[test]
fn verify_writes_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rho.csv");
    let v = ok(&["verify", "--check", "rho", "--n", "5", "--csv", s(&csv)]);
    assert_eq!(v["checks"]["rho"]["configs"], 15);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("check,config,metric,value,limit,passed\n"));
    assert_eq!(text.lines().count(), 16);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn usage_errors_exit_two_and_name_the_token() {
    let r = pcst(&["verify", "--check", "rho", "--frobnicate"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("--frobnicate"), "{}", r.stderr);
    assert!(r.stdout.is_empty());

    assert_eq!(pcst(&["teleport"]).code, 2);
    assert_eq!(pcst(&["verify", "--check", "rho", "--n", "0"]).code, 2);
    assert_eq!(
        pcst_env(&["verify", "--check", "rho", "--n", "2"], Some("zero")).code,
        2
    );
    assert_eq!(pcst(&["--help"]).code, 0);
}

#[test]
fn missing_files_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.jsonl");
    let r = pcst(&["cov", "--manifest", s(&m)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("m.jsonl"), "{}", r.stderr);

    fs::write(&m, serialize_manifest(&[record("nowhere.pcrf", -1.0)])).unwrap();
    assert_eq!(pcst(&["cov", "--manifest", s(&m)]).code, 1);
    fs::write(&m, "{not json}\n").unwrap();
    let r = pcst(&["threshold", "--manifest", s(&m)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("line 1"), "{}", r.stderr);
}

#[test]
fn symmetric_sample_needs_no_cut() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.jsonl");
    let hist = dir.path().join("h.csv");
    // mode and mean both at -100
    let values = [
        -103.0, -102.0, -101.0, -101.0, -100.0, -100.0, -100.0, -100.0, -99.0, -99.0, -98.0, -97.0,
    ];
    let records: Vec<_> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| record(&format!("p{i}"), v))
        .collect();
    fs::write(&m, serialize_manifest(&records)).unwrap();
    let v = ok(&["threshold", "--manifest", s(&m), "--histogram", s(&hist)]);
    assert_eq!(v["retained_fraction"], 1.0);
    assert!(v["s_min"].is_null());
    let csv = fs::read_to_string(&hist).unwrap();
    assert!(csv.starts_with("bin_center,count\n"));
    let total: usize = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, values.len());
}

#[test]
fn filter_sets_flags_without_dropping_records() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.jsonl");
    let records: Vec<_> = [-120.0, -101.0, -99.5, -98.0]
        .iter()
        .enumerate()
        .map(|(i, &v)| record(&format!("p{i}"), v))
        .collect();
    for r in &records {
        fs::write(dir.path().join(&r.input), b"").unwrap();
        fs::write(dir.path().join(&r.targets[0]), b"").unwrap();
    }
    fs::write(&m, serialize_manifest(&records)).unwrap();

    let v = ok(&["filter", "--manifest", s(&m), "--s-min", "none"]);
    assert_eq!(
        (v["retained"].as_u64(), v["total"].as_u64()),
        (Some(4), Some(4))
    );

    let out = dir.path().join("sub/f.jsonl");
    let v = ok(&[
        "filter",
        "--manifest",
        s(&m),
        "--s-min",
        "-100",
        "--out",
        s(&out),
    ]);
    assert_eq!(v["retained"], 2);
    let back = parse_manifest(&fs::read_to_string(&out).unwrap()).unwrap();
    let flags: Vec<_> = back.iter().map(|r| r.retained).collect();
    assert_eq!(flags, [Some(false), Some(false), Some(true), Some(true)]);
    // paths were rebased for the new location
    assert_eq!(back[0].input, "../p0");

    let v = ok(&["filter", "--manifest", s(&m), "--s-min", "5"]);
    assert_eq!(v["retained"], 0);
    assert_eq!(
        pcst(&["filter", "--manifest", s(&m), "--s-min", "abc"]).code,
        2
    );
}

#[test]
fn lemma1_control_detects_bias() {
    let v = ok(&["lemma1", "--draws", "3000", "--bias", "3"]);
    assert_eq!(v["consistent"], false);
    assert_eq!(v["passed"], true);
    let v = ok(&["lemma1", "--draws", "3000"]);
    assert_eq!(v["consistent"], true);
    assert!(v["gradient_check"]["max_rel_error"].as_f64().unwrap() < 1e-5);
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

/// Runs every pipeline stage into `root` and returns the summaries.
fn small_pipeline(root: &Path, threads: Option<&str>) -> Vec<Value> {
    let run = |args: Vec<String>| -> Value {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let r = pcst_env(&refs, threads);
        assert_eq!(r.code, 0, "{refs:?}: {}", r.stderr);
        r.json()
    };
    let p = |rel: &str| root.join(rel).to_str().unwrap().to_owned();
    let a = |list: &[&str]| list.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let mut out = Vec::new();
    out.push(run([
        a(&[
            "synth",
            "--scenes",
            "4",
            "--frames",
            "3",
            "--height",
            "32",
            "--width",
            "36",
            "--fast-every",
            "2",
            "--seed",
            "5",
            "--out",
        ]),
        vec![p("bursts")],
    ]
    .concat()));
    out.push(run([
        a(&[
            "synth", "--scenes", "2", "--frames", "1", "--height", "32", "--width", "32", "--seed",
            "6", "--out",
        ]),
        vec![p("held")],
    ]
    .concat()));
    let mut craft = a(&[
        "craft",
        "--patch-size",
        "8",
        "--search-box",
        "9",
        "--seed",
        "7",
        "--out",
    ]);
    craft.push(p("targets"));
    craft.push("--burst-dir".into());
    for b in 0..4 {
        craft.push(p(&format!("bursts/b{b:03}")));
    }
    out.push(run(craft));
    let m = p("targets/manifest.jsonl");
    out.push(run(vec!["cov".into(), "--manifest".into(), m.clone()]));
    out.push(run(vec![
        "threshold".into(),
        "--manifest".into(),
        m.clone(),
        "--histogram".into(),
        p("hist.csv"),
    ]));
    out.push(run(vec!["filter".into(), "--manifest".into(), m.clone()]));
    out.push(run([
        a(&[
            "train",
            "--epochs",
            "2",
            "--crop",
            "16",
            "--batch",
            "4",
            "--filters",
            "3",
            "--manifest",
        ]),
        vec![m.clone(), "--out".into(), p("model")],
    ]
    .concat()));
    out.push(run(vec![
        "eval".into(),
        "--model".into(),
        p("model"),
        "--pairs-dir".into(),
        p("held"),
        "--csv".into(),
        p("eval.csv"),
    ]));
    out
}

#[test]
fn pipeline_runs_and_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    let summaries = small_pipeline(a.path(), None);
    let commands: Vec<_> = summaries
        .iter()
        .map(|v| v["command"].as_str().unwrap().to_owned())
        .collect();
    assert_eq!(
        commands,
        [
            "synth",
            "synth",
            "craft",
            "cov",
            "threshold",
            "filter",
            "train",
            "eval"
        ]
    );
    assert_eq!(summaries[2]["targets"], 12);

    let manifest = fs::read_to_string(a.path().join("targets/manifest.jsonl")).unwrap();
    let records = parse_manifest(&manifest).unwrap();
    assert_eq!(records.len(), 12);
    for r in &records {
        assert!(r.s_yr.is_some() && r.retained.is_some());
        assert!(a.path().join("targets").join(&r.input).exists());
        assert!(a.path().join("targets").join(&r.targets[0]).exists());
        assert_eq!(r.seed_trail[0], 7);
    }
    for i in 0..3 {
        let meta: Value = serde_json::from_str(
            &fs::read_to_string(a.path().join(format!("targets/b000_t{i}.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(meta["patches_per_frame"][i], 0);
        assert_eq!(meta["input_index"], i);
    }
    let eval_csv = fs::read_to_string(a.path().join("eval.csv")).unwrap();
    assert_eq!(eval_csv.lines().count(), 3);

    // rerunning over the same directory rewrites identical bytes
    let before = files_under(a.path());
    small_pipeline(a.path(), None);
    assert_eq!(files_under(a.path()), before);
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let one = tempfile::tempdir().unwrap();
    let three = tempfile::tempdir().unwrap();
    let s1 = small_pipeline(one.path(), Some("1"));
    let s3 = small_pipeline(three.path(), Some("3"));
    let a = files_under(one.path());
    let b = files_under(three.path());
    assert_eq!(a.len(), b.len());
    for ((pa, da), (pb, db)) in a.iter().zip(&b) {
        assert_eq!(pa, pb);
        // summaries and manifests embed the root only through relative entries
        assert!(da == db, "{} differs", pa.display());
    }
    for (x, y) in s1.iter().zip(&s3) {
        for key in [
            "psnr_mean",
            "mean_distance",
            "mean_s_yr",
            "s_min",
            "final_loss",
            "gain",
        ] {
            assert_eq!(x.get(key), y.get(key), "{key}");
        }
    }
}
