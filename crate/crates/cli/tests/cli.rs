use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn case(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loadshed")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Every file of a directory, by name.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// Outputs of `args` written to two fresh directories are identical.
fn reproducible(tmp: &Path, tag: &str, args: &[&str]) -> PathBuf {
    let a = tmp.join(format!("{tag}_a"));
    let b = tmp.join(format!("{tag}_b"));
    for d in [&a, &b] {
        let mut v: Vec<&str> = args.to_vec();
        v.extend(["--out", p(d)]);
        ok(&v);
    }
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert_eq!(sa.len(), sb.len());
    for ((na, ca), (nb, cb)) in sa.iter().zip(&sb) {
        assert_eq!(na, nb);
        if na == "manifest.json" {
            let strip = |c: &[u8]| String::from_utf8_lossy(c).replace(p(&a), "").replace(p(&b), "");
            assert_eq!(strip(ca), strip(cb), "{tag}/{na}");
        } else {
            assert!(ca == cb, "{tag}/{na} differs");
        }
    }
    a
}

#[test]
fn pipeline_commands_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let c2 = case("case2.json");
    let data = reproducible(t, "data", &["gen-data", "--case", p(&c2), "--n", "4", "--seed", "3"]);
    assert_eq!(fs::read_to_string(data.join("data.jsonl")).unwrap().lines().count(), 4);
    let model = reproducible(
        t,
        "model",
        &["train", "--case", p(&c2), "--data", p(&data), "--width", "4", "--epochs", "100", "--seed", "2"],
    );
    let ver = reproducible(
        t,
        "verify",
        &["verify", "--case", p(&c2), "--nn", p(&model), "--restarts", "1", "--max-iter", "20"],
    );
    for f in ["verification.json", "summary.txt", "fig4_pd.csv", "fig5_qd.csv", "manifest.json"] {
        assert!(ver.join(f).exists(), "{f}");
    }
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(ver.join("verification.json")).unwrap()).unwrap();
    let (ii, iii) = (v["shed"]["II"].as_f64().unwrap(), v["shed"]["III"].as_f64().unwrap());
    assert!(ii <= iii + 1e-6);
    assert_eq!(fs::read_to_string(ver.join("fig4_pd.csv")).unwrap().lines().count(), 2);
    let bench = reproducible(
        t,
        "bench",
        &["bench", "--case", p(&c2), "--nn", p(&model), "--samples", "5", "--restarts", "1", "--max-iter", "20"],
    );
    let samples = fs::read_to_string(bench.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().next().unwrap(), "sample,rejected,shed_I,shed_II,shed_III");
    assert_eq!(samples.lines().count(), 1 + 5);
    let report = reproducible(t, "report", &["report", "--runs", p(&bench)]);
    let fig3 = fs::read_to_string(report.join("fig3_points.csv")).unwrap();
    let kinds: Vec<&str> = fig3.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(kinds.iter().filter(|k| **k == "sample").count(), 5);
    assert_eq!(kinds.iter().filter(|k| **k == "bound").count(), 1);
    for f in ["table_modelI.csv", "table_modelII.csv", "table_modelIII.csv", "timing.csv"] {
        assert_eq!(fs::read_to_string(report.join(f)).unwrap().lines().count(), 2, "{f}");
    }
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(report.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "report");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn report_merges_runs_by_case_and_width() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let c2 = case("case2.json");
    let data = t.join("data");
    ok(&["gen-data", "--case", p(&c2), "--n", "3", "--out", p(&data)]);
    let mut runs = Vec::new();
    for w in ["2", "3"] {
        let m = t.join(format!("m{w}"));
        let b = t.join(format!("b{w}"));
        ok(&["train", "--case", p(&c2), "--data", p(&data), "--width", w, "--epochs", "20", "--out", p(&m)]);
        ok(&["bench", "--case", p(&c2), "--nn", p(&m), "--samples", "3", "--restarts", "1", "--max-iter", "10", "--out", p(&b)]);
        runs.push(b);
    }
    let out = t.join("report");
    ok(&["report", "--runs", p(&runs[1]), p(&runs[0]), "--out", p(&out)]);
    let table = fs::read_to_string(out.join("table_modelII.csv")).unwrap();
    let keys: Vec<&str> = table.lines().skip(1).map(|l| l.splitn(3, ',').take(2).last().unwrap()).collect();
    assert_eq!(keys, ["2", "3"]);
}

#[test]
fn constant_labels_train_to_low_loss() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let c3 = case("case3.json");
    let data = t.join("const.jsonl");
    let mut text = String::new();
    for k in 0..6 {
        let x = 0.8 + 0.05 * k as f64;
        text.push_str(&format!(
            "{{\"gamma\":{{\"p_d\":[{x},{x}],\"q_d\":[0.1,0.1],\"r\":[0.5,0.5],\"alpha\":0.5}},\"z\":[1,1],\"objective\":0.0,\"alpha\":0.5}}\n"
        ));
    }
    fs::write(&data, text).unwrap();
    let a = ok(&["train", "--case", p(&c3), "--data", p(&data), "--epochs", "300", "--out", p(&t.join("a"))]);
    let loss: f64 = a.split_whitespace().nth(2).unwrap().trim_end_matches(',').parse().unwrap();
    assert!(loss < 0.1, "{a}");
    ok(&["train", "--case", p(&c3), "--data", p(&data), "--epochs", "300", "--out", p(&t.join("b"))]);
    assert_eq!(fs::read(t.join("a/model.json")).unwrap(), fs::read(t.join("b/model.json")).unwrap());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let c2 = case("case2.json");
    let code = |args: &[&str]| run(args).status.code().unwrap();
    assert_eq!(code(&["gen-data", "--case", "no/such/case.m", "--n", "2", "--out", p(&t.join("x"))]), 1);
    assert_eq!(code(&["verify", "--case", p(&c2), "--nn", p(&t.join("missing.json")), "--out", p(&t.join("y"))]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["--help"]), 0);
    let data = t.join("d");
    ok(&["gen-data", "--case", p(&c2), "--n", "2", "--out", p(&data)]);
    assert_eq!(code(&["train", "--case", p(&c2), "--data", p(&data), "--width", "0", "--out", p(&t.join("m"))]), 1);
    // Budget exhaustion is a runtime failure: with no B&B nodes allowed the
    // weak 14-bus root relaxation is never certified.
    assert_eq!(
        code(&["gen-data", "--case", p(&case("case14.m")), "--n", "1", "--max-nodes", "0", "--out", p(&t.join("z"))]),
        2
    );
    // A model for another case is rejected before running.
    let m = t.join("m2");
    ok(&["train", "--case", p(&c2), "--data", p(&data), "--epochs", "5", "--width", "2", "--out", p(&m)]);
    assert_eq!(code(&["verify", "--case", p(&case("case3.json")), "--nn", p(&m), "--out", p(&t.join("w"))]), 1);
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let cfg = t.join("run.toml");
    fs::write(
        &cfg,
        format!("[gen-data]\ncase = {:?}\nn = 5\nseed = 9\n", case("case2.json").to_str().unwrap()),
    )
    .unwrap();
    let out = t.join("d");
    ok(&["--config", p(&cfg), "gen-data", "--n", "2", "--out", p(&out)]);
    assert_eq!(fs::read_to_string(out.join("data.jsonl")).unwrap().lines().count(), 2);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["seed"], 9);
    assert_eq!(m["config"]["n"], 2);
    fs::write(&cfg, "[gen-data]\nbogus = 1\n").unwrap();
    assert_eq!(run(&["--config", p(&cfg), "gen-data", "--out", p(&out)]).status.code(), Some(1));
}
