use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fairgt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairgt")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// 40 labeled nodes, one unlabeled, a self-loop, and config keys in the
/// manifest.
fn write_dataset(dir: &Path) -> String {
    let mut nodes = String::from("id,gender,age,score,label\n");
    for i in 0..40 {
        let y = i % 2;
        let _ = std::fmt::Write::write_fmt(
            &mut nodes,
            format_args!("n{i},{},{},{:.2},{y}\n", (i / 2) % 2, 20 + i % 7, y as f64 * 2.0 - 1.0 + 0.1 * (i % 3) as f64),
        );
    }
    nodes.push_str("n40,1,30,0.0,-1\n");
    let mut edges = String::new();
    for i in 1..41 {
        edges.push_str(&format!("n{},n{i}\n", (i * 7) % i));
    }
    edges.push_str("n3,n3\n");
    fs::write(dir.join("nodes.csv"), nodes).unwrap();
    fs::write(dir.join("edges.csv"), edges).unwrap();
    let manifest = dir.join("data.manifest");
    fs::write(&manifest, "nodes=nodes.csv\nedges=edges.csv\nsensitive=gender, label=label\nepochs=7\nk=2\n").unwrap();
    manifest.to_str().unwrap().to_owned()
}

#[test]
fn help_matches_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let cases: [(&[&str], &str); 7] = [
        (&["--help"], "help.txt"),
        (&["train", "--help"], "help_train.txt"),
        (&["ablate", "--help"], "help_ablate.txt"),
        (&["sweep", "--help"], "help_sweep.txt"),
        (&["verify-lemmas", "--help"], "help_verify-lemmas.txt"),
        (&["bench", "--help"], "help_bench.txt"),
        (&["inspect", "--help"], "help_inspect.txt"),
    ];
    for (args, file) in cases {
        let out = fairgt(args);
        assert_eq!(out.status.code(), Some(0));
        let want = fs::read_to_string(golden.join(file)).unwrap();
        assert_eq!(stdout(&out), want, "{file}");
    }
}

#[test]
fn missing_manifest_is_a_data_error() {
    let out = fairgt(&["train", "--manifest", "missing.txt"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: class=data message="), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(fairgt(&["train", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(fairgt(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn bad_config_value_exits_2() {
    let out = fairgt(&["train", "--synthetic", "100", "--set", "dropout=1.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_lemmas_reports_both_lemmas() {
    let out = fairgt(&["verify-lemmas", "--n", "30", "--kmax", "6", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let s = stdout(&out);
    assert!(s.contains("lemma1.identity_pass=true"));
    assert!(s.contains("lemma2.pass=true"));
    let dev: f64 = s
        .lines()
        .find_map(|l| l.strip_prefix("lemma1.identity_deviation="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(dev <= 1e-8);
}

#[test]
fn sweep_over_t_writes_twenty_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    let out = fairgt(&[
        "sweep", "--synthetic", "120", "--param", "t", "--min", "1", "--max", "20", "--epochs", "3", "--folds", "1",
        "--hidden", "8", "--serial", "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(out_dir.join("sweep_t.tsv")).unwrap();
    assert_eq!(table.lines().count(), 21);
    assert!(table.starts_with("t\t"));
}

#[test]
fn layer_sweep_writes_five_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    let out = fairgt(&[
        "sweep", "--synthetic", "120", "--param", "L", "--min", "1", "--max", "5", "--epochs", "2", "--folds", "1",
        "--hidden", "8", "--serial", "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out_dir.join("sweep_L.tsv")).unwrap().lines().count(), 6);
}

#[test]
fn config_precedence_defaults_manifest_set_flags() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path());
    let out_dir = dir.path().join("run");
    let out = fairgt(&[
        "train", "--manifest", &manifest, "--set", "k=1", "--set", "epochs=4", "--epochs", "5", "--folds", "1",
        "--hidden", "8", "--serial", "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = fs::read_to_string(out_dir.join("config.txt")).unwrap();
    assert!(cfg.lines().any(|l| l == "epochs=5"), "{cfg}");
    assert!(cfg.lines().any(|l| l == "k=1"));
    assert!(cfg.lines().any(|l| l == "t=5"));
    assert!(cfg.lines().any(|l| l == "d_hidden=8"));
    let log = fs::read_to_string(out_dir.join("metrics.log")).unwrap();
    assert_eq!(log.lines().count(), 5);
}

#[test]
fn inspect_reports_self_loops_and_unlabeled_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path());
    let out = fairgt(&["inspect", "--manifest", &manifest]);
    assert_eq!(out.status.code(), Some(0));
    let s = stdout(&out);
    assert!(s.contains("nodes=41\n"));
    assert!(s.contains("self_loops=1\n"));
    assert!(s.contains("labeled=40 "));
    assert!(s.contains("override.epochs=7\n"));
}

fn assert_same_files(a: &Path, b: &Path, files: &[&str]) {
    for f in files {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn serial_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let files = ["config.txt", "metrics.log", "report.txt", "report.json", "checkpoint.bin"];
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = fairgt(&[
            "train", "--synthetic", "150", "--epochs", "15", "--folds", "2", "--hidden", "16", "--seed", "3",
            "--serial", "--out", out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        out_dir
    };
    let (a, b) = (run("a"), run("b"));
    // the output directory is not part of any report
    assert_same_files(&a, &b, &files);
}
