use std::fs;
use std::process::Command;

fn dmm(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dmm")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for p in [&a, &b] {
        let (code, _) = dmm(&["gen", "--kind", "partition", "--w", "4", "--m", "16", "--seed", "7", "-o", p.to_str().unwrap()]);
        assert_eq!(code, 0);
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("partition 4 16 7\n"));
}

#[test]
fn run_trace_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let (code, _) = dmm(&["gen", "--kind", "partition", "--w", "16", "--m", "16", "--seed", "2", "-o", &p("inst")]);
    assert_eq!(code, 0);
    let (code, stdout) = dmm(&[
        "run", "--alg", "partition_square", "--input", &p("inst"), "--strict",
        "--trace-out", &p("trace"), "--result-out", &p("result"), "--csv", &p("report.csv"),
    ]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("correct=true"));
    assert!(stdout.lines().any(|l| l.starts_with("steps=") && l.ends_with("conflicts=0")));
    let csv = fs::read_to_string(p("report.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("partition_square,16,16,2,"));

    let (code, stdout) = dmm(&["trace-check", &p("trace")]);
    assert_eq!(code, 0);
    assert!(stdout.ends_with("0 violations\n"));
    let (code, _) = dmm(&["verify", "--input", &p("inst"), "--result", &p("result")]);
    assert_eq!(code, 0);

    // rows in the wrong order fail verification
    let mut rows: Vec<String> = fs::read_to_string(p("result")).unwrap().lines().map(String::from).collect();
    rows.reverse();
    fs::write(p("wrong"), rows.join("\n")).unwrap();
    let (code, stdout) = dmm(&["verify", "--input", &p("inst"), "--result", &p("wrong")]);
    assert_ne!(code, 0);
    assert!(stdout.starts_with("mismatch"));
}

#[test]
fn trace_check_reports_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t");
    fs::write(&t, "0 0 3 1 R\n0 1 3 2 W 5\n1 0 3 1 R\n").unwrap();
    let (code, stdout) = dmm(&["trace-check", t.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stdout.starts_with("step 0 bank 3 hits 2\n"));
}

#[test]
fn bad_shape_is_an_error() {
    let (code, _) = dmm(&["run", "--alg", "sort_square", "--w", "8", "--m", "8"]);
    assert_eq!(code, 2);
}

#[test]
fn bench_writes_means() {
    let (code, stdout) = dmm(&["bench", "--alg", "permute", "--shapes", "64x8,16x4", "--seeds", "3"]);
    assert_eq!(code, 0);
    assert_eq!(stdout.lines().count(), 1 + 6 + 2);
    assert!(stdout.lines().any(|l| l.starts_with("permute,16,4,mean,")));
}
