use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kmeans-sdp"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("spawn binary")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn generate(dir: &Path, delta2: &str, seed: &str) {
    let out = run(
        &["generate", "--n", "100", "--k", "2", "--p", "50", "--sigma2", "1", "--delta2", delta2, "--seed", seed, "--out", "data/"],
        dir,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn generate_solve_certify_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate(dir, "80", "7");
    let data = fs::read_to_string(dir.join("data/data.txt")).unwrap();
    assert!(data.starts_with("100 50 2 "));
    assert_eq!(data.lines().count(), 101);
    assert_eq!(fs::read_to_string(dir.join("data/labels.txt")).unwrap().lines().count(), 100);

    let out = run(&["solve", "--data", "data/", "--k", "2", "--out", "zhat.txt", "--expect-recovery", "--seed", "1"], dir);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("recovered=true"));
    assert_eq!(fs::read_to_string(dir.join("zhat.txt")).unwrap().lines().count(), 100);
    assert!(dir.join("zhat.txt.manifest").exists());

    let out = run(&["certify", "--data", "data/", "--labels", "data/labels.txt", "--beta", "0.5"], dir);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("passed=true") && text.contains("delta2_source=manifest"));
}

#[test]
fn generate_is_reproducible_from_its_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate(dir, "40", "11");
    fs::copy(dir.join("data/manifest.txt"), dir.join("again.cfg")).unwrap();
    let out = run(&["generate", "--config", "again.cfg", "--out", "copy/"], dir);
    assert_eq!(code(&out), 0);
    for f in ["data.txt", "labels.txt", "manifest.txt"] {
        assert_eq!(fs::read(dir.join("data").join(f)).unwrap(), fs::read(dir.join("copy").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn failing_expectations_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate(dir, "4", "3");
    let out = run(&["solve", "--data", "data", "--out", "z.txt", "--expect-recovery", "--seed", "0"], dir);
    assert_eq!(code(&out), 2);
    let out = run(&["certify", "--data", "data", "--labels", "data/labels.txt", "--lambda", "1e6"], dir);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("conclusion=inconclusive"));
}

#[test]
fn degenerate_and_numerical_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("deg.txt"), "6 2 2 0\n0 0\n0 0\n0 0\n2 0\n2 0\n2 0\n").unwrap();
    fs::write(dir.join("deg_labels.txt"), "1\n1\n1\n2\n2\n2\n").unwrap();
    let out = run(&["certify", "--data", "deg.txt", "--labels", "deg_labels.txt", "--lambda", "6"], dir);
    assert_eq!(code(&out), 3);
    let out = run(&["certify", "--data", "deg.txt", "--labels", "deg_labels.txt", "--delta2", "4"], dir);
    assert_eq!(code(&out), 0);

    fs::write(dir.join("nan.txt"), "4 2 2 1\n0 0\nNaN 1\n2 0\n2 1\n").unwrap();
    let out = run(&["solve", "--data", "nan.txt", "--out", "z.txt"], dir);
    assert_eq!(code(&out), 4);
    assert!(!dir.join("z.txt").exists());
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for args in [&["bogus"][..], &["solve", "--nope"], &["generate", "--out", "x"], &[]] {
        let out = run(args, dir);
        assert_eq!(code(&out), 1, "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(code(&run(&["--help"], dir)), 0);
}

#[test]
fn baselines_report_and_write_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate(dir, "80", "5");
    let out = run(&["baseline", "witness", "--data", "data", "--labels", "data/labels.txt"], dir);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("witness="));
    for which in ["spectral", "lloyd"] {
        let out = run(&["baseline", which, "--data", "data", "--seed", "2", "--labels", "data/labels.txt", "--out", "est.txt"], dir);
        assert_eq!(code(&out), 0);
        assert!(stdout(&out).contains("recovered=true"), "{which}");
        assert_eq!(fs::read_to_string(dir.join("est.txt")).unwrap().lines().count(), 100);
    }

    fs::write(dir.join("small.txt"), "4 1 2 1\n0\n0.1\n5\n5.2\n").unwrap();
    let out = run(&["baseline", "brute", "--data", "small.txt", "--out", "brute.txt"], dir);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read_to_string(dir.join("brute.txt")).unwrap(), "1\n1\n2\n2\n");
}

#[test]
fn phase_diagram_requires_seed_and_reproduces_from_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("grid.cfg"), "# tiny grid\nn = 8\nk = 2\np = 3\nsigma2 = 1\nratios = 0.5, 3\ntrials = 2\nmethods = sdp,lloyd_spectral\n").unwrap();
    let out = run(&["phase-diagram", "--config", "grid.cfg", "--out", "phase.csv"], dir);
    assert_eq!(code(&out), 1);

    let out = run(&["phase-diagram", "--config", "grid.cfg", "--out", "phase.csv", "--seed", "9", "--jobs", "1"], dir);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.join("phase.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("ratio,method,recovery_rate,certificate_rate,mean_iters,mean_runtime_s,trials"));
    assert_eq!(lines.count(), 4);
    assert!(dir.join("phase.trials.csv").exists());

    let out = run(&["phase-diagram", "--config", "phase.manifest.txt", "--out", "again.csv", "--jobs", "2"], dir);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read(dir.join("again.csv")).unwrap(), csv.into_bytes());
}
