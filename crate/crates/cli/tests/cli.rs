use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trajsmooth"))
}

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml")
}

fn run(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn run_csv(dir: &Path, name: &str, threads: Option<&str>) -> String {
    let out = dir.join(name);
    let o = run(&["run", "--config", smoke_config().to_str().unwrap(), "--out", out.to_str().unwrap()], threads);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read_to_string(out).unwrap()
}

#[test]
fn run_is_byte_identical_across_executions_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_csv(dir.path(), "a.csv", None);
    let b = run_csv(dir.path(), "b.csv", None);
    let one = run_csv(dir.path(), "c.csv", Some("1"));
    let four = run_csv(dir.path(), "d.csv", Some("4"));
    assert_eq!(a, b);
    assert_eq!(a, one);
    assert_eq!(a, four);
    let mut lines = a.lines();
    assert_eq!(lines.next(), Some("k,method,gospa_total,gospa_loc,gospa_missed,gospa_false,switches,runs"));
    assert_eq!(lines.count(), 2 * 15);
}

#[test]
fn stages_reproduce_a_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let cfg = smoke_config().to_str().unwrap().to_string();
    let steps: [Vec<String>; 4] = [
        vec!["simulate".into(), "--config".into(), cfg.clone(), "--out".into(), p("sim.json")],
        vec!["filter".into(), "--config".into(), cfg.clone(), "--input".into(), p("sim.json"), "--out".into(), p("filt.json")],
        vec!["smooth".into(), "--config".into(), cfg.clone(), "--input".into(), p("filt.json"), "--out".into(), p("smooth.json")],
        vec![
            "evaluate".into(),
            "--config".into(),
            cfg.clone(),
            "--simulation".into(),
            p("sim.json"),
            "--filtered".into(),
            p("filt.json"),
            "--smoothed".into(),
            p("smooth.json"),
            "--out".into(),
            p("staged.csv"),
        ],
    ];
    for s in &steps {
        let args: Vec<&str> = s.iter().map(String::as_str).collect();
        let o = run(&args, None);
        assert!(o.status.success(), "{:?}: {}", s[0], String::from_utf8_lossy(&o.stderr));
    }
    let o = run(&["run", "--config", &cfg, "--runs", "1", "--out", &p("whole.csv")], None);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(p("staged.csv")).unwrap(), std::fs::read_to_string(p("whole.csv")).unwrap());
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config().to_str().unwrap().to_string();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let args = ["run", "--config", &cfg, "--runs", "1", "--seed", "99", "--particles", "5", "--hypotheses", "2"];
    let o = run(&[&args[..], &["--out", &p("a.csv")]].concat(), None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(p("a.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",1")));
    let o = run(&["run", "--config", &cfg, "--runs", "1", "--out", &p("b.csv")], None);
    assert!(o.status.success());
    assert_ne!(csv, std::fs::read_to_string(p("b.csv")).unwrap());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let out = out.to_str().unwrap();
    let cases = [
        ("typo.toml", "seed = 1\n[smoother]\nparticle = 3\n", "particle"),
        ("zero.toml", "[smoother]\nparticles = 0\n", "smoother.particles"),
        ("gate.toml", "[smoother]\ngate_probability = 1.5\n", "gate_probability"),
        ("schedule.toml", "[scenario]\nhorizon = 10\n", "death"),
    ];
    for (name, text, needle) in cases {
        let path = dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        let o = run(&["run", "--config", path.to_str().unwrap(), "--out", out], None);
        assert_eq!(o.status.code(), Some(1), "{name}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{name}: {err}");
    }
    let o = run(&["run", "--config", "/nonexistent/cfg.toml", "--out", out], None);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["run", "--particles", "0", "--out", out], None);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["run", "--no-such-flag"], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.json");
    let o = run(&["filter", "--input", "/nonexistent/sim.json", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    let garbage = dir.path().join("g.json");
    std::fs::write(&garbage, "{not json").unwrap();
    let o = run(&["smooth", "--input", garbage.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_check_passes() {
    let o = run(&["oracle-check"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 5);
    assert!(!text.contains("FAIL"));
}
