use std::path::Path;
use std::process::{Command, Output};

const MOONS_200_SEED_7: &str = "be508d5cca83af97c52b7eb3f14fd46b8f825497c5ef36d25f0e25f5eca04b42";

fn vsam(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vsam"))
        .args(args)
        .current_dir(dir)
        .env_remove("VSAM_OUTPUT_ROOT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn quad_config(method: &str, out: &str) -> String {
    format!(
        r#"output_dir = "{out}"
iterations = 120
seeds = [0, 1]

[objective]
kind = "quadratic"
a = [[2.0, 0.0], [0.0, 0.5]]
b = [1.0, 1.0]

[optimizer]
method = "{method}"
eta0 = 0.2
{}"#,
        if method == "vsam" {
            "\n[sampler]\ni_start = 10\nwindow = 10\nslices = 5\ns1 = 4.0\n"
        } else {
            ""
        }
    )
}

#[test]
fn gen_data_is_deterministic_and_pinned() {
    let dir = tempfile::tempdir().unwrap();
    let o = vsam(
        &[
            "gen-data", "moons", "--n", "200", "--noise", "0.1", "--seed", "7", "--out", "m.bin",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    assert!(stdout(&o).starts_with(MOONS_200_SEED_7));
    assert!(dir.path().join("m.bin").exists());
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "iterations = 10\nbogus = 1\n").unwrap();
    let o = vsam(&["run", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    let o = vsam(&["run", "missing.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn selfcheck_and_bounds_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = vsam(&["selfcheck"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
    let o = vsam(
        &["check-bounds", "--cases", "200", "--csv", "b.csv"],
        dir.path(),
    );
    assert!(o.status.success());
    assert!(stdout(&o).contains("violations: 0"));
    let csv = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(csv.lines().count(), 401);
}

#[test]
fn run_verify_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for m in ["sam", "vsam"] {
        std::fs::write(
            dir.path().join(format!("{m}.toml")),
            quad_config(m, &format!("out/{m}")),
        )
        .unwrap();
        let o = vsam(&["run", &format!("{m}.toml")], dir.path());
        assert!(o.status.success(), "{}", stdout(&o));
        let v = vsam(&["verify", &format!("out/{m}")], dir.path());
        assert!(v.status.success(), "{}", stdout(&v));
    }
    let o = vsam(
        &["report", "out/sam", "out/vsam", "--csv", "r.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("vsam") && text.contains("sam"));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.starts_with("label,method,runs"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn verify_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), quad_config("vsam", "out")).unwrap();
    assert!(vsam(&["run", "c.toml"], dir.path()).status.success());
    let metrics = dir.path().join("out/seed-0/metrics.csv");
    let text = std::fs::read_to_string(&metrics).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.remove(40);
    std::fs::write(&metrics, lines.join("\n") + "\n").unwrap();
    let v = vsam(&["verify", "out"], dir.path());
    assert_eq!(v.status.code(), Some(1));
    assert!(stdout(&v).contains("FAIL"));
}

#[test]
fn output_root_override() {
    let dir = tempfile::tempdir().unwrap();
    let root = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), quad_config("sgd", "runs/sgd")).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_vsam"))
        .args(["run", "c.toml"])
        .current_dir(dir.path())
        .env("VSAM_OUTPUT_ROOT", root.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(root.path().join("runs/sgd/seed-1/metrics.csv").exists());
    assert!(!dir.path().join("runs").exists());
}
