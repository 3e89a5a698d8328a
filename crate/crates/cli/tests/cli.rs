use std::path::Path;
use std::process::{Command, Output};

use fracext::mesh::read_mesh;
use tempfile::TempDir;

fn fracext(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracext")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const RATE: &str = "kind = rate_vs_n
geometry = interval
s = 0.5
n = 1e2, 1e3, 1e4
dofs = 60
";

#[test]
fn mesh_subcommand_writes_a_readable_mesh() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("disk.mesh");
    let res = fracext(&["mesh", "disk", "-o", out.to_str().unwrap(), "--dofs", "200"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let mesh = read_mesh(&out).unwrap();
    assert_eq!(mesh.dim(), 2);
    assert!((150..=260).contains(&mesh.num_nodes()), "{} nodes", mesh.num_nodes());
}

#[test]
fn mesh_subcommand_rejects_unknown_geometry() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.mesh");
    let res = fracext(&["mesh", "torus", "-o", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn run_writes_summary_and_rates() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "rate.conf", RATE);
    let out = dir.path().join("out");
    let res = fracext(&["run", &cfg, "-o", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.lines().count() >= 2);
    assert!(out.join("s0.5/rates.csv").exists());
}

#[test]
fn check_exit_code_follows_thresholds() {
    let dir = TempDir::new().unwrap();
    let pass = write_config(dir.path(), "pass.conf", &format!("{RATE}check.slope_min = -1.5\ncheck.slope_max = -0.5\n"));
    let res = fracext(&["check", &pass, "-o", dir.path().join("a").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&res.stdout).contains("PASS slope"));

    let fail = write_config(dir.path(), "fail.conf", &format!("{RATE}check.slope_min = -3\ncheck.slope_max = -2\n"));
    let res = fracext(&["check", &fail, "-o", dir.path().join("b").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stdout).contains("FAIL slope"));
}

#[test]
fn check_without_thresholds_is_an_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "plain.conf", RATE);
    let res = fracext(&["check", &cfg, "-o", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("no check"));
}

#[test]
fn malformed_config_is_reported() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.conf", &format!("{RATE}colour = blue\n"));
    let res = fracext(&["run", &cfg]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("colour"));
}
