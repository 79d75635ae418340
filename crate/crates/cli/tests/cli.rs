use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn twinscale(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twinscale"))
        .args(args)
        .current_dir(dir)
        .env_remove("TWINSCALE_CONFIG_DIR")
        .output()
        .expect("binary runs")
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn allocate_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = twinscale(dir.path(), &["allocate", "--out", "a.csv", "--precoder", "zf"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("a.csv");
    assert_eq!(
        header(&path),
        "precoder,csi,scheme,rho,bandwidth_hz,vue,position_m,pathloss,power_w,latency_s"
    );
    // 2 CSI modes x 2 schemes x 10 vehicles
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 1 + 40);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("zf/imperfect/proposed"));
    assert!(stdout.contains(" ms"));
}

#[test]
fn default_output_name_follows_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = twinscale(dir.path(), &["stage1-sweep-reliability", "--csi", "perfect"]);
    assert!(out.status.success());
    assert!(dir.path().join("stage1-sweep-reliability.csv").is_file());
}

#[test]
fn convergence_trace_writes_both_panels() {
    let dir = tempfile::tempdir().unwrap();
    let out = twinscale(dir.path(), &["convergence-trace", "--out", "t.csv"]);
    assert!(out.status.success());
    assert_eq!(header(&dir.path().join("t.csv")), "precoder,csi,j,eta_j,F_j");
    assert_eq!(
        header(&dir.path().join("t_inner.csv")),
        "precoder,csi,j,i,max_h,min_h,mu_i"
    );
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["x.csv", "y.csv"] {
        let out = twinscale(dir.path(), &["sweep-density-latency", "--seed", "4", "--out", name]);
        assert!(out.status.success());
    }
    assert_eq!(
        fs::read(dir.path().join("x.csv")).unwrap(),
        fs::read(dir.path().join("y.csv")).unwrap()
    );
}

#[test]
fn malformed_config_exits_1_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.conf"), "antennas = 300\ndelta = one\n").unwrap();
    let out = twinscale(dir.path(), &["allocate", "--config", "bad.conf"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("delta") && err.contains("line 2"), "{err}");
}

#[test]
fn missing_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = twinscale(dir.path(), &["allocate", "--config", "nope.conf"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn infeasible_allocation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.conf"), "antennas = 8\n").unwrap();
    let out = twinscale(
        dir.path(),
        &["allocate", "--config", "c.conf", "--precoder", "zf"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_sweep_points_are_marked_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.conf"), "antennas = 8\ndensities = 0.025, 0.05\n").unwrap();
    let out = twinscale(
        dir.path(),
        &["sweep-density-latency", "--config", "c.conf", "--out", "s.csv"],
    );
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    // K = 5 fits under 8 antennas for ZF, K = 10 does not.
    let zf: Vec<_> = text.lines().filter(|l| l.contains(",zf,")).collect();
    assert_eq!(zf.len(), 4);
    assert!(zf[..2].iter().all(|l| l.ends_with(",ok")));
    assert!(zf[2..].iter().all(|l| l.contains("error")));
    assert!(String::from_utf8(out.stdout).unwrap().contains("error marker"));
}

#[test]
fn config_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("twinscale.conf"), "stage1_densities = 0.05\ndeltas = 0.05\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_twinscale"))
        .args(["stage1-sweep-density", "--precoder", "mf", "--csi", "perfect", "--out", "s.csv"])
        .current_dir(dir.path())
        .env("TWINSCALE_CONFIG_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn unknown_subcommand_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = twinscale(dir.path(), &["plot"]);
    assert!(!out.status.success());
}
