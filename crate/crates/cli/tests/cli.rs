use std::path::Path;
use std::process::Command;

fn sfldp(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sfldp"))
        .args(args)
        .current_dir(dir)
        .env_remove("SFLDP_CONFIG")
        .output()
        .unwrap()
}

const SMALL: &str = "\
[system]
n_modes = 4
epsilons = [0.1, 0.05]
sigma = 0.0
u0_sine = []

[grid]
horizon = 0.2

[mc]
n_replicas = 6
";

#[test]
fn quiet_simulation_writes_zero_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let out = sfldp(&["simulate", "--config", "c.toml", "--out", "run"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("run/trajectory_u.csv")).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert!(!body.is_empty());
    for line in body {
        assert!(line.split(',').skip(1).all(|c| c.parse::<f64>().unwrap() == 0.0));
    }
    assert_eq!(std::fs::read_to_string(dir.path().join("run/config.source.toml")).unwrap(), SMALL);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SMALL.replace("sigma = 0.0", "sigma = 0.5");
    std::fs::write(dir.path().join("c.toml"), cfg).unwrap();
    for (out, threads) in [("a", "1"), ("b", "2")] {
        let o = sfldp(&["average-rate", "--config", "c.toml", "--out", out, "--seed", "9", "--threads", threads], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["rate_table.csv", "summary.json"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let table = std::fs::read_to_string(dir.path().join("a/rate_table.csv")).unwrap();
    assert!(table.lines().nth(3).unwrap().contains("seed: 9"));
    assert!(table.contains("slope="));
}

#[test]
fn config_errors_exit_2_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[mc]\nn_replicas = -3\n").unwrap();
    let out = sfldp(&["simulate", "--config", "bad.toml", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mc.n_replicas"));
    let out = sfldp(&["simulate", "--config", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn env_var_supplies_the_config_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "[system]\nsigma = \"x\"\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sfldp"))
        .args(["simulate", "--out", "y"])
        .current_dir(dir.path())
        .env("SFLDP_CONFIG", "c.toml")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("system.sigma"));
}

#[test]
fn unreachable_tube_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[system]\nn_modes = 4\n\n[grid]\nhorizon = 0.2\n\n[mc]\nn_replicas = 5\n\n[ldp]\ndelta = 1e-9\nepsilons = [0.2]\nn_steps = 10\n";
    std::fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let out = sfldp(&["ldp-probe", "--config", "c.toml", "--out", "p"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(dir.path().join("p/manifest.json")).unwrap();
    assert!(manifest.contains("underflow"));
    assert!(dir.path().join("p/ldp_probe.csv").exists());
}

#[test]
fn blow_up_exits_3_and_flags_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[system]\nn_modes = 4\nlambda = 1e308\nu0_sine = [1.0]\n\n[grid]\nhorizon = 1.0\n";
    std::fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let out = sfldp(&["simulate", "--config", "c.toml", "--out", "s"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(dir.path().join("s/manifest.json")).unwrap();
    assert!(manifest.contains("partial"));
}
