use std::process::Command;

fn ioc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ioc"))
}

#[test]
fn run_then_plot() {
    let root = tempfile::tempdir().unwrap();
    let out = ioc()
        .env("IOC_OUTPUT_ROOT", root.path())
        .args(["run", "--benchmark", "pendulum", "--filter", "ekf", "--mode", "full", "--seed", "7", "--output", "p7"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = root.path().join("p7");
    let est = std::fs::read_to_string(dir.join("estimates.csv")).unwrap();
    assert_eq!(est.lines().count(), 1 + 49);
    let last: Vec<f64> = est.lines().last().unwrap().split(',').skip(1).take(2).map(|v| v.parse().unwrap()).collect();
    assert!((last[0] - 1.0).abs() < 0.1 && (last[1] - 10.0).abs() < 0.5, "{last:?}");

    std::fs::remove_file(dir.join("estimates.svg")).unwrap();
    let plot = ioc().args(["plot", "--input"]).arg(&dir).output().unwrap();
    assert!(plot.status.success());
    assert!(dir.join("estimates.svg").exists());
}

#[test]
fn failures_exit_nonzero() {
    let root = tempfile::tempdir().unwrap();
    let zero = ioc().args(["run", "--trials", "0", "--output"]).arg(root.path()).output().unwrap();
    assert!(!zero.status.success());
    assert!(String::from_utf8_lossy(&zero.stderr).contains("trial count"));

    let missing = ioc().args(["plot", "--input"]).arg(root.path().join("none.csv")).output().unwrap();
    assert!(!missing.status.success());

    let empty = root.path().join("estimates.csv");
    std::fs::write(&empty, "t,theta_1,theta_2,p_diag_1,p_diag_2,err_norm\n").unwrap();
    let plot = ioc().args(["plot", "--input"]).arg(&empty).output().unwrap();
    assert!(!plot.status.success());
    assert!(!root.path().join("estimates.svg").exists());
}

#[test]
fn solver_failure_leaves_error_record() {
    let root = tempfile::tempdir().unwrap();
    let config = root.path().join("capped.toml");
    std::fs::write(&config, "[solver]\nmax_iterations = 1\n").unwrap();
    let out = ioc().args(["run", "--config"]).arg(&config).arg("--output").arg(root.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.path().join("error.json")).unwrap()).unwrap();
    assert_eq!(record["kind"], "non_convergence");
    assert_eq!(record["filter"], "ekf");
}

#[test]
fn lists_benchmarks() {
    let out = ioc().arg("list-benchmarks").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["pendulum", "cartpole", "robot_arm"] {
        assert!(text.contains(name));
    }
}
