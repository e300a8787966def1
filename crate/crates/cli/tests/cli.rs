use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn msnoma(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msnoma"))
        .args(args)
        .current_dir(dir)
        .env("MSNOMA_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn header(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap().lines().next().unwrap().to_string()
}

const SMALL: &str = "bandwidth_hz = 20e6\nruns = 2\ngrid_step_m = 50\n";

#[test]
fn ber_sweep_writes_csv_sidecars_and_echo() {
    let tmp = TempDir::new().unwrap();
    let o = msnoma(&["ber-sweep", "--out", "b", "--set", "ebn0_max_db=4"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("b");
    assert_eq!(header(&out, "ber_sweep.csv"), "eb_n0_db,cpr_db,avg_ber");
    assert_eq!(header(&out, "ber_per_subcarrier.csv"), "n,ber_ipp,ber_dpp,ber_np");
    assert!(out.join("ber_sweep.plot.txt").exists());
    let echo = fs::read_to_string(out.join("resolved_config.txt")).unwrap();
    assert!(echo.lines().any(|l| l == "ebn0_max_db = 4"), "{echo}");
    assert!(echo.lines().any(|l| l == "experiment = ber-sweep"), "{echo}");
}

#[test]
fn ranging_sweep_columns() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "r.cfg", "cpr_step_db = 10\nranging_bandwidths_hz = 50e6\n");
    let o = msnoma(&["ranging-sweep", "-c", &cfg, "--out", "r"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("r");
    assert_eq!(
        header(&out, "ranging_sweep.csv"),
        "cpr_db,bandwidth,sigma_exact_m,sigma_approx_m,sigma_nocomm_m,rel_err"
    );
    let rows = fs::read_to_string(out.join("ranging_sweep.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 3);
}

#[test]
fn allocate_outputs_trace_and_scenario() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "a.cfg", SMALL);
    let o = msnoma(&["allocate", "-c", &cfg, "--out", "a", "--seed", "4"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("a");
    assert_eq!(
        header(&out, "allocate_trace.csv"),
        "iteration,objective,max_qos_violation,max_budget_violation,max_hearability_violation"
    );
    let scen = fs::read_to_string(out.join("scenario.txt")).unwrap();
    let gnb_lines = scen.lines().filter(|l| l.starts_with("gnb ")).count();
    assert_eq!(gnb_lines, 4);
    assert!(scen.lines().any(|l| l.starts_with("puser 1 ")));
    let echo = fs::read_to_string(out.join("resolved_config.txt")).unwrap();
    assert!(echo.lines().any(|l| l == "seed = 4"));
}

#[test]
fn montecarlo_respects_runs_flag() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "m.cfg", SMALL);
    let o = msnoma(&["montecarlo", "-c", &cfg, "--out", "m", "--runs", "3", "--seed", "7"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let runs = fs::read_to_string(tmp.path().join("m/montecarlo_runs.csv")).unwrap();
    let seeds: Vec<&str> = runs.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(seeds, ["7", "8", "9"]);
    assert!(tmp.path().join("m/montecarlo_cdf.plot.txt").exists());
}

#[test]
fn coverage_map_and_power_vs_gain() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.cfg", SMALL);
    let o = msnoma(&["coverage-map", "-c", &cfg, "--out", "c"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(header(&tmp.path().join("c"), "coverage_map_pcjpa.csv"), "x_m,y_m,covered,psi_m");
    let o = msnoma(&["power-vs-gain", "-c", &cfg, "--out", "p"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(header(&tmp.path().join("p"), "power_vs_gain.csv"), "p_user_index,gnb_index,gain_db,allocated_power");
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let bad = write(tmp.path(), "bad.cfg", "# comment\nbandwidth_hz = 50e6\nbandwith_hz = 20e6\n");
    let o = msnoma(&["allocate", "-c", &bad], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bandwith_hz"), "{}", stderr(&o));
    let o = msnoma(&["allocate", "--set", "rho=0.5"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = msnoma(&["allocate", "--set", "rho"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_msnoma"))
        .args(["ber-sweep", "--out", "x"])
        .current_dir(tmp.path())
        .env("MSNOMA_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "o.cfg", "seed = 99\nout = from_file\nebn0_max_db = 2\n");
    let o = msnoma(&["ber-sweep", "-c", &cfg, "--seed", "5", "--out", "from_flag"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!tmp.path().join("from_file").exists());
    let echo = fs::read_to_string(tmp.path().join("from_flag/resolved_config.txt")).unwrap();
    assert!(echo.lines().any(|l| l == "seed = 5"));
    assert!(echo.lines().any(|l| l == "ebn0_max_db = 2"));
}

#[test]
fn nonconvergence_exit_3_unless_allowed() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "n.cfg", "bandwidth_hz = 20e6\niter_n = 1\n");
    let o = msnoma(&["allocate", "-c", &cfg, "--out", "n1"], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    // Outputs are written before the exit code is chosen.
    assert!(tmp.path().join("n1/allocate_summary.csv").exists());
    let o = msnoma(&["allocate", "-c", &cfg, "--out", "n2", "--allow-nonconverged"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(tmp.path().join("n2/allocate_summary.csv")).unwrap();
    assert!(summary.contains("not_converged"), "{summary}");
}

#[test]
fn sequential_matches_parallel() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "s.cfg", SMALL);
    let a = msnoma(&["allocate", "-c", &cfg, "--out", "par"], tmp.path());
    let b = msnoma(&["allocate", "-c", &cfg, "--out", "seq", "--sequential"], tmp.path());
    assert!(a.status.success() && b.status.success());
    let read = |d: &str| fs::read_to_string(tmp.path().join(d).join("allocate_powers.csv")).unwrap();
    assert_eq!(read("par"), read("seq"));
}
