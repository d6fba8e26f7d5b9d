//! End-to-end tests of the `sim` binary: exit codes, file contracts, and
//! determinism across thread counts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sim"))
}

fn run_sim(args: &[&str], envs: &[(&str, &str)], out: &Path) -> Output {
    let mut cmd = sim();
    cmd.args(args).arg("--out").arg(out);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("failed to spawn sim")
}

fn read(out: &Path, name: &str) -> String {
    std::fs::read_to_string(out.join(name))
        .unwrap_or_else(|e| panic!("missing {name} in {}: {e}", out.display()))
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&read(out, "manifest.json")).expect("manifest is not valid JSON")
}

fn tmp(label: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sim-cli-{label}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn unknown_config_key_exits_2_and_writes_nothing() {
    let out = tmp("badkey");
    let o = run_sim(&["spectrum", "--set", "grid.bogus=1"], &[], &out);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("configuration error"), "stderr: {err}");
    assert!(!out.join("spectrum.csv").exists());
}

#[test]
fn missing_config_file_exits_2() {
    let out = tmp("noconf");
    let o = run_sim(
        &["spectrum", "--config", "/nonexistent/sim.toml"],
        &[],
        &out,
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_override_exits_2() {
    let out = tmp("badset");
    let o = run_sim(&["spectrum", "--set", "grid.probe_points"], &[], &out);
    assert_eq!(o.status.code(), Some(2));
    let o = run_sim(&["spectrum", "--set", "run.threads=many"], &[], &out);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_oracle_tolerance_exits_3_but_still_writes_artifacts() {
    let out = tmp("oraclefail");
    let o = run_sim(
        &["oracle-check", "--set", "run.oracle_tol=1e-16"],
        &[],
        &out,
    );
    assert_eq!(o.status.code(), Some(3));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("FAIL"), "stdout: {text}");
    // diagnostics still land on disk so the failure can be inspected
    let m = manifest(&out);
    assert_eq!(m["diagnostics"]["passed"], serde_json::json!(false));
    assert!(out.join("oracle-check.csv").exists());
}

#[test]
fn oracle_check_passes_at_default_tolerance() {
    let out = tmp("oraclepass");
    let o = run_sim(&["oracle-check"], &[], &out);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("max relative deviation"), "stdout: {text}");
    assert!(text.contains("PASS"), "stdout: {text}");
    let m = manifest(&out);
    assert_eq!(m["diagnostics"]["draws"], serde_json::json!(5));
    let worst = m["diagnostics"]["worst_rel_err"].as_f64().unwrap();
    assert!(worst > 0.0 && worst <= 1e-6, "worst_rel_err = {worst}");
}

#[test]
fn empty_grid_yields_header_only_csv_and_exit_0() {
    let out = tmp("empty");
    let o = run_sim(&["spectrum", "--set", "grid.probe_points=0"], &[], &out);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read(&out, "spectrum.csv"), "delta_p_mhz,rma\n");
    // the manifest is still written for an empty run
    let m = manifest(&out);
    assert_eq!(m["command"], serde_json::json!("spectrum"));
}

#[test]
fn csv_is_byte_identical_across_thread_counts() {
    let args = [
        "spectrum",
        "--set",
        "grid.probe_points=7",
        "--set",
        "grid.probe_min_mhz=-3",
        "--set",
        "grid.probe_max_mhz=3",
    ];
    let out1 = tmp("threads1");
    let o = run_sim(&args, &[("SIM_THREADS", "1")], &out1);
    assert_eq!(o.status.code(), Some(0));
    let out4 = tmp("threads4");
    let o = run_sim(&args, &[("SIM_THREADS", "4")], &out4);
    assert_eq!(o.status.code(), Some(0));

    assert_eq!(read(&out1, "spectrum.csv"), read(&out4, "spectrum.csv"));
    assert_eq!(
        manifest(&out1)["diagnostics"]["threads_effective"],
        serde_json::json!(1)
    );
    assert_eq!(
        manifest(&out4)["diagnostics"]["threads_effective"],
        serde_json::json!(4)
    );
}

#[test]
fn threads_env_var_beats_config_value() {
    let out = tmp("threadsenv");
    let o = run_sim(
        &[
            "spectrum",
            "--set",
            "run.threads=7",
            "--set",
            "grid.probe_points=0",
        ],
        &[("SIM_THREADS", "2")],
        &out,
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        manifest(&out)["diagnostics"]["threads_effective"],
        serde_json::json!(2)
    );
}

#[test]
fn resolved_config_round_trips_to_identical_output() {
    let args = [
        "spectrum",
        "--set",
        "run.protocol=conventional",
        "--set",
        "grid.probe_points=5",
        "--set",
        "grid.probe_min_mhz=-2",
        "--set",
        "grid.probe_max_mhz=2",
        "--set",
        "drive.e_rf_v_per_m=0.1",
    ];
    let first = tmp("roundtrip1");
    let o = run_sim(&args, &[], &first);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let resolved = first.join("config.resolved.toml");
    assert!(resolved.exists());
    let second = tmp("roundtrip2");
    let o = run_sim(
        &["spectrum", "--config", resolved.to_str().unwrap()],
        &[],
        &second,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    assert_eq!(read(&first, "spectrum.csv"), read(&second, "spectrum.csv"));
    // The resolved config echoes the effective output directory, which
    // necessarily differs between the two runs; everything else must match.
    let strip_out_dir = |text: String| -> String {
        text.lines()
            .filter(|l| !l.trim_start().starts_with("out_dir"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(
        strip_out_dir(read(&first, "config.resolved.toml")),
        strip_out_dir(read(&second, "config.resolved.toml"))
    );
}

#[test]
fn set_override_beats_config_file() {
    let dir = tmp("precedence");
    std::fs::create_dir_all(&dir).unwrap();
    let conf = dir.join("sim.toml");
    std::fs::write(
        &conf,
        "[run]\nprotocol = \"conventional\"\n[grid]\nprobe_points = 5\nprobe_min_mhz = -2.0\nprobe_max_mhz = 2.0\n",
    )
    .unwrap();
    let out = tmp("precedence-out");
    let o = run_sim(
        &[
            "spectrum",
            "--config",
            conf.to_str().unwrap(),
            "--set",
            "grid.probe_points=3",
        ],
        &[],
        &out,
    );
    assert_eq!(o.status.code(), Some(0));
    let csv = read(&out, "spectrum.csv");
    assert_eq!(csv.lines().count(), 1 + 3, "override did not win:\n{csv}");
}

#[test]
fn spectrum_default_contract_401_rows() {
    let out = tmp("spectrum-default");
    let o = run_sim(&["spectrum"], &[], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out, "spectrum.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("delta_p_mhz,rma"));
    assert_eq!(lines.count(), 401);

    // values are rendered with 12 significant digits
    let second_row = csv.lines().nth(1).unwrap();
    let field = second_row.split(',').next().unwrap();
    assert_eq!(field, "-2.00000000000e1");

    // the axis sidecar mirrors the grid
    let sidecar: serde_json::Value = serde_json::from_str(&read(&out, "spectrum.json")).unwrap();
    assert_eq!(sidecar["axes"][0]["points"], serde_json::json!(401));
    assert_eq!(sidecar["axes"][0]["name"], serde_json::json!("delta_p"));
    assert_eq!(sidecar["axes"][0]["unit"], serde_json::json!("MHz"));
}

#[test]
fn calibrate_manifest_records_density_and_transmission() {
    let out = tmp("calibrate");
    let o = run_sim(&["calibrate"], &[], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("calibrated density"), "stdout: {text}");

    let m = manifest(&out);
    let density = m["diagnostics"]["density_per_cm3"].as_f64().unwrap();
    let transmission = m["diagnostics"]["transmission"].as_f64().unwrap();
    assert!(density > 1e9 && density < 1e10, "density = {density}");
    assert!(
        (transmission - 0.34).abs() <= 1e-4,
        "transmission = {transmission}"
    );

    // manifest carries the resolved config echo and wall time
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(
        m["config"]["cell"]["target_transmission"],
        serde_json::json!(0.34)
    );
    assert_eq!(m["version"], serde_json::json!(env!("CARGO_PKG_VERSION")));
}

#[test]
fn response_endpoint_matches_spectrum_operating_point() {
    // E_RF = 0 endpoint of the response curve equals the spectrum value at
    // the protocol's operating point, bit for bit
    let shared = [
        "--set",
        "run.protocol=conventional",
        "--set",
        "drive.delta_rf_mhz=0",
    ];
    let resp_out = tmp("resp-endpoint");
    let mut args = vec!["response"];
    args.extend_from_slice(&shared);
    args.extend_from_slice(&["--set", "grid.e_rf_points=2", "--set", "grid.e_rf_max_v_per_m=0.1"]);
    let o = run_sim(&args, &[], &resp_out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let spec_out = tmp("spec-endpoint");
    let mut args = vec!["spectrum"];
    args.extend_from_slice(&shared);
    args.extend_from_slice(&[
        "--set",
        "grid.probe_points=1",
        "--set",
        "grid.probe_min_mhz=0",
        "--set",
        "grid.probe_max_mhz=0",
    ]);
    let o = run_sim(&args, &[], &spec_out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let resp_first = read(&resp_out, "response.csv");
    let resp_first = resp_first.lines().nth(1).unwrap();
    let spec_first = read(&spec_out, "spectrum.csv");
    let spec_first = spec_first.lines().nth(1).unwrap();
    let v_resp = resp_first.split(',').nth(1).unwrap();
    let v_spec = spec_first.split(',').nth(1).unwrap();
    assert_eq!(v_resp, v_spec);
}
