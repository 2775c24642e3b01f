use std::fs;
use std::process::{Command, Output};

fn oamsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oamsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn error_category(out: &Output) -> String {
    let line: serde_json::Value = serde_json::from_slice(&out.stderr).expect("json on stderr");
    line["error"].as_str().unwrap().to_string()
}

const QUICK: &[&str] = &[
    "--pulses",
    "4000000",
    "--set",
    "simulation.block_pulses=1048576",
];

#[test]
fn run_sww_prints_report() {
    let mut args = vec!["run", "--scenario", "sww", "--seed", "3"];
    args.extend_from_slice(QUICK);
    let r = json(&oamsim(&args));
    assert_eq!(r["scenario"], "sww_only");
    assert_eq!(r["seed"], 3);
    assert_eq!(r["pulses_simulated"], 4_000_000);
    assert_eq!(r["acc"].as_array().unwrap().len(), 14);
    assert!(r["cc"].as_f64().unwrap() > 0.0);
}

#[test]
fn csv_output_is_identical_across_worker_counts() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (d, workers) in dirs.iter().zip(["1", "2"]) {
        let out_dir = d.path().to_str().unwrap();
        let mut args = vec![
            "run",
            "--format",
            "csv",
            "--workers",
            workers,
            "--out",
            out_dir,
        ];
        args.extend_from_slice(QUICK);
        let out = oamsim(&args);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(out.stdout.is_empty());
    }
    for file in ["report.json", "histogram.csv"] {
        let a = fs::read(dirs[0].path().join(file)).unwrap();
        let b = fs::read(dirs[1].path().join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let hist = fs::read_to_string(dirs[0].path().join("histogram.csv")).unwrap();
    assert_eq!(hist.lines().next(), Some("bin_start_ps,count"));
}

#[test]
fn debug_run_writes_time_tags() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--debug", "--out", d.path().to_str().unwrap()];
    args.extend_from_slice(QUICK);
    assert!(oamsim(&args).status.success());
    let tags = fs::read_to_string(d.path().join("time_tags.csv")).unwrap();
    assert_eq!(tags.lines().next(), Some("arm,time_ps,origin"));
    assert!(tags.lines().count() > 1);
}

#[test]
fn oam_run_reports_drive_and_projections() {
    let r = json(&oamsim(&[
        "run",
        "--scenario",
        "oam",
        "--charge",
        "-3",
        "--debug",
        "--pulses",
        "2000000",
        "--set",
        "spad.signal.dark_prob_per_gate=0.01",
        "--set",
        "spad.idler.dark_prob_per_gate=0.01",
    ]));
    assert_eq!(r["charge"], -3);
    assert_eq!(r["drive"]["order"], 309);
    assert_eq!(r["projections"].as_array().unwrap().len(), 2);
    assert!(r["pre_detection_cc"].as_f64().is_some());
}

#[test]
fn sweep_reports_comb() {
    let r = json(&oamsim(&["sweep", "--power-mw", "10"]));
    assert_eq!(r["scenario"], "spectrum_sweep");
    assert!((r["power_mw"].as_f64().unwrap() - 10.0).abs() < 1e-12);
    assert!((r["mean_spacing_nm"].as_f64().unwrap() - 0.5).abs() < 0.005);
}

#[test]
fn tomography_reports_purity() {
    let r = json(&oamsim(&["tomography", "--charge", "4", "--shots", "0"]));
    assert!((r["purity"].as_f64().unwrap() - 0.85).abs() < 1e-12);
}

#[test]
fn calibrate_reports_patch() {
    let r = json(&oamsim(&["calibrate"]));
    assert_eq!(r["patch"].as_array().unwrap().len(), 4);
    assert!((r["predicted_cc"].as_f64().unwrap() - 77_900.0).abs() < 1e-3);
}

#[test]
fn config_file_is_read() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("exp.toml");
    fs::write(&path, "[sweep]\npower_mw = 4.0\n").unwrap();
    let r = json(&oamsim(&["sweep", "--config", path.to_str().unwrap()]));
    assert!((r["power_mw"].as_f64().unwrap() - 4.0).abs() < 1e-12);
}

#[test]
fn errors_carry_category_and_exit_code() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.toml");
    fs::write(&bad, "[pump]\nwavelength_nm = \"x\"\n").unwrap();
    let out = oamsim(&["calibrate", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_category(&out), "config-parse");

    let out = oamsim(&["calibrate", "--set", "source.mu=-1"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_category(&out), "config-validation");

    let out = oamsim(&["run", "--scenario", "oam", "--charge", "1"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_category(&out), "parameter");

    let out = oamsim(&["tomography", "--charge", "9"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(!error_category(&out).is_empty());
}
