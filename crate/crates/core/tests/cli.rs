use std::path::Path;

use usdpc::cli::cli_main;
use usdpc::io::{read_csv, read_rf};

fn write_config(dir: &Path) -> String {
    let path = dir.join("run.json");
    std::fs::write(
        &path,
        r#"{"seed": 11,
            "phantom": {"preset": "homogeneous", "region_mm": {"x_min": -4, "x_max": 4, "z_min": 1, "z_max": 20}},
            "probe": {"elements": 32},
            "angles_rad": [-0.05, 0.0, 0.05]}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(cli_main(["usdpc", "--help"]), 0);
    assert_eq!(cli_main(["usdpc", "frobnicate"]), 1);
    assert_eq!(cli_main(["usdpc", "bmode"]), 1);
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(&dir.path().join("x.pgm"));
    assert_eq!(cli_main(["usdpc", "bmode", "--rf", "/nonexistent/input.rf", "--out", &out]), 2);
}

#[test]
fn corrupt_container_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let rf = dir.path().join("bad.rf");
    std::fs::write(&rf, b"not an rf file at all").unwrap();
    let out = s(&dir.path().join("x.pgm"));
    assert_eq!(cli_main(["usdpc", "bmode", "--rf", &s(&rf), "--out", &out]), 2);
}

#[test]
fn bad_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"probe": {"elemnts": 3}}"#).unwrap();
    assert_eq!(cli_main(["usdpc", "simulate", "--config", &s(&cfg), "--out", &s(&dir.path().join("a.rf"))]), 2);
}

#[test]
fn invalid_parameter_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let rf = s(&dir.path().join("a.rf"));
    assert_eq!(cli_main(["usdpc", "simulate", "--config", &cfg, "--out", &rf]), 0);
    let out = s(&dir.path().join("d.csv"));
    assert_eq!(cli_main(["usdpc", "dpc", "--rf", &rf, "--m", "5", "--out", &out]), 3);
}

#[test]
fn simulate_bmode_dpc_memory_round() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let rf = dir.path().join("a.rf");
    assert_eq!(cli_main(["usdpc", "--threads", "1", "simulate", "--config", &cfg, "--out", &s(&rf)]), 0);
    let ds = read_rf(&rf).unwrap();
    assert_eq!(ds.frames.len(), 3);
    assert_eq!(ds.probe.n_elements(), 32);
    assert!(dir.path().join("a.rf.manifest.json").exists());

    let grid = ["--x-min-mm", "-3", "--x-max-mm", "3", "--z-min-mm", "5", "--z-max-mm", "8"];
    let bm = dir.path().join("b.csv");
    let mut args = vec!["usdpc", "bmode", "--rf", rf.to_str().unwrap(), "--out", bm.to_str().unwrap()];
    args.extend(grid);
    assert_eq!(cli_main(args), 0);
    let img = read_csv(&bm).unwrap();
    assert!(img.values.iter().all(|v| *v <= 1e-9));

    let dp = dir.path().join("d.pgm");
    let mut args = vec!["usdpc", "dpc", "--rf", rf.to_str().unwrap(), "--T", "100", "--out", dp.to_str().unwrap()];
    args.extend(grid);
    assert_eq!(cli_main(args), 0);
    let bytes = std::fs::read(&dp).unwrap();
    assert!(bytes.starts_with(b"P5"));
    assert!(dir.path().join("d.pgm.scale.txt").exists());

    let mem = dir.path().join("m.csv");
    assert_eq!(
        cli_main(["usdpc", "memory", "--rf", &s(&rf), "--window-mm", "1.5", "--window-us", "1.5", "--out", &s(&mem)]),
        0
    );
    let summary = std::fs::read_to_string(dir.path().join("m.csv.summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let run = |name: &str, seed: Option<&str>| {
        let out = s(&dir.path().join(name));
        let mut args = vec!["usdpc", "--threads", "1"];
        if let Some(seed) = seed {
            args.extend(["--seed", seed]);
        }
        args.extend(["simulate", "--config", &cfg, "--out", &out]);
        assert_eq!(cli_main(args), 0);
        std::fs::read(&out).unwrap()
    };
    let a = run("a.rf", None);
    let b = run("b.rf", None);
    let c = run("c.rf", Some("12"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}
