use std::process::Command;

fn ionmux(args: &[&str], out: &std::path::Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ionmux"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn branching_ratio_final_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = ionmux(&["branching-ratio", "--strategy", "every", "--n", "200"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("branching_ratio.csv")).unwrap();
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 200);
    let last: f64 = rows[199][1].parse().unwrap();
    assert!((last - 0.544).abs() < 1e-3);
    for key in ["# tool: ionmux", "# command: branching-ratio", "# seed: 1", "# config_sha256: "] {
        assert!(csv.contains(key), "{key}");
    }
}

#[test]
fn enhance_curve_is_monotone_with_knee() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ionmux(&["enhance", "--preset", "fig1c"], dir.path()).status.success());
    let csv = std::fs::read_to_string(dir.path().join("enhance.csv")).unwrap();
    let rows = data_rows(&csv);
    let m: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(m.windows(2).all(|w| w[1] > w[0]));
    let knee = rows.iter().find(|r| r[0] == "85").unwrap();
    assert_eq!(knee[2].parse::<f64>().unwrap(), 43.0);
    assert_eq!(knee[3].parse::<f64>().unwrap(), 0.5);
}

#[test]
fn errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let out = ionmux(&["protocol", "--preset", "12km", "--set", "protocol.shuttle_time=25"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"]["kind"], "config");
    assert!(record["error"]["message"].as_str().unwrap().contains("protocol.shuttle_time"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);

    let out = ionmux(&["optimize", "--n", "30", "--solver", "exhaustive"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"]["kind"], "budget");

    let out = ionmux(&["enhance"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn json_output_carries_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = ionmux(&["protocol", "--preset", "3m", "--format", "json", "--seed", "9"], dir.path());
    assert!(out.status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("protocol.json")).unwrap()).unwrap();
    assert_eq!(doc["provenance"]["seed"], 9);
    assert_eq!(doc["provenance"]["config"]["protocol"]["strategy"]["pulses"], 8);
    assert_eq!(doc["tables"].as_array().unwrap().len(), 2);
}

#[test]
fn parameter_sweep_runs_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        "scenario = \"12km\"\n[sweep]\naxis = \"protocol.shuttle_time\"\ngrid = [\"3 us\", \"10 us\", \"25 us\"]\n",
    )
    .unwrap();
    let out = ionmux(&["sweep", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_rows(&std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap());
    assert_eq!(rows.len(), 3);
    let t: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(t[0] < t[1] && t[1] < t[2]);
}
