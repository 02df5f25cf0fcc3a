use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn psbm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psbm"))
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn pulse_verify_passes_at_d4_and_fails_at_d1() {
    let dir = tempfile::tempdir().unwrap();
    let ok = psbm(dir.path(), &["pulse-verify", "--d-max", "4"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert_eq!(stdout(&ok).lines().filter(|l| l.starts_with("PASS")).count(), 13);
    let csv = fs::read_to_string(dir.path().join("out/truncation.csv")).unwrap();
    assert!(csv.starts_with("n,d,ratio"));

    let short = psbm(dir.path(), &["pulse-verify", "--d-max", "1"]);
    assert_eq!(short.status.code(), Some(1));
    assert!(stdout(&short).lines().any(|l| l.starts_with("FAIL n= 2")));
}

#[test]
fn isi_map_single_point_is_two_tap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("point.toml");
    fs::write(&cfg, "alpha = [1.0]\ntau = [0.5]\n").unwrap();
    let o = psbm(dir.path(), &["--config", cfg.to_str().unwrap(), "isi-map"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out/isi_map.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.ends_with(",2")), "{csv}");
    assert!(stdout(&o).contains("near (1.0, 0.5)"));
}

#[test]
fn config_errors_are_all_listed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "alpha = [1.0]\nmu_thresholds = []\nbogus = 1\n").unwrap();
    let o = psbm(dir.path(), &["--config", cfg.to_str().unwrap(), "isi-map"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bogus") && err.contains("mu_thresholds"), "{err}");

    let ber = dir.path().join("ber.toml");
    fs::write(
        &ber,
        "[[experiment]]\nscheme = \"psbm\"\ndetector = \"sic\"\nmodulation_order = 3\nchannel = \"fog\"\n",
    )
    .unwrap();
    let o = psbm(dir.path(), &["--config", ber.to_str().unwrap(), "ber"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for field in ["channel", "modulation_order"] {
        assert!(err.contains(field), "{field} missing from {err}");
    }
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = psbm(dir.path(), &["--preset", "fig3", "ber"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("fig10"));
}

#[test]
fn spread_prob_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = psbm(dir.path(), &["--preset", "fig5", "spread-prob", "--kappa", "0,0.05,0.1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out/spread_prob.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,orthogonal,kappa_0,kappa_0.05,kappa_0.1"));
    assert!(csv.lines().any(|l| l == "4,0.375,0.375,0.375,0.375"));
    for line in lines {
        let v: Vec<f64> = line.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert!(v.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(v[1..].windows(2).all(|w| w[0] <= w[1]), "{line}");
    }
}

#[test]
fn frame_file_is_validated_and_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("frame.txt");
    fs::write(&good, "# pilot, data, pilot\npilot,1,0\ndata,-1,0\npilot,-1,0\n").unwrap();
    let o = psbm(dir.path(), &["--config", good.to_str().unwrap(), "frame"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("ISI-free data 1/1"));
    let echoed = fs::read_to_string(dir.path().join("out/frame.txt")).unwrap();
    assert_eq!(echoed, "pilot,1,0\ndata,-1,0\npilot,-1,0\n");

    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "pilot,1,0\nzero,1,0\n").unwrap();
    let o = psbm(dir.path(), &["--config", bad.to_str().unwrap(), "frame"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"));
}

#[test]
fn psd_of_multiplexed_pulse() {
    let dir = tempfile::tempdir().unwrap();
    let o = psbm(dir.path(), &["psd", "--points", "5"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("2.0000 symbols/s/Hz"));
    let csv = fs::read_to_string(dir.path().join("out/psd.csv")).unwrap();
    assert!(csv.starts_with("f,psd\n"));
}

const SMALL_BER: &str = "paired = true
[defaults]
snr_grid_db = [0.0, 4.0, 8.0]
min_errors = 50
[[experiment]]
name = \"nyq\"
scheme = \"nyquist\"
[[experiment]]
name = \"mux\"
scheme = \"psbm\"
detector = \"ml_wmf\"
ld = 2
";

#[test]
fn ber_is_reproducible_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL_BER).unwrap();
    let first = psbm(dir.path(), &["--config", cfg.to_str().unwrap(), "--threads", "1", "ber"]);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    assert!(stderr(&first).contains("master_seed not set"));
    let out = dir.path().join("out");
    let csv = fs::read(out.join("mux_psbm_ml_wmf_seed0.csv")).unwrap();
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("mux_psbm_ml_wmf_seed0.json")).unwrap()).unwrap();
    for key in ["config", "points", "manifest"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    let outputs = json["manifest"]["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    assert!(out.join("gap_nyq_vs_mux_seed0.json").exists());

    let again = dir.path().join("again");
    let o = Command::new(env!("CARGO_BIN_EXE_psbm"))
        .args(["--out", again.to_str().unwrap(), "--threads", "2", "--config"])
        .arg(out.join("mux_psbm_ml_wmf_seed0.json"))
        .arg("ber")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(again.join("mux_psbm_ml_wmf_seed0.csv")).unwrap(), csv);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL_BER).unwrap();
    let o = psbm(dir.path(), &["--config", cfg.to_str().unwrap(), "--seed", "42", "ber"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!stderr(&o).contains("master_seed not set"));
    assert!(dir.path().join("out/nyq_nyquist_slicer_seed42.csv").exists());
}
