use std::path::Path;
use std::process::Command;

use maisteer_cli::output::{read_csv, write_csv};
use maisteer_cli::{execute, ConfigFile, Experiment, Overrides, Table};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_maisteer"))
}

fn flags(out: &Path) -> Overrides {
    Overrides {
        out: Some(out.to_path_buf()),
        ..Overrides::default()
    }
}

#[test]
fn csv_round_trip_and_line_count() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let rows: Vec<Vec<f64>> = (0..21).map(|i| vec![0.05 * i as f64, (i as f64).sqrt() / 3.0, -1e-9 * i as f64]).collect();
    let table = Table::new(&["mu", "a", "b"], rows.clone());
    write_csv(&table, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 22);
    let back = read_csv(&path).unwrap();
    assert_eq!(back.header, table.header);
    for (r, s) in rows.iter().zip(&back.rows) {
        for (x, y) in r.iter().zip(s) {
            assert!((x - y).abs() <= 1e-11 * x.abs().max(1e-300));
        }
    }
}

#[test]
fn empty_table_creates_no_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    assert!(write_csv(&Table::new(&["x"], Vec::new()), &path).is_err());
    assert!(!path.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn cv_noise_rows_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cv.csv");
    execute(Experiment::CvNoise, ConfigFile::default(), flags(&out)).unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "sigma,r,r2,delta_R_L,delta_R_MAI");
    assert_eq!(text.lines().count(), 45);
}

#[test]
fn reruns_overwrite_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let file = ConfigFile::parse("N = 6\n[grid]\nmu = [0.0, 0.4]\n[optimizer]\ntheta_grid = 8\nmu2_grid = 8").unwrap();
    let mut f = flags(&out);
    f.svg = true;
    let written = execute(Experiment::SteeringSweep, file.clone(), f.clone()).unwrap();
    assert_eq!(written.len(), 2);
    let first = std::fs::read(&out).unwrap();
    execute(Experiment::SteeringSweep, file, f).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), first);
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().next().unwrap(), "mu,delta_R_L,delta_R_MAI,delta_F,theta_X,theta_Y,mu2");
    assert_eq!(text.lines().count(), 3);
    assert!(std::fs::read_to_string(out.with_extension("svg")).unwrap().starts_with("<svg"));
}

#[test]
fn binary_reports_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "N = 99\n").unwrap();
    let out = bin()
        .args(["steering-sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("x.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`N`"));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn binary_runs_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("w.toml");
    std::fs::write(&cfg, "N = 6\n[grid]\nmu = [0.8]\n[wigner]\nstage = \"mai\"\nn_theta = 8\nn_phi = 16\n").unwrap();
    let csv = dir.path().join("w.csv");
    let out = bin()
        .args(["wigner-snapshot", "--threads", "2", "--seed", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = read_csv(&csv).unwrap();
    assert_eq!(table.header, ["theta", "phi", "W"]);
    assert_eq!(table.rows.len(), 128);
}
