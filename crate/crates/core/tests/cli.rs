use std::fs;
use std::path::Path;

use bzbic::bloch::{BlochChannel, RegionConfig};
use bzbic::cli::{load_config, preset_names, run_from_args, RunConfig};
use bzbic::potential::LatticeConfig;
use bzbic::reaction::{solve_lattice_channel, Parity};
use bzbic::validation::fd_level_near;

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["bzbic"];
    full.extend_from_slice(args);
    run_from_args(full)
}

fn csv_files(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    for (command, preset) in [("eigens", "paper-fig4"), ("smatrix", "paper-fig11"), ("potential", "paper-fig1")] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let out_a = a.path().to_str().unwrap();
        let out_b = b.path().to_str().unwrap();
        assert_eq!(run(&[command, "--preset", preset, "--out", out_a, "--threads", "1"]), 0);
        assert_eq!(run(&[command, "--preset", preset, "--out", out_b, "--threads", "4"]), 0);
        let first = csv_files(a.path());
        assert!(!first.is_empty());
        let second = csv_files(b.path());
        assert_eq!(first.len(), second.len());
        for ((name, x), (_, y)) in first.iter().zip(&second) {
            assert!(x == y, "{command}: {name} differs between runs");
        }
    }
}

#[test]
fn manifest_lists_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["bands", "--preset", "paper-fig2", "--out", out]), 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("bands_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "bands");
    assert_eq!(manifest["preset"], "paper-fig2");
    for entry in manifest["outputs"].as_array().unwrap() {
        assert!(dir.path().join(entry["file"].as_str().unwrap()).exists());
    }
    let config = fs::read_to_string(dir.path().join("bands_config.toml")).unwrap();
    let reread = RunConfig::from_toml(&config).unwrap();
    assert_eq!(reread.hash(), manifest["config_sha256"].as_str().unwrap());
}

#[test]
fn numbers_use_twelve_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["potential", "--preset", "paper-fig1", "--out", out]), 0);
    let text = fs::read_to_string(dir.path().join("potential_grid.csv")).unwrap();
    let row = text.lines().nth(1).unwrap();
    for field in row.split(',') {
        let mantissa = field.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.len(), 13, "{field}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["frobnicate"]), 1);
    assert_eq!(run(&["eigens", "--preset", "paper-fig99", "--out", out]), 1);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[lattice]\nwell_depth = -1.0\n").unwrap();
    assert_eq!(run(&["potential", "--config", bad.to_str().unwrap(), "--out", out]), 1);

    fs::write(&bad, "[lattice]\nno_such_key = 1\n").unwrap();
    assert_eq!(run(&["potential", "--config", bad.to_str().unwrap(), "--out", out]), 1);

    let nome = dir.path().join("nome.toml");
    fs::write(&nome, "[lattice]\ntheta_width = 0.0\n").unwrap();
    assert_eq!(run(&["potential", "--config", nome.to_str().unwrap(), "--out", out]), 1);
}

#[test]
fn config_overrides_preset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("over.toml");
    fs::write(&path, "[region]\nhalf_width = 4.0\n").unwrap();
    let cfg = load_config(Some("paper-fig4"), Some(&path)).unwrap();
    assert_eq!(cfg.region.half_width, 4.0);
    let base = load_config(Some("paper-fig4"), None).unwrap();
    assert_eq!(cfg.eigens, base.eigens);
}

#[test]
fn every_preset_round_trips() {
    let names = preset_names();
    assert_eq!(names.len(), 12);
    for name in names {
        let cfg = load_config(Some(name), None).unwrap();
        cfg.validate().unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg.hash(), again.hash(), "{name}");
    }
}

#[test]
fn finite_differences_agree_with_spectral_levels() {
    let cfg = LatticeConfig::default();
    let region = RegionConfig::default();
    let gamma = BlochChannel::gamma();
    let basis = solve_lattice_channel(&cfg, &region, &gamma).unwrap();
    for target in [0.656436, 4.69882] {
        let j = basis.states_in(target - 0.01, target + 0.01)[0];
        let spectral = basis.eigenvalues[j];
        let fd = fd_level_near(&cfg, &gamma, region.half_width, 0.05, spectral, Parity::Odd).unwrap();
        assert!((fd - spectral).abs() < 0.01 * spectral.abs(), "{fd} vs {spectral}");
    }

    let k = 0.5;
    let off = BlochChannel::from_momentum(k);
    let basis = solve_lattice_channel(&cfg, &region, &off).unwrap();
    for j in [0, 4] {
        let spectral = basis.eigenvalues[j];
        let fd = fd_level_near(&cfg, &off, region.half_width, 0.05, spectral, Parity::None).unwrap();
        assert!((fd - spectral).abs() < 0.01 * spectral.abs().max(1.0), "K = {k}, j = {j}: {fd} vs {spectral}");
    }
}
