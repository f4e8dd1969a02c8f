use std::path::Path;
use std::process::Command;

use cpf_repro::config::GridSpec;
use cpf_repro::{runs, Dataset, RunConfig};

fn cpf(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cpf"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn column(ds: &Dataset, name: &str) -> Vec<Option<f64>> {
    let i = ds.column(name).unwrap();
    ds.rows.iter().map(|r| r[i].parse().ok()).collect()
}

fn assert_paths_agree(ds: &Dataset) {
    let closed = column(ds, "cpf_closed");
    let table = column(ds, "cpf_table");
    for (a, b) in closed.iter().zip(&table) {
        match (a, b) {
            (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-9, "{a} vs {b}"),
            (None, None) => {}
            _ => panic!("one path undefined: {a:?} vs {b:?}"),
        }
    }
}

#[test]
fn figure2_curves_have_the_expected_shape() {
    let ds = runs::figure2(&RunConfig::default()).unwrap();
    assert_eq!(ds.rows.len(), 6 * 51);
    assert_paths_agree(&ds);
    let (s, g, v) = (ds.column("scheme").unwrap(), ds.column("gamma_tau_c").unwrap(), ds.column("cpf_closed").unwrap());
    for row in &ds.rows {
        let value: f64 = row[v].parse().unwrap();
        match (row[s].as_str(), row[g].as_str()) {
            ("zzz", _) => assert!(value >= 0.0),
            ("xzx", _) => assert!(value <= 0.0),
            other => panic!("{other:?}"),
        }
        if row[g] == "0.01" {
            assert!(value.abs() <= 0.01);
        }
    }
    assert_eq!(ds.rows[0][v], "0");
}

#[test]
fn sweep_agrees_with_the_enumeration() {
    let cfg = RunConfig::from_json(
        r#"{"state": {"a": [0.6, 0.0], "b": [0.0, 0.8]},
            "grid": {"t_max": 4.0, "steps": 8, "equal_times": false}}"#,
        Path::new("."),
    )
    .unwrap();
    let ds = runs::sweep(&cfg).unwrap();
    assert_eq!(ds.rows.len(), 3 * 81);
    assert_paths_agree(&ds);
    let closed = column(&ds, "cpf_closed");
    let oracle = column(&ds, "cpf_oracle");
    for (a, b) in closed.iter().zip(&oracle) {
        assert!((a.unwrap() - b.unwrap()).abs() < 1e-9);
    }
}

#[test]
fn tabulated_bath_reproduces_the_lorentzian_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let mut kernel = String::from("t,re\n");
    for i in 0..=1000 {
        let t = i as f64 * 0.01;
        kernel += &format!("{t},{}\n", 0.5 * (-t).exp());
    }
    std::fs::write(dir.path().join("kernel.csv"), kernel).unwrap();
    let text = r#"{"bath": {"tabulated": {"file": "kernel.csv", "gamma": 1.0}},
                   "schemes": ["zzz", "xzx"], "grid": {"t_max": 4.0, "steps": 20}}"#;
    std::fs::write(dir.path().join("run.json"), text).unwrap();
    let cfg = RunConfig::load(&dir.path().join("run.json")).unwrap();
    let tabulated = runs::sweep(&cfg).unwrap();
    let lorentzian = runs::sweep(&RunConfig {
        bath: Some(cpf_repro::config::BathSpec::Lorentzian { gamma: 1.0, tau_c: 1.0 }),
        ..cfg
    })
    .unwrap();
    assert_paths_agree(&tabulated);
    let (a, b) = (column(&tabulated, "cpf_closed"), column(&lorentzian, "cpf_closed"));
    for (a, b) in a.iter().zip(&b) {
        assert!((a.unwrap() - b.unwrap()).abs() < 1e-5);
    }
}

#[test]
fn fixed_tau_sweep_on_a_tabulated_bath() {
    let dir = tempfile::tempdir().unwrap();
    let mut kernel = String::from("t,re,im\n");
    for i in 0..=600 {
        let t = i as f64 * 0.01;
        kernel += &format!("{t},{},0\n", 0.25 * (-t / 0.5).exp());
    }
    std::fs::write(dir.path().join("k.csv"), kernel).unwrap();
    let text = r#"{"bath": {"tabulated": {"file": "k.csv"}}, "schemes": ["xzx"],
                   "grid": {"t_max": 2.0, "steps": 10, "equal_times": false, "tau": 1.0, "units": "absolute"}}"#;
    std::fs::write(dir.path().join("run.json"), text).unwrap();
    let ds = runs::sweep(&RunConfig::load(&dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(ds.rows.len(), 11);
    let expect = cpf_core::propagator::lorentzian_g_two_time(0.25, 0.5, 2.0, 1.0).unwrap();
    let last: f64 = ds.rows[10][ds.column("g_two_re").unwrap()].parse().unwrap();
    assert!((last - expect.re).abs() < 1e-5);
}

#[test]
fn witness_flags_zero_crossings() {
    let cfg = RunConfig {
        bath: Some(cpf_repro::config::BathSpec::Lorentzian { gamma: 1.0, tau_c: 1.0 }),
        grid: Some(GridSpec::new(8.0, 16)),
        ..RunConfig::default()
    };
    let ds = runs::witness(&cfg).unwrap();
    // G(t) vanishes at 3π/2 ≈ 4.71
    assert_eq!(ds.rows.len(), 10);
    assert!(ds.rows.last().unwrap()[6].contains("crosses zero"));
    assert!(ds.rows[..9].iter().all(|r| r[6].is_empty()));
}

#[test]
fn binary_writes_deterministic_files() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["figure2", "appendix-d", "witness", "sweep"] {
        let a = cpf(&[cmd, "--out", "a"], dir.path());
        assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
        let b = cpf(&[cmd, "--out", "b", "--threads", "3"], dir.path());
        assert!(b.status.success());
        let name = format!("{}.csv", cmd.replace('-', "_"));
        let (fa, fb) = (
            std::fs::read(dir.path().join("a").join(&name)).unwrap(),
            std::fs::read(dir.path().join("b").join(&name)).unwrap(),
        );
        assert_eq!(fa, fb, "{cmd}");
        let text = String::from_utf8(fa).unwrap();
        assert!(text.starts_with("# cpf-repro ") && !text.contains('\r'));
    }
}

#[test]
fn seed_flag_changes_noise_only() {
    let dir = tempfile::tempdir().unwrap();
    assert!(cpf(&["appendix-d", "--out", "a"], dir.path()).status.success());
    assert!(cpf(&["appendix-d", "--out", "b", "--seed", "99"], dir.path()).status.success());
    let read = |d: &str| std::fs::read_to_string(dir.path().join(d).join("appendix_d.csv")).unwrap();
    let (a, b) = (read("a"), read("b"));
    assert_ne!(a, b);
    assert!(b.contains("\"seed\":99"));
    let ideal = |s: &str| -> Vec<String> {
        s.lines().skip(4).map(|l| l.split(',').take(9).collect::<Vec<_>>().join(",")).collect()
    };
    assert_eq!(ideal(&a), ideal(&b));
}

#[test]
fn bad_configs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\n \"grid\": {\"t_max\": 5, \"steps\": 0}\n}").unwrap();
    let out = cpf(&["figure2", "--config", "bad.json"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.steps"));

    std::fs::write(dir.path().join("typo.json"), "{\n \"grdi\": {}\n}").unwrap();
    let out = cpf(&["figure2", "--config", "typo.json"], dir.path());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("grdi") && err.contains("line 2"), "{err}");
}

#[test]
fn validate_subcommand_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = cpf(&["validate"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.matches("PASS").count(), 4, "{text}");
}
