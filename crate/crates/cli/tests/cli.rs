use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const CONFIG: &str = r#"
qubit_mass_u = 40.0
coolant_mass_u = 24.0
omega0_hz = 1.0e6
phase_tolerance = 1e-4
sample_dt_scaled = 0.01
strict_curvature = false

[ansatz]
kind = "gaussian_bump"
sigma_scaled = 1.4142135623730951
"#;

fn ioncool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ioncool"))
        .args(args)
        .env_remove("IONCOOL_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stderr)))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

fn synth(dir: &Path, cfg: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("synth");
    let mut args = vec!["synth", "--config", s(cfg), "--out", s(&out)];
    args.extend_from_slice(extra);
    let o = ioncool(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn synth_sbs_writes_waveform_and_manifest() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", CONFIG);
    let out = synth(d.path(), &cfg, &[]);
    let rows = csv_rows(&out.join("waveform.csv"));
    let span = rows.last().unwrap()[0] - rows[0][0];
    assert!((span - 8.3).abs() <= 0.1, "{span}");
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "synth");
    for a in m["artifacts"].as_array().unwrap() {
        let bytes = fs::read(out.join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(a["bytes"].as_u64().unwrap(), bytes.len() as u64);
    }
    assert_eq!(m["artifacts"].as_array().unwrap().len(), 3);
}

#[test]
fn synth_combine_spans_100_to_1() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", &CONFIG.replace("coolant_mass_u = 24.0", "coolant_mass_u = 40.0"));
    let out = synth(d.path(), &cfg, &["--kind", "combine", "--r-start", "100"]);
    let rows = csv_rows(&out.join("waveform.csv"));
    assert!((rows[0][1] - 100.0).abs() <= 1.0);
    assert!((rows.last().unwrap()[1] - 1.0).abs() <= 0.01);
    // unequal masses cannot merge
    let mixed = write_config(d.path(), "m.toml", CONFIG);
    let o = ioncool(&["synth", "--config", s(&mixed), "--kind", "combine", "--out", s(&d.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_config_names_the_key() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", &CONFIG.replace("omega0_hz = 1.0e6", "omega0_hz = -3.0"));
    let o = ioncool(&["synth", "--config", s(&cfg), "--out", s(&d.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["key"], "omega0_hz");
    assert_eq!(e["exit_code"], 2);
    let typo = write_config(d.path(), "t.toml", &format!("{CONFIG}\nsample_dt = 0.1\n"));
    let o = ioncool(&["synth", "--config", s(&typo), "--out", s(&d.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["key"], "ansatz.sample_dt");
}

#[test]
fn sim_thermal_swap_trace() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", CONFIG);
    let wf = synth(d.path(), &cfg, &[]).join("waveform.csv");
    let out = d.path().join("sim");
    let o = ioncool(&["sim", "--waveform", s(&wf), "--input", "thermal:5", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = csv_rows(&out.join("trace.csv"));
    let (first, last) = (&trace[0], trace.last().unwrap());
    assert!((first[1] - 5.0).abs() < 1e-12 && first[2].abs() < 1e-12);
    assert!(last[1] <= 1e-6 && (last[2] - 5.0).abs() <= 1e-6, "{last:?}");
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    for key in ["eta_minus_abs_final", "theta_diff_minus_pi", "swap_error", "n1_final", "n2_final", "symplectic_defect"] {
        assert!(report[key].is_number(), "{key}");
    }
    assert!(report["swap_error"].as_f64().unwrap() <= 1e-3);

    // vacuum in: only the parametric floor of the truncated ansatz remains
    let out = d.path().join("vac");
    let o = ioncool(&["sim", "--waveform", s(&wf), "--input", "vacuum", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let trace = csv_rows(&out.join("trace.csv"));
    assert!(trace[0][1..].iter().all(|n| n.abs() <= 1e-12));
    assert!(trace.last().unwrap()[1..].iter().all(|n| n.abs() <= 1e-6));
    // transient squeezing of the stretch mode, counted in the ω₀ frame
    let peak = trace.iter().map(|r| r[4]).fold(0.0, f64::max);
    assert!(peak > 0.1, "{peak}");
}

#[test]
fn sim_rejects_bad_inputs() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", CONFIG);
    let wf = synth(d.path(), &cfg, &[]).join("waveform.csv");
    // a corrupted sample breaks re-validation
    let text = fs::read_to_string(&wf).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[200].split(',').map(String::from).collect();
    cells[2] = "1.5".into();
    lines[200] = cells.join(",");
    let broken = d.path().join("broken.csv");
    fs::write(&broken, lines.join("\n")).unwrap();
    let o = ioncool(&["sim", "--waveform", s(&broken), "--out", s(&d.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let missing = d.path().join("nope.csv");
    let o = ioncool(&["sim", "--waveform", s(&missing), "--out", s(&d.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3));
    let o = ioncool(&["sim", "--waveform", s(&wf), "--input", "warm:3", "--out", s(&d.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["key"], "input");
    let o = ioncool(&[
        "sim", "--waveform", s(&wf), "--method", "fock", "--input", "fock:1", "--phases", "4", "--out",
        s(&d.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sim_fock_single_phonon() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", CONFIG);
    let wf = synth(d.path(), &cfg, &[]).join("waveform.csv");
    let out = d.path().join("fock");
    let o = ioncool(&["sim", "--waveform", s(&wf), "--method", "fock", "--input", "fock:1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert!(v["n1_final"].as_f64().unwrap() < 1e-6);
    assert!((v["n2_final"].as_f64().unwrap() - 1.0).abs() < 1e-6);

    let out = d.path().join("cubic");
    let o = ioncool(&[
        "sim", "--waveform", s(&wf), "--method", "fock", "--input", "fock:1", "--cubic", "on", "--cutoffs", "6,8,12",
        "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    let excess = v["qubit_excess"].as_f64().unwrap();
    assert!(excess > 0.0 && excess < 1e-5, "{excess}");
    let conv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(conv.lines().count(), 4);
    let trace = csv_rows(&out.join("trace.csv"));
    assert!(trace.iter().all(|r| (r[3] - 1.0).abs() < 1e-8));
}

#[test]
fn protocol_ledger_and_heating() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", CONFIG);
    let out = d.path().join("p");
    let o = ioncool(&["protocol", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert!((v["active_duration_scaled"].as_f64().unwrap() - 30.8).abs() <= 0.3);
    assert!(v["final_occupation"]["Q1"].as_f64().unwrap() <= 1e-6);
    assert!(v["final_occupation"]["Q2"].as_f64().unwrap() <= 1e-6);
    let doc: Value = serde_json::from_str(&fs::read_to_string(out.join("protocol.json")).unwrap()).unwrap();
    assert_eq!(doc["plan"]["steps"].as_array().unwrap().len(), 8);
    assert!(fs::read_to_string(out.join("timeline.csv")).unwrap().starts_with("step,kind,t_start,t_end,participants"));

    let out = d.path().join("h");
    let o = ioncool(&["protocol", "--config", s(&cfg), "--transport-heating", "0.1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&fs::read_to_string(out.join("protocol.json")).unwrap()).unwrap();
    let before_merge = &doc["ledger"]["entries"][6]["after"];
    assert!((before_merge["Q1"].as_f64().unwrap() - 0.1).abs() < 1e-5);
    assert!((before_merge["Q2"].as_f64().unwrap() - 0.2).abs() < 1e-5);

    let o = ioncool(&["protocol", "--config", s(&cfg), "--coolants", "1", "--out", s(&d.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["key"], "coolants");
}

#[test]
fn sweep_rows_and_status() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", CONFIG);
    let out = d.path().join("s");
    let o = ioncool(&["sweep", "--config", s(&cfg), "--values", "sqrt(2),sqrt(3),0.3", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let t: Vec<f64> = rows[..2].iter().map(|r| r[1].parse().unwrap()).collect();
    assert!((t[0] - 8.3).abs() <= 0.1 && (t[1] - 10.2).abs() <= 0.1, "{t:?}");
    assert_eq!(rows[0][5], "ok");
    assert_ne!(rows[2][5], "ok");

    let o = ioncool(&["sweep", "--config", s(&cfg), "--param", "sigma-sq", "--values", "2", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap().lines().count(), 2);

    let o = Command::new(env!("CARGO_BIN_EXE_ioncool"))
        .args(["sweep", "--config", s(&cfg), "--values", "2", "--out", s(&out)])
        .env("IONCOOL_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn replay_reproduces_every_command() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", CONFIG);
    let syn = synth(d.path(), &cfg, &[]);
    let wf = syn.join("waveform.csv");
    let runs: Vec<(PathBuf, Vec<String>)> = vec![
        (syn.clone(), vec![]),
        (d.path().join("sim"), vec!["sim".into(), "--waveform".into(), s(&wf).into()]),
        (d.path().join("pro"), vec!["protocol".into(), "--config".into(), s(&cfg).into()]),
        (d.path().join("swp"), vec!["sweep".into(), "--config".into(), s(&cfg).into(), "--values".into(), "1.5".into()]),
    ];
    for (dir, args) in &runs {
        if !args.is_empty() {
            let mut a: Vec<&str> = args.iter().map(String::as_str).collect();
            a.extend(["--out", s(dir)]);
            assert_eq!(ioncool(&a).status.code(), Some(0));
        }
        let fresh = d.path().join(format!("replay-{}", dir.file_name().unwrap().to_str().unwrap()));
        let o = ioncool(&["replay", "--manifest", s(&dir.join("manifest.json")), "--out", s(&fresh)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout_json(&o)["identical"], true);
        for a in fs::read_dir(dir).unwrap() {
            let name = a.unwrap().file_name();
            if name != "manifest.json" {
                assert_eq!(fs::read(dir.join(&name)).unwrap(), fs::read(fresh.join(&name)).unwrap());
            }
        }
    }
    // the sim input changed after the run: replay refuses
    fs::write(&wf, fs::read_to_string(&wf).unwrap().replace("e0,", "e0 ,")).unwrap();
    let o = ioncool(&["replay", "--manifest", s(&d.path().join("sim/manifest.json"))]);
    assert_eq!(o.status.code(), Some(3));
}
