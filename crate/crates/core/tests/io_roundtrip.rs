use ioncool::config::CollisionConfig;
use ioncool::io::{
    load_waveform, parse_waveform_csv, synth_artifacts, verify_on_disk, waveform_csv, RunManifest, SynthKind,
    MANIFEST_NAME,
};
use ioncool::pulse::{synthesize_combine, synthesize_sbs, ProcessKind};
use ioncool::units::IonSpecies;
use ioncool::Error;
use proptest::prelude::*;

#[test]
fn sbs_round_trip_preserves_samples() {
    let wf = synthesize_sbs(&CollisionConfig::ca_mg_default()).unwrap();
    let back = parse_waveform_csv(&waveform_csv(&wf)).unwrap();
    assert_eq!(back.kind, ProcessKind::Sbs);
    assert_eq!(back.times, wf.times);
    assert_eq!(back.r, wf.r);
    assert_eq!(back.center2, wf.center2);
    assert!((back.mu - 0.6).abs() < 1e-12);
    for (a, b) in back.r_ddot.iter().zip(&wf.r_ddot) {
        assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
    }
    let s = back.validate().unwrap();
    assert!(s.max_coupling <= 1e-10 && s.max_omega_plus_deviation <= 1e-10);
    assert!(s.max_force_residual <= 1e-8);
    // written again, byte-identical
    assert_eq!(waveform_csv(&back), waveform_csv(&wf));
}

#[test]
fn combine_round_trip_detects_kind() {
    let cfg = CollisionConfig::ca_mg_default()
        .with_species(IonSpecies::calcium40(), IonSpecies::calcium40())
        .unwrap();
    let wf = synthesize_combine(&cfg, 100.0).unwrap();
    let back = parse_waveform_csv(&waveform_csv(&wf)).unwrap();
    assert_eq!(back.kind, ProcessKind::Combine);
    assert!((back.mu - 1.0).abs() < 1e-12);
    back.validate().unwrap();
}

#[test]
fn tampered_files_fail_validation() {
    let wf = synthesize_sbs(&CollisionConfig::ca_mg_default()).unwrap();
    let text = waveform_csv(&wf);
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // perturb a coolant centre: the two force balances no longer agree
    let mut cells: Vec<String> = lines[400].split(',').map(String::from).collect();
    let v: f64 = cells[5].parse().unwrap();
    cells[5] = format!("{:.16e}", v + 1e-4);
    lines[400] = cells.join(",");
    let e = parse_waveform_csv(&(lines.join("\n") + "\n")).unwrap_err();
    assert!(matches!(e, Error::Validation(_)), "{e}");
    // perturb ω₋² only: constraint-4 mismatch caught by validate
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[300].split(',').map(String::from).collect();
    let v: f64 = cells[6].parse().unwrap();
    cells[6] = format!("{:.16e}", v * (1.0 + 1e-6));
    lines[300] = cells.join(",");
    let wf2 = parse_waveform_csv(&(lines.join("\n") + "\n")).unwrap();
    assert!(matches!(wf2.validate(), Err(Error::Validation(_))));
}

#[test]
fn synth_manifest_replays_byte_identical() {
    let cfg = CollisionConfig::ca_mg_default();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (m1, out) = synth_artifacts(&cfg, SynthKind::Sbs, None, a.path()).unwrap();
    assert!((out.process_time - 8.32).abs() < 1e-12);
    let recorded = RunManifest::read(a.path().join(MANIFEST_NAME)).unwrap();
    assert_eq!(recorded, m1);
    // replay from the manifest alone
    let cfg2 = recorded.collision_config().unwrap();
    assert_eq!(cfg2, cfg);
    let (m2, _) = synth_artifacts(&cfg2, SynthKind::Sbs, None, b.path()).unwrap();
    assert_eq!(m1.artifacts, m2.artifacts);
    assert!(verify_on_disk(&m1, a.path()).iter().all(|c| c.identical));
    let (wf, _) = load_waveform(a.path().join("waveform.csv")).unwrap();
    assert_eq!(wf.len(), 833);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn round_trip_revalidates(sigma_sq in 1.5f64..4.0, mu in 0.3f64..2.5) {
        let cfg = CollisionConfig::ca_mg_default()
            .with_sigma(sigma_sq.sqrt()).unwrap()
            .with_species(IonSpecies::calcium40(), IonSpecies::new("c", 40.0 * mu).unwrap()).unwrap();
        let wf = synthesize_sbs(&cfg).unwrap();
        let text = waveform_csv(&wf);
        let back = parse_waveform_csv(&text).unwrap();
        prop_assert!(back.validate().is_ok());
        prop_assert!((back.mu - wf.mu).abs() < 1e-12);
        prop_assert_eq!(waveform_csv(&back), text);
    }
}
