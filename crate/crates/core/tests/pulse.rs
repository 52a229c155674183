use ioncool::config::CollisionConfig;
use ioncool::pulse::{synthesize_combine, synthesize_sbs};
use ioncool::units::IonSpecies;

fn pair(m1: f64, m2: f64, omega0_hz: f64) -> CollisionConfig {
    let mut file = CollisionConfig::ca_mg_default().to_file_struct();
    file.qubit_mass_u = m1;
    file.coolant_mass_u = m2;
    file.omega0_hz = omega0_hz;
    CollisionConfig::from_file_struct(&file).unwrap()
}

#[test]
fn scaled_waveform_depends_only_on_mass_ratio() {
    let reference = synthesize_sbs(&pair(40.0, 24.0, 1e6)).unwrap();
    for cfg in [pair(10.0, 6.0, 1e6), pair(40.0, 24.0, 3.3e6), pair(100.0, 60.0, 0.2e6)] {
        let wf = synthesize_sbs(&cfg).unwrap();
        assert_eq!(wf.times.len(), reference.times.len());
        assert!((wf.process_time - reference.process_time).abs() < 1e-12);
        for (a, b) in [(&wf.r, &reference.r), (&wf.xi1_sq, &reference.xi1_sq), (&wf.xi2_sq, &reference.xi2_sq)] {
            let worst = a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max);
            assert!(worst < 1e-12, "{worst}");
        }
    }
    // SI time does scale with the trap frequency
    let slow = pair(40.0, 24.0, 0.5e6);
    let t_us = slow.units.from_scaled(ioncool::units::Quantity::Time, reference.process_time) * 1e6;
    assert!((t_us - 2.0 * 8.32 / (2.0 * std::f64::consts::PI)).abs() < 1e-3, "{t_us}");
}

#[test]
fn looser_phase_tolerance_shortens_the_collision() {
    let tight = CollisionConfig::ca_mg_default();
    let mut loose = tight.clone();
    loose.phase_tolerance = 1e-2;
    let (a, b) = (synthesize_sbs(&tight).unwrap(), synthesize_sbs(&loose).unwrap());
    assert!(b.process_time < a.process_time, "{} !< {}", b.process_time, a.process_time);
}

#[test]
fn wider_bump_takes_longer() {
    let cfg = |s2: f64| CollisionConfig::ca_mg_default().with_sigma(s2.sqrt()).unwrap();
    let t: Vec<f64> = [1.5, 2.0, 3.0, 4.0].iter().map(|&s| synthesize_sbs(&cfg(s)).unwrap().process_time).collect();
    assert!(t.windows(2).all(|w| w[1] > w[0]), "{t:?}");
}

#[test]
fn excessive_width_is_an_error() {
    let r = CollisionConfig::ca_mg_default().with_sigma(1e4).and_then(|c| synthesize_sbs(&c));
    assert!(r.is_err());
}

#[test]
fn combine_requires_identical_ions() {
    let cfg = CollisionConfig::ca_mg_default();
    assert!(synthesize_combine(&cfg, 100.0).is_err());
    let same = cfg
        .with_species(IonSpecies::calcium40(), IonSpecies::calcium40())
        .unwrap();
    let wf = synthesize_combine(&same, 100.0).unwrap();
    assert!((wf.r[0] - 100.0).abs() < 1.0 && (wf.r.last().unwrap() - 1.0).abs() < 1e-2);
}
