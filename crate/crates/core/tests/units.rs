use ioncool::units::{characteristic_length, IonSpecies, Quantity, UnitSystem};
use proptest::prelude::*;

const TAGS: [&str; 5] = ["time", "length", "frequency_sq", "curvature", "energy"];

#[test]
fn unknown_tag_is_rejected() {
    let u = UnitSystem::new(IonSpecies::calcium40().mass_kg(), 2e6 * std::f64::consts::PI).unwrap();
    assert!(u.to_scaled_tagged("velocity", 1.0).is_err());
    assert!(u.from_scaled_tagged("", 1.0).is_err());
}

#[test]
fn coulomb_constant_is_one_half() {
    let u = UnitSystem::new(IonSpecies::magnesium24().mass_kg(), 2e6 * std::f64::consts::PI * 2.7).unwrap();
    assert!((u.coulomb_k() - 0.5).abs() < 1e-12);
}

#[test]
fn nonpositive_inputs_fail() {
    assert!(characteristic_length(0.0, 1.0).is_err());
    assert!(characteristic_length(1e-25, -1.0).is_err());
    assert!(IonSpecies::new("x", 0.0).is_err());
}

proptest! {
    #[test]
    fn tagged_round_trip(
        mass_u in 1.0f64..250.0,
        f_mhz in 0.05f64..20.0,
        exp in -12i32..12,
        mantissa in -9.9f64..9.9,
        tag in 0usize..TAGS.len(),
    ) {
        let u = UnitSystem::new(IonSpecies::new("x", mass_u).unwrap().mass_kg(), 2e6 * std::f64::consts::PI * f_mhz).unwrap();
        let v = mantissa * 10f64.powi(exp);
        let back = u.from_scaled_tagged(TAGS[tag], u.to_scaled_tagged(TAGS[tag], v).unwrap()).unwrap();
        prop_assert!((back - v).abs() <= 1e-12 * v.abs());
        let q: Quantity = TAGS[tag].parse().unwrap();
        prop_assert_eq!(q.to_string(), TAGS[tag]);
    }
}
