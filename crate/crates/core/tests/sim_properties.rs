use nalgebra::Vector2;
use proptest::prelude::*;
use pushnpg_core::sim::properties::{
    check_contacts, check_determinism, check_passivity, check_translation, Scenario, SHORT_ROLLOUT_STEPS,
};

fn cases() -> ProptestConfig {
    ProptestConfig {
        cases: 1000,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cases())]

    #[test]
    fn contacts_stay_in_friction_cone_and_shallow(seed in any::<u64>()) {
        let stats = check_contacts(&Scenario::random(seed), SHORT_ROLLOUT_STEPS);
        prop_assert!(stats.is_ok(), "{}", stats.unwrap_err());
    }

    #[test]
    fn free_object_loses_energy(seed in any::<u64>()) {
        let r = check_passivity(seed, 1000);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }

    #[test]
    fn repeated_runs_are_bitwise_identical(seed in any::<u64>()) {
        let r = check_determinism(&Scenario::random(seed), 10);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }

    #[test]
    fn common_translation_translates_the_run(
        seed in any::<u64>(),
        dx in -1.0f64..1.0,
        dy in -1.0f64..1.0,
    ) {
        let r = check_translation(&Scenario::random(seed), Vector2::new(dx, dy), 20);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }
}

#[test]
fn five_second_pushes_respect_penetration_bound() {
    for seed in 0..20 {
        let stats = check_contacts(&Scenario::random(seed), 500).unwrap();
        assert!(stats.max_penetration <= 5e-3);
    }
}

#[test]
fn randomized_scenarios_actually_touch_the_disk() {
    let touching = (0..100)
        .filter(|&s| check_contacts(&Scenario::random(s), SHORT_ROLLOUT_STEPS).unwrap().contact_samples > 0)
        .count();
    assert!(touching >= 50, "only {touching} of 100 scenarios made contact");
}
