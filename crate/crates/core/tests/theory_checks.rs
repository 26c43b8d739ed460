use fairshift_core::classifiers::plugin::Constraint;
use fairshift_core::theory::{
    check_limits, check_recovery, sample_complexity, sample_complexity_bound, BiasMode, DiscreteJointModel,
    WeightTable,
};

#[test]
fn biased_mass_table_misses_the_fair_rule_somewhere() {
    // The corrected table recovers everywhere; the biased-mass variant only
    // where the two coincide, so some seed and setting must disagree.
    let mut worst = 1.0f64;
    for seed in 0..20 {
        let model = DiscreteJointModel::random(16, 3, seed);
        for &lambda in &[-0.5, 0.3, 0.8] {
            let ok = check_recovery(&model, 0.2, BiasMode::Pos, lambda, Constraint::Eod, WeightTable::Corrected);
            assert_eq!(ok.unwrap().agreement, 1.0);
            if let Ok(r) = check_recovery(&model, 0.2, BiasMode::Pos, lambda, Constraint::Eod, WeightTable::BiasedMass) {
                worst = worst.min(r.agreement);
            }
        }
    }
    assert!(worst < 1.0);
}

#[test]
fn derived_limits_hold_for_every_lambda() {
    let model = DiscreteJointModel::random(16, 3, 11);
    for mode in BiasMode::BOTH {
        for c in [Constraint::Spd, Constraint::Eod] {
            for &l in &[-2.0, -0.5, 0.0, 0.5, 1.5] {
                let case = check_limits(&model, l, 1e-8, mode, c).unwrap();
                if case.derived.is_some() {
                    assert!(case.derived_holds(), "{c:?} {mode:?} {l}");
                }
            }
        }
    }
}

#[test]
fn complexity_scales_with_inverse_square_beta() {
    let full = sample_complexity_bound(1.0, 1.0, 0.1, 0.05).unwrap();
    let half = sample_complexity_bound(1.0, 0.5, 0.1, 0.05).unwrap();
    assert!((half / full - 4.0).abs() < 1e-12);
    assert_eq!(sample_complexity(1.0, 1.0, 0.1, 0.05).unwrap(), 47218);
    assert!(sample_complexity(0.0, 1.0, 0.1, 0.05).is_err());
}
