mod common;

use common::lti::{platoon, S_STAR, V_STAR};
use deeplcc_core::fleet::{EquilibriumState, FleetConfig, OvmParams};
use deeplcc_core::hdv::build_lti_model;

#[test]
fn library_model_matches_hand_built_plant() {
    for cavs in [vec![], vec![2], vec![1, 3], vec![2, 4]] {
        let fleet = FleetConfig::open(5, cavs.clone()).unwrap();
        let eq = EquilibriumState {
            v_star: V_STAR,
            s_star: S_STAR,
        };
        let model = build_lti_model(&fleet, &OvmParams::STRAIGHT_ROAD, eq, 0.05).unwrap();
        let plant = platoon(5, &cavs, 0.05);
        assert!((&model.a - &plant.a).amax() < 1e-12, "{cavs:?}");
        assert!((&model.b - &plant.b).amax() < 1e-12);
        assert!((&model.h - &plant.h).amax() < 1e-12);
        assert!((&model.c - &plant.c).amax() < 1e-12);
    }
}

#[test]
fn any_oracle_trajectory_lies_in_the_data_span() {
    let r = common::lemma::run();
    assert!(r.pe_satisfied);
    assert!(r.worst_residual <= 1e-8, "residual {:e}", r.worst_residual);
    assert!(
        r.worst_prediction <= 1e-8,
        "prediction {:e}",
        r.worst_prediction
    );
}

#[test]
fn short_data_are_not_persistently_exciting() {
    use deeplcc_core::controller::DeepLccConfig;
    use deeplcc_core::hankel::{check_assumption_1, PeShortfall};
    let plant = platoon(3, &[2], 0.05);
    let dims = DeepLccConfig {
        t_ini: 6,
        horizon: 10,
        ..Default::default()
    }
    .dims(3, 1);
    let short = common::lemma::dataset(&plant, 40, 3);
    let pe = check_assumption_1(&short, dims);
    assert!(!pe.satisfied);
    assert!(matches!(
        pe.shortfall,
        Some(PeShortfall::TooFewSamples { .. })
    ));
}
