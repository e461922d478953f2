use approx::assert_abs_diff_eq;
use deeplcc_core::controller::NoClock;
use deeplcc_core::fleet::*;
use deeplcc_core::hankel::{build_hankel, check_persistent_excitation};
use deeplcc_core::hdv::{equilibrium_spacing_inverse, ovm_desired_velocity};
use deeplcc_core::metrics::{compute_asve, reduction, EquilibriumMode};
use deeplcc_core::sim::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn signal(q: usize, t: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-1.0f64..1.0, q * t).prop_map(move |v| DMatrix::from_vec(q, t, v))
}

fn log_of(traces: &[Vec<f64>], dt: f64) -> SimulationLog {
    let mut log = SimulationLog::new(dt);
    for k in 0..traces[0].len() {
        let vehicles = traces
            .iter()
            .enumerate()
            .map(|(id, tr)| VehicleRecord {
                id,
                state: VehicleState {
                    velocity: tr[k],
                    ..Default::default()
                },
                is_cav: false,
                cmd_velocity: tr[k],
            })
            .collect();
        log.records.push(StepRecord {
            time: k as f64 * dt,
            vehicles,
            signals: None,
            input_source: None,
        });
    }
    log
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hankel_entries_are_shifted_samples(
        (q, t, order, s) in (1usize..4, 5usize..30)
            .prop_flat_map(|(q, t)| (Just(q), Just(t), 1..=t))
            .prop_flat_map(|(q, t, order)| (Just(q), Just(t), Just(order), signal(q, t)))
    ) {
        let h = build_hankel(&s, order).unwrap();
        prop_assert_eq!(h.shape(), (q * order, t - order + 1));
        for r in 0..order {
            for c in 0..h.ncols() {
                for i in 0..q {
                    prop_assert_eq!(h[(r * q + i, c)], s[(i, c + r)]);
                }
            }
        }
    }

    #[test]
    fn random_signals_are_exciting_and_collinear_ones_are_not(s in signal(2, 60), order in 1usize..8) {
        let pe = check_persistent_excitation(&s, order);
        prop_assert!(pe.satisfied);
        prop_assert_eq!(pe.rank, 2 * order);
        let mut dup = s.clone();
        let first = dup.row(0).into_owned() * 2.0;
        dup.row_mut(1).copy_from(&first);
        let pe = check_persistent_excitation(&dup, order);
        prop_assert!(!pe.satisfied);
        prop_assert_eq!(pe.rank, order);
    }

    #[test]
    fn ovm_inverse_round_trips(frac in 0.001f64..0.999, ring in any::<bool>()) {
        let p = if ring { OvmParams::RING_ROAD } else { OvmParams::STRAIGHT_ROAD };
        let s = p.s_st + frac * (p.s_go - p.s_st);
        let v = ovm_desired_velocity(s, &p);
        assert_abs_diff_eq!(equilibrium_spacing_inverse(v, &p).unwrap(), s, epsilon = 1e-9);
        let v2 = ovm_desired_velocity(equilibrium_spacing_inverse(frac * p.v_max, &p).unwrap(), &p);
        assert_abs_diff_eq!(v2, frac * p.v_max, epsilon = 1e-12);
    }

    #[test]
    fn desired_velocity_is_monotone(a in 0.0f64..2.0, b in 0.0f64..2.0) {
        let p = OvmParams::STRAIGHT_ROAD;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(ovm_desired_velocity(lo, &p) <= ovm_desired_velocity(hi, &p));
        prop_assert!((0.0..=p.v_max).contains(&ovm_desired_velocity(a, &p)));
    }

    #[test]
    fn output_centering_round_trips(y in proptest::collection::vec(0.0f64..1.5, 7), v in 0.05f64..0.5) {
        let eq = EquilibriumState { v_star: v, s_star: 0.8 };
        let e = raw_to_error_output(&y, eq, 5, 2).unwrap();
        let back = error_to_raw_output(&e, eq, 5, 2).unwrap();
        for (a, b) in y.iter().zip(&back) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn actuator_lag_interpolates(v in 0.0f64..0.6, v_cmd in 0.0f64..0.6, tau in 0.0f64..2.0) {
        let next = apply_actuator_lag(v, v_cmd, tau, 0.05);
        prop_assert!(next >= v.min(v_cmd) - 1e-15 && next <= v.max(v_cmd) + 1e-15);
    }

    #[test]
    fn asve_algebra(
        a in proptest::collection::vec(0.0f64..0.6, 20),
        b in proptest::collection::vec(0.0f64..0.6, 20),
        scale in 0.1f64..3.0,
    ) {
        let head = vec![0.3; 20];
        let log = log_of(&[head.clone(), a.clone(), b.clone()], 0.05);
        let pe = EquilibriumMode::Prescribed(0.3);
        let w = (0.0, 1.0);
        let both = compute_asve(&log, &[1, 2], pe, w).unwrap();
        let sum = compute_asve(&log, &[1], pe, w).unwrap() + compute_asve(&log, &[2], pe, w).unwrap();
        prop_assert!(both >= 0.0);
        assert_abs_diff_eq!(both, sum, epsilon = 1e-12);
        // with a constant head both reference modes agree
        let ee = compute_asve(&log, &[1, 2], EquilibriumMode::Estimated { head: 0, t_ini: 5 }, w).unwrap();
        assert_abs_diff_eq!(both, ee, epsilon = 1e-12);
        let scaled: Vec<f64> = a.iter().map(|x| 0.3 + scale * (x - 0.3)).collect();
        let log2 = log_of(&[head, scaled], 0.05);
        let s2 = compute_asve(&log2, &[1], pe, w).unwrap();
        assert_abs_diff_eq!(s2, scale * scale * compute_asve(&log, &[1], pe, w).unwrap(), epsilon = 1e-12);
        prop_assert_eq!(reduction(both, both), 0.0);
    }

    #[test]
    fn asve_splits_over_windows_and_ignores_order(
        a in proptest::collection::vec(0.0f64..0.6, 40),
        b in proptest::collection::vec(0.0f64..0.6, 40),
        cut in 1usize..39,
    ) {
        let head: Vec<f64> = (0..40).map(|k| 0.3 + 0.01 * (k as f64 * 0.7).sin()).collect();
        let log = log_of(&[head, a, b], 0.05);
        let mode = EquilibriumMode::Estimated { head: 0, t_ini: 4 };
        let t_cut = cut as f64 * 0.05;
        let whole = compute_asve(&log, &[1, 2], mode, (0.0, 2.0)).unwrap();
        let parts = compute_asve(&log, &[1, 2], mode, (0.0, t_cut)).unwrap()
            + compute_asve(&log, &[1, 2], mode, (t_cut, 2.0)).unwrap();
        assert_abs_diff_eq!(whole, parts, epsilon = 1e-9);
        let swapped = compute_asve(&log, &[2, 1], mode, (0.0, 2.0)).unwrap();
        assert_abs_diff_eq!(whole, swapped, epsilon = 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ring_conserves_length_and_is_deterministic(seed in any::<u64>(), jitter in 0.0f64..0.03, length in 0.0f64..0.2) {
        let mut ring = RingScenario::new().unwrap();
        ring.fleet.cav_set.clear();
        ring.settings.seed = seed;
        ring.settings.vehicle_length = length;
        ring.position_jitter = jitter;
        ring.phases = RingPhasePlan { t1: 0.0, t2: 10.0, t3: 15.0, t_end: 20.0 };
        let log = simulate_ring(&ring, None, &NoClock).unwrap();
        for rec in &log.records {
            let sum: f64 = rec.vehicles.iter().map(|v| v.state.spacing + length).sum();
            prop_assert!((sum - 6.77).abs() < 1e-9, "sum {}", sum);
        }
        prop_assert_eq!(&log, &simulate_ring(&ring, None, &NoClock).unwrap());
    }
}
