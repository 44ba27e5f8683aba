mod common;

use common::config_strategy;
use conelab::config::{from_csv, local_velocity, project, reflect, to_csv, unreflect};
use conelab::{Error, FiniteConfiguration, MarkAnnulus, MarkedPoint, PositionWindow, VectorDiscreteMeasure};
use proptest::prelude::*;

#[test]
fn duplicate_positions_are_rejected() {
    let p = MarkedPoint::new(vec![1.0], vec![0.5]).unwrap();
    let q = MarkedPoint::new(vec![-2.0], vec![0.5]).unwrap();
    assert!(matches!(FiniteConfiguration::new(vec![p, q]), Err(Error::DuplicatePosition(_))));
}

#[test]
fn zero_velocity_is_rejected() {
    assert!(matches!(MarkedPoint::new(vec![0.0, 0.0], vec![1.0, 1.0]), Err(Error::ZeroVelocity(_))));
}

#[test]
fn reflection_sums_nothing_for_the_empty_configuration() {
    assert_eq!(reflect(&FiniteConfiguration::empty()), VectorDiscreteMeasure::zero());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reflect_and_unreflect_are_inverse(gamma in config_strategy(12, 3)) {
        let eta = reflect(&gamma);
        prop_assert_eq!(eta.len(), gamma.len());
        prop_assert_eq!(&unreflect(&eta), &gamma);
        prop_assert_eq!(reflect(&unreflect(&eta)), eta);
    }

    #[test]
    fn local_velocity_is_additive(gamma in config_strategy(12, 2), cut in 0.0f64..12.0) {
        let whole = PositionWindow::new(vec![0.0, 0.0], vec![12.0, 1.0]).unwrap();
        let left = PositionWindow::new(vec![0.0, 0.0], vec![cut, 1.0]).unwrap();
        let right = PositionWindow::new(vec![cut, 0.0], vec![12.0, 1.0]).unwrap();
        let sum = local_velocity(&gamma, &left) + local_velocity(&gamma, &right);
        let total = local_velocity(&gamma, &whole);
        prop_assert!((sum - total).abs() <= 1e-12 * total.max(1.0));
        prop_assert!(total.is_finite());
    }

    #[test]
    fn projection_is_idempotent_and_monotone(gamma in config_strategy(12, 2), hi in 0.5f64..12.0, r in 0.2f64..2.0) {
        let eta = reflect(&gamma);
        let big = PositionWindow::new(vec![0.0, 0.0], vec![12.0, 1.0]).unwrap();
        let small = PositionWindow::new(vec![0.0, 0.0], vec![hi, 1.0]).unwrap();
        let marks = MarkAnnulus::new(r, 3.0).unwrap();
        let once = project(&eta, &big, &marks);
        prop_assert_eq!(&project(&once, &big, &marks), &once);
        let shrunk = project(&eta, &small, &marks);
        prop_assert!(shrunk.len() <= once.len());
        for x in shrunk.support() {
            prop_assert!(once.velocity_at(x).is_some());
        }
    }

    #[test]
    fn csv_round_trip(gamma in config_strategy(12, 3)) {
        let text = to_csv(&gamma, 3);
        prop_assert!(text.starts_with("x_1,x_2,x_3,v_1,v_2,v_3\n"));
        prop_assert_eq!(from_csv(&text).unwrap(), gamma);
    }

    #[test]
    fn subsets_partition_the_configuration(gamma in config_strategy(10, 1), mask in any::<u64>()) {
        let n = gamma.len();
        let m = if n == 0 { 0 } else { mask & ((1u64 << n) - 1) };
        let full = (1u64 << n) - 1;
        let a = gamma.subset(m);
        let b = gamma.subset(full & !m);
        prop_assert_eq!(a.len() + b.len(), n);
        prop_assert_eq!(a.union(&b).unwrap(), gamma);
    }
}
