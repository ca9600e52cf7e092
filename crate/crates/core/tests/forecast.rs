use chainscale_core::forecast::{predict_next, SampleSeries};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn constant_series_is_a_fixed_point(c in 0.0f64..1e6, len in 1usize..=10) {
        let s = SampleSeries::from_values(10, &vec![c; len]);
        prop_assert_eq!(predict_next(&s, c).unwrap().0, c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100_000))]

    #[test]
    fn predictions_are_never_negative(
        values in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1e5, -10.0f64..10.0], 1..=10),
        u in prop_oneof![Just(0.0), 0.0f64..1e5],
    ) {
        let s = SampleSeries::from_values(10, &values);
        let p = predict_next(&s, u).unwrap().0;
        prop_assert!(p >= 0.0 && p.is_finite(), "{p}");
    }
}

#[test]
fn empty_history_is_an_error() {
    assert!(predict_next(&SampleSeries::new(10), 3.0).is_err());
}
