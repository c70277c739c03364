mod support;

use lobgap_core::engine::{extract_gap_series, OrderBook};
use lobgap_core::orderflow::{SessionStream, Side};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::brute::{random_stream, BruteBook};

fn check(seed: u64, len: usize) -> Result<(), TestCaseError> {
    let events = random_stream(&mut ChaCha8Rng::seed_from_u64(seed), len);
    let mut book = OrderBook::new();
    let mut brute = BruteBook::default();
    let mut expected_gaps = Vec::new();
    for ev in &events {
        let applied = book.apply(ev).unwrap();
        let (fills, missed) = brute.apply(ev);
        prop_assert_eq!(&applied.fills, &fills);
        prop_assert_eq!(applied.warning.is_some(), missed);
        for side in [Side::Buy, Side::Sell] {
            prop_assert_eq!(book.levels(side), brute.levels(side));
        }
        prop_assert!(book.check_invariants().is_ok());
        expected_gaps.push((brute.gap(Side::Buy), brute.gap(Side::Sell)));
    }
    let stream = SessionStream { instrument: "T".into(), trading_day: "D".into(), events };
    let replay = extract_gap_series(&stream).unwrap();
    for (i, (b, s)) in expected_gaps.into_iter().enumerate() {
        for (obs, want) in [(replay.buy.observations[i], b), (replay.sell.observations[i], s)] {
            match want {
                Some((g, d)) => {
                    prop_assert!(obs.defined);
                    prop_assert_eq!(obs.gap, g);
                    prop_assert_eq!(obs.tick_diff, d);
                }
                None => prop_assert!(!obs.defined),
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn engine_matches_quadratic_matcher(seed: u64, len in 1usize..400) {
        check(seed, len)?;
    }
}
