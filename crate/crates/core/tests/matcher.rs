mod common;

use std::collections::BTreeSet;

use dip3d::candidates::{filter_candidates, match_stereo, ColumnInterval, MatchConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pairs(m: &[dip3d::MatchedCandidate]) -> BTreeSet<(u64, u64, u64, u64)> {
    m.iter()
        .map(|c| {
            (
                c.left.x.to_bits(),
                c.left.y.to_bits(),
                c.right.x.to_bits(),
                c.right.y.to_bits(),
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn equals_exhaustive_oracle(seed in any::<u64>(), ratio in 0.05..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (left, right) = common::random_instance(&mut rng, 20, 32);
        let cfg = MatchConfig { ratio_threshold: ratio, ..Default::default() };
        prop_assert_eq!(match_stereo(&left, &right, &cfg).unwrap(), common::oracle_match(&left, &right, &cfg));
    }

    #[test]
    fn accepted_matches_respect_geometry(seed in any::<u64>(), tol in 0.0..5.0f64, min_d in 0.5..30.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (left, right) = common::random_instance(&mut rng, 20, 8);
        let cfg = MatchConfig { ratio_threshold: 0.8, epipolar_tolerance_px: tol, min_disparity_px: min_d };
        for m in match_stereo(&left, &right, &cfg).unwrap() {
            prop_assert!(m.left.x - m.right.x >= min_d);
            prop_assert!((m.left.y - m.right.y).abs() <= tol);
        }
    }

    #[test]
    fn right_order_does_not_change_pairs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (left, right) = common::random_instance(&mut rng, 20, 16);
        let cfg = MatchConfig { ratio_threshold: 0.6, ..Default::default() };
        let mut shuffled = right.clone();
        shuffled.shuffle(&mut rng);
        prop_assert_eq!(
            pairs(&match_stereo(&left, &right, &cfg).unwrap()),
            pairs(&match_stereo(&left, &shuffled, &cfg).unwrap())
        );
    }

    #[test]
    fn mask_filter_is_idempotent(seed in any::<u64>(), a in 0.0..1600.0f64, b in 0.0..1600.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (features, _) = common::random_instance(&mut rng, 20, 4);
        let keep = ColumnInterval { min: a.min(b), max: a.max(b) };
        let once = filter_candidates(&features, &keep);
        prop_assert_eq!(filter_candidates(&once, &keep), once.clone());
        prop_assert!(once.iter().all(|c| keep.contains(c.point.x)));
    }
}

#[test]
fn instances_produce_matches() {
    // Guard against a generator that never yields anything to compare.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = MatchConfig::default();
    let total: usize = (0..200)
        .map(|_| {
            let (l, r) = common::random_instance(&mut rng, 20, 32);
            match_stereo(&l, &r, &cfg).unwrap().len()
        })
        .sum();
    assert!(total > 100, "only {total} matches");
}
