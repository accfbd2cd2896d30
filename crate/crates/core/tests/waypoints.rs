mod common;

use asv_planner::reduce_waypoints;
use common::{brute_force_min, random_reduction_instance, reduction_vs_brute_force};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

#[test]
fn reduction_is_minimal_on_random_instances() {
    let rep = reduction_vs_brute_force(20, 0x5EED);
    assert_eq!(rep.cases, 20);
    assert!(rep.largest_input <= 12);
    assert!(rep.with_corners >= 10, "{rep:?}");
    assert_eq!(rep.mismatches, 0, "{rep:?}");
}

#[test]
fn brute_force_sees_through_free_space() {
    let set = asv_planner::ObstacleSet::default();
    let pts: Vec<_> = (0..6)
        .map(|k| asv_planner::Point2::new(k as f64, (k % 2) as f64))
        .collect();
    assert_eq!(brute_force_min(&pts, &set), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reduced_points_come_from_the_input(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let (raw, set) = random_reduction_instance(&mut rng);
        let out = reduce_waypoints(&raw, &set).waypoints;
        prop_assert!(out.len() >= 2 && out.len() <= raw.len());
        prop_assert_eq!(out[0], raw[0]);
        prop_assert_eq!(*out.last().unwrap(), *raw.last().unwrap());
        let mut cursor = 0;
        for p in &out {
            let at = raw[cursor..].iter().position(|q| q == p);
            prop_assert!(at.is_some(), "{:?} is not an input point in order", p);
            cursor += at.unwrap();
        }
        for w in out.windows(2) {
            prop_assert!(!set.segment_in_collision(w[0], w[1], true));
        }
    }
}
