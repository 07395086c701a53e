use proptest::prelude::*;
use torm::kinematics::DEFAULT_ROTATION_WEIGHT;
use torm::objective::weighted_pose_distance;
use torm::paths::{generate_path, PathGenerator};

const KINDS: [&str; 5] = ["line", "square", "s-curve", "polyline", "rotation"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn spacing_stays_within_ten_percent(kind in 0..KINDS.len(), spacing in 0.003..0.02f64) {
        let gen = PathGenerator::default_for(KINDS[kind]).unwrap();
        let path = generate_path(&gen, spacing, DEFAULT_ROTATION_WEIGHT).unwrap();
        for w in path.poses.windows(2) {
            let d = weighted_pose_distance(&w[0], &w[1], DEFAULT_ROTATION_WEIGHT);
            prop_assert!(d >= 0.9 * spacing && d <= 1.1 * spacing, "{} step {d} for spacing {spacing}", KINDS[kind]);
        }
    }
}
