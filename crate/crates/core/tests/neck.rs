use proptest::prelude::*;

use caloric_core::neck::{greedy_neck_decomposition, DecompositionParams};
use caloric_core::{heat_polynomial, CaloricFunction, ParabolicBall, SpaceTimePoint};

fn h1_decomposition() -> caloric_core::neck::NeckDecomposition {
    let u = CaloricFunction::new(heat_polynomial(1, 1, 0));
    let ball = ParabolicBall::new(SpaceTimePoint::origin(1), 1.0).unwrap();
    greedy_neck_decomposition(&u, &ball, &DecompositionParams::new(2, 0.05, 0.05, 1.0 / 16.0)).unwrap()
}

#[test]
fn h1_necks_are_structurally_valid() {
    let dec = h1_decomposition();
    assert!(!dec.necks.is_empty());
    assert!(!dec.partial);
    for neck in &dec.necks {
        neck.validate().unwrap();
        assert!(neck.centers.points.iter().all(|p| neck.center_ball.contains_closed(p)));
        assert!(neck.model_plane.vertical);
    }
    assert!(dec.ledger.total() > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn h1_decomposition_covers_the_ball(x in -0.99..0.99f64, t in -0.99..0.99f64) {
        let dec = h1_decomposition();
        prop_assert!(dec.covers(&SpaceTimePoint::new(vec![x], t)));
    }
}
