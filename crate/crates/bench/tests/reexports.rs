use caloric_bench::{heat_polynomial, CaloricFunction, SpaceTimePoint};

#[test]
fn core_items_are_reachable() {
    let u = CaloricFunction::new(heat_polynomial(1, 3, 0));
    assert!((u.frequency_fast(&SpaceTimePoint::origin(1), 0.5) - 3.0).abs() < 1e-12);
    assert!(caloric_bench::caloricpoly::is_caloric(u.polynomial()));
}
