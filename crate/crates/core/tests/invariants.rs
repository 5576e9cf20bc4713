use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use caloric_core::caloricpoly::{
    drift_apply, q_int, q_to_f64, random_caloric, random_polynomial, spectral_decompose, DriftOperator,
};
use caloric_core::frequency::functionals;
use caloric_core::gaussquad::{integrate_fixed, integrate_poly, HeatKernelMeasure};
use caloric_core::graph::{bmo_norm, dyadic_family, PlaneBall};
use caloric_core::measures::{beta_number, PlaneFamily, WeightedCloud};
use caloric_core::neck::{greedy_neck_decomposition, DecompositionParams};
use caloric_core::spacetime::{independence_check, parabolic_distance, plane_distance, Independence};
use caloric_core::strata::{effective_nodal, effective_nodal_point, minkowski_content, zero_set, GridSpec};
use caloric_core::symmetry::{best_symmetry_plane_in, symmetry_score, SymmetryMode};
use caloric_core::{heat_polynomial, CaloricFunction, CaloricPolynomial, ParabolicBall, ParabolicPlane, SpaceTimePoint, Q};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_point<R: Rng>(rng: &mut R, n: usize, s: f64) -> SpaceTimePoint {
    SpaceTimePoint::new((0..n).map(|_| rng.gen_range(-s..s)).collect(), rng.gen_range(-s..s))
}

#[test]
fn triangle_inequality_in_bulk() {
    let mut r = rng(1);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..100_000 {
        let n = 1 + i % 4;
        let (a, b, c) = (random_point(&mut r, n, 2.0), random_point(&mut r, n, 2.0), random_point(&mut r, n, 2.0));
        let slack = parabolic_distance(&a, &c).unwrap() - parabolic_distance(&a, &b).unwrap() - parabolic_distance(&b, &c).unwrap();
        worst = worst.max(slack);
    }
    assert!(worst <= 1e-12, "{worst}");
}

#[test]
fn eigen_identity_up_to_twelve() {
    for n in 1..=3 {
        let a = DriftOperator::at_origin(n);
        for axis in 0..n {
            for m in 0..=12u32 {
                let h = heat_polynomial(n, m, axis);
                assert!(drift_apply(&a, &h).add(&h.scale(&q_int(m as i64))).is_zero(), "n={n} axis={axis} m={m}");
            }
        }
    }
}

#[test]
fn one_dimensional_orthogonality_at_three_scales() {
    for tau in [Q::new(1.into(), 4.into()), Q::from_integer(1.into()), Q::from_integer(4.into())] {
        for m in 0..=10u32 {
            for k in 0..=10u32 {
                let v = integrate_poly(&heat_polynomial(1, m, 0).mul(&heat_polynomial(1, k, 0)), &[q_int(0)], &q_int(0), &tau).unwrap();
                let expect = if m == k {
                    let fact: i64 = (1..=m as i64).product();
                    q_int(fact) * num_traits::pow(tau.clone() * q_int(2), m as usize)
                } else {
                    q_int(0)
                };
                assert_eq!(v, expect, "m={m} k={k} tau={tau}");
            }
        }
    }
}

#[test]
fn spectral_pieces_resum_to_input() {
    let mut r = rng(4);
    for i in 0..40 {
        let n = 1 + i % 3;
        let u = random_caloric(&mut r, n, 6, 4);
        let base = DriftOperator::new((0..n).map(|_| Q::new(r.gen_range(-5i64..=5).into(), 3.into())).collect(), q_int(r.gen_range(-2..=2)));
        let pieces = spectral_decompose(&u, &base, &q_int(1)).unwrap();
        let sum = pieces.iter().fold(CaloricPolynomial::zero(n), |acc, (_, p)| acc.add(p));
        assert_eq!(sum, u);
        for (m, p) in &pieces {
            assert!(drift_apply(&base, p).add(&p.scale(&q_int(*m as i64))).is_zero());
        }
    }
}

#[test]
fn quadrature_matches_exact_moments() {
    let mut r = rng(5);
    for i in 0..30 {
        let n = 1 + i % 3;
        let order = 6;
        let q = random_polynomial(&mut r, n, (order - 1) as u32 / 2, 4);
        let p = q.mul(&q);
        if p.is_zero() || p.degree() as usize > 2 * order - 1 {
            continue;
        }
        let tau = Q::new(r.gen_range(1i64..=8).into(), 4.into());
        let x0: Vec<Q> = (0..n).map(|_| Q::new(r.gen_range(-4i64..=4).into(), 4.into())).collect();
        let exact = q_to_f64(&integrate_poly(&p, &x0, &q_int(0), &tau).unwrap());
        let base = SpaceTimePoint::new(x0.iter().map(q_to_f64).collect(), 0.0);
        let mu = HeatKernelMeasure::new(base, q_to_f64(&tau)).unwrap();
        let f = p.to_float();
        let t = -q_to_f64(&tau);
        let quad = integrate_fixed(&|x: &[f64]| f.eval(x, t), &mu, order).unwrap();
        assert!((quad - exact).abs() <= 1e-12 * exact.abs(), "{quad} vs {exact}");
    }
}

#[test]
fn h_is_nondecreasing_on_fifty_scales() {
    let mut r = rng(6);
    for i in 0..20 {
        let n = 1 + i % 3;
        let u = CaloricFunction::new(random_caloric(&mut r, n, 5, 4));
        let base = random_point(&mut r, n, 0.5);
        let hs: Vec<f64> = (0..50).map(|j| functionals(&u, &base, 0.01 * 1.12f64.powi(j)).unwrap().h).collect();
        for w in hs.windows(2) {
            assert!(w[1] >= w[0] * (1.0 - 1e-12), "{} < {}", w[1], w[0]);
        }
    }
}

/// (int u^4 dnu_{-tau1})^(1/4) <= (int u^2 dnu_{-tau2})^(1/2) with tau2 = 3 tau1.
#[test]
fn hypercontractivity_spot_check() {
    let mut r = rng(7);
    for i in 0..20 {
        let n = 1 + i % 3;
        let u = random_caloric(&mut r, n, 4, 3);
        let origin = vec![q_int(0); n];
        let tau1 = Q::new(r.gen_range(1i64..=6).into(), 4.into());
        let tau2 = tau1.clone() * q_int(3);
        let u2 = u.mul(&u);
        let l4 = q_to_f64(&integrate_poly(&u2.mul(&u2), &origin, &q_int(0), &tau1).unwrap()).powf(0.25);
        let l2 = q_to_f64(&integrate_poly(&u2, &origin, &q_int(0), &tau2).unwrap()).sqrt();
        assert!(l4 <= l2 * (1.0 + 1e-12), "case {i}: {l4} > {l2}");
    }
}

#[test]
fn frequency_drop_forces_integer_window() {
    let mixtures: Vec<CaloricPolynomial> = vec![
        heat_polynomial(1, 2, 0).add(&heat_polynomial(1, 3, 0).scale(&Q::new(1.into(), 20.into()))),
        heat_polynomial(2, 1, 0).add(&heat_polynomial(2, 2, 1).scale(&Q::new(1.into(), 10.into()))),
        CaloricPolynomial::one(1).add(&heat_polynomial(1, 1, 0).scale(&q_int(5))),
        heat_polynomial(2, 3, 0).add(&heat_polynomial(2, 1, 1).scale(&q_int(8))),
    ];
    let mut tested = 0;
    for p in mixtures {
        let u = CaloricFunction::new(p);
        let base = SpaceTimePoint::origin(u.n());
        let n_at = |s: f64| functionals(&u, &base, s).unwrap().n;
        for j in 0..24 {
            let tau = 0.01 * 1.5f64.powi(j);
            let delta = n_at(tau) - n_at(0.5 * tau);
            if delta > 0.05 {
                continue;
            }
            tested += 1;
            let window: Vec<f64> = (0..=16).map(|l| n_at(tau * (0.5 + l as f64 / 32.0))).collect();
            let ok = (0..=12).any(|m| window.iter().all(|v| (v - m as f64).abs() <= 6.0 * delta + 1e-9));
            assert!(ok, "tau={tau} delta={delta} window={window:?}");
        }
    }
    assert!(tested > 10);
}

/// s |pi_L grad D_s|^2 <= 16 / (ln 2)^2 (N_{2s;L} + N_{s;L}), gradient by central differences.
#[test]
fn doubling_gradient_bound() {
    use caloric_core::frequency::directional;
    let mut r = rng(8);
    let c = 16.0 / std::f64::consts::LN_2.powi(2);
    for _ in 0..20 {
        let u = CaloricFunction::new(random_caloric(&mut r, 2, 4, 3));
        let x = random_point(&mut r, 2, 0.5);
        let s: f64 = r.gen_range(0.05..1.0);
        let e = vec![1.0, 0.0];
        let step = 1e-4;
        let d_at = |dx: f64| functionals(&u, &x.translate(&[dx, 0.0], 0.0), s).unwrap().d;
        let grad = (d_at(step) - d_at(-step)) / (2.0 * step);
        let lhs = s * grad * grad;
        let rhs = c * (directional(&u, &x, 2.0 * s, &[e.clone()]).unwrap().n_l + directional(&u, &x, s, &[e]).unwrap().n_l);
        assert!(lhs <= rhs + 1e-8, "{lhs} > {rhs}");
    }
}

/// u(R x, t) for the rotation R = [[3/5, -4/5], [4/5, 3/5]].
fn rotate(u: &CaloricPolynomial) -> CaloricPolynomial {
    let (c, s) = (Q::new(3.into(), 5.into()), Q::new(4.into(), 5.into()));
    let x = CaloricPolynomial::x(2, 0);
    let y = CaloricPolynomial::x(2, 1);
    let rx = x.scale(&c).sub(&y.scale(&s));
    let ry = x.scale(&s).add(&y.scale(&c));
    let mut out = CaloricPolynomial::zero(2);
    for (e, coef) in u.terms() {
        let term = rx.pow(e[0]).mul(&ry.pow(e[1])).mul(&CaloricPolynomial::t(2).pow(e[2])).scale(coef);
        out = out.add(&term);
    }
    out
}

#[test]
fn symmetry_score_rotation_and_scale_invariance() {
    let mut r = rng(9);
    let x0 = SpaceTimePoint::origin(2);
    for _ in 0..10 {
        let p = random_caloric(&mut r, 2, 4, 3);
        let u = CaloricFunction::new(p.clone());
        let ur = CaloricFunction::new(rotate(&p));
        let uscaled = CaloricFunction::new(p.scale(&Q::new((-7).into(), 3.into())));
        let theta: f64 = r.gen_range(0.0..std::f64::consts::PI);
        let v = vec![theta.cos(), theta.sin()];
        let rt_v = vec![0.6 * v[0] + 0.8 * v[1], -0.8 * v[0] + 0.6 * v[1]];
        for vertical in [false, true] {
            let plane = ParabolicPlane::new(x0.clone(), &[v.clone()], vertical).unwrap();
            let rplane = ParabolicPlane::new(x0.clone(), &[rt_v.clone()], vertical).unwrap();
            let a = symmetry_score(&u, &x0, 0.6, &plane).unwrap().score;
            let b = symmetry_score(&ur, &x0, 0.6, &rplane).unwrap().score;
            let c = symmetry_score(&uscaled, &x0, 0.6, &plane).unwrap().score;
            assert!((a - b).abs() <= 1e-10 * (1.0 + a), "rotation {a} vs {b}");
            assert!((a - c).abs() <= 1e-10 * (1.0 + a), "scale {a} vs {c}");
        }
    }
}

#[test]
fn best_plane_beats_supplied_planes() {
    let mut r = rng(10);
    for i in 0..50 {
        let n = 2 + i % 2;
        let u = CaloricFunction::new(random_caloric(&mut r, n, 4, 3));
        let x0 = random_point(&mut r, n, 0.3);
        let dims = 1 + i % n.min(2);
        let vectors: Vec<Vec<f64>> = (0..dims).map(|_| (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        for (mode, vertical, k) in [(SymmetryMode::Spatial, false, dims), (SymmetryMode::Temporal, true, dims + 2)] {
            let plane = ParabolicPlane::new(x0.clone(), &vectors, vertical).unwrap();
            let supplied = symmetry_score(&u, &x0, 0.7, &plane).unwrap().score;
            let best = best_symmetry_plane_in(&u, &x0, 0.7, k, mode).unwrap().unwrap().score;
            assert!(best <= supplied + 1e-10, "case {i} {mode:?}: best {best} > supplied {supplied}");
        }
    }
}

/// score at s in [beta r, r] <= beta^(-2 Lambda) score at r with Lambda = N(1e5 r^2).
#[test]
fn symmetry_propagates_to_smaller_scales() {
    let mut r = rng(11);
    let x0 = SpaceTimePoint::origin(2);
    let beta = 0.25f64;
    for i in 0..12 {
        let u = CaloricFunction::new(random_caloric(&mut r, 2, 4, 3));
        let radius = 0.5;
        let lambda = functionals(&u, &x0, 1e5 * radius * radius).unwrap().n;
        let plane = ParabolicPlane::coordinate(2, &[i % 2], i % 3 == 0);
        let top = symmetry_score(&u, &x0, radius, &plane).unwrap().score;
        for j in 0..=8 {
            let s = radius * beta.powf(j as f64 / 8.0);
            let sc = symmetry_score(&u, &x0, s, &plane).unwrap().score;
            assert!(sc <= beta.powf(-2.0 * lambda) * top + 1e-12, "case {i} s={s}: {sc} vs top {top}");
        }
    }
}

#[test]
fn beta_decreases_under_restriction() {
    let mut r = rng(12);
    let c = SpaceTimePoint::origin(2);
    for _ in 0..40 {
        let pts: Vec<SpaceTimePoint> = (0..30).map(|_| random_point(&mut r, 2, 0.45)).collect();
        let w: Vec<f64> = (0..30).map(|_| r.gen_range(0.1..1.0)).collect();
        let keep: Vec<usize> = (0..30).filter(|_| r.gen_bool(0.6)).collect();
        if keep.is_empty() {
            continue;
        }
        let full = WeightedCloud::new(pts.clone(), w.clone()).unwrap();
        let sub = WeightedCloud::new(keep.iter().map(|&i| pts[i].clone()).collect(), keep.iter().map(|&i| w[i]).collect()).unwrap();
        for k in [2, 3] {
            let a = beta_number(&full, &c, 1.0, k, PlaneFamily::Vertical).unwrap().value;
            let b = beta_number(&sub, &c, 1.0, k, PlaneFamily::Vertical).unwrap().value;
            assert!(b <= a + 1e-12, "{b} > {a}");
        }
    }
}

#[test]
fn minkowski_content_grows_with_radius() {
    let u = CaloricFunction::new(heat_polynomial(2, 1, 0).mul(&heat_polynomial(2, 1, 1)));
    let ball = ParabolicBall::new(SpaceTimePoint::origin(2), 1.0).unwrap();
    let grid = GridSpec::new(ParabolicBall::new(SpaceTimePoint::origin(2), 1.5).unwrap(), 1.0 / 64.0).unwrap();
    let z = zero_set(&u, &grid, false).unwrap();
    let contents: Vec<f64> = (1..=4).map(|i| minkowski_content(&z, i as f64 / 8.0, &ball).unwrap()).collect();
    for w in contents.windows(2) {
        assert!(w[1] >= w[0], "{contents:?}");
    }
}

#[test]
fn nearly_constant_functions_are_not_nodal() {
    let mut r = rng(13);
    for _ in 0..10 {
        let pert = random_caloric(&mut r, 2, 3, 2);
        let scale = Q::new(1.into(), 200.into()) / (pert.max_abs_coefficient() + q_int(1));
        let u = CaloricFunction::new(CaloricPolynomial::one(2).add(&pert.scale(&scale)));
        let x = random_point(&mut r, 2, 0.5);
        assert!(!effective_nodal_point(&u, &x, 1.0 / 32.0).member);
    }
}

#[test]
fn ledger_stays_bounded_as_resolution_refines() {
    let ball1 = ParabolicBall::new(SpaceTimePoint::origin(1), 1.0).unwrap();
    let ball2 = ParabolicBall::new(SpaceTimePoint::origin(2), 1.0).unwrap();
    let h1 = CaloricFunction::new(heat_polynomial(1, 1, 0));
    let xy = CaloricFunction::new(heat_polynomial(2, 1, 0).mul(&heat_polynomial(2, 1, 1)));
    for (u, ball) in [(&h1, &ball1), (&xy, &ball2)] {
        for j in 4..=6 {
            let dec = greedy_neck_decomposition(u, ball, &DecompositionParams::new(2, 0.05, 0.05, 0.5f64.powi(j))).unwrap();
            let single = ball.radius.powi(2);
            assert!(dec.ledger.total().is_finite() && dec.ledger.total() <= 10.0 * single, "r_* = 2^-{j}: {}", dec.ledger.total());
        }
    }
}

#[test]
fn effective_nodal_points_avoid_b_ball_interiors() {
    let cases = [
        (CaloricFunction::new(heat_polynomial(1, 1, 0)), 1usize),
        (CaloricFunction::new(heat_polynomial(2, 1, 0).mul(&heat_polynomial(2, 1, 1))), 2),
    ];
    for (u, n) in cases {
        let ball = ParabolicBall::new(SpaceTimePoint::origin(n), 1.0).unwrap();
        let dec = greedy_neck_decomposition(&u, &ball, &DecompositionParams::new(2, 0.05, 0.05, 1.0 / 16.0)).unwrap();
        let grid = GridSpec::new(ball.clone(), 1.0 / 16.0).unwrap();
        let z = effective_nodal(&u, &grid, 1.0 / 16.0, None).unwrap();
        for (i, runs) in z.columns() {
            for &(a, b) in runs {
                for j in a..=b {
                    let p = grid.point(i, j);
                    assert!(!dec.b_balls.iter().any(|bb| bb.contains(&p)), "{p:?} inside a b-ball");
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plane_distance_vanishes_exactly_on_the_plane(seed in any::<u64>(), vertical in any::<bool>(), off in 0.01..1.0f64) {
        let mut r = rng(seed);
        let n = 3;
        let base = random_point(&mut r, n, 1.0);
        let v: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let plane = ParabolicPlane::new(base.clone(), &[v.clone()], vertical).unwrap();
        let a: f64 = r.gen_range(-2.0..2.0);
        let dt = if vertical { r.gen_range(-2.0..2.0) } else { 0.0 };
        let on = base.translate(&v.iter().map(|c| a * c).collect::<Vec<_>>(), dt);
        prop_assert!(plane_distance(&on, &plane).unwrap() <= 1e-12);
        let normal = plane.normal_basis()[0].clone();
        let away = on.translate(&normal.iter().map(|c| off * c).collect::<Vec<_>>(), 0.0);
        prop_assert!(plane_distance(&away, &plane).unwrap() > 1e-12);
    }

    #[test]
    fn certified_sets_escape_every_sampled_plane(seed in any::<u64>()) {
        let mut r = rng(seed);
        let pts: Vec<SpaceTimePoint> = (0..4).map(|_| random_point(&mut r, 2, 1.0)).collect();
        let k = 2;
        let alpha = 0.05;
        if let Independence::Independent(set) = independence_check(&pts, k, alpha).unwrap() {
            for _ in 0..200 {
                let base = random_point(&mut r, 2, 1.0);
                let theta: f64 = r.gen_range(0.0..std::f64::consts::PI);
                let plane = ParabolicPlane::new(base, &[vec![theta.cos(), theta.sin()]], false).unwrap();
                let far = set.points.iter().map(|p| plane_distance(p, &plane).unwrap()).fold(0.0, f64::max);
                prop_assert!(far > alpha);
            }
        }
    }

    #[test]
    fn bmo_is_invariant_under_parabolic_rescaling(seed in any::<u64>(), e in -2i32..=2) {
        let lam = 2f64.powi(e);
        let mut r = rng(seed);
        let coords: Vec<(Vec<f64>, f64)> =
            (0..12).flat_map(|i| (0..12).map(move |j| (vec![i as f64 / 12.0 - 0.5], j as f64 / 48.0 - 0.125))).collect();
        let vals: Vec<f64> = coords.iter().map(|_| r.gen_range(-1.0..1.0)).collect();
        let fam = dyadic_family(&PlaneBall { center: (vec![0.0], 0.0), radius: 0.5 }, 3);
        let scaled: Vec<(Vec<f64>, f64)> = coords.iter().map(|(v, t)| (vec![lam * v[0]], lam * lam * t)).collect();
        let sfam = dyadic_family(&PlaneBall { center: (vec![0.0], 0.0), radius: 0.5 * lam }, 3);
        let a = bmo_norm(&coords, &vals, &fam).unwrap();
        let b = bmo_norm(&scaled, &vals, &sfam).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
    }
}
