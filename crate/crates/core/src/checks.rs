//! Self-check harness: named invariant checks grouped by suite, with optional
//! fault injection for exercising the harness itself.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::caloricpoly::{
    commutator_residuals, drift_apply, heat_polynomial, heat_residual, q_int, random_caloric, random_polynomial,
    CaloricPolynomial, DriftOperator,
};
use crate::frequency::{frequency_derivative, functionals_with_order, CaloricFunction, Functionals};
use crate::gaussquad::{exact_order_for_degree, integrate_fixed, integrate_poly, HeatKernelMeasure};
use crate::graph::{bmo_norm, dyadic_family, half_derivative_both, half_derivative_fourier, PlaneBall};
use crate::measures::{beta_number, PlaneFamily, WeightedCloud};
use crate::neck::{greedy_neck_decomposition, verify_neck, DecompositionParams};
use crate::spacetime::{independence_check, parabolic_distance, ParabolicBall, ParabolicPlane, SpaceTimePoint};
use crate::strata::{effective_nodal, zero_set, GridRegion, GridSpec};
use crate::symmetry::{symmetry_score, symmetry_score_fast};

/// Deliberate defects that the harness must detect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Flip the sign of E before forming N.
    EnergySign,
}

pub const SUITES: [&str; 9] =
    ["spacetime", "caloricpoly", "gaussquad", "frequency", "symmetry", "measures", "strata", "neck", "graph"];

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Gauss–Hermite order override; `None` uses the degree-exact order.
    pub quad_order: Option<usize>,
    pub faults: Vec<Fault>,
    pub seed: u64,
    /// Restrict to these suites; empty runs all.
    pub suites: Vec<String>,
}

impl VerifyOptions {
    fn has(&self, f: Fault) -> bool {
        self.faults.contains(&f)
    }

    fn order(&self, degree: u32) -> usize {
        self.quad_order.unwrap_or_else(|| exact_order_for_degree(degree))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn find(&self, suite: &str, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.suite == suite && c.name == name)
    }

    fn push(&mut self, suite: &str, name: &str, outcome: crate::Result<(bool, String)>) {
        let (passed, detail) = match outcome {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        self.checks.push(CheckResult { suite: suite.into(), name: name.into(), passed, detail });
    }
}

/// Run every selected suite and collect the outcomes.
pub fn run_verify(opts: &VerifyOptions) -> VerifyReport {
    let mut report = VerifyReport::default();
    let wanted = |s: &str| opts.suites.is_empty() || opts.suites.iter().any(|w| w == s);
    type Suite = fn(&VerifyOptions, &mut VerifyReport);
    let table: [(&str, Suite); 9] = [
        ("spacetime", spacetime_suite),
        ("caloricpoly", caloricpoly_suite),
        ("gaussquad", gaussquad_suite),
        ("frequency", frequency_suite),
        ("symmetry", symmetry_suite),
        ("measures", measures_suite),
        ("strata", strata_suite),
        ("neck", neck_suite),
        ("graph", graph_suite),
    ];
    for (name, suite) in table {
        if wanted(name) {
            suite(opts, &mut report);
        }
    }
    report
}

fn pt(x: &[f64], t: f64) -> SpaceTimePoint {
    SpaceTimePoint::new(x.to_vec(), t)
}

fn spacetime_suite(opts: &VerifyOptions, rep: &mut VerifyReport) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let pts: Vec<SpaceTimePoint> =
        (0..24).map(|_| pt(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], rng.gen_range(-1.0..1.0))).collect();
    rep.push("spacetime", "metric_triangle", (|| {
        let mut worst = f64::NEG_INFINITY;
        for a in &pts {
            for b in &pts {
                for c in pts.iter().step_by(3) {
                    let slack = parabolic_distance(a, c)? - parabolic_distance(a, b)? - parabolic_distance(b, c)?;
                    worst = worst.max(slack);
                }
            }
        }
        Ok((worst <= 1e-12, format!("max d(a,c) - d(a,b) - d(b,c) = {worst:e}")))
    })());
    rep.push("spacetime", "dilation_homogeneity", (|| {
        let mut worst = 0.0f64;
        for w in pts.windows(2) {
            let d = parabolic_distance(&w[0], &w[1])?;
            let dl = parabolic_distance(&w[0].dilate(3.0), &w[1].dilate(3.0))?;
            worst = worst.max((dl - 3.0 * d).abs());
        }
        Ok((worst <= 1e-12, format!("max |d(3x,3y) - 3 d(x,y)| = {worst:e}")))
    })());
    rep.push("spacetime", "independence_of_frame", (|| {
        let frame = vec![pt(&[0.0, 0.0], 0.0), pt(&[0.5, 0.0], 0.0), pt(&[0.0, 0.5], 0.0)];
        let line = vec![pt(&[0.0, 0.0], 0.0), pt(&[0.5, 0.0], 0.0), pt(&[-0.5, 0.0], 0.0)];
        let a = independence_check(&frame, 2, 0.1)?.is_independent();
        let b = independence_check(&line, 2, 0.1)?.is_independent();
        Ok((a && !b, format!("frame independent = {a}, collinear independent = {b}")))
    })());
}

fn caloricpoly_suite(opts: &VerifyOptions, rep: &mut VerifyReport) {
    rep.push("caloricpoly", "heat_polynomials_caloric", (|| {
        let mut bad = Vec::new();
        for n in 1..=3 {
            for axis in 0..n {
                for m in 0..=10 {
                    if !heat_residual(&heat_polynomial(n, m, axis)).is_zero() {
                        bad.push(format!("n={n} axis={axis} m={m}"));
                    }
                }
            }
        }
        Ok((bad.is_empty(), if bad.is_empty() { "all residuals zero".into() } else { bad.join("; ") }))
    })());
    rep.push("caloricpoly", "drift_eigen_identity", (|| {
        let mut bad = Vec::new();
        for n in 1..=3 {
            let a = DriftOperator::at_origin(n);
            for m in 0..=10 {
                let h = heat_polynomial(n, m, n - 1);
                if !drift_apply(&a, &h).add(&h.scale(&q_int(m as i64))).is_zero() {
                    bad.push(format!("n={n} m={m}"));
                }
            }
        }
        Ok((bad.is_empty(), if bad.is_empty() { "A h_m = -m h_m exactly".into() } else { bad.join("; ") }))
    })());
    rep.push("caloricpoly", "commutator_identities", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xc0);
        let x1 = DriftOperator::new(vec![q_int(1), q_int(-2)], q_int(3));
        let x2 = DriftOperator::new(vec![q_int(-1), q_int(2)], q_int(-1));
        let mut fails = 0;
        for i in 0..20 {
            let p = random_polynomial(&mut rng, 2, 5, 4);
            let (s, _) = commutator_residuals(&p, &x1, &x2);
            let c = random_caloric(&mut rng, 2, 5, 3);
            let (_, t) = commutator_residuals(&c, &x1, &x2);
            if !s.is_zero() || !t.is_zero() {
                fails = i + 1;
                break;
            }
        }
        Ok((fails == 0, if fails == 0 { "20 spatial and 20 temporal residuals vanish".into() } else { format!("nonzero residual at sample {fails}") }))
    })());
}

fn gaussquad_suite(opts: &VerifyOptions, rep: &mut VerifyReport) {
    rep.push("gaussquad", "quadrature_exactness", (|| {
        let base = SpaceTimePoint::origin(1);
        let mut worst = 0.0f64;
        let mut order_used = 0;
        for m in 0..=6u32 {
            let h = heat_polynomial(1, m, 0);
            let sq = h.mul(&h);
            let order = opts.order(sq.degree());
            order_used = order_used.max(order);
            let exact = crate::caloricpoly::q_to_f64(&integrate_poly(&sq, &[q_int(0)], &q_int(0), &q_int(1))?);
            let f = sq.to_float();
            let mu = HeatKernelMeasure::new(base.clone(), 1.0)?;
            let quad = integrate_fixed(&|x: &[f64]| f.eval(x, -1.0), &mu, order)?;
            worst = worst.max((quad - exact).abs() / exact.abs());
        }
        Ok((worst <= 1e-12, format!("max relative error {worst:e} on h_m^2, m <= 6, order <= {order_used}")))
    })());
    rep.push("gaussquad", "exact_orthogonality", (|| {
        let mut bad = Vec::new();
        for m in 0..=6u32 {
            for k in 0..m {
                let p = heat_polynomial(2, m, 0).mul(&heat_polynomial(2, k, 0));
                let v = integrate_poly(&p, &[q_int(0), q_int(0)], &q_int(0), &q_int(2))?;
                if v != q_int(0) {
                    bad.push(format!("({m},{k})"));
                }
            }
        }
        Ok((bad.is_empty(), if bad.is_empty() { "int h_m h_k dnu = 0 for k < m <= 6".into() } else { bad.join(" ") }))
    })());
    rep.push("gaussquad", "unit_mass", (|| {
        let v = integrate_poly(&CaloricPolynomial::one(3), &[q_int(1), q_int(0), q_int(-1)], &q_int(2), &q_int(5))?;
        Ok((v == q_int(1), format!("mass = {v}")))
    })());
}

/// Functionals with the configured order and any injected fault.
fn measured(opts: &VerifyOptions, u: &CaloricFunction, base: &SpaceTimePoint, tau: f64) -> crate::Result<Functionals> {
    let order = opts.order(2 * u.polynomial().parabolic_degree());
    let mut f = functionals_with_order(u, base, tau, order)?;
    if opts.has(Fault::EnergySign) {
        f.e = -f.e;
        f.n = f.e / f.h;
    }
    Ok(f)
}

fn frequency_suite(opts: &VerifyOptions, rep: &mut VerifyReport) {
    let origin = SpaceTimePoint::origin(1);
    rep.push("frequency", "heat_polynomial_frequency", (|| {
        let mut worst = 0.0f64;
        for m in 1..=8u32 {
            let u = CaloricFunction::new(heat_polynomial(1, m, 0));
            for tau in [0.25, 1.0, 4.0] {
                worst = worst.max((measured(opts, &u, &origin, tau)?.n - m as f64).abs());
            }
        }
        Ok((worst <= 1e-10, format!("max |N(h_m) - m| = {worst:e}")))
    })());
    rep.push("frequency", "closed_form_one_plus_h2", (|| {
        let u = CaloricFunction::new(CaloricPolynomial::one(1).add(&heat_polynomial(1, 2, 0)));
        let mut worst = 0.0f64;
        for tau in [0.1, 0.5, 1.0, 3.0] {
            let f = measured(opts, &u, &origin, tau)?;
            worst = worst.max((f.n - 16.0 * tau * tau / (1.0 + 8.0 * tau * tau)).abs());
        }
        let d1 = measured(opts, &u, &origin, 1.0)?.d;
        worst = worst.max((d1 - (33.0f64 / 9.0).log2()).abs());
        Ok((worst <= 1e-9, format!("max deviation from closed forms {worst:e}")))
    })());
    rep.push("frequency", "monotone_and_sandwiched", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xf1);
        let base = SpaceTimePoint::origin(2);
        let mut worst_mono = f64::INFINITY;
        let mut worst_sand = f64::NEG_INFINITY;
        for _ in 0..5 {
            let p = random_caloric(&mut rng, 2, 4, 3);
            if p.is_zero() {
                continue;
            }
            let u = CaloricFunction::new(p);
            let taus: Vec<f64> = (0..8).map(|i| 0.05 * 2f64.powf(i as f64 * 0.5)).collect();
            let rows: Vec<Functionals> = taus.iter().map(|&t| measured(opts, &u, &base, t)).collect::<crate::Result<_>>()?;
            for w in rows.windows(2) {
                worst_mono = worst_mono.min(w[1].n - w[0].n);
            }
            for f in &rows {
                let n2 = measured(opts, &u, &base, 2.0 * f.tau)?.n;
                worst_sand = worst_sand.max((f.n - f.d).max(f.d - n2));
            }
        }
        let ok = worst_mono >= -1e-9 && worst_sand <= 1e-9;
        Ok((ok, format!("min N increment {worst_mono:e}, max sandwich violation {worst_sand:e}")))
    })());
    rep.push("frequency", "derivative_matches_fd", (|| {
        let u = CaloricFunction::new(CaloricPolynomial::one(1).add(&heat_polynomial(1, 2, 0)).add(&heat_polynomial(1, 3, 0)));
        let d = frequency_derivative(&u, &origin, 0.7)?;
        let mut e = d.relative_error();
        if opts.has(Fault::EnergySign) {
            e = (d.analytic + d.finite_difference).abs() / d.analytic.abs().max(1e-300);
        }
        Ok((e < 1e-6, format!("relative error {e:e}")))
    })());
}

fn symmetry_suite(_opts: &VerifyOptions, rep: &mut VerifyReport) {
    let u = CaloricFunction::new(heat_polynomial(2, 1, 0));
    let x0 = SpaceTimePoint::origin(2);
    rep.push("symmetry", "invariant_directions_score_zero", (|| {
        let v = ParabolicPlane::coordinate(2, &[1], true);
        let s = symmetry_score(&u, &x0, 0.5, &v)?.score;
        Ok((s.abs() <= 1e-14, format!("score of h1 along e2 and t = {s:e}")))
    })());
    rep.push("symmetry", "fast_matches_quadrature", (|| {
        let w = CaloricFunction::new(heat_polynomial(2, 2, 0).add(&heat_polynomial(2, 1, 1)));
        let mut worst = 0.0f64;
        for (axes, vertical) in [(vec![0usize], false), (vec![1], false), (vec![0], true), (vec![1], true)] {
            let v = ParabolicPlane::coordinate(2, &axes, vertical);
            let a = symmetry_score(&w, &x0, 0.7, &v)?.score;
            let b = symmetry_score_fast(&w, &x0, 0.7, &v);
            worst = worst.max((a - b).abs());
        }
        Ok((worst <= 1e-10, format!("max |quadrature - fast| = {worst:e}")))
    })());
}

fn measures_suite(opts: &VerifyOptions, rep: &mut VerifyReport) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xb3);
    let planar: Vec<SpaceTimePoint> =
        (0..40).map(|_| pt(&[rng.gen_range(-0.5..0.5), 0.0], rng.gen_range(-0.2..0.2))).collect();
    let center = SpaceTimePoint::origin(2);
    rep.push("measures", "beta_zero_on_plane", (|| {
        let mu = WeightedCloud::uniform(planar.clone(), 1.0)?;
        let b = beta_number(&mu, &center, 1.0, 3, PlaneFamily::Vertical)?.value;
        Ok((b.abs() <= 1e-10, format!("beta^2 = {b:e}")))
    })());
    rep.push("measures", "beta_rescaling_invariance", (|| {
        let pts: Vec<SpaceTimePoint> = planar.iter().map(|p| p.translate(&[0.0, 0.1 * p.x[0] * p.x[0]], 0.0)).collect();
        let mu = WeightedCloud::uniform(pts, 1.0)?;
        let a = beta_number(&mu, &center, 1.0, 3, PlaneFamily::Vertical)?.value;
        let lam = 0.25;
        let scaled = mu.rescale(&center, lam, lam.powi(3));
        let b = beta_number(&scaled, &center, lam, 3, PlaneFamily::Vertical)?.value;
        Ok(((a - b).abs() <= 1e-10 * a.abs().max(1.0), format!("beta^2 {a:e} vs rescaled {b:e}")))
    })());
}

fn strata_suite(_opts: &VerifyOptions, rep: &mut VerifyReport) {
    let u = CaloricFunction::new(heat_polynomial(1, 1, 0));
    let ball = match ParabolicBall::new(SpaceTimePoint::origin(1), 1.0) {
        Ok(b) => b,
        Err(e) => return rep.push("strata", "setup", Err(e)),
    };
    let grid = match GridSpec::new(ball, 1.0 / 16.0) {
        Ok(g) => g,
        Err(e) => return rep.push("strata", "setup", Err(e)),
    };
    let z = zero_set(&u, &grid, false);
    rep.push("strata", "zero_set_inside_effective", (|| {
        let z = z.as_ref().map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
        let zr = effective_nodal(&u, &grid, 1.0 / 16.0, None)?;
        let ok = !z.is_empty() && z.is_subset_of(&zr);
        Ok((ok, format!("{} zero cells, {} effective cells", z.cell_count(), zr.cell_count())))
    })());
    rep.push("strata", "rle_roundtrip", (|| {
        let z = z.as_ref().map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
        let back = GridRegion::from_rle(&z.to_rle())?;
        let ok = back.is_subset_of(z) && z.is_subset_of(&back);
        Ok((ok, format!("{} cells round-tripped", back.cell_count())))
    })());
}

fn neck_suite(_opts: &VerifyOptions, rep: &mut VerifyReport) {
    rep.push("neck", "h1_neck_axioms", (|| {
        let u = CaloricFunction::new(heat_polynomial(1, 1, 0));
        let ball = ParabolicBall::new(SpaceTimePoint::origin(1), 1.0)?;
        let params = DecompositionParams::new(2, 0.05, 0.05, 1.0 / 16.0);
        let dec = greedy_neck_decomposition(&u, &ball, &params)?;
        let Some(neck) = dec.necks.first() else {
            return Ok((false, "no neck region emitted".into()));
        };
        let r = verify_neck(&u, neck, false, 2000)?;
        let failed: Vec<&str> = r.axioms.iter().filter(|a| !a.passed).map(|a| a.axiom.as_str()).collect();
        Ok((r.weak_passed(), format!("{} necks, {} centers, failing axioms: {:?}", dec.necks.len(), neck.len(), failed)))
    })());
}

fn graph_suite(opts: &VerifyOptions, rep: &mut VerifyReport) {
    use rand::Rng;
    rep.push("graph", "fourier_tone_identity", (|| {
        let n = 256;
        let dt = 1.0 / n as f64;
        let w = 2.0 * std::f64::consts::PI * 5.0;
        let phi: Vec<f64> = (0..n).map(|i| (w * i as f64 * dt).cos()).collect();
        let d = half_derivative_fourier(&phi, dt)?;
        let amp = w.sqrt();
        let err = (0..n).map(|i| (d[i] - amp * phi[i]).abs()).fold(0.0, f64::max);
        Ok((err <= 1e-10 * amp, format!("max deviation from sqrt(omega) cos {err:e}")))
    })());
    rep.push("graph", "backend_agreement", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9a);
        let n = 512;
        let dt = 1.0 / n as f64;
        let coef: Vec<(f64, f64)> = (1..=16).map(|_| (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))).collect();
        let phi: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                coef.iter()
                    .enumerate()
                    .map(|(k, (a, b))| {
                        let w = 2.0 * std::f64::consts::PI * (k + 1) as f64;
                        a * (w * t).cos() + b * (w * t).sin()
                    })
                    .sum()
            })
            .collect();
        let p = half_derivative_both(&phi, dt)?;
        Ok((p.relative_l2 < 1e-3, format!("relative L2 difference {:e}", p.relative_l2)))
    })());
    rep.push("graph", "bmo_of_constant", (|| {
        let coords: Vec<(Vec<f64>, f64)> =
            (0..16).flat_map(|i| (0..16).map(move |j| (vec![i as f64 / 16.0 - 0.5], j as f64 / 64.0 - 0.125))).collect();
        let vals = vec![2.5; coords.len()];
        let fam = dyadic_family(&PlaneBall { center: (vec![0.0], 0.0), radius: 0.5 }, 3);
        let b = bmo_norm(&coords, &vals, &fam)?;
        Ok((b == 0.0, format!("bmo = {b:e}")))
    })());
}
