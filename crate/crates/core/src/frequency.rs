//! Frequency functionals H, E, N, D of a caloric polynomial, their derivative,
//! pinching, pinched-scale search and eigenfunction residuals.
//!
//! Two evaluation routes exist. The quadrature route integrates against
//! the heat kernel measure with a Gauss–Hermite rule of exact order. The
//! profile route expands u about the base point once and stores H, the
//! gradient Gram matrix and the time-derivative energy as polynomials in tau;
//! it is what the bulk geometric algorithms call.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caloricpoly::{q_from_f64, q_to_f64, spectral_decompose, CaloricPolynomial, DriftOperator, FloatPoly};
use crate::error::{check_dim, Error, Result};
use crate::gaussquad::{exact_order_for_degree, integrate_fixed, integrate_poly, HeatKernelMeasure};
use crate::linalg::orthonormalize;
use crate::spacetime::{independence_check, parabolic_distance_unchecked, Independence, IndependentSet, SpaceTimePoint};

/// H below this value is treated as a vanishing function.
pub const TOL_ZERO: f64 = 1e-300;
/// Tolerance on monotonicity violations of the frequency.
pub const TOL_MONO: f64 = 1e-9;

const CACHE_LIMIT: usize = 400_000;

/// A caloric (or at least polynomial) function together with the derived
/// floating-point data the numeric routines need.
pub struct CaloricFunction {
    exact: CaloricPolynomial,
    float: FloatPoly,
    grad: Vec<FloatPoly>,
    dt: FloatPoly,
    lap: FloatPoly,
    time_invariant: bool,
    cache: Mutex<HashMap<Vec<u64>, Arc<SpectralProfile>>>,
}

impl std::fmt::Debug for CaloricFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CaloricFunction({})", self.exact)
    }
}

impl Clone for CaloricFunction {
    fn clone(&self) -> Self {
        Self::new(self.exact.clone())
    }
}

impl From<CaloricPolynomial> for CaloricFunction {
    fn from(p: CaloricPolynomial) -> Self {
        Self::new(p)
    }
}

impl CaloricFunction {
    pub fn new(p: CaloricPolynomial) -> Self {
        let n = p.n();
        let float = p.to_float();
        let grad: Vec<FloatPoly> = (0..n).map(|i| float.partial(i)).collect();
        let dt = float.partial(n);
        let lap_terms: Vec<(Vec<u32>, f64)> = grad
            .iter()
            .enumerate()
            .flat_map(|(i, g)| g.partial(i).terms)
            .collect();
        let lap = merge_terms(n, lap_terms);
        let time_invariant = !float.depends_on_t();
        Self { exact: p, float, grad, dt, lap, time_invariant, cache: Mutex::new(HashMap::new()) }
    }

    /// Like `new` but rejects polynomials that do not solve the heat equation.
    pub fn caloric(p: CaloricPolynomial) -> Result<Self> {
        let res = crate::caloricpoly::heat_residual(&p);
        if !res.is_zero() {
            return Err(Error::NotCaloric { nonzero_terms: res.num_terms() });
        }
        Ok(Self::new(p))
    }

    pub fn n(&self) -> usize {
        self.exact.n()
    }

    pub fn polynomial(&self) -> &CaloricPolynomial {
        &self.exact
    }

    pub fn float(&self) -> &FloatPoly {
        &self.float
    }

    pub fn is_time_invariant(&self) -> bool {
        self.time_invariant
    }

    pub fn eval(&self, p: &SpaceTimePoint) -> f64 {
        self.float.eval(&p.x, p.t)
    }

    pub fn eval_at(&self, x: &[f64], t: f64) -> f64 {
        self.float.eval(x, t)
    }

    pub fn gradient_at(&self, x: &[f64], t: f64) -> Vec<f64> {
        self.grad.iter().map(|g| g.eval(x, t)).collect()
    }

    pub fn dt_at(&self, x: &[f64], t: f64) -> f64 {
        self.dt.eval(x, t)
    }

    pub fn laplacian_at(&self, x: &[f64], t: f64) -> f64 {
        self.lap.eval(x, t)
    }

    /// Gauss–Hermite order that integrates u^2 exactly.
    pub fn exact_order(&self) -> usize {
        exact_order_for_degree(2 * self.exact.degree()).max(2)
    }

    /// Spectral profile at `base`, memoized.
    pub fn profile(&self, base: &SpaceTimePoint) -> Arc<SpectralProfile> {
        let mut key: Vec<u64> = base.x.iter().map(|v| v.to_bits()).collect();
        if !self.time_invariant {
            key.push(base.t.to_bits());
        }
        if let Some(p) = self.cache.lock().get(&key) {
            return p.clone();
        }
        let prof = Arc::new(SpectralProfile::build(&self.float, base));
        let mut cache = self.cache.lock();
        if cache.len() > CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, prof.clone());
        prof
    }

    /// N(tau) at `base` via the profile route.
    pub fn frequency_fast(&self, base: &SpaceTimePoint, tau: f64) -> f64 {
        self.profile(base).frequency(tau)
    }

    /// E_r = N(8 r^2) - N(r^2 / 8) via the profile route.
    pub fn pinching_fast(&self, base: &SpaceTimePoint, r: f64) -> f64 {
        let p = self.profile(base);
        p.frequency(8.0 * r * r) - p.frequency(r * r / 8.0)
    }
}

fn merge_terms(n: usize, terms: Vec<(Vec<u32>, f64)>) -> FloatPoly {
    let mut acc: HashMap<Vec<u32>, f64> = HashMap::new();
    for (e, c) in terms {
        *acc.entry(e).or_insert(0.0) += c;
    }
    let mut v: Vec<(Vec<u32>, f64)> = acc.into_iter().collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    FloatPoly::new(n, v)
}

type Piece = Vec<(Vec<u32>, f64)>;

/// Moments E[z^p] of z ~ N(0, 2).
fn moment_table(max: usize) -> Vec<f64> {
    let mut m = vec![0.0; max + 1];
    m[0] = 1.0;
    let mut p = 2;
    while p <= max {
        m[p] = m[p - 2] * (p as f64 - 1.0) * 2.0;
        p += 2;
    }
    m
}

fn inner(a: &Piece, b: &Piece, moments: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (ea, ca) in a {
        for (eb, cb) in b {
            let mut v = ca * cb;
            for (x, y) in ea.iter().zip(eb) {
                v *= moments[(x + y) as usize];
                if v == 0.0 {
                    break;
                }
            }
            acc += v;
        }
    }
    acc
}

/// H, the gradient Gram matrix and the time-derivative energy at one base
/// point, stored as polynomials in tau.
#[derive(Debug, Clone)]
pub struct SpectralProfile {
    n: usize,
    /// H(tau) = sum_i h[i] tau^i.
    h: Vec<f64>,
    /// int grad u (x) grad u dnu = sum_i gram[i] tau^i.
    gram: Vec<DMatrix<f64>>,
    grad_trace: Vec<f64>,
    /// int (d_t u)^2 dnu = sum_i dt[i] tau^i.
    dt: Vec<f64>,
}

impl SpectralProfile {
    /// Writing u(x0 + sqrt(tau) z, t0 - tau) = sum_m tau^(m/2) q_m(z), every
    /// integral against nu_{x0; t0 - tau} becomes a Gaussian moment sum.
    pub fn build(u: &FloatPoly, base: &SpaceTimePoint) -> Self {
        let n = u.n;
        let local = u.shifted(&base.x, base.t);
        let mut max_m = 0usize;
        for (e, _) in &local.terms {
            let m = e[..n].iter().sum::<u32>() as usize + 2 * e[n] as usize;
            max_m = max_m.max(m);
        }
        let mut q: Vec<Piece> = vec![Vec::new(); max_m + 1];
        let mut dq: Vec<Piece> = vec![Vec::new(); max_m + 1];
        let mut gq: Vec<Vec<Piece>> = vec![vec![Vec::new(); n]; max_m + 1];
        for (e, c) in &local.terms {
            let alpha: Vec<u32> = e[..n].to_vec();
            let k = e[n];
            let m = alpha.iter().sum::<u32>() as usize + 2 * k as usize;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            q[m].push((alpha.clone(), sign * c));
            if k > 0 {
                dq[m].push((alpha.clone(), -sign * c * k as f64));
            }
            for i in 0..n {
                if alpha[i] > 0 {
                    let mut a = alpha.clone();
                    a[i] -= 1;
                    gq[m][i].push((a, sign * c * alpha[i] as f64));
                }
            }
        }
        let moments = moment_table(2 * max_m + 2);
        let len = max_m + 1;
        let mut h = vec![0.0; len];
        let mut gram = vec![DMatrix::zeros(n, n); len];
        let mut dt = vec![0.0; len];
        for m1 in 0..=max_m {
            for m2 in 0..=max_m {
                if (m1 + m2) % 2 == 1 {
                    continue;
                }
                let j = (m1 + m2) / 2;
                if !q[m1].is_empty() && !q[m2].is_empty() {
                    h[j] += inner(&q[m1], &q[m2], &moments);
                }
                if m1 >= 1 && m2 >= 1 {
                    for a in 0..n {
                        if gq[m1][a].is_empty() {
                            continue;
                        }
                        for b in 0..n {
                            if !gq[m2][b].is_empty() {
                                gram[j - 1][(a, b)] += inner(&gq[m1][a], &gq[m2][b], &moments);
                            }
                        }
                    }
                }
                if m1 >= 2 && m2 >= 2 && !dq[m1].is_empty() && !dq[m2].is_empty() {
                    dt[j - 2] += inner(&dq[m1], &dq[m2], &moments);
                }
            }
        }
        let grad_trace = gram.iter().map(|g| g.trace()).collect();
        Self { n, h, gram, grad_trace, dt }
    }

    fn horner(c: &[f64], tau: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, v| acc * tau + v)
    }

    pub fn h(&self, tau: f64) -> f64 {
        Self::horner(&self.h, tau)
    }

    /// int |grad u|^2 dnu.
    pub fn grad_sq(&self, tau: f64) -> f64 {
        Self::horner(&self.grad_trace, tau)
    }

    /// int grad u (x) grad u dnu.
    pub fn grad_gram(&self, tau: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for g in self.gram.iter().rev() {
            out = out * tau + g;
        }
        out
    }

    /// int (d_t u)^2 dnu.
    pub fn dt_sq(&self, tau: f64) -> f64 {
        Self::horner(&self.dt, tau)
    }

    pub fn energy(&self, tau: f64) -> f64 {
        2.0 * tau * self.grad_sq(tau)
    }

    pub fn frequency(&self, tau: f64) -> f64 {
        let h = self.h(tau);
        if h <= TOL_ZERO {
            return 0.0;
        }
        self.energy(tau) / h
    }

    pub fn doubling(&self, tau: f64) -> f64 {
        (self.h(2.0 * tau) / self.h(tau)).log2()
    }
}

/// Values of the four functionals at one scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Functionals {
    pub tau: f64,
    pub h: f64,
    pub e: f64,
    pub n: f64,
    pub d: f64,
}

/// H, E, N, D over a grid of scales at one base point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyProfile {
    pub base: SpaceTimePoint,
    pub taus: Vec<f64>,
    pub h: Vec<f64>,
    pub e: Vec<f64>,
    pub n: Vec<f64>,
    pub d: Vec<f64>,
}

impl FrequencyProfile {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,H,E,N,D\n");
        for i in 0..self.taus.len() {
            s.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                self.taus[i], self.h[i], self.e[i], self.n[i], self.d[i]
            ));
        }
        s
    }
}

fn check_base(u: &CaloricFunction, base: &SpaceTimePoint) -> Result<()> {
    check_dim(u.n(), base.dim())
}

fn measure(base: &SpaceTimePoint, tau: f64) -> Result<HeatKernelMeasure> {
    HeatKernelMeasure::new(base.clone(), tau)
}

/// int f(x, t0 - tau) dnu_{base; t0 - tau} with the given order.
fn integrate_at(
    f: &(dyn Fn(&[f64], f64) -> f64 + Sync),
    base: &SpaceTimePoint,
    tau: f64,
    order: usize,
) -> Result<f64> {
    let mu = measure(base, tau)?;
    let t = base.t - tau;
    integrate_fixed(&|x: &[f64]| f(x, t), &mu, order)
}

/// H, E, N and D at scale tau with the exact quadrature order.
pub fn functionals(u: &CaloricFunction, base: &SpaceTimePoint, tau: f64) -> Result<Functionals> {
    functionals_with_order(u, base, tau, u.exact_order())
}

/// Same as `functionals` with an explicit Gauss–Hermite order.
pub fn functionals_with_order(
    u: &CaloricFunction,
    base: &SpaceTimePoint,
    tau: f64,
    order: usize,
) -> Result<Functionals> {
    check_base(u, base)?;
    let sq = |x: &[f64], t: f64| {
        let v = u.eval_at(x, t);
        v * v
    };
    let h = integrate_at(&sq, base, tau, order)?;
    if !(h > TOL_ZERO) {
        return Err(Error::Degenerate { h, tau });
    }
    let h2 = integrate_at(&sq, base, 2.0 * tau, order)?;
    let g = integrate_at(
        &|x: &[f64], t: f64| u.grad.iter().map(|p| p.eval(x, t).powi(2)).sum(),
        base,
        tau,
        order,
    )?;
    let e = 2.0 * tau * g;
    Ok(Functionals { tau, h, e, n: e / h, d: (h2 / h).log2() })
}

/// N(tau) via quadrature.
pub fn frequency(u: &CaloricFunction, base: &SpaceTimePoint, tau: f64) -> Result<f64> {
    Ok(functionals(u, base, tau)?.n)
}

/// Geometric grid from tau_min to tau_max (inclusive up to round-off).
pub fn geometric_taus(tau_min: f64, tau_max: f64, ratio: f64) -> Result<Vec<f64>> {
    if !(tau_min > 0.0 && tau_max >= tau_min && ratio > 1.0) {
        return Err(Error::InvalidArgument("need 0 < tau_min <= tau_max and ratio > 1".into()));
    }
    let steps = ((tau_max / tau_min).ln() / ratio.ln() + 1e-9).floor() as usize;
    Ok((0..=steps).map(|i| tau_min * ratio.powi(i as i32)).collect())
}

/// Default tau-grid ratio 2^(1/8).
pub fn default_tau_ratio() -> f64 {
    2f64.powf(0.125)
}

/// Functionals over a grid of scales, computed in parallel.
pub fn frequency_profile(u: &CaloricFunction, base: &SpaceTimePoint, taus: &[f64]) -> Result<FrequencyProfile> {
    let rows: Vec<Functionals> = taus.par_iter().map(|&t| functionals(u, base, t)).collect::<Result<_>>()?;
    Ok(FrequencyProfile {
        base: base.clone(),
        taus: taus.to_vec(),
        h: rows.iter().map(|r| r.h).collect(),
        e: rows.iter().map(|r| r.e).collect(),
        n: rows.iter().map(|r| r.n).collect(),
        d: rows.iter().map(|r| r.d).collect(),
    })
}

/// Directional frequency and time-derivative ratio at scale s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Directional {
    pub s: f64,
    pub n_l: f64,
    pub t_s: f64,
}

/// N_{s;L} = 2 s int |pi_L grad u|^2 dnu / H(s) and T_s = 2 s^2 int (d_t u)^2 dnu / H(s).
pub fn directional(u: &CaloricFunction, base: &SpaceTimePoint, s: f64, l: &[Vec<f64>]) -> Result<Directional> {
    check_base(u, base)?;
    for v in l {
        check_dim(u.n(), v.len())?;
    }
    let basis = orthonormalize(l, 1e-12);
    let order = u.exact_order();
    let h = integrate_at(
        &|x: &[f64], t: f64| {
            let v = u.eval_at(x, t);
            v * v
        },
        base,
        s,
        order,
    )?;
    if !(h > TOL_ZERO) {
        return Err(Error::Degenerate { h, tau: s });
    }
    let proj = integrate_at(
        &|x: &[f64], t: f64| {
            let g = u.gradient_at(x, t);
            basis.iter().map(|e| crate::linalg::dot(&g, e).powi(2)).sum()
        },
        base,
        s,
        order,
    )?;
    let dt = integrate_at(&|x: &[f64], t: f64| u.dt_at(x, t).powi(2), base, s, order)?;
    Ok(Directional { s, n_l: 2.0 * s * proj / h, t_s: 2.0 * s * s * dt / h })
}

/// N'(tau) by the analytic residual formula and by finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyDerivative {
    pub tau: f64,
    pub analytic: f64,
    pub finite_difference: f64,
}

impl FrequencyDerivative {
    pub fn relative_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.finite_difference.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.analytic - self.finite_difference).abs() / scale
        }
    }
}

/// Log-step used by the finite-difference derivative.
pub const FD_LOG_STEP: f64 = 1e-2;

/// int (Delta_f u + N/(2 tau) u)^2 dnu at scale tau.
fn eigen_defect(u: &CaloricFunction, base: &SpaceTimePoint, tau: f64, n_val: f64, order: usize) -> Result<f64> {
    let x0 = base.x.clone();
    integrate_at(
        &|x: &[f64], t: f64| {
            let g = u.gradient_at(x, t);
            let drift: f64 = x.iter().zip(&x0).zip(&g).map(|((a, b), gi)| (a - b) * gi).sum();
            let r = u.laplacian_at(x, t) - drift / (2.0 * tau) + n_val / (2.0 * tau) * u.eval_at(x, t);
            r * r
        },
        base,
        tau,
        order,
    )
}

/// Analytic N' = (4 tau / H) int (Delta_f u + N/(2 tau) u)^2 dnu, valid for
/// caloric u, against a five-point central difference in log tau.
pub fn frequency_derivative(u: &CaloricFunction, base: &SpaceTimePoint, tau: f64) -> Result<FrequencyDerivative> {
    let f = functionals(u, base, tau)?;
    let order = u.exact_order() + 2;
    let defect = eigen_defect(u, base, tau, f.n, order)?;
    let analytic = 4.0 * tau / f.h * defect;
    let h = FD_LOG_STEP;
    let nv = |k: f64| -> Result<f64> { Ok(functionals(u, base, tau * (k * h).exp())?.n) };
    let dlog = (-nv(2.0)? + 8.0 * nv(1.0)? - 8.0 * nv(-1.0)? + nv(-2.0)?) / (12.0 * h);
    Ok(FrequencyDerivative { tau, analytic, finite_difference: dlog / tau })
}

/// E_r = N(8 r^2) - N(r^2 / 8) via quadrature.
pub fn pinching(u: &CaloricFunction, base: &SpaceTimePoint, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("r must be positive, got {r}")));
    }
    Ok(frequency(u, base, 8.0 * r * r)? - frequency(u, base, r * r / 8.0)?)
}

/// Outcome of the (k, alpha r)-pinching search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PinchingReport {
    pub r: f64,
    /// Single-point pinching at the base.
    pub e_r: f64,
    /// Upper bound for the infimum over sampled independent subsets; `None`
    /// when no independent subset exists among the candidates.
    pub kalpha_pinching: Option<f64>,
    pub witness_set: Option<IndependentSet>,
    pub candidates: usize,
}

impl PinchingReport {
    pub fn search_failed(&self) -> bool {
        self.kalpha_pinching.is_none()
    }
}

/// Candidate points in P(base, r/10): a lattice with spacing alpha r / 40
/// (at most 9 points per axis) and 10 k uniformly random points.
pub fn pinching_candidates(base: &SpaceTimePoint, r: f64, alpha: f64, k: usize, seed: u64) -> Vec<SpaceTimePoint> {
    let n = base.dim();
    let rad = r / 10.0;
    let spacing = alpha * r / 40.0;
    let mut per_axis = ((2.0 * rad / spacing).floor() as usize + 1).min(9);
    if per_axis % 2 == 0 {
        per_axis -= 1;
    }
    let per_axis = per_axis.max(1);
    let reach = 0.95;
    let offsets = |half: f64| -> Vec<f64> {
        if per_axis == 1 {
            return vec![0.0];
        }
        (0..per_axis)
            .map(|i| -reach * half + 2.0 * reach * half * i as f64 / (per_axis - 1) as f64)
            .collect()
    };
    let xs = offsets(rad);
    let ts = offsets(rad * rad);
    let mut out = Vec::new();
    let total = per_axis.pow(n as u32);
    for flat in 0..total {
        let mut rem = flat;
        let dx: Vec<f64> = (0..n)
            .map(|_| {
                let v = xs[rem % per_axis];
                rem /= per_axis;
                v
            })
            .collect();
        if crate::linalg::norm(&dx) >= rad {
            continue;
        }
        for &dt in &ts {
            out.push(base.translate(&dx, dt));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut added = 0;
    while added < 10 * k {
        let dx: Vec<f64> = (0..n).map(|_| rng.gen_range(-reach..reach) * rad).collect();
        if crate::linalg::norm(&dx) >= reach * rad {
            continue;
        }
        let dt = rng.gen_range(-reach..reach) * rad * rad;
        out.push(base.translate(&dx, dt));
        added += 1;
    }
    out
}

fn sorted_pinching(u: &CaloricFunction, r: f64, candidates: &[SpaceTimePoint]) -> Vec<(f64, usize)> {
    let mut vals: Vec<(f64, usize)> =
        candidates.iter().enumerate().map(|(i, y)| (u.pinching_fast(y, r), i)).collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    vals
}

/// (k, alpha r)-pinching: the smallest value p such that the candidates with
/// E_r <= p contain a (k, alpha r / 20)-independent subset.
///
/// Independence is monotone under enlarging the set, so the search is a
/// bisection over the candidates sorted by pinching.
pub fn kalpha_pinching(
    u: &CaloricFunction,
    base: &SpaceTimePoint,
    r: f64,
    k: usize,
    alpha: f64,
    candidates: &[SpaceTimePoint],
) -> Result<PinchingReport> {
    check_base(u, base)?;
    if !(r > 0.0 && alpha > 0.0) {
        return Err(Error::InvalidArgument("r and alpha must be positive".into()));
    }
    for y in candidates {
        check_dim(u.n(), y.dim())?;
        if parabolic_distance_unchecked(base, y) >= r / 10.0 {
            return Err(Error::InvalidArgument(format!("candidate {y:?} is not in P(x, r/10)")));
        }
    }
    let e_r = pinching(u, base, r)?;
    let sorted = sorted_pinching(u, r, candidates);
    let radius = alpha * r / 20.0;
    let prefix = |len: usize| -> Result<Independence> {
        let pts: Vec<SpaceTimePoint> = sorted[..len].iter().map(|&(_, i)| candidates[i].clone()).collect();
        independence_check(&pts, k, radius)
    };
    let full = if sorted.is_empty() { None } else { Some(prefix(sorted.len())?) };
    let Some(Independence::Independent(_)) = full else {
        return Ok(PinchingReport { r, e_r, kalpha_pinching: None, witness_set: None, candidates: candidates.len() });
    };
    let (mut lo, mut hi) = (1usize, sorted.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if prefix(mid)?.is_independent() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let witness = match prefix(lo)? {
        Independence::Independent(s) => s,
        Independence::Dependent { .. } => unreachable!("bisection ends on an independent prefix"),
    };
    Ok(PinchingReport {
        r,
        e_r,
        kalpha_pinching: Some(sorted[lo - 1].0),
        witness_set: Some(witness),
        candidates: candidates.len(),
    })
}

/// Whether the (k, alpha r)-pinching is below `eps`, i.e. whether the
/// candidates with E_r < eps form a (k, alpha r / 20)-independent set.
pub fn kalpha_pinched_below(
    u: &CaloricFunction,
    r: f64,
    k: usize,
    alpha: f64,
    eps: f64,
    candidates: &[SpaceTimePoint],
) -> Result<bool> {
    let pinched: Vec<SpaceTimePoint> =
        candidates.iter().filter(|y| u.pinching_fast(y, r) < eps).cloned().collect();
    if pinched.is_empty() {
        return Ok(false);
    }
    Ok(independence_check(&pinched, k, alpha * r / 20.0)?.is_independent())
}

/// Scale grid s_j = r2 eps^(2j+1) restricted to (r1, r2); the windows
/// [eps^2 s_j^2, eps^-2 s_j^2] are the consecutive intervals [tau_{j+1}, tau_j]
/// of tau_j = eps^(4j) r2^2.
pub fn pinched_scale_grid(r1: f64, r2: f64, eps: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut s = r2 * eps;
    while s > r1 && out.len() < 10_000 {
        out.push(s);
        s *= eps * eps;
    }
    out
}

/// First scale of `pinched_scale_grid`, scanning from coarse to fine, with
/// N(eps^-2 s^2) - N(eps^2 s^2) < eps.
pub fn find_pinched_scale(
    u: &CaloricFunction,
    base: &SpaceTimePoint,
    r1: f64,
    r2: f64,
    eps: f64,
) -> Result<Option<f64>> {
    if !(r1 > 0.0 && r2 > r1) {
        return Err(Error::InvalidArgument("need 0 < r1 < r2".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument("eps must lie in (0, 1)".into()));
    }
    for s in pinched_scale_grid(r1, r2, eps) {
        let hi = frequency(u, base, s * s / (eps * eps))?;
        let lo = frequency(u, base, eps * eps * s * s)?;
        if hi - lo < eps {
            return Ok(Some(s));
        }
    }
    Ok(None)
}

/// Nearest integer with ties broken downward.
pub fn nearest_integer(v: f64) -> u32 {
    (v - 0.5).ceil().max(0.0) as u32
}

/// Residual of the approximate eigenfunction inequality at one scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenResidual {
    pub tau: f64,
    pub frequency: f64,
    pub m_star: u32,
    /// int (u - p_m)^2 dnu / H.
    pub residual: f64,
    /// (N - j)(j + 1 - N) with j = floor(N).
    pub gap_product: f64,
    /// gap_product H + int (u - p_m)^2 dnu.
    pub lhs: f64,
    /// 20 tau^2 int (Delta_f u + N/(2 tau) u)^2 dnu.
    pub rhs: f64,
}

impl EigenResidual {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol * self.rhs.abs().max(self.lhs.abs()).max(1e-300)
    }
}

/// Projection of u onto the degree-m homogeneous caloric part at `base`.
pub fn homogeneous_part(u: &CaloricFunction, base: &SpaceTimePoint, m: u32) -> Result<CaloricPolynomial> {
    let drift = DriftOperator::from_point(base)?;
    let pieces = spectral_decompose(u.polynomial(), &drift, &q_from_f64(1.0)?)?;
    Ok(pieces
        .into_iter()
        .find(|(d, _)| *d == m)
        .map(|(_, p)| p)
        .unwrap_or_else(|| CaloricPolynomial::zero(u.n())))
}

pub fn eigen_residual(u: &CaloricFunction, base: &SpaceTimePoint, tau: f64) -> Result<EigenResidual> {
    let f = functionals(u, base, tau)?;
    let m_star = nearest_integer(f.n);
    let pm = homogeneous_part(u, base, m_star)?;
    let w = u.polynomial().sub(&pm);
    let x0: Vec<_> = base.x.iter().map(|v| q_from_f64(*v)).collect::<Result<_>>()?;
    let dist = q_to_f64(&integrate_poly(&w.mul(&w), &x0, &q_from_f64(base.t)?, &q_from_f64(tau)?)?);
    let j = f.n.floor();
    let gap = (f.n - j) * (j + 1.0 - f.n);
    let defect = eigen_defect(u, base, tau, f.n, u.exact_order() + 2)?;
    Ok(EigenResidual {
        tau,
        frequency: f.n,
        m_star,
        residual: dist / f.h,
        gap_product: gap,
        lhs: gap * f.h + dist,
        rhs: 20.0 * tau * tau * defect,
    })
}

/// One entry of the homogeneous-approximation table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomogeneousErrorRow {
    pub tau: f64,
    /// Number of time derivatives.
    pub l: u32,
    /// Number of spatial derivatives.
    pub j: u32,
    /// tau^(2l+j) int |d_t^l grad^j (u - p_m)|^2 dnu.
    pub lhs: f64,
    /// lhs / (delta H(tau2)); infinite when delta = 0 and lhs > 0.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomogeneousErrorTable {
    pub m: u32,
    pub delta: f64,
    pub h_tau2: f64,
    pub rows: Vec<HomogeneousErrorRow>,
}

impl HomogeneousErrorTable {
    pub fn max_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).fold(0.0, f64::max)
    }
}

/// Distance of u to its degree-m homogeneous part and derivatives with
/// 2l + j <= 2, on the scales tau1/2, tau1/4, ... (eight levels).
pub fn homogeneous_error(
    u: &CaloricFunction,
    base: &SpaceTimePoint,
    tau1: f64,
    tau2: f64,
    delta: f64,
) -> Result<HomogeneousErrorTable> {
    if !(tau1 > 0.0 && tau1 < tau2 / 2.0) {
        return Err(Error::InvalidArgument("precondition 0 < tau1 < tau2/2 violated".into()));
    }
    if !(delta >= 0.0 && delta < 0.1) {
        return Err(Error::InvalidArgument("precondition 0 <= delta < 1/10 violated".into()));
    }
    let f2 = functionals(u, base, tau2)?;
    let f1 = functionals(u, base, tau1)?;
    if f2.n - f1.n > delta + TOL_MONO {
        return Err(Error::InvalidArgument(format!(
            "precondition N(tau2) - N(tau1) <= delta violated: {} > {delta}",
            f2.n - f1.n
        )));
    }
    let m = nearest_integer(f2.n);
    let pm = homogeneous_part(u, base, m)?;
    let w = u.polynomial().sub(&pm);
    let wf = w.to_float();
    let n = u.n();
    let g1: Vec<FloatPoly> = (0..n).map(|i| wf.partial(i)).collect();
    let g2: Vec<FloatPoly> = g1.iter().flat_map(|g| (0..n).map(move |i| g.partial(i))).collect();
    let wt = wf.partial(n);
    let order = exact_order_for_degree(2 * w.degree()).max(2);
    let mut rows = Vec::new();
    for level in 0..8 {
        let tau = tau1 / 2f64.powi(level + 1);
        let specs: [(u32, u32, Vec<&FloatPoly>); 4] = [
            (0, 0, vec![&wf]),
            (0, 1, g1.iter().collect()),
            (0, 2, g2.iter().collect()),
            (1, 0, vec![&wt]),
        ];
        for (l, j, polys) in specs {
            let integral = integrate_at(
                &|x: &[f64], t: f64| polys.iter().map(|p| p.eval(x, t).powi(2)).sum(),
                base,
                tau,
                order,
            )?;
            let lhs = tau.powi((2 * l + j) as i32) * integral;
            let denom = delta * f2.h;
            let ratio = if denom > 0.0 {
                lhs / denom
            } else if lhs.abs() < 1e-300 {
                0.0
            } else {
                f64::INFINITY
            };
            rows.push(HomogeneousErrorRow { tau, l, j, lhs, ratio });
        }
    }
    Ok(HomogeneousErrorTable { m, delta, h_tau2: f2.h, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caloricpoly::heat_polynomial;

    fn one_plus_h2() -> CaloricFunction {
        CaloricFunction::new(CaloricPolynomial::one(1).add(&heat_polynomial(1, 2, 0)))
    }

    #[test]
    fn profile_matches_closed_form() {
        let u = one_plus_h2();
        let p = u.profile(&SpaceTimePoint::origin(1));
        for tau in [0.01, 0.3, 1.0, 7.0] {
            let n = 16.0 * tau * tau / (1.0 + 8.0 * tau * tau);
            assert!((p.frequency(tau) - n).abs() < 1e-12);
            assert!((p.h(tau) - (1.0 + 8.0 * tau * tau)).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let u = one_plus_h2();
        let f = functionals(&u, &SpaceTimePoint::origin(1), 1.0).unwrap();
        assert!((f.h - 9.0).abs() < 1e-12);
        assert!((f.e - 16.0).abs() < 1e-12);
        assert!((f.d - (33.0f64 / 9.0).log2()).abs() < 1e-12);
    }

    #[test]
    fn nearest_integer_ties_down() {
        assert_eq!(nearest_integer(1.5), 1);
        assert_eq!(nearest_integer(1.51), 2);
        assert_eq!(nearest_integer(0.2), 0);
    }

    #[test]
    fn h2_time_derivative_ratio() {
        let u = CaloricFunction::new(heat_polynomial(1, 2, 0));
        let d = directional(&u, &SpaceTimePoint::origin(1), 1.0, &[]).unwrap();
        assert!((d.t_s - 1.0).abs() < 1e-12);
        assert_eq!(d.n_l, 0.0);
    }

    #[test]
    fn candidates_stay_inside() {
        let base = SpaceTimePoint::new(vec![0.3, -0.2], 0.1);
        let c = pinching_candidates(&base, 0.5, 0.25, 3, 7);
        assert!(c.len() > 30);
        assert!(c.iter().all(|y| parabolic_distance_unchecked(&base, y) < 0.05));
    }
}
