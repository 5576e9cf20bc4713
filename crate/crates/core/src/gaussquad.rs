//! Integration against the conjugate heat kernel measure
//! nu_{x0; t0 - tau} = N(x0, 2 tau I): exact Gaussian moments for
//! polynomials and tensor Gauss–Hermite quadrature for general integrands.

use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use parking_lot::Mutex;
use rayon::prelude::*;

use crate::caloricpoly::{q_from_f64, CaloricPolynomial, Q};
use crate::error::{Error, Result};
use crate::linalg::CompensatedSum;
use crate::spacetime::SpaceTimePoint;

/// Default Gauss–Hermite order per axis for general integrands.
pub const DEFAULT_ORDER: usize = 48;
/// Relative error that triggers an automatic doubling of the order.
pub const REFINE_TOL: f64 = 1e-9;
const MAX_ORDER: usize = 384;

/// nu_{base; base.t - tau}.
#[derive(Debug, Clone)]
pub struct HeatKernelMeasure {
    pub base: SpaceTimePoint,
    pub tau: f64,
}

impl HeatKernelMeasure {
    pub fn new(base: SpaceTimePoint, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        Ok(Self { base, tau })
    }

    pub fn time(&self) -> f64 {
        self.base.t - self.tau
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let d2: f64 = x.iter().zip(&self.base.x).map(|(a, b)| (a - b) * (a - b)).sum();
        (4.0 * std::f64::consts::PI * self.tau).powf(-n / 2.0) * (-d2 / (4.0 * self.tau)).exp()
    }
}

/// E[y^(2k)] for y ~ N(0, 2 tau): (2k-1)!! (2 tau)^k.
pub fn gaussian_moment(power: u32, tau: &Q) -> Q {
    if power % 2 == 1 {
        return Q::zero();
    }
    let k = power / 2;
    let mut df = BigInt::one();
    let mut j = 2 * k as i64 - 1;
    while j > 1 {
        df *= BigInt::from(j);
        j -= 2;
    }
    Q::from_integer(df) * num_traits::pow(tau * Q::from_integer(BigInt::from(2)), k as usize)
}

/// Exact integral of p(., t0 - tau) against nu_{x0; t0 - tau}.
pub fn integrate_poly(p: &CaloricPolynomial, x0: &[Q], t0: &Q, tau: &Q) -> Result<Q> {
    if !tau.is_positive() {
        return Err(Error::InvalidArgument("tau must be positive".into()));
    }
    let n = p.n();
    let slice = p.at_time(&(t0 - tau)).shift(x0, &Q::zero());
    let mut acc = Q::zero();
    for (e, c) in slice.terms() {
        let mut v = c.clone();
        for &a in &e[..n] {
            if a % 2 == 1 {
                v = Q::zero();
                break;
            }
            v *= gaussian_moment(a, tau);
        }
        acc += v;
    }
    Ok(acc)
}

/// Convenience wrapper taking a float base point and tau (converted exactly).
pub fn integrate_poly_at(p: &CaloricPolynomial, base: &SpaceTimePoint, tau: f64) -> Result<Q> {
    let x0: Vec<Q> = base.x.iter().map(|&v| q_from_f64(v)).collect::<Result<_>>()?;
    integrate_poly(p, &x0, &q_from_f64(base.t)?, &q_from_f64(tau)?)
}

/// One-dimensional Gauss–Hermite rule for the weight exp(-z^2).
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Nodes by Newton iteration on the orthonormal Hermite recurrence.
    pub fn gauss_hermite(order: usize) -> Self {
        assert!(order >= 1);
        let n = order;
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = (n + 1) / 2;
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2 - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        let mut pairs: Vec<(f64, f64)> = x.into_iter().zip(w).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let (nodes, weights) = pairs.into_iter().unzip();
        Self { order, nodes, weights }
    }

    /// Cached rule; rules are immutable once built.
    pub fn cached(order: usize) -> Arc<QuadratureRule> {
        static CACHE: Mutex<Vec<(usize, Arc<QuadratureRule>)>> = Mutex::new(Vec::new());
        let mut guard = CACHE.lock();
        if let Some((_, r)) = guard.iter().find(|(o, _)| *o == order) {
            return r.clone();
        }
        let r = Arc::new(QuadratureRule::gauss_hermite(order));
        guard.push((order, r.clone()));
        r
    }
}

/// Quadrature value together with an error estimate.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub order: usize,
}

/// Fixed-order tensor Gauss–Hermite integral of f against `mu`.
pub fn integrate_fixed(f: &(dyn Fn(&[f64]) -> f64 + Sync), mu: &HeatKernelMeasure, order: usize) -> Result<f64> {
    let rule = QuadratureRule::cached(order);
    let n = mu.base.dim();
    let scale = 2.0 * mu.tau.sqrt();
    let norm = std::f64::consts::PI.powf(-(n as f64) / 2.0);
    let total = order.pow(n as u32);
    // parallel over the first axis, compensated sums within and across chunks
    let partials: Vec<Result<CompensatedSum>> = (0..order)
        .into_par_iter()
        .map(|i0| {
            let mut acc = CompensatedSum::new();
            let mut x = vec![0.0; n];
            let inner = total / order;
            for flat in 0..inner {
                let mut w = rule.weights[i0];
                x[0] = mu.base.x[0] + scale * rule.nodes[i0];
                let mut rem = flat;
                for d in 1..n {
                    let j = rem % order;
                    rem /= order;
                    w *= rule.weights[j];
                    x[d] = mu.base.x[d] + scale * rule.nodes[j];
                }
                let v = f(&x);
                if !v.is_finite() {
                    return Err(Error::InvalidArgument(format!("integrand is not finite at node {x:?}")));
                }
                acc.add(w * v);
            }
            Ok(acc)
        })
        .collect();
    let mut acc = CompensatedSum::new();
    for p in partials {
        acc.merge(&p?);
    }
    Ok(acc.value() * norm)
}

/// Integral at order p with error estimate |I_p - I_{p/2}|.
pub fn integrate_fn(f: &(dyn Fn(&[f64]) -> f64 + Sync), mu: &HeatKernelMeasure, order: usize) -> Result<QuadResult> {
    let order = order.max(2);
    let hi = integrate_fixed(f, mu, order)?;
    let lo = integrate_fixed(f, mu, order / 2)?;
    Ok(QuadResult { value: hi, error: (hi - lo).abs(), order })
}

/// Start at `order` and double until the estimate is below REFINE_TOL relative.
pub fn integrate_fn_adaptive(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    mu: &HeatKernelMeasure,
    order: usize,
) -> Result<QuadResult> {
    let mut order = order.max(2);
    loop {
        let r = integrate_fn(f, mu, order)?;
        if r.error <= REFINE_TOL * r.value.abs() || r.error == 0.0 {
            return Ok(r);
        }
        if order * 2 > MAX_ORDER || order.pow(mu.base.dim() as u32) > 4_000_000 {
            return Ok(r);
        }
        order *= 2;
    }
}

/// Smallest order integrating a polynomial integrand of the given degree exactly.
pub fn exact_order_for_degree(degree: u32) -> usize {
    (degree as usize + 2) / 2
}

/// Report of the base-point comparison inequality.
#[derive(Debug, Clone)]
pub struct BasepointReport {
    pub integral_x0: f64,
    pub integral_x1: f64,
    pub ratio: f64,
}

/// Compare int u^2 dnu_{x0; t0 - tau} with int u^2 dnu_{x1; t1 - (1 + theta) tau}.
///
/// Hypotheses checked: |x1 - x0| < r, |t1 - t0| <= sigma r^2 and
/// tau >= 6 sigma r^2 / theta.
pub fn basepoint_comparison(
    u: &CaloricPolynomial,
    x0: &SpaceTimePoint,
    x1: &SpaceTimePoint,
    r: f64,
    tau: f64,
    theta: f64,
    sigma: f64,
) -> Result<BasepointReport> {
    let dx = crate::linalg::norm(&crate::linalg::sub(&x1.x, &x0.x));
    if dx >= r {
        return Err(Error::InvalidArgument(format!("precondition |x1 - x0| < r violated: {dx} >= {r}")));
    }
    if (x1.t - x0.t).abs() > sigma * r * r {
        return Err(Error::InvalidArgument("precondition |t1 - t0| <= sigma r^2 violated".into()));
    }
    if tau < 6.0 * sigma * r * r / theta {
        return Err(Error::InvalidArgument(format!(
            "precondition tau >= 6 sigma r^2 / theta violated: {tau} < {}",
            6.0 * sigma * r * r / theta
        )));
    }
    let sq = u.mul(u);
    let a = crate::caloricpoly::q_to_f64(&integrate_poly_at(&sq, x0, tau)?);
    let b = crate::caloricpoly::q_to_f64(&integrate_poly_at(&sq, x1, (1.0 + theta) * tau)?);
    Ok(BasepointReport { integral_x0: a, integral_x1: b, ratio: if b > 0.0 { a / b } else { f64::INFINITY } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caloricpoly::{heat_polynomial, q_int};

    #[test]
    fn h2_squared_moment() {
        let h2 = heat_polynomial(1, 2, 0);
        let v = integrate_poly(&h2.mul(&h2), &[Q::zero()], &Q::zero(), &q_int(1)).unwrap();
        assert_eq!(v, q_int(8));
        let h1 = heat_polynomial(1, 1, 0);
        assert!(integrate_poly(&h1.mul(&h2), &[Q::zero()], &Q::zero(), &q_int(1)).unwrap().is_zero());
    }

    #[test]
    fn rule_integrates_monomials() {
        let r = QuadratureRule::gauss_hermite(10);
        let sum: f64 = r.weights.iter().sum();
        assert!((sum - std::f64::consts::PI.sqrt()).abs() < 1e-13);
        let m4: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m4 - 0.75 * std::f64::consts::PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn constant_integrates_to_one() {
        let mu = HeatKernelMeasure::new(SpaceTimePoint::origin(2), 0.7).unwrap();
        let r = integrate_fn(&|_x: &[f64]| 1.0, &mu, 8).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14 && r.error < 1e-14);
    }
}
