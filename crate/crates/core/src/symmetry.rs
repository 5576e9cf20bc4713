//! Quantitative symmetry scores, best symmetry planes, and the numeric
//! comparisons between pinching and symmetry.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::frequency::{
    kalpha_pinched_below, kalpha_pinching, pinching_candidates, CaloricFunction, SpectralProfile, TOL_ZERO,
};
use crate::gaussquad::{integrate_fixed, HeatKernelMeasure};
use crate::linalg::{dot, sym_eigen_sorted};
use crate::spacetime::{ParabolicPlane, SpaceTimePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymmetryMode {
    Spatial,
    Temporal,
}

/// Smallest eps for which u is (k, eps, r)-symmetric with respect to `plane`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymmetryScore {
    pub plane: ParabolicPlane,
    pub r: f64,
    pub score: f64,
    pub mode: SymmetryMode,
}

fn mode_of(v: &ParabolicPlane) -> SymmetryMode {
    if v.vertical {
        SymmetryMode::Temporal
    } else {
        SymmetryMode::Spatial
    }
}

/// Score by direct quadrature of the defining integrals.
pub fn symmetry_score(u: &CaloricFunction, x0: &SpaceTimePoint, r: f64, v: &ParabolicPlane) -> Result<SymmetryScore> {
    check_dim(u.n(), x0.dim())?;
    check_dim(u.n(), v.n())?;
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("r must be positive, got {r}")));
    }
    let tau = r * r;
    let mu = HeatKernelMeasure::new(x0.clone(), tau)?;
    let t = x0.t - tau;
    let order = u.exact_order();
    let h = integrate_fixed(&|x: &[f64]| u.eval_at(x, t).powi(2), &mu, order)?;
    if !(h > TOL_ZERO) {
        return Err(Error::Degenerate { h, tau });
    }
    let basis = &v.spatial_basis;
    let proj = integrate_fixed(
        &|x: &[f64]| {
            let g = u.gradient_at(x, t);
            basis.iter().map(|e| dot(&g, e).powi(2)).sum()
        },
        &mu,
        order,
    )?;
    let mut num = tau * proj;
    if v.vertical {
        let dt = integrate_fixed(&|x: &[f64]| u.dt_at(x, t).powi(2), &mu, order)?;
        num += tau * tau * dt;
    }
    Ok(SymmetryScore { plane: v.with_base(x0.clone()), r, score: num / h, mode: mode_of(v) })
}

/// Score from a precomputed profile; agrees with `symmetry_score` up to round-off.
pub fn score_from_profile(prof: &SpectralProfile, r: f64, basis: &[Vec<f64>], vertical: bool) -> f64 {
    let tau = r * r;
    let h = prof.h(tau);
    if h <= TOL_ZERO {
        return 0.0;
    }
    let g = prof.grad_gram(tau);
    let mut proj = 0.0;
    for e in basis {
        let ge = &g * nalgebra::DVector::from_column_slice(e);
        proj += dot(e, ge.as_slice());
    }
    let mut num = tau * proj;
    if vertical {
        num += tau * tau * prof.dt_sq(tau);
    }
    (num / h).max(0.0)
}

/// Fast score at `x0` with respect to the linear part of `v`.
pub fn symmetry_score_fast(u: &CaloricFunction, x0: &SpaceTimePoint, r: f64, v: &ParabolicPlane) -> f64 {
    score_from_profile(&u.profile(x0), r, &v.spatial_basis, v.vertical)
}

/// Horizontal and vertical candidates built from the eigenvectors of the
/// gradient Gram matrix; `None` entries are inadmissible for this k.
fn candidates(
    u: &CaloricFunction,
    x0: &SpaceTimePoint,
    r: f64,
    k: usize,
) -> Result<(Option<SymmetryScore>, Option<SymmetryScore>)> {
    let n = u.n();
    let prof = u.profile(x0);
    let tau = r * r;
    let h = prof.h(tau);
    if !(h > TOL_ZERO) {
        return Err(Error::Degenerate { h, tau });
    }
    let g: DMatrix<f64> = prof.grad_gram(tau);
    let (vals, vecs) = sym_eigen_sorted(&g);
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("eigen-solver returned non-finite values".into()));
    }
    let make = |dim: usize, vertical: bool| -> SymmetryScore {
        let basis: Vec<Vec<f64>> = vecs[..dim].to_vec();
        let mut num = tau * vals[..dim].iter().map(|v| v.max(0.0)).sum::<f64>();
        if vertical {
            num += tau * tau * prof.dt_sq(tau);
        }
        let plane = ParabolicPlane { base: x0.clone(), spatial_basis: basis, vertical };
        SymmetryScore { plane, r, score: (num / h).max(0.0), mode: if vertical { SymmetryMode::Temporal } else { SymmetryMode::Spatial } }
    };
    let horizontal = if k <= n { Some(make(k, false)) } else { None };
    let vertical = if k >= 2 && k - 2 <= n { Some(make(k - 2, true)) } else { None };
    Ok((horizontal, vertical))
}

/// Lowest-scoring candidate plane of parabolic dimension k. Vertical wins ties.
pub fn best_symmetry_plane(u: &CaloricFunction, x0: &SpaceTimePoint, r: f64, k: usize) -> Result<SymmetryScore> {
    check_dim(u.n(), x0.dim())?;
    let n = u.n();
    if k == 0 || k > n + 2 {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= n+2, got k={k}")));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("r must be positive, got {r}")));
    }
    match candidates(u, x0, r, k)? {
        (Some(h), Some(v)) => Ok(if h.score < v.score { h } else { v }),
        (Some(h), None) => Ok(h),
        (None, Some(v)) => Ok(v),
        (None, None) => unreachable!("some family is admissible for 1 <= k <= n+2"),
    }
}

/// Best plane restricted to one family.
pub fn best_symmetry_plane_in(
    u: &CaloricFunction,
    x0: &SpaceTimePoint,
    r: f64,
    k: usize,
    mode: SymmetryMode,
) -> Result<Option<SymmetryScore>> {
    check_dim(u.n(), x0.dim())?;
    let (h, v) = candidates(u, x0, r, k)?;
    Ok(match mode {
        SymmetryMode::Spatial => h,
        SymmetryMode::Temporal => v,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PinchingSymmetryReport {
    /// (k, alpha r)-pinching; `None` when no independent subset was found.
    pub pinching: Option<f64>,
    pub best: SymmetryScore,
    /// score / pinching.
    pub ratio: Option<f64>,
    /// Whether score <= ratio_bound * pinching, checked only below `threshold`.
    pub bound_holds: Option<bool>,
}

/// Compare the (k, alpha r)-pinching with the best k-symmetry score.
#[allow(clippy::too_many_arguments)]
pub fn pinching_to_symmetry(
    u: &CaloricFunction,
    x0: &SpaceTimePoint,
    r: f64,
    k: usize,
    alpha: f64,
    ratio_bound: f64,
    threshold: f64,
    seed: u64,
) -> Result<PinchingSymmetryReport> {
    let cands = pinching_candidates(x0, r, alpha, k, seed);
    let rep = kalpha_pinching(u, x0, r, k, alpha, &cands)?;
    let best = best_symmetry_plane(u, x0, r, k)?;
    let pinching = rep.kalpha_pinching.map(|p| p.max(0.0));
    let ratio = pinching.map(|p| if p > 0.0 { best.score / p } else if best.score == 0.0 { 0.0 } else { f64::INFINITY });
    let bound_holds = pinching.filter(|&p| p < threshold).map(|p| best.score <= ratio_bound * p + 1e-12);
    Ok(PinchingSymmetryReport { pinching, best, ratio, bound_holds })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymmetryToPinchingReport {
    pub violations: Vec<String>,
    /// max over sampled v in (x + V) cap P(x, 10 r) of |N_v(50 r^2) - N_v(kappa^2 r^2 / 50)|.
    pub max_variation: f64,
    pub sqrt_eps: f64,
    pub ratio: f64,
    /// Same quantity at points displaced off the plane; a control.
    pub control_variation: Option<f64>,
    pub samples: usize,
}

impl SymmetryToPinchingReport {
    pub fn preconditions_hold(&self) -> bool {
        self.violations.is_empty()
    }
}

fn plane_samples(x0: &SpaceTimePoint, r: f64, v: &ParabolicPlane, per_axis: usize) -> Vec<SpaceTimePoint> {
    let d = v.spatial_basis.len();
    let reach = 0.9 * 10.0 * r;
    let grid = |i: usize| -> f64 {
        if per_axis == 1 {
            0.0
        } else {
            -1.0 + 2.0 * i as f64 / (per_axis - 1) as f64
        }
    };
    let plane = v.with_base(x0.clone());
    let times: Vec<f64> = if v.vertical { (0..per_axis).map(|i| grid(i) * reach * reach).collect() } else { vec![0.0] };
    let mut out = Vec::new();
    for flat in 0..per_axis.pow(d as u32) {
        let mut rem = flat;
        let c: Vec<f64> = (0..d)
            .map(|_| {
                let g = grid(rem % per_axis);
                rem /= per_axis;
                g * reach
            })
            .collect();
        if crate::linalg::norm(&c) >= 10.0 * r {
            continue;
        }
        for &t in &times {
            out.push(plane.point_at(&c, t));
        }
    }
    out
}

/// Frequency variation along x + V under the hypotheses of symmetry at scale 100 r.
pub fn symmetry_to_pinching(
    u: &CaloricFunction,
    x0: &SpaceTimePoint,
    r: f64,
    kappa: f64,
    v: &ParabolicPlane,
    eps: f64,
) -> Result<SymmetryToPinchingReport> {
    check_dim(u.n(), x0.dim())?;
    if !(r > 0.0 && kappa > 0.0 && kappa <= 1.0 && eps > 0.0) {
        return Err(Error::InvalidArgument("need r > 0, 0 < kappa <= 1, eps > 0".into()));
    }
    let mut violations = Vec::new();
    let sym = symmetry_score_fast(u, x0, 100.0 * r, v);
    if sym > eps {
        violations.push(format!("not (k, eps, 100r)-symmetric: score {sym:e} > {eps:e}"));
    }
    let prof = u.profile(x0);
    let drop = (prof.frequency(1e-2 * kappa * kappa * r * r) - prof.frequency(1e2 * r * r)).abs();
    if drop > eps {
        violations.push(format!("frequency not pinched at x: |dN| = {drop:e} > {eps:e}"));
    }
    let variation = |p: &SpaceTimePoint| -> f64 {
        let pr = u.profile(p);
        (pr.frequency(50.0 * r * r) - pr.frequency(kappa * kappa * r * r / 50.0)).abs()
    };
    let samples = plane_samples(x0, r, v, 5);
    let max_variation = samples.par_iter().map(variation).reduce(|| 0.0, f64::max);
    let normals = v.normal_basis();
    let control_variation = normals.first().map(|e| {
        samples
            .iter()
            .map(|p| {
                let q = p.translate(&e.iter().map(|c| c * 5.0 * r).collect::<Vec<_>>(), 0.0);
                variation(&q)
            })
            .fold(0.0, f64::max)
    });
    let sqrt_eps = eps.sqrt();
    Ok(SymmetryToPinchingReport {
        violations,
        max_variation,
        sqrt_eps,
        ratio: max_variation / sqrt_eps,
        control_variation,
        samples: samples.len(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRow {
    pub y: SpaceTimePoint,
    /// Coarsest beta = 2^-i with E^{k+1,1}_{beta r}(y) < eps, if any.
    pub beta: Option<f64>,
    /// |N_y(1e5 (beta r)^2) - N_y(1e-5 (beta r)^2)| at that beta.
    pub frequency_drop: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionReductionReport {
    pub violations: Vec<String>,
    pub rows: Vec<ProbeRow>,
    /// Smallest beta over the sampled points; `None` if some point has none.
    pub min_beta: Option<f64>,
}

/// Levels of the beta grid 1, 1/2, ..., 2^-(BETA_LEVELS-1).
pub const BETA_LEVELS: i32 = 14;

/// Extra symmetry away from x0 + V: per sample y in P(x0, 2r) \ P(x0 + V, eta r),
/// the coarsest beta at which the (k+1)-pinching drops below eps.
#[allow(clippy::too_many_arguments)]
pub fn dimension_reduction_probe(
    u: &CaloricFunction,
    x0: &SpaceTimePoint,
    r: f64,
    v: &ParabolicPlane,
    eta: f64,
    eps: f64,
    delta: f64,
    per_axis: usize,
    seed: u64,
) -> Result<DimensionReductionReport> {
    check_dim(u.n(), x0.dim())?;
    let n = u.n();
    let k = v.k();
    if k + 1 > n + 2 {
        return Err(Error::InvalidArgument(format!("k + 1 = {} exceeds n + 2", k + 1)));
    }
    let mut violations = Vec::new();
    let sym = symmetry_score_fast(u, x0, 10.0 * r, v);
    if sym > delta {
        violations.push(format!("not (k, delta, 10r)-symmetric at x0: score {sym:e} > {delta:e}"));
    }
    let plane = v.with_base(x0.clone());
    let per_axis = per_axis.max(2);
    let mut pts = Vec::new();
    let total = per_axis.pow(n as u32 + 1);
    for flat in 0..total {
        let mut rem = flat;
        let mut c = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            c.push(-0.95 + 1.9 * (rem % per_axis) as f64 / (per_axis - 1) as f64);
            rem /= per_axis;
        }
        let dx: Vec<f64> = c[..n].iter().map(|a| a * 2.0 * r).collect();
        if crate::linalg::norm(&dx) >= 2.0 * r {
            continue;
        }
        let y = x0.translate(&dx, c[n] * 4.0 * r * r);
        if plane.distance(&y) >= eta * r {
            pts.push(y);
        }
    }
    let rows: Vec<ProbeRow> = pts
        .par_iter()
        .map(|y| -> Result<ProbeRow> {
            for i in 0..BETA_LEVELS {
                let beta = 0.5f64.powi(i);
                let s = beta * r;
                let cands = pinching_candidates(y, s, 1.0, k + 1, seed);
                if kalpha_pinched_below(u, s, k + 1, 1.0, eps, &cands)? {
                    let p = u.profile(y);
                    let drop = (p.frequency(1e5 * s * s) - p.frequency(1e-5 * s * s)).abs();
                    return Ok(ProbeRow { y: y.clone(), beta: Some(beta), frequency_drop: Some(drop) });
                }
            }
            Ok(ProbeRow { y: y.clone(), beta: None, frequency_drop: None })
        })
        .collect::<Result<_>>()?;
    let min_beta = if rows.iter().all(|r| r.beta.is_some()) {
        rows.iter().filter_map(|r| r.beta).reduce(f64::min)
    } else {
        None
    };
    Ok(DimensionReductionReport { violations, rows, min_beta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caloricpoly::heat_polynomial;

    #[test]
    fn h1_along_its_gradient() {
        let u = CaloricFunction::new(heat_polynomial(1, 1, 0));
        let v = ParabolicPlane::coordinate(1, &[0], false);
        let s = symmetry_score(&u, &SpaceTimePoint::origin(1), 1.0, &v).unwrap();
        assert!((s.score - 0.5).abs() < 1e-14);
        assert!((symmetry_score_fast(&u, &SpaceTimePoint::origin(1), 1.0, &v) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn h2_in_plane_finds_e2() {
        let u = CaloricFunction::new(heat_polynomial(2, 2, 0));
        let b = best_symmetry_plane(&u, &SpaceTimePoint::origin(2), 1.0, 1).unwrap();
        assert!(b.score.abs() < 1e-14);
        assert_eq!(b.mode, SymmetryMode::Spatial);
        assert!((b.plane.spatial_basis[0][1].abs() - 1.0).abs() < 1e-12);
    }
}
