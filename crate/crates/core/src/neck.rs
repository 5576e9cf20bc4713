//! Neck regions as data: axiom verification, the projected covering check,
//! packing measures and a greedy finite-resolution decomposition.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::frequency::{nearest_integer, CaloricFunction};
use crate::linalg::dot;
use crate::measures::WeightedCloud;
use crate::spacetime::{
    independence_check, parabolic_distance_unchecked as dp, ParabolicBall, ParabolicPlane, SpaceTimePoint,
};
use crate::symmetry::{best_symmetry_plane, symmetry_score_fast};

pub const DEFAULT_GAMMA: f64 = 0.125;
pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_ETA: f64 = 0.05;
pub const DEFAULT_ALPHA: f64 = 0.25;
pub const DEFAULT_MAX_DEPTH: usize = 12;
/// Samples per axis for the pinched-set and b-ball lattices.
pub const LATTICE: usize = 9;
const PINCH_LEVELS: usize = 12;

/// N = P(x0, 2r) minus the closed balls P(x, r_x) over the center set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeckRegion {
    /// P(x0, 2r).
    pub center_ball: ParabolicBall,
    /// Centers with weight r_x.
    pub centers: WeightedCloud,
    pub model_plane: ParabolicPlane,
    pub m: u32,
    pub k: usize,
    pub delta: f64,
    pub eta: f64,
    pub gamma: f64,
    /// Radii at or below this value stand in for r_x = 0.
    pub radius_floor: f64,
    /// Spacing of the lattice the centers were drawn from.
    pub net_spacing: f64,
}

impl NeckRegion {
    /// Check the structural invariants: x0 is a center and 0 <= r_x <= gamma r.
    pub fn validate(&self) -> Result<()> {
        let x0 = &self.center_ball.center;
        if self.centers.is_empty() || dp(&self.centers.points[0], x0) > 1e-12 {
            return Err(Error::InvalidArgument("the first center must be the ball center x0".into()));
        }
        check_dim(x0.dim(), self.model_plane.n())?;
        let cap = self.gamma * self.scale() * (1.0 + 1e-12);
        if let Some(w) = self.centers.weights.iter().find(|&&w| !(0.0..=cap).contains(&w)) {
            return Err(Error::InvalidArgument(format!("radius {w} outside [0, gamma r = {cap}]")));
        }
        Ok(())
    }

    /// The scale r (half the radius of the containing ball).
    pub fn scale(&self) -> f64 {
        self.center_ball.radius * 0.5
    }

    pub fn radii(&self) -> &[f64] {
        &self.centers.weights
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    fn is_zero_proxy(&self, r: f64) -> bool {
        r <= self.radius_floor * (1.0 + 1e-12)
    }

    /// Whether p lies in the neck region itself.
    pub fn contains(&self, p: &SpaceTimePoint) -> bool {
        if !self.center_ball.contains(p) {
            return false;
        }
        !self
            .centers
            .points
            .iter()
            .zip(&self.centers.weights)
            .any(|(c, &r)| dp(c, p) <= r)
    }
}

/// Centers sorted by time for nearest-first scans.
struct TimeIndex {
    order: Vec<usize>,
    times: Vec<f64>,
}

impl TimeIndex {
    fn new(points: &[SpaceTimePoint]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].t.total_cmp(&points[b].t));
        let times = order.iter().map(|&i| points[i].t).collect();
        Self { order, times }
    }

    /// Visit indices by increasing |t - t0|; `visit` gets (index, |dt|) and
    /// returns false to stop.
    fn scan(&self, t0: f64, mut visit: impl FnMut(usize, f64) -> bool) {
        let pos = self.times.partition_point(|&t| t < t0);
        let mut lo = pos as isize - 1;
        let mut hi = pos;
        loop {
            let dl = if lo >= 0 { Some(t0 - self.times[lo as usize]) } else { None };
            let dh = if hi < self.times.len() { Some(self.times[hi] - t0) } else { None };
            let (i, d) = match (dl, dh) {
                (None, None) => return,
                (Some(a), Some(b)) if a <= b => {
                    lo -= 1;
                    (self.order[(lo + 1) as usize], a)
                }
                (Some(a), None) => {
                    lo -= 1;
                    (self.order[(lo + 1) as usize], a)
                }
                (_, Some(b)) => {
                    hi += 1;
                    (self.order[hi - 1], b)
                }
            };
            if !visit(i, d) {
                return;
            }
        }
    }
}

/// Outcome of one neck axiom. A positive margin passes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxiomCheck {
    pub axiom: String,
    pub passed: bool,
    pub margin: f64,
    pub checked: usize,
    pub witness: Option<String>,
}

impl AxiomCheck {
    fn from_margin(axiom: &str, margin: f64, checked: usize, witness: Option<String>, strict: bool) -> Self {
        let passed = if strict { margin > 0.0 } else { margin >= 0.0 };
        Self { axiom: axiom.into(), passed, margin, checked, witness: if passed { None } else { witness } }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeckReport {
    pub axioms: Vec<AxiomCheck>,
    /// Smallest c with (x+V) cap P(x,s) inside the union of P(y, c(s + r_y)) on the samples.
    pub n4b_constant: f64,
    pub strong: bool,
}

impl NeckReport {
    pub fn axiom(&self, name: &str) -> Option<&AxiomCheck> {
        self.axioms.iter().find(|a| a.axiom == name)
    }

    pub fn all_passed(&self) -> bool {
        self.axioms.iter().all(|a| a.passed)
    }

    /// (n1) through (n4.b) all pass.
    pub fn weak_passed(&self) -> bool {
        ["n1", "n2", "n3", "n4a", "n4b"].iter().all(|a| self.axiom(a).map_or(false, |c| c.passed))
    }
}

fn doubling_scales(lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if !(lo > 0.0) || lo > hi {
        return out;
    }
    let mut s = lo;
    while s < hi * (1.0 - 1e-12) {
        out.push(s);
        s *= 2.0;
    }
    out.push(hi);
    out
}

/// Largest s with P(x, s) inside `ball`.
fn containment_radius(x: &SpaceTimePoint, ball: &ParabolicBall) -> f64 {
    let dx = dp(&SpaceTimePoint::new(x.x.clone(), ball.center.t), &ball.center);
    let dt = (x.t - ball.center.t).abs();
    let r = ball.radius;
    (r - dx).min((r * r - dt).max(0.0).sqrt()).max(0.0)
}

/// Offsets of a lattice on (V-coordinates, time) inside the V-ball of radius s.
fn plane_lattice(v: &ParabolicPlane, s: f64, per: usize) -> Vec<(Vec<f64>, f64)> {
    let d = v.spatial_basis.len();
    let g = |i: usize| -> f64 {
        if per == 1 {
            0.0
        } else {
            0.999 * (-1.0 + 2.0 * i as f64 / (per - 1) as f64)
        }
    };
    let mut out = Vec::new();
    for flat in 0..per.pow(d as u32) {
        let mut rem = flat;
        let c: Vec<f64> = (0..d)
            .map(|_| {
                let val = g(rem % per) * s;
                rem /= per;
                val
            })
            .collect();
        if dot(&c, &c).sqrt() >= s {
            continue;
        }
        if v.vertical {
            for j in 0..per {
                out.push((c.clone(), g(j) * s * s));
            }
        } else {
            out.push((c, 0.0));
        }
    }
    out
}

fn offset_point(v: &ParabolicPlane, base: &SpaceTimePoint, c: &[f64], dt: f64) -> SpaceTimePoint {
    let mut x = base.x.clone();
    for (ci, q) in c.iter().zip(&v.spatial_basis) {
        for (xi, qi) in x.iter_mut().zip(q) {
            *xi += ci * qi;
        }
    }
    SpaceTimePoint::new(x, base.t + dt)
}

fn min_with_witness(items: impl Iterator<Item = (f64, String)>) -> (f64, Option<String>, usize) {
    let mut best = f64::INFINITY;
    let mut witness = None;
    let mut count = 0;
    for (m, w) in items {
        count += 1;
        if m < best {
            best = m;
            witness = Some(w);
        }
    }
    (best, witness, count)
}

fn neck_scale_ok(u: &CaloricFunction, x: &SpaceTimePoint, s: f64, v: &ParabolicPlane, neck: &NeckRegion) -> (f64, f64) {
    let n = u.frequency_fast(x, s * s);
    let pinch = neck.delta - (n - neck.m as f64).abs();
    let sym = neck.delta - symmetry_score_fast(u, x, s, &v.with_base(x.clone()));
    let nonsym = if neck.k + 1 <= u.n() + 2 {
        match best_symmetry_plane(u, x, s, neck.k + 1) {
            Ok(b) => b.score - neck.eta,
            Err(_) => f64::NEG_INFINITY,
        }
    } else {
        f64::INFINITY
    };
    (pinch, sym.min(nonsym))
}

/// Check (n1)-(n4) and, with `strong`, (n4.b') and (n5) on the center set.
/// Scale-dependent axioms scan the doubling grid from r_x to gamma^-3 r;
/// covering axioms use up to `max_samples` centers.
pub fn verify_neck(u: &CaloricFunction, neck: &NeckRegion, strong: bool, max_samples: usize) -> Result<NeckReport> {
    neck.validate()?;
    check_dim(u.n(), neck.center_ball.center.dim())?;
    let pts = &neck.centers.points;
    let radii = &neck.centers.weights;
    let r = neck.scale();
    let g = neck.gamma;
    let top = r / (g * g * g);
    let floor = if neck.radius_floor > 0.0 { neck.radius_floor } else { r * 1e-3 };
    let eff = |rx: f64| if rx > 0.0 { rx } else { floor };
    let index = TimeIndex::new(pts);
    let rmax = radii.iter().copied().fold(0.0, f64::max);
    let mut axioms = Vec::new();

    // (n1) disjointness of P(x, gamma^2 r_x); margin is the gap in units of r
    let n1: Vec<(f64, String)> = (0..pts.len())
        .into_par_iter()
        .filter_map(|i| {
            let a = g * g * radii[i];
            let reach = (a * a + (g * g * rmax).powi(2)).sqrt();
            let mut best: Option<(f64, usize)> = None;
            index.scan(pts[i].t, |j, dt| {
                if let Some((m, _)) = best {
                    if (dt.sqrt() - reach) / r > m {
                        return false;
                    }
                }
                if j != i {
                    let b = g * g * radii[j];
                    let dx = dp(&SpaceTimePoint::new(pts[i].x.clone(), 0.0), &SpaceTimePoint::new(pts[j].x.clone(), 0.0));
                    let m = (dx - (a + b)).max(dt.sqrt() - (a * a + b * b).sqrt()) / r;
                    if best.map_or(true, |(bm, _)| m < bm) {
                        best = Some((m, j));
                    }
                }
                true
            });
            best.map(|(m, j)| (m, format!("centers {i} and {j}")))
        })
        .collect();
    let (m1, w1, c1) = min_with_witness(n1.into_iter());
    axioms.push(AxiomCheck::from_margin("n1", m1, c1, w1, false));

    // (n2), (n3) along the scale grid
    let per_center: Vec<((f64, String), (f64, String))> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut p2 = (f64::INFINITY, String::new());
            let mut p3 = (f64::INFINITY, String::new());
            for s in doubling_scales(eff(radii[i]), top) {
                let (a, b) = neck_scale_ok(u, &pts[i], s, &neck.model_plane, neck);
                if a < p2.0 {
                    p2 = (a, format!("center {i} at scale {s:.4e}"));
                }
                if b < p3.0 {
                    p3 = (b, format!("center {i} at scale {s:.4e}"));
                }
            }
            (p2, p3)
        })
        .collect();
    let (m2, w2, _) = min_with_witness(per_center.iter().map(|p| p.0.clone()));
    let (m3, w3, _) = min_with_witness(per_center.iter().map(|p| p.1.clone()));
    axioms.push(AxiomCheck::from_margin("n2", m2, pts.len(), w2, true));
    axioms.push(AxiomCheck::from_margin("n3", m3, pts.len(), w3, true));

    // (n4.a) via normal coordinates
    let v = &neck.model_plane;
    let normal = v.normal_basis();
    let wcoord: Vec<Vec<f64>> = pts.iter().map(|p| normal.iter().map(|q| dot(&p.x, q)).collect()).collect();
    let smax: Vec<f64> = pts.iter().map(|p| containment_radius(p, &neck.center_ball).min(top)).collect();
    let n4a: Vec<(f64, String)> = (0..pts.len())
        .into_par_iter()
        .filter_map(|i| {
            let lo = eff(radii[i]);
            if smax[i] < lo {
                return None;
            }
            let mut best = (f64::INFINITY, String::new());
            index.scan(pts[i].t, |j, dt| {
                if dt.sqrt() >= smax[i] {
                    return false;
                }
                let d = dp(&pts[i], &pts[j]);
                if d < smax[i] {
                    let s = d.max(lo);
                    let mut dist = wcoord[i].iter().zip(&wcoord[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    if !v.vertical {
                        dist = dist.max(dt.sqrt());
                    }
                    let m = neck.delta - dist / s;
                    if m < best.0 {
                        best = (m, format!("center {j} in P(center {i}, {s:.4e})"));
                    }
                }
                true
            });
            Some(best)
        })
        .collect();
    let (m4a, w4a, _) = min_with_witness(n4a.into_iter());
    axioms.push(AxiomCheck::from_margin("n4a", m4a, pts.len(), w4a, true));

    // (n4.b) and (n4.b') on sampled centers
    let stride = (pts.len() / max_samples.max(1)).max(1);
    let sampled: Vec<usize> = (0..pts.len()).step_by(stride).collect();
    let rows: Vec<(f64, f64, String)> = sampled
        .par_iter()
        .flat_map_iter(|&i| {
            let mut out = Vec::new();
            let lo = eff(radii[i]);
            if smax[i] < lo {
                return out;
            }
            for s in doubling_scales(lo, smax[i]) {
                let plane = v.with_base(pts[i].clone());
                for (c, dt) in plane_lattice(&plane, s, 5) {
                    let z = offset_point(&plane, &pts[i], &c, dt);
                    let mut ratio = f64::INFINITY;
                    let mut dmin = f64::INFINITY;
                    index.scan(z.t, |j, dtt| {
                        let lb = dtt.sqrt();
                        if lb / (s + rmax) >= ratio && lb >= dmin {
                            return false;
                        }
                        let d = dp(&z, &pts[j]);
                        ratio = ratio.min(d / (s + radii[j]));
                        dmin = dmin.min(d);
                        true
                    });
                    out.push((ratio, dmin / s, format!("center {i}, scale {s:.4e}, point {}", z.to_csv_row())));
                }
            }
            out
        })
        .collect();
    let n4b_constant = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let (m4b, w4b, c4b) = min_with_witness(rows.iter().map(|r| (10.0 * g - r.0, r.2.clone())));
    axioms.push(AxiomCheck::from_margin("n4b", m4b, c4b, w4b, true));

    if strong {
        let (m4p, w4p, c4p) = min_with_witness(rows.iter().map(|r| (g - r.1, r.2.clone())));
        axioms.push(AxiomCheck::from_margin("n4b'", m4p, c4p, w4p, true));
        let n5: Vec<(f64, String)> = (0..pts.len())
            .into_par_iter()
            .filter_map(|i| {
                let mut best: Option<(f64, String)> = None;
                for j in (i + 1)..pts.len() {
                    let d = dp(&pts[i], &pts[j]);
                    let m = (neck.delta * d - (radii[i] - radii[j]).abs()) / r;
                    if best.as_ref().map_or(true, |b| m < b.0) {
                        best = Some((m, format!("centers {i} and {j}")));
                    }
                }
                best
            })
            .collect();
        let (m5, w5, _) = min_with_witness(n5.into_iter());
        axioms.push(AxiomCheck::from_margin("n5", m5, pts.len(), w5, false));
    }
    Ok(NeckReport { axioms, n4b_constant, strong })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WhitneyReport {
    /// (x, s) pairs examined.
    pub checked: usize,
    /// Pairs skipped because s < gamma^-1 r_x would exceed r.
    pub skipped: usize,
    pub uncovered: Vec<SpaceTimePoint>,
    pub covered: bool,
}

/// Sampled check that P^V(pi(x), 7s/4) is covered by the closed V-balls
/// P^V(pi(z), r_z) over z in C cap P(x, 9s/5), for s in [gamma^-1 r_x, r]
/// with P(x, 2s) inside the neck ball.
pub fn whitney_cover_check(neck: &NeckRegion, max_centers: usize) -> Result<WhitneyReport> {
    neck.validate()?;
    let v = &neck.model_plane;
    let pts = &neck.centers.points;
    let radii = &neck.centers.weights;
    let r = neck.scale();
    let proj: Vec<SpaceTimePoint> = pts.iter().map(|p| v.project(p)).collect();
    let index = TimeIndex::new(&proj);
    let rmax = radii.iter().copied().fold(0.0, f64::max);
    let stride = (pts.len() / max_centers.max(1)).max(1);
    let sampled: Vec<usize> = (0..pts.len()).step_by(stride).collect();
    type Row = (usize, usize, Vec<SpaceTimePoint>);
    let rows: Vec<Row> = sampled
        .par_iter()
        .map(|&i| {
            let lo = radii[i] / neck.gamma;
            if lo > r {
                return (0, 1, vec![]);
            }
            let mut checked = 0;
            let mut uncovered = Vec::new();
            for s in doubling_scales(lo.max(neck.radius_floor / neck.gamma).max(r * 1e-6), r) {
                if containment_radius(&pts[i], &neck.center_ball) < 2.0 * s {
                    continue;
                }
                checked += 1;
                let px = &proj[i];
                let plane = v.with_base(px.clone());
                let outer = ParabolicBall { center: pts[i].clone(), radius: 1.8 * s };
                for (c, dt) in plane_lattice(&plane, 1.75 * s, LATTICE) {
                    let p = offset_point(&plane, px, &c, dt);
                    let mut hit = false;
                    index.scan(p.t, |j, dtt| {
                        if dtt > rmax * rmax * (1.0 + 1e-9) {
                            return false;
                        }
                        if dp(&p, &proj[j]) <= radii[j] * (1.0 + 1e-9) && outer.contains(&pts[j]) {
                            hit = true;
                            return false;
                        }
                        true
                    });
                    if !hit {
                        uncovered.push(p);
                    }
                }
            }
            (checked, 0, uncovered)
        })
        .collect();
    let checked = rows.iter().map(|r| r.0).sum();
    let skipped = rows.iter().map(|r| r.1).sum();
    let uncovered: Vec<SpaceTimePoint> = rows.into_iter().flat_map(|r| r.2).collect();
    Ok(WhitneyReport { checked, skipped, covered: uncovered.is_empty(), uncovered })
}

/// Atoms r_x^k at centers with positive radius plus a lattice surrogate of
/// the k-dimensional measure on the zero-radius part (weight h^k per center).
pub fn packing_measure(neck: &NeckRegion) -> Result<WeightedCloud> {
    let k = neck.k as i32;
    let h = neck.net_spacing;
    let weights: Vec<f64> = neck
        .centers
        .weights
        .iter()
        .map(|&rx| if neck.is_zero_proxy(rx) { h.powi(k) } else { rx.powi(k) })
        .collect();
    WeightedCloud::new(neck.centers.points.clone(), weights)
}

/// Parameters of the greedy decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionParams {
    pub k: usize,
    pub eps: f64,
    pub eta: f64,
    pub delta: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub r_star: f64,
    pub max_depth: usize,
    pub max_balls: usize,
    pub max_centers: usize,
}

impl DecompositionParams {
    pub fn new(k: usize, eps: f64, eta: f64, r_star: f64) -> Self {
        Self {
            k,
            eps,
            eta,
            delta: DEFAULT_DELTA,
            alpha: DEFAULT_ALPHA,
            gamma: DEFAULT_GAMMA,
            r_star,
            max_depth: DEFAULT_MAX_DEPTH,
            max_balls: 200_000,
            max_centers: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BallClass {
    B,
    C,
    D,
    E,
    F,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeNode {
    pub ball: ParabolicBall,
    pub class: BallClass,
    pub depth: usize,
    pub m: u32,
    pub parent: Option<usize>,
    pub neck: Option<usize>,
}

/// Sums of r^k per output class.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ContentLedger {
    pub necks: f64,
    pub b_balls: f64,
    pub f_balls: f64,
    pub neck_count: usize,
    pub b_count: usize,
    pub f_count: usize,
    pub d_count: usize,
    pub e_count: usize,
}

impl ContentLedger {
    pub fn total(&self) -> f64 {
        self.necks + self.b_balls + self.f_balls
    }

    pub fn to_csv(&self) -> String {
        format!(
            "class,count,content\nneck,{},{:.17e}\nb,{},{:.17e}\nf,{},{:.17e}\nd,{},0\ne,{},0\ntotal,{},{:.17e}\n",
            self.neck_count,
            self.necks,
            self.b_count,
            self.b_balls,
            self.f_count,
            self.f_balls,
            self.d_count,
            self.e_count,
            self.neck_count + self.b_count + self.f_count,
            self.total()
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeckDecomposition {
    pub input: ParabolicBall,
    pub params: DecompositionParams,
    pub necks: Vec<NeckRegion>,
    pub b_balls: Vec<ParabolicBall>,
    pub f_balls: Vec<ParabolicBall>,
    pub tree: Vec<TreeNode>,
    pub ledger: ContentLedger,
    /// Set when a depth or size budget cut the recursion short.
    pub partial: bool,
}

impl NeckDecomposition {
    /// Whether p lies in a neck region or in a closed b- or f-ball.
    pub fn covers(&self, p: &SpaceTimePoint) -> bool {
        self.b_balls.iter().chain(&self.f_balls).any(|b| b.contains_closed(p)) || self.necks.iter().any(|n| n.contains(p))
    }
}

fn ball_lattice(ball: &ParabolicBall, per: usize, with_time: bool) -> Vec<SpaceTimePoint> {
    let n = ball.center.dim();
    let r = ball.radius;
    let g = |i: usize| -> f64 { 0.999 * (-1.0 + 2.0 * i as f64 / (per - 1) as f64) };
    let mut out = Vec::new();
    for flat in 0..per.pow(n as u32) {
        let mut rem = flat;
        let dx: Vec<f64> = (0..n)
            .map(|_| {
                let v = g(rem % per) * r;
                rem /= per;
                v
            })
            .collect();
        if dot(&dx, &dx).sqrt() >= r {
            continue;
        }
        if with_time {
            for j in 0..per {
                out.push(ball.center.translate(&dx, g(j) * r * r));
            }
        } else {
            out.push(ball.center.translate(&dx, 0.0));
        }
    }
    out
}

/// Children of radius rho whose union covers the closed parent ball.
pub fn cover_children(ball: &ParabolicBall, rho: f64) -> Vec<ParabolicBall> {
    let n = ball.center.dim();
    let r = ball.radius;
    let sx = 2.0 * rho / (n as f64).sqrt() * 0.99;
    let st = 2.0 * rho * rho * 0.99;
    let mx = (r / sx).ceil() as i64;
    let mt = (r * r / st).ceil() as i64;
    let side = (2 * mx + 1) as usize;
    let mut out = Vec::new();
    for flat in 0..side.pow(n as u32) {
        let mut rem = flat;
        let dx: Vec<f64> = (0..n)
            .map(|_| {
                let v = (rem % side) as i64 - mx;
                rem /= side;
                v as f64 * sx
            })
            .collect();
        if dot(&dx, &dx).sqrt() >= rho + r {
            continue;
        }
        for j in -mt..=mt {
            let dt = j as f64 * st;
            if dt.abs() >= rho * rho + r * r {
                continue;
            }
            out.push(ParabolicBall { center: ball.center.translate(&dx, dt), radius: rho });
        }
    }
    out
}

fn pinch_levels(r: f64, delta: f64) -> Vec<f64> {
    let lo = delta * r;
    let hi = r / delta;
    let ratio = (hi / lo).powf(1.0 / (PINCH_LEVELS - 1) as f64);
    (0..PINCH_LEVELS).map(|i| lo * ratio.powi(i as i32)).collect()
}

fn pinch_dev(u: &CaloricFunction, y: &SpaceTimePoint, m: u32, levels: &[f64]) -> f64 {
    levels.iter().map(|s| (u.frequency_fast(y, s * s) - m as f64).abs()).fold(0.0, f64::max)
}

/// Compass search for a minimizer of the pinching deviation inside `ball`.
fn refine_pinched(u: &CaloricFunction, start: &SpaceTimePoint, ball: &ParabolicBall, m: u32, levels: &[f64], step0: f64) -> (SpaceTimePoint, f64) {
    let n = u.n();
    let with_time = !u.is_time_invariant();
    let mut y = start.clone();
    let mut fy = pinch_dev(u, &y, m, levels);
    let mut step = step0;
    let floor = step0 * 1e-12;
    while step > floor && fy > 0.0 {
        let mut improved = false;
        for axis in 0..(n + usize::from(with_time)) {
            for sgn in [-1.0, 1.0] {
                let mut c = y.clone();
                if axis < n {
                    c.x[axis] += sgn * step;
                } else {
                    c.t += sgn * step * step;
                }
                if !ball.contains(&c) {
                    continue;
                }
                let fc = pinch_dev(u, &c, m, levels);
                if fc < fy {
                    y = c;
                    fy = fc;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (y, fy)
}

/// Sampled pinched set V_{delta, m, r}(x) in P(x, 4r) with local refinement.
pub fn pinched_set(u: &CaloricFunction, x: &SpaceTimePoint, r: f64, m: u32, delta: f64) -> Vec<SpaceTimePoint> {
    let ball = ParabolicBall { center: x.clone(), radius: 4.0 * r };
    let levels = pinch_levels(r, delta);
    let spatial = ball_lattice(&ball, LATTICE, !u.is_time_invariant());
    let mut scored: Vec<(f64, SpaceTimePoint)> =
        spatial.par_iter().map(|y| (pinch_dev(u, y, m, &levels), y.clone())).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut found: Vec<SpaceTimePoint> = scored.iter().filter(|s| s.0 <= delta).map(|s| s.1.clone()).collect();
    let step = 4.0 * r / (LATTICE - 1) as f64;
    let refined: Vec<(SpaceTimePoint, f64)> =
        scored.par_iter().take(4).map(|(_, y)| refine_pinched(u, y, &ball, m, &levels, step)).collect();
    for (y, f) in refined {
        if f <= delta {
            found.push(y);
        }
    }
    if u.is_time_invariant() {
        let times = ball_lattice(&ParabolicBall { center: x.clone(), radius: 4.0 * r }, LATTICE, true);
        let tvals: Vec<f64> = {
            let mut t: Vec<f64> = times.iter().map(|p| p.t).collect();
            t.sort_by(|a, b| a.total_cmp(b));
            t.dedup();
            t
        };
        found = found
            .into_iter()
            .flat_map(|y| tvals.iter().map(move |&t| SpaceTimePoint::new(y.x.clone(), t)).collect::<Vec<_>>())
            .collect();
    }
    found
}

fn is_b_ball(u: &CaloricFunction, ball: &ParabolicBall, k: usize, eta: f64) -> Result<bool> {
    if k + 1 > u.n() + 2 {
        return Ok(false);
    }
    let samples = ball_lattice(ball, LATTICE, !u.is_time_invariant());
    let scores: Vec<Result<f64>> =
        samples.par_iter().map(|y| best_symmetry_plane(u, y, 100.0 * ball.radius, k + 1).map(|s| s.score)).collect();
    for s in scores {
        if s? <= eta {
            return Ok(true);
        }
    }
    Ok(false)
}

struct Work {
    ball: ParabolicBall,
    depth: usize,
    m: u32,
    parent: Option<usize>,
}

/// Greedy classification of `ball` into neck regions, b-balls and f-balls.
pub fn greedy_neck_decomposition(u: &CaloricFunction, ball: &ParabolicBall, params: &DecompositionParams) -> Result<NeckDecomposition> {
    check_dim(u.n(), ball.center.dim())?;
    let n = u.n();
    let k = params.k;
    if k == 0 || k > n + 2 {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= n + 2, got {k}")));
    }
    if !(params.r_star > 0.0 && params.r_star <= ball.radius) {
        return Err(Error::InvalidArgument("need 0 < r_star <= radius".into()));
    }
    let kk = k as i32;
    let m0 = nearest_integer(u.frequency_fast(&ball.center, ball.radius * ball.radius));
    let mut out = NeckDecomposition {
        input: ball.clone(),
        params: params.clone(),
        necks: vec![],
        b_balls: vec![],
        f_balls: vec![],
        tree: vec![],
        ledger: ContentLedger::default(),
        partial: false,
    };
    let mut stack = vec![Work { ball: ball.clone(), depth: 0, m: m0, parent: None }];
    let rs = params.r_star * (1.0 + 1e-9);
    while let Some(w) = stack.pop() {
        let node = out.tree.len();
        let r = w.ball.radius;
        let push_leaf = |out: &mut NeckDecomposition, class: BallClass| {
            out.tree.push(TreeNode { ball: w.ball.clone(), class, depth: w.depth, m: w.m, parent: w.parent, neck: None });
            match class {
                BallClass::B => {
                    out.ledger.b_balls += r.powi(kk);
                    out.ledger.b_count += 1;
                    out.b_balls.push(w.ball.clone());
                }
                _ => {
                    out.ledger.f_balls += r.powi(kk);
                    out.ledger.f_count += 1;
                    out.f_balls.push(w.ball.clone());
                }
            }
        };
        if r <= rs {
            push_leaf(&mut out, BallClass::F);
            continue;
        }
        if w.depth >= params.max_depth || out.tree.len() >= params.max_balls {
            out.partial = true;
            push_leaf(&mut out, BallClass::F);
            continue;
        }
        if is_b_ball(u, &w.ball, k, params.eta)? {
            push_leaf(&mut out, BallClass::B);
            continue;
        }
        let pinched = pinched_set(u, &w.ball.center, r, w.m, params.delta);
        if pinched.is_empty() {
            out.ledger.e_count += 1;
            out.tree.push(TreeNode { ball: w.ball.clone(), class: BallClass::E, depth: w.depth, m: w.m, parent: w.parent, neck: None });
            let m2 = nearest_integer(u.frequency_fast(&w.ball.center, r * r));
            if m2 != w.m {
                stack.push(Work { ball: w.ball.clone(), depth: w.depth + 1, m: m2, parent: Some(node) });
            } else {
                for c in cover_children(&w.ball, 0.5 * r) {
                    stack.push(Work { ball: c, depth: w.depth + 1, m: w.m, parent: Some(node) });
                }
            }
            continue;
        }
        let independent = independence_check(&pinched, k, params.alpha * r)?.is_independent();
        let neck = if independent { build_neck(u, &w.ball, &pinched, w.m, params)? } else { None };
        let Some((neck, holes)) = neck else {
            out.ledger.d_count += 1;
            out.tree.push(TreeNode { ball: w.ball.clone(), class: BallClass::D, depth: w.depth, m: w.m, parent: w.parent, neck: None });
            for c in cover_children(&w.ball, 0.5 * r) {
                stack.push(Work { ball: c, depth: w.depth + 1, m: w.m, parent: Some(node) });
            }
            continue;
        };
        let neck_idx = out.necks.len();
        out.tree.push(TreeNode { ball: w.ball.clone(), class: BallClass::C, depth: w.depth, m: w.m, parent: w.parent, neck: Some(neck_idx) });
        out.ledger.necks += neck.scale().powi(kk);
        out.ledger.neck_count += 1;
        let neck_ball = neck.center_ball.clone();
        for hole in holes {
            let dx = dp(&SpaceTimePoint::new(hole.center.x.clone(), 0.0), &SpaceTimePoint::new(w.ball.center.x.clone(), 0.0));
            let dt = (hole.center.t - w.ball.center.t).abs();
            let touches = dx <= hole.radius + r && dt <= hole.radius * hole.radius + r * r;
            if touches {
                stack.push(Work { ball: hole, depth: w.depth + 1, m: w.m, parent: Some(node) });
            }
        }
        if !w.ball.inside(&neck_ball) {
            for c in cover_children(&w.ball, 0.5 * r) {
                if !c.inside(&neck_ball) {
                    stack.push(Work { ball: c, depth: w.depth + 1, m: w.m, parent: Some(node) });
                }
            }
        }
        out.necks.push(neck);
    }
    Ok(out)
}

/// Build a neck of scale r around the pinched point closest to the ball center.
/// Returns the neck and the closed holes P(z, r_z) of its centers.
fn build_neck(
    u: &CaloricFunction,
    ball: &ParabolicBall,
    pinched: &[SpaceTimePoint],
    m: u32,
    params: &DecompositionParams,
) -> Result<Option<(NeckRegion, Vec<ParabolicBall>)>> {
    let r = ball.radius;
    let g = params.gamma;
    let yc = pinched
        .iter()
        .min_by(|a, b| dp(a, &ball.center).total_cmp(&dp(b, &ball.center)))
        .cloned()
        .expect("pinched set is nonempty");
    let plane = best_symmetry_plane(u, &yc, r, params.k)?.plane.with_base(yc.clone());
    let sigma = params.r_star;
    let dimv = plane.spatial_basis.len();
    let mx = ((2.0 * r) / sigma).ceil() as i64;
    let mt = if plane.vertical { ((4.0 * r * r) / (sigma * sigma)).ceil() as i64 } else { 0 };
    let est = (2 * mx + 1).pow(dimv as u32) as f64 * (2 * mt + 1) as f64;
    if est > params.max_centers as f64 {
        return Err(Error::BudgetExceeded(format!("neck net would need about {est:.0} centers")));
    }
    let neck_ball = ParabolicBall { center: yc.clone(), radius: 2.0 * r };
    let mut net: Vec<SpaceTimePoint> = vec![yc.clone()];
    let side = (2 * mx + 1) as usize;
    for flat in 0..side.pow(dimv as u32) {
        let mut rem = flat;
        let c: Vec<f64> = (0..dimv)
            .map(|_| {
                let v = (rem % side) as i64 - mx;
                rem /= side;
                v as f64 * sigma
            })
            .collect();
        for j in -mt..=mt {
            if c.iter().all(|&v| v == 0.0) && j == 0 {
                continue;
            }
            let p = offset_point(&plane, &yc, &c, j as f64 * sigma * sigma);
            if neck_ball.contains(&p) {
                net.push(p);
            }
        }
    }
    let proto = NeckRegion {
        center_ball: neck_ball.clone(),
        centers: WeightedCloud::uniform(vec![yc.clone()], 0.0)?,
        model_plane: plane.clone(),
        m,
        k: params.k,
        delta: params.delta,
        eta: params.eta,
        gamma: g,
        radius_floor: params.r_star,
        net_spacing: sigma,
    };
    let top = r / (g * g * g);
    let cap = g * r;
    let checks = doubling_scales(params.r_star, top);
    let radii: Vec<Option<f64>> = net
        .par_iter()
        .map(|z| {
            // smallest admissible radius such that every check scale above it passes
            let mut ok_from = checks.len();
            for (idx, &s) in checks.iter().enumerate().rev() {
                let (a, b) = neck_scale_ok(u, z, s, &plane, &proto);
                if a > 0.0 && b > 0.0 {
                    ok_from = idx;
                } else {
                    break;
                }
            }
            let rz = checks.get(ok_from).copied()?;
            (rz <= cap * (1.0 + 1e-12)).then_some(rz)
        })
        .collect();
    if radii[0].is_none() {
        return Ok(None);
    }
    let mut pts = Vec::new();
    let mut ws = Vec::new();
    for (p, rz) in net.into_iter().zip(radii) {
        if let Some(rz) = rz {
            pts.push(p);
            ws.push(rz);
        }
    }
    let holes: Vec<ParabolicBall> =
        pts.iter().zip(&ws).map(|(p, &rz)| ParabolicBall { center: p.clone(), radius: rz }).collect();
    let neck = NeckRegion { centers: WeightedCloud::new(pts, ws)?, ..proto };
    Ok(Some((neck, holes)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caloricpoly::{heat_polynomial, CaloricPolynomial};

    #[test]
    fn children_cover_parent() {
        let b = ParabolicBall { center: SpaceTimePoint::origin(2), radius: 1.0 };
        let kids = cover_children(&b, 0.5);
        for p in ball_lattice(&b, 7, true) {
            assert!(kids.iter().any(|c| c.contains(&p)), "{p:?}");
        }
    }

    #[test]
    fn constant_is_one_b_ball() {
        let u = CaloricFunction::new(CaloricPolynomial::one(1));
        let b = ParabolicBall { center: SpaceTimePoint::origin(1), radius: 1.0 };
        let d = greedy_neck_decomposition(&u, &b, &DecompositionParams::new(2, 1e-3, 0.05, 1.0 / 16.0)).unwrap();
        assert_eq!(d.b_balls.len(), 1);
        assert!(d.necks.is_empty() && d.f_balls.is_empty());
    }

    #[test]
    fn h1_pinched_set_hugs_the_axis() {
        let u = CaloricFunction::new(heat_polynomial(1, 1, 0));
        let v = pinched_set(&u, &SpaceTimePoint::new(vec![0.3], 0.0), 0.25, 1, 0.05);
        assert!(!v.is_empty());
        assert!(v.iter().all(|p| p.x[0].abs() < 0.02));
    }
}
