//! Parabolic space-time geometry: points, cylinders, scaling-invariant planes
//! and quantitative independence of finite point sets.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, complement, dot, hemisphere_directions, min_enclosing_ball, norm, orthonormalize};

/// A point (x, t) of R^n x R.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub x: Vec<f64>,
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(x: Vec<f64>, t: f64) -> Self {
        Self { x, t }
    }

    pub fn origin(n: usize) -> Self {
        Self { x: vec![0.0; n], t: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().all(|v| v.is_finite())
    }

    /// Parabolic dilation about the origin: (x, t) -> (lambda x, lambda^2 t).
    pub fn dilate(&self, lambda: f64) -> Self {
        Self { x: self.x.iter().map(|v| v * lambda).collect(), t: self.t * lambda * lambda }
    }

    pub fn translate(&self, dx: &[f64], dt: f64) -> Self {
        Self { x: self.x.iter().zip(dx).map(|(a, b)| a + b).collect(), t: self.t + dt }
    }

    /// Parse `"x1,...,xn,t"`.
    pub fn parse(s: &str) -> Result<Self> {
        let vals: std::result::Result<Vec<f64>, _> = s.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| Error::Parse(format!("point '{s}': {e}")))?;
        if vals.len() < 2 {
            return Err(Error::Parse(format!("point '{s}' needs at least x1 and t")));
        }
        let t = vals[vals.len() - 1];
        Ok(Self { x: vals[..vals.len() - 1].to_vec(), t })
    }

    pub fn to_csv_row(&self) -> String {
        let mut parts: Vec<String> = self.x.iter().map(|v| format!("{v}")).collect();
        parts.push(format!("{}", self.t));
        parts.join(",")
    }
}

/// Parabolic distance max(|dx|, sqrt|dt|).
pub fn parabolic_distance(a: &SpaceTimePoint, b: &SpaceTimePoint) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(parabolic_distance_unchecked(a, b))
}

#[inline]
pub(crate) fn parabolic_distance_unchecked(a: &SpaceTimePoint, b: &SpaceTimePoint) -> f64 {
    let dx = a.x.iter().zip(&b.x).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    dx.max((a.t - b.t).abs().sqrt())
}

/// Open parabolic cylinder P(x, r) = B(x, r) x (t - r^2, t + r^2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParabolicBall {
    pub center: SpaceTimePoint,
    pub radius: f64,
}

impl ParabolicBall {
    pub fn new(center: SpaceTimePoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, p: &SpaceTimePoint) -> bool {
        parabolic_distance_unchecked(&self.center, p) < self.radius
    }

    pub fn contains_closed(&self, p: &SpaceTimePoint) -> bool {
        parabolic_distance_unchecked(&self.center, p) <= self.radius
    }

    /// Whether `self` is contained in `other`.
    pub fn inside(&self, other: &ParabolicBall) -> bool {
        let dx = norm(&linalg::sub(&self.center.x, &other.center.x));
        let dt = (self.center.t - other.center.t).abs();
        dx + self.radius <= other.radius + 1e-12 * other.radius
            && dt + self.radius * self.radius <= other.radius * other.radius * (1.0 + 1e-12)
    }

    /// Lebesgue measure |B_r| * 2 r^2.
    pub fn volume(&self) -> f64 {
        let n = self.center.dim();
        euclidean_ball_volume(n, self.radius) * 2.0 * self.radius * self.radius
    }
}

pub fn euclidean_ball_volume(n: usize, r: f64) -> f64 {
    // omega_n = pi^{n/2} / Gamma(n/2 + 1), via the two-step recursion
    let mut omega = [1.0f64, 2.0];
    let mut w = if n == 0 { 1.0 } else { 2.0 };
    for d in 2..=n {
        w = omega[d % 2] * 2.0 * std::f64::consts::PI / d as f64;
        omega[d % 2] = w;
    }
    w * r.powi(n as i32)
}

/// Horizontal (L x {0}) or vertical (L x R) parabolic plane through `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParabolicPlane {
    pub base: SpaceTimePoint,
    pub spatial_basis: Vec<Vec<f64>>,
    pub vertical: bool,
}

impl ParabolicPlane {
    /// Build a plane from spanning vectors; they are orthonormalized and must be
    /// linearly independent.
    pub fn new(base: SpaceTimePoint, vectors: &[Vec<f64>], vertical: bool) -> Result<Self> {
        let n = base.dim();
        for v in vectors {
            check_dim(n, v.len())?;
        }
        let basis = orthonormalize(vectors, 1e-10);
        if basis.len() != vectors.len() {
            return Err(Error::InvalidArgument("plane spanning vectors are linearly dependent".into()));
        }
        Ok(Self { base, spatial_basis: basis, vertical })
    }

    pub fn linear(n: usize, vectors: &[Vec<f64>], vertical: bool) -> Result<Self> {
        Self::new(SpaceTimePoint::origin(n), vectors, vertical)
    }

    /// Coordinate plane spanned by the listed axes.
    pub fn coordinate(n: usize, axes: &[usize], vertical: bool) -> Self {
        let vectors: Vec<Vec<f64>> = axes
            .iter()
            .map(|&a| {
                let mut e = vec![0.0; n];
                e[a] = 1.0;
                e
            })
            .collect();
        Self { base: SpaceTimePoint::origin(n), spatial_basis: vectors, vertical }
    }

    pub fn n(&self) -> usize {
        self.base.dim()
    }

    /// Parabolic dimension: dim L for horizontal planes, dim L + 2 for vertical.
    pub fn k(&self) -> usize {
        self.spatial_basis.len() + if self.vertical { 2 } else { 0 }
    }

    pub fn with_base(&self, base: SpaceTimePoint) -> Self {
        Self { base, spatial_basis: self.spatial_basis.clone(), vertical: self.vertical }
    }

    pub fn normal_basis(&self) -> Vec<Vec<f64>> {
        complement(&self.spatial_basis, self.n())
    }

    /// Spatial component of y - base orthogonal to L.
    pub fn perp(&self, y: &SpaceTimePoint) -> Vec<f64> {
        linalg::perp_component(&linalg::sub(&y.x, &self.base.x), &self.spatial_basis)
    }

    pub fn distance(&self, y: &SpaceTimePoint) -> f64 {
        let d = norm(&self.perp(y));
        if self.vertical {
            d
        } else {
            d.max((y.t - self.base.t).abs().sqrt())
        }
    }

    /// Closest point of the plane to y under d_P.
    pub fn project(&self, y: &SpaceTimePoint) -> SpaceTimePoint {
        let p = self.perp(y);
        let x: Vec<f64> = y.x.iter().zip(&p).map(|(a, b)| a - b).collect();
        let t = if self.vertical { y.t } else { self.base.t };
        SpaceTimePoint { x, t }
    }

    /// Coordinates (v, t) of y in the plane frame: v = L-coordinates of y - base.
    pub fn coordinates(&self, y: &SpaceTimePoint) -> (Vec<f64>, f64) {
        let d = linalg::sub(&y.x, &self.base.x);
        (self.spatial_basis.iter().map(|q| dot(&d, q)).collect(), y.t - self.base.t)
    }

    /// Inverse of [`coordinates`](Self::coordinates), ignoring the normal part.
    pub fn point_at(&self, v: &[f64], t: f64) -> SpaceTimePoint {
        let mut x = self.base.x.clone();
        for (c, q) in v.iter().zip(&self.spatial_basis) {
            for (xi, qi) in x.iter_mut().zip(q) {
                *xi += c * qi;
            }
        }
        SpaceTimePoint { x, t: if self.vertical { self.base.t + t } else { self.base.t } }
    }
}

pub fn plane_distance(y: &SpaceTimePoint, v: &ParabolicPlane) -> Result<f64> {
    check_dim(v.n(), y.dim())?;
    Ok(v.distance(y))
}

/// A point set certified to be (k, alpha)-independent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndependentSet {
    pub points: Vec<SpaceTimePoint>,
    pub k: usize,
    pub alpha: f64,
    pub temporal: bool,
    /// Minimized covering radius over Aff_P(k-1) found by the certification search.
    pub covering_radius: f64,
}

#[derive(Debug, Clone)]
pub enum Independence {
    Independent(IndependentSet),
    Dependent { witness: ParabolicPlane, covering_radius: f64 },
}

impl Independence {
    pub fn is_independent(&self) -> bool {
        matches!(self, Independence::Independent(_))
    }
}

/// Relative certification margin used by [`independence_check`].
pub const CERT_MARGIN: f64 = 1e-3;

/// Decide whether `points` is (k, alpha)-independent.
///
/// The covering radius min_{W in Aff_P(k-1)} max_i d_P(x_i, W) is computed by
/// splitting into horizontal and vertical families. For a fixed linear part L
/// the optimal translate is the center of the smallest enclosing ball of the
/// projections onto L-perp (and the midpoint time for horizontal planes), so
/// only L has to be searched.
pub fn independence_check(points: &[SpaceTimePoint], k: usize, alpha: f64) -> Result<Independence> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("independence check needs at least one point".into()));
    }
    let n = points[0].dim();
    for p in points {
        check_dim(n, p.dim())?;
    }
    if k == 0 || k - 1 > n + 1 {
        return Err(Error::InvalidArgument(format!("independence requires 1 <= k <= n+2, got k={k}, n={n}")));
    }
    let (radius, witness) = covering_radius(points, k - 1);
    if radius > alpha * (1.0 + CERT_MARGIN) {
        let tmin = points.iter().map(|p| p.t).fold(f64::INFINITY, f64::min);
        let tmax = points.iter().map(|p| p.t).fold(f64::NEG_INFINITY, f64::max);
        Ok(Independence::Independent(IndependentSet {
            points: points.to_vec(),
            k,
            alpha,
            temporal: tmax - tmin >= alpha * alpha,
            covering_radius: radius,
        }))
    } else {
        Ok(Independence::Dependent { witness, covering_radius: radius })
    }
}

/// min over W in Aff_P(j) of max_i d_P(x_i, W), with a minimizing plane.
pub fn covering_radius(points: &[SpaceTimePoint], j: usize) -> (f64, ParabolicPlane) {
    let n = points[0].dim();
    let mut best: Option<(f64, ParabolicPlane)> = None;
    let tmin = points.iter().map(|p| p.t).fold(f64::INFINITY, f64::min);
    let tmax = points.iter().map(|p| p.t).fold(f64::NEG_INFINITY, f64::max);
    let tmid = 0.5 * (tmin + tmax);
    let time_radius = (0.5 * (tmax - tmin)).max(0.0).sqrt();
    if j <= n {
        let (r, basis, center) = min_projected_radius(points, j);
        let r = r.max(time_radius);
        let plane = ParabolicPlane { base: SpaceTimePoint::new(center, tmid), spatial_basis: basis, vertical: false };
        best = Some((r, plane));
    }
    if j >= 2 && j - 2 <= n {
        let (r, basis, center) = min_projected_radius(points, j - 2);
        if best.as_ref().map_or(true, |(b, _)| r < *b) {
            let plane = ParabolicPlane { base: SpaceTimePoint::new(center, tmid), spatial_basis: basis, vertical: true };
            best = Some((r, plane));
        }
    }
    best.expect("j <= n + 1 guarantees at least one plane family")
}

/// Minimize over d-dimensional linear L the enclosing radius of the spatial
/// projections onto L-perp. Returns (radius, basis of L, base point in R^n).
fn min_projected_radius(points: &[SpaceTimePoint], d: usize) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
    let n = points[0].dim();
    let xs: Vec<&Vec<f64>> = points.iter().map(|p| &p.x).collect();
    let eval = |basis: &[Vec<f64>]| -> (f64, Vec<f64>) {
        let normal = complement(basis, n);
        let proj: Vec<Vec<f64>> = xs.iter().map(|x| normal.iter().map(|w| dot(x, w)).collect()).collect();
        let ball = min_enclosing_ball(&proj);
        let mut c = vec![0.0; n];
        for (ci, w) in ball.center.iter().zip(&normal) {
            for (a, b) in c.iter_mut().zip(w) {
                *a += ci * b;
            }
        }
        (ball.radius.max(0.0), c)
    };
    if d == 0 {
        let (r, c) = eval(&[]);
        return (r, vec![], c);
    }
    if d >= n {
        let basis: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect();
        return (0.0, basis, xs[0].iter().map(|_| 0.0).collect());
    }
    // A single unit vector u parametrizes L when d == 1 (L = span u) or when
    // d == n - 1 (L = u-perp).
    if d == 1 || d == n - 1 {
        let to_basis = |u: &[f64]| -> Vec<Vec<f64>> {
            if d == 1 {
                vec![u.to_vec()]
            } else {
                complement(&[u.to_vec()], n)
            }
        };
        let f = |u: &[f64]| eval(&to_basis(u)).0;
        let start: Vec<Vec<f64>> = match n {
            2 => (0..360)
                .map(|i| {
                    let th = std::f64::consts::PI * i as f64 / 360.0;
                    vec![th.cos(), th.sin()]
                })
                .collect(),
            3 => hemisphere_directions(600).into_iter().map(|v| v.to_vec()).collect(),
            _ => random_unit_vectors(n, 400 * n),
        };
        let u = minimize_on_sphere(&f, start);
        let basis = to_basis(&u);
        let (r, c) = eval(&basis);
        return (r, basis, c);
    }
    // general Grassmannian: random frames refined by perturbation
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut best_basis: Vec<Vec<f64>> = vec![];
    let mut best_r = f64::INFINITY;
    for _ in 0..600 {
        let vecs: Vec<Vec<f64>> = (0..d).map(|_| (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()).collect();
        let basis = orthonormalize(&vecs, 1e-8);
        if basis.len() < d {
            continue;
        }
        let r = eval(&basis).0;
        if r < best_r {
            best_r = r;
            best_basis = basis;
        }
    }
    let mut step = 0.1;
    while step > 1e-7 {
        let mut improved = false;
        for a in 0..d {
            for i in 0..n {
                for sgn in [-1.0, 1.0] {
                    let mut cand = best_basis.clone();
                    cand[a][i] += sgn * step;
                    let basis = orthonormalize(&cand, 1e-8);
                    if basis.len() < d {
                        continue;
                    }
                    let r = eval(&basis).0;
                    if r < best_r {
                        best_r = r;
                        best_basis = basis;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    let (r, c) = eval(&best_basis);
    (r, best_basis, c)
}

fn random_unit_vectors(n: usize, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd1ec);
    (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            let nv = norm(&v).max(1e-300);
            v.into_iter().map(|x| x / nv).collect()
        })
        .collect()
}

/// Grid start followed by a shrinking-step pattern search on the sphere.
fn minimize_on_sphere(f: &dyn Fn(&[f64]) -> f64, start: Vec<Vec<f64>>) -> Vec<f64> {
    let n = start[0].len();
    let mut scored: Vec<(f64, Vec<f64>)> = start.into_iter().map(|u| (f(&u), u)).collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut overall: Option<(f64, Vec<f64>)> = None;
    for (mut fu, mut u) in scored.into_iter().take(4) {
        let mut step = 0.02;
        while step > 1e-9 {
            let mut improved = false;
            for i in 0..n {
                for sgn in [-1.0, 1.0] {
                    let mut c = u.clone();
                    c[i] += sgn * step;
                    let nc = norm(&c);
                    c.iter_mut().for_each(|x| *x /= nc);
                    let fc = f(&c);
                    if fc < fu {
                        fu = fc;
                        u = c;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if overall.as_ref().map_or(true, |(b, _)| fu < *b) {
            overall = Some((fu, u));
        }
    }
    overall.map(|(_, u)| u).unwrap_or_else(|| vec![1.0; n])
}

/// Plane spanned by an independent set together with the Gram–Schmidt bound.
#[derive(Debug, Clone)]
pub struct PlaneBasis {
    pub plane: ParabolicPlane,
    /// Constant c with |q_i| <= c |y - x_0| / max_j |x_j - x_0| for y in x_0 + L.
    pub bound: f64,
    offsets: Vec<Vec<f64>>,
}

impl PlaneBasis {
    /// Coefficients q with y = x_0 + sum q_j (x_j - x_0) for y in x_0 + L.
    pub fn coefficients(&self, y: &[f64]) -> Vec<f64> {
        let n = self.plane.n();
        let kk = self.offsets.len();
        let m = DMatrix::from_fn(n, kk, |i, j| self.offsets[j][i]);
        let rhs = nalgebra::DVector::from_iterator(n, y.iter().zip(&self.plane.base.x).map(|(a, b)| a - b));
        linalg::lstsq(&m, &rhs).iter().copied().collect()
    }

    pub fn recombine(&self, q: &[f64]) -> Vec<f64> {
        let mut y = self.plane.base.x.clone();
        for (qj, off) in q.iter().zip(&self.offsets) {
            for (a, b) in y.iter_mut().zip(off) {
                *a += qj * b;
            }
        }
        y
    }
}

/// Relative singular-value threshold below which offsets are rank deficient.
pub const RANK_TOL: f64 = 1e-3;

/// L = span{x_j - x_0}; horizontal plane if the set is spatial, vertical if temporal.
pub fn basis_from_independent(s: &IndependentSet) -> Result<PlaneBasis> {
    let x0 = &s.points[0];
    let n = x0.dim();
    let offsets: Vec<Vec<f64>> = s.points[1..].iter().map(|p| linalg::sub(&p.x, &x0.x)).collect();
    let kk = offsets.len();
    let expected = if s.temporal { s.k.saturating_sub(2) } else { s.k };
    if kk != expected {
        return Err(Error::InvalidArgument(format!(
            "basis needs K = {expected} offsets for a {} set with k = {}, got {kk}",
            if s.temporal { "temporal" } else { "spatial" },
            s.k
        )));
    }
    if kk == 0 {
        let plane = ParabolicPlane { base: x0.clone(), spatial_basis: vec![], vertical: s.temporal };
        return Ok(PlaneBasis { plane, bound: 0.0, offsets });
    }
    if kk > n {
        return Err(Error::InvalidArgument(format!("rank deficient: {kk} offsets in R^{n}")));
    }
    let m = DMatrix::from_fn(n, kk, |i, j| offsets[j][i]);
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if !(smax > 0.0) || smin < RANK_TOL * smax {
        return Err(Error::InvalidArgument(format!("rank deficient offsets: singular values {smin:e} / {smax:e}")));
    }
    let spread = offsets.iter().map(|o| norm(o)).fold(0.0, f64::max);
    let plane = ParabolicPlane::new(x0.clone(), &offsets, s.temporal)?;
    Ok(PlaneBasis { plane, bound: spread / smin, offsets })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: &[f64], t: f64) -> SpaceTimePoint {
        SpaceTimePoint::new(x.to_vec(), t)
    }

    #[test]
    fn distance_examples() {
        assert_eq!(parabolic_distance(&p(&[0.0], 0.0), &p(&[0.0], 0.04)).unwrap(), 0.2);
        assert_eq!(parabolic_distance(&p(&[0.0, 0.0], 0.0), &p(&[3.0, 4.0], -0.25)).unwrap(), 5.0);
        assert!(parabolic_distance(&p(&[0.0], 0.0), &p(&[0.0, 1.0], 0.0)).is_err());
    }

    #[test]
    fn plane_distance_examples() {
        let v = ParabolicPlane::coordinate(2, &[1], true);
        assert!((plane_distance(&p(&[0.3, 0.0], 0.9), &v).unwrap() - 0.3).abs() < 1e-15);
        let h = ParabolicPlane::coordinate(2, &[0], false);
        assert!((plane_distance(&p(&[0.3, 0.4], 0.09), &h).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn independence_examples() {
        let a = 0.1;
        let pts = vec![p(&[0.0], 0.0), p(&[3.0 * a], 0.0)];
        assert!(independence_check(&pts, 1, a).unwrap().is_independent());
        let tri = vec![p(&[0.0, 0.0], 0.0), p(&[1.0, 0.0], 0.0), p(&[0.0, 1.0], 0.0)];
        assert!(independence_check(&tri, 2, 0.1).unwrap().is_independent());
        let line = vec![p(&[0.0, 0.0], 0.0), p(&[1.0, 1.0], 0.0), p(&[2.0, 2.0], 0.0)];
        match independence_check(&line, 2, 0.1).unwrap() {
            Independence::Dependent { witness, covering_radius } => {
                assert!(covering_radius < 1e-6);
                for q in &line {
                    assert!(witness.distance(q) < 1e-6);
                }
            }
            _ => panic!("collinear points must be dependent"),
        }
    }

    #[test]
    fn ball_volume() {
        assert!((euclidean_ball_volume(2, 1.0) - std::f64::consts::PI).abs() < 1e-14);
        assert!((euclidean_ball_volume(3, 1.0) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
        assert_eq!(euclidean_ball_volume(1, 0.5), 1.0);
    }

    #[test]
    fn basis_unit_offsets() {
        let s = IndependentSet {
            points: vec![p(&[0.0, 0.0], 0.0), p(&[1.0, 0.0], 0.0), p(&[0.0, 1.0], 0.0)],
            k: 2,
            alpha: 0.1,
            temporal: false,
            covering_radius: 0.5,
        };
        let b = basis_from_independent(&s).unwrap();
        assert!((b.bound - 1.0).abs() < 1e-12);
    }
}
