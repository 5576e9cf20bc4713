//! Weighted point clouds in space-time: covariance, parabolic beta numbers,
//! best vertical planes, kappa numbers, Ahlfors regularity and Carleson sums.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{lstsq, sym_eigen_sorted, CompensatedSum};
use crate::spacetime::{ParabolicBall, ParabolicPlane, SpaceTimePoint};

/// Finite measure sum_i w_i delta_{p_i}.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct WeightedCloud {
    pub points: Vec<SpaceTimePoint>,
    pub weights: Vec<f64>,
}

impl WeightedCloud {
    pub fn new(points: Vec<SpaceTimePoint>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("weights must be finite and nonnegative, got {w}")));
        }
        if let Some(p) = points.first() {
            let n = p.dim();
            for q in &points {
                check_dim(n, q.dim())?;
            }
        }
        Ok(Self { points, weights })
    }

    pub fn uniform(points: Vec<SpaceTimePoint>, w: f64) -> Result<Self> {
        let weights = vec![w; points.len()];
        Self::new(points, weights)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(|p| p.dim())
    }

    pub fn total_mass(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        for w in &self.weights {
            acc.add(*w);
        }
        acc.value()
    }

    /// Restriction to the open ball.
    pub fn restrict(&self, ball: &ParabolicBall) -> WeightedCloud {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (p, w) in self.points.iter().zip(&self.weights) {
            if ball.contains(p) {
                points.push(p.clone());
                weights.push(*w);
            }
        }
        WeightedCloud { points, weights }
    }

    /// mu(P(center, r)).
    pub fn mass_in(&self, ball: &ParabolicBall) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .filter(|(p, _)| ball.contains(p))
            .map(|(_, w)| *w)
            .sum()
    }

    /// Image under (x, t) -> (c + lambda (x - c), c_t + lambda^2 (t - c_t)) with weights scaled by `wscale`.
    pub fn rescale(&self, center: &SpaceTimePoint, lambda: f64, wscale: f64) -> WeightedCloud {
        let points = self
            .points
            .iter()
            .map(|p| {
                let x = p.x.iter().zip(&center.x).map(|(a, c)| c + lambda * (a - c)).collect();
                SpaceTimePoint::new(x, center.t + lambda * lambda * (p.t - center.t))
            })
            .collect();
        WeightedCloud { points, weights: self.weights.iter().map(|w| w * wscale).collect() }
    }

    /// CSV with columns x1..xn,t,w and a header line.
    pub fn to_csv(&self) -> String {
        let n = self.dim().unwrap_or(0);
        let mut s = String::new();
        let cols: Vec<String> = (1..=n).map(|i| format!("x{i}")).chain(["t".to_string(), "w".to_string()]).collect();
        s.push_str(&cols.join(","));
        s.push('\n');
        for (p, w) in self.points.iter().zip(&self.weights) {
            s.push_str(&format!("{},{:.17e}\n", p.to_csv_row(), w));
        }
        s
    }

    /// Parse CSV with columns x1..xn,t,w; a non-numeric first line is a header.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
            let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            let vals = match parsed {
                Ok(v) => v,
                Err(_) if points.is_empty() && lineno == 0 => continue,
                Err(e) => return Err(Error::Parse(format!("line {}: {e}", lineno + 1))),
            };
            if vals.len() < 3 {
                return Err(Error::Parse(format!("line {}: need at least x1,t,w", lineno + 1)));
            }
            let n = vals.len() - 2;
            points.push(SpaceTimePoint::new(vals[..n].to_vec(), vals[n]));
            weights.push(vals[n + 1]);
        }
        Self::new(points, weights)
    }
}

/// Spatial center of mass and covariance of the normalized restriction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Covariance {
    pub mass: f64,
    pub x_cm: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    /// Ascending eigenvalues of q.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
}

fn weighted_scatter(points: &[&SpaceTimePoint], weights: &[f64], n: usize) -> (f64, Vec<f64>, DMatrix<f64>) {
    let mass: f64 = weights.iter().sum();
    let mut mean = vec![0.0; n];
    for (p, w) in points.iter().zip(weights) {
        for (m, x) in mean.iter_mut().zip(&p.x) {
            *m += w * x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= mass);
    let mut s = DMatrix::zeros(n, n);
    for (p, w) in points.iter().zip(weights) {
        let d: Vec<f64> = p.x.iter().zip(&mean).map(|(a, b)| a - b).collect();
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] += w * d[i] * d[j];
            }
        }
    }
    (mass, mean, s)
}

pub fn covariance(mu: &WeightedCloud, ball: &ParabolicBall) -> Result<Covariance> {
    check_dim(ball.center.dim(), mu.dim().unwrap_or(ball.center.dim()))?;
    let sub = mu.restrict(ball);
    if sub.is_empty() {
        return Err(Error::InsufficientData("measure of the ball is zero".into()));
    }
    let n = ball.center.dim();
    let refs: Vec<&SpaceTimePoint> = sub.points.iter().collect();
    let (mass, mean, s) = weighted_scatter(&refs, &sub.weights, n);
    let q = s / mass;
    let (vals, vecs) = sym_eigen_sorted(&q);
    Ok(Covariance {
        mass,
        x_cm: mean,
        q: (0..n).map(|i| (0..n).map(|j| q[(i, j)]).collect()).collect(),
        eigenvalues: vals,
        eigenvectors: vecs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaneFamily {
    Vertical,
    All,
}

/// beta^2 together with the plane that achieves it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BetaNumber {
    pub center: SpaceTimePoint,
    pub r: f64,
    pub k: usize,
    /// beta^2 as defined, not its square root.
    pub value: f64,
    pub best_plane: ParabolicPlane,
}

fn vertical_beta(
    sub: &WeightedCloud,
    center: &SpaceTimePoint,
    k: usize,
) -> Option<(f64, ParabolicPlane)> {
    let n = center.dim();
    if k < 2 || k - 2 > n {
        return None;
    }
    let refs: Vec<&SpaceTimePoint> = sub.points.iter().collect();
    let (_, mean, s) = weighted_scatter(&refs, &sub.weights, n);
    let (vals, vecs) = sym_eigen_sorted(&s);
    let drop = n + 2 - k;
    let value: f64 = vals[..drop].iter().map(|v| v.max(0.0)).sum();
    let basis: Vec<Vec<f64>> = vecs[drop..].to_vec();
    let plane = ParabolicPlane { base: SpaceTimePoint::new(mean, center.t), spatial_basis: basis, vertical: true };
    Some((value, plane))
}

/// sum_i w_i max(|pi_perp (y_i - c)|^2, |t_i - t0|) minimized over horizontal
/// k-planes at time t0 by active-set PCA.
fn horizontal_at(sub: &WeightedCloud, k: usize, t0: f64) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let n = sub.points[0].dim();
    let a: Vec<f64> = sub.points.iter().map(|p| (p.t - t0).abs()).collect();
    let mut active: Vec<bool> = vec![true; sub.len()];
    let mut best: Option<(f64, Vec<f64>, Vec<Vec<f64>>)> = None;
    for _ in 0..32 {
        let idx: Vec<usize> = (0..sub.len()).filter(|&i| active[i]).collect();
        let (mean, basis) = if idx.is_empty() {
            (sub.points[0].x.clone(), vec![])
        } else {
            let refs: Vec<&SpaceTimePoint> = idx.iter().map(|&i| &sub.points[i]).collect();
            let ws: Vec<f64> = idx.iter().map(|&i| sub.weights[i]).collect();
            let (_, mean, s) = weighted_scatter(&refs, &ws, n);
            let (_, vecs) = sym_eigen_sorted(&s);
            (mean, vecs[n - k..].to_vec())
        };
        let mut total = 0.0;
        let mut next = vec![false; sub.len()];
        for (i, p) in sub.points.iter().enumerate() {
            let d: Vec<f64> = p.x.iter().zip(&mean).map(|(x, m)| x - m).collect();
            let perp = crate::linalg::perp_component(&d, &basis);
            let d2 = crate::linalg::dot(&perp, &perp);
            next[i] = d2 > a[i];
            total += sub.weights[i] * d2.max(a[i]);
        }
        if best.as_ref().map_or(true, |b| total < b.0) {
            best = Some((total, mean, basis));
        }
        if next == active {
            break;
        }
        active = next;
    }
    best.expect("at least one iteration")
}

fn horizontal_beta(sub: &WeightedCloud, center: &SpaceTimePoint, r: f64, k: usize) -> Option<(f64, ParabolicPlane)> {
    let n = center.dim();
    if k > n {
        return None;
    }
    let lo = center.t - r * r;
    let hi = center.t + r * r;
    let steps = 64;
    let eval = |t0: f64| horizontal_at(sub, k, t0);
    let grid: Vec<(f64, f64)> = (0..=steps)
        .into_par_iter()
        .map(|i| {
            let t0 = lo + (hi - lo) * i as f64 / steps as f64;
            (eval(t0).0, t0)
        })
        .collect();
    let &(_, t_best) = grid.iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("nonempty grid");
    let h = (hi - lo) / steps as f64;
    let (mut a, mut b) = ((t_best - h).max(lo), (t_best + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (eval(c).0, eval(d).0);
    for _ in 0..40 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = eval(c).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = eval(d).0;
        }
    }
    let candidates = [t_best, c, d];
    let (val, t0, mean, basis) = candidates
        .iter()
        .map(|&t| {
            let (v, m, bs) = eval(t);
            (v, t, m, bs)
        })
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .expect("three candidates");
    Some((val, ParabolicPlane { base: SpaceTimePoint::new(mean, t0), spatial_basis: basis, vertical: false }))
}

/// beta^2_{P,k}(center, r; mu) over the chosen plane family.
///
/// The vertical family is minimized exactly: for fixed L the best translate
/// passes through the weighted mean, and the best L is spanned by the top
/// eigenvectors of the scatter matrix. Horizontal planes are searched over a
/// grid of times with local refinement, so for `All` the value is an upper
/// bound on the infimum.
pub fn beta_number(mu: &WeightedCloud, center: &SpaceTimePoint, r: f64, k: usize, family: PlaneFamily) -> Result<BetaNumber> {
    let n = center.dim();
    if let Some(d) = mu.dim() {
        check_dim(n, d)?;
    }
    if k > n + 2 {
        return Err(Error::InvalidArgument(format!("need k <= n + 2, got {k}")));
    }
    let ball = ParabolicBall::new(center.clone(), r)?;
    let sub = mu.restrict(&ball);
    if sub.is_empty() {
        return Err(Error::InsufficientData("no mass in P(x, r)".into()));
    }
    let mut best = vertical_beta(&sub, center, k);
    if family == PlaneFamily::All || best.is_none() {
        if let Some(h) = horizontal_beta(&sub, center, r, k) {
            if best.as_ref().map_or(true, |b| h.0 < b.0) {
                best = Some(h);
            }
        }
    }
    let (raw, plane) = best.ok_or_else(|| Error::InvalidArgument(format!("no admissible plane family for k = {k}")))?;
    Ok(BetaNumber { center: center.clone(), r, k, value: raw / r.powi(k as i32 + 2), best_plane: plane })
}

/// Minimizing vertical k-plane: through x_cm, spanned by the top k-2 eigenvectors.
pub fn best_vertical_plane(mu: &WeightedCloud, x: &SpaceTimePoint, r: f64, k: usize) -> Result<ParabolicPlane> {
    let n = x.dim();
    if k < 2 || k - 2 > n {
        return Err(Error::InvalidArgument(format!("vertical planes need 2 <= k <= n + 2, got {k}")));
    }
    Ok(beta_number(mu, x, r, k, PlaneFamily::Vertical)?.best_plane)
}

/// Samples of a map F: V -> R^m in plane coordinates (v, t) with cell weights.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SampledGraph {
    pub coords: Vec<(Vec<f64>, f64)>,
    pub values: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SampledGraph {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Parabolic dimension k = dim(v) + 2 of the underlying vertical plane.
    pub fn k(&self) -> usize {
        self.coords.first().map_or(2, |c| c.0.len() + 2)
    }
}

fn in_plane_ball(c: &(Vec<f64>, f64), center: &(Vec<f64>, f64), r: f64) -> bool {
    let d2: f64 = c.0.iter().zip(&center.0).map(|(a, b)| (a - b) * (a - b)).sum();
    d2 < r * r && (c.1 - center.1).abs() < r * r
}

/// Least-squares fit of a time-independent affine map on the samples
/// selected by `mask`; returns the residual sum sum_i w_i |F_i - l(v_i)|^2.
pub(crate) fn affine_fit(g: &SampledGraph, idx: &[usize]) -> Result<(f64, DMatrix<f64>)> {
    let d = g.coords[0].0.len();
    let m = g.values[0].len();
    if idx.len() < d + 1 {
        return Err(Error::InsufficientData(format!("{} samples, need at least {}", idx.len(), d + 1)));
    }
    let a = DMatrix::from_fn(idx.len(), d + 1, |i, j| {
        let s = g.weights[idx[i]].sqrt();
        if j == 0 {
            s
        } else {
            s * g.coords[idx[i]].0[j - 1]
        }
    });
    let sv = a.clone().svd(false, false).singular_values;
    if sv.min() <= 1e-10 * sv.max() {
        return Err(Error::InsufficientData("samples do not span the plane (rank deficient)".into()));
    }
    let mut coef = DMatrix::zeros(d + 1, m);
    let mut res = 0.0;
    for c in 0..m {
        let b = DVector::from_iterator(idx.len(), idx.iter().map(|&i| g.weights[i].sqrt() * g.values[i][c]));
        let x = lstsq(&a, &b);
        let r = &a * &x - &b;
        res += r.norm_squared();
        coef.set_column(c, &x);
    }
    Ok((res, coef))
}

/// kappa^2 = inf_l r^-k int_{P^V(x, r)} (|F - l| / r)^2, with l affine and time-independent.
pub fn kappa_number(g: &SampledGraph, x: &(Vec<f64>, f64), r: f64) -> Result<f64> {
    if g.is_empty() {
        return Err(Error::InsufficientData("empty graph sample".into()));
    }
    let idx: Vec<usize> = (0..g.len()).filter(|&i| in_plane_ball(&g.coords[i], x, r)).collect();
    let (res, _) = affine_fit(g, &idx)?;
    let k = g.k() as i32;
    Ok(res / r.powi(k + 2))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AhlforsReport {
    pub k: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// max_ratio / min_ratio.
    pub spread: f64,
    pub balls: usize,
    pub regular: bool,
}

/// min and max of mu(P(x, s)) / s^k over sampled support points and scales.
///
/// With `domain` set, only balls contained in it are used. The measure counts
/// as regular when the spread is below `band`.
pub fn ahlfors_check(
    mu: &WeightedCloud,
    k: usize,
    scales: &[f64],
    domain: Option<&ParabolicBall>,
    max_centers: usize,
    band: f64,
) -> Result<AhlforsReport> {
    if mu.is_empty() || scales.is_empty() {
        return Err(Error::InsufficientData("ahlfors check needs a nonempty measure and scale list".into()));
    }
    let stride = (mu.len() / max_centers.max(1)).max(1);
    let centers: Vec<&SpaceTimePoint> = mu.points.iter().step_by(stride).collect();
    let ratios: Vec<f64> = centers
        .par_iter()
        .flat_map_iter(|c| {
            scales.iter().filter_map(move |&s| {
                let ball = ParabolicBall::new((*c).clone(), s).ok()?;
                if let Some(dom) = domain {
                    if !ball.inside(dom) {
                        return None;
                    }
                }
                Some(mu.mass_in(&ball) / s.powi(k as i32))
            })
        })
        .collect();
    if ratios.is_empty() {
        return Err(Error::InsufficientData("no ball of the requested scales fits in the domain".into()));
    }
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let spread = if min_ratio > 0.0 { max_ratio / min_ratio } else { f64::INFINITY };
    Ok(AhlforsReport { k, min_ratio, max_ratio, spread, balls: ratios.len(), regular: spread < band })
}

/// Default number of dyadic levels in the discrete Carleson sum.
pub const CARLESON_LEVELS: usize = 12;

/// r^-k sum over atoms y in `region` and dyadic s_i = s_max 2^-i of
/// beta^2(y, s_i) log 2 w_y.
pub fn carleson_energy(
    mu: &WeightedCloud,
    k: usize,
    region: &ParabolicBall,
    s_max: f64,
    levels: usize,
    family: PlaneFamily,
) -> Result<f64> {
    let inside: Vec<usize> = (0..mu.len()).filter(|&i| region.contains(&mu.points[i])).collect();
    let ln2 = std::f64::consts::LN_2;
    let terms: Vec<f64> = inside
        .par_iter()
        .map(|&i| -> Result<f64> {
            let y = &mu.points[i];
            let mut acc = 0.0;
            for l in 0..levels {
                let s = s_max * 0.5f64.powi(l as i32);
                let b = beta_number(mu, y, s, k, family)?;
                acc += b.value * ln2;
            }
            Ok(acc * mu.weights[i])
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum::<f64>() / region.radius.powi(k as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: &[f64], t: f64) -> SpaceTimePoint {
        SpaceTimePoint::new(x.to_vec(), t)
    }

    #[test]
    fn two_point_covariance() {
        let mu = WeightedCloud::uniform(vec![p(&[1.0, 0.0], 0.0), p(&[-1.0, 0.0], 0.0)], 1.0).unwrap();
        let c = covariance(&mu, &ParabolicBall::new(p(&[0.0, 0.0], 0.0), 2.0).unwrap()).unwrap();
        assert!(c.x_cm.iter().all(|v| v.abs() < 1e-15));
        assert!((c.q[0][0] - 1.0).abs() < 1e-15 && c.q[1][1].abs() < 1e-15);
    }

    #[test]
    fn two_point_beta_vanishes() {
        let mu = WeightedCloud::uniform(vec![p(&[0.5, 0.0], 0.0), p(&[-0.5, 0.0], 0.0)], 1.0).unwrap();
        let b = beta_number(&mu, &p(&[0.0, 0.0], 0.0), 1.0, 3, PlaneFamily::Vertical).unwrap();
        assert!(b.value.abs() < 1e-15);
        assert!((b.best_plane.spatial_basis[0][0].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_roundtrip() {
        let mu = WeightedCloud::new(vec![p(&[0.25, -1.0], 0.5)], vec![2.0]).unwrap();
        let back = WeightedCloud::from_csv(&mu.to_csv()).unwrap();
        assert_eq!(back.points, mu.points);
        assert_eq!(back.weights, mu.weights);
    }

    #[test]
    fn kappa_of_time_coordinate() {
        let mut g = SampledGraph::default();
        let steps = 2000;
        let h = 2.0 / steps as f64;
        for i in 0..steps {
            let t = -1.0 + h * (i as f64 + 0.5);
            g.coords.push((vec![], t));
            g.values.push(vec![t]);
            g.weights.push(h);
        }
        let k2 = kappa_number(&g, &(vec![], 0.0), 1.0).unwrap();
        assert!((k2 - 2.0 / 3.0).abs() < 1e-5);
    }
}
