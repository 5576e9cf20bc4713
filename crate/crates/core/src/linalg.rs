//! Small dense linear-algebra helpers shared by the geometric modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in it {
        acc.add(v);
    }
    acc.value()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Gram–Schmidt with one full re-orthogonalization pass.
///
/// Vectors whose residual norm drops below `tol` times their original norm are
/// discarded, so the output may be shorter than the input.
pub fn orthonormalize(vectors: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let scale = norm(v);
        if scale == 0.0 {
            continue;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &out {
                let c = dot(&w, q);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let nw = norm(&w);
        if nw > tol * scale {
            w.iter_mut().for_each(|x| *x /= nw);
            out.push(w);
        }
    }
    out
}

/// Orthonormal basis of the orthogonal complement of `span(basis)` in R^n.
pub fn complement(basis: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut all: Vec<Vec<f64>> = basis.to_vec();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        all.push(e);
    }
    let full = orthonormalize(&all, 1e-10);
    full[basis.len().min(full.len())..].to_vec()
}

/// Project `v` onto the orthogonal complement of an orthonormal `basis`.
pub fn perp_component(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut w = v.to_vec();
    for q in basis {
        let c = dot(v, q);
        for (wi, qi) in w.iter_mut().zip(q) {
            *wi -= c * qi;
        }
    }
    w
}

/// Symmetric eigen-decomposition with ascending eigenvalues.
///
/// Each eigenvector is normalized so its first component with magnitude above
/// 1e-12 is positive.
pub fn sym_eigen_sorted(m: &DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.nrows();
    if n == 0 {
        return (vec![], vec![]);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut vals = Vec::with_capacity(n);
    let mut vecs = Vec::with_capacity(n);
    for &i in &idx {
        vals.push(eig.eigenvalues[i]);
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        if let Some(first) = v.iter().copied().find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        vecs.push(v);
    }
    (vals, vecs)
}

/// Solve a small dense system; `None` when singular.
pub fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Option<DVector<f64>> {
    let lu = a.lu();
    lu.solve(&b)
}

/// Linear least squares via SVD; returns the minimum-norm solution.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(1e-300);
    svd.solve(b, tol).unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Smallest enclosing ball of a point set (Welzl, move-to-front variant).
#[derive(Debug, Clone)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    fn contains(&self, p: &[f64], eps: f64) -> bool {
        norm(&sub(p, &self.center)) <= self.radius * (1.0 + eps) + eps
    }
}

pub fn min_enclosing_ball(points: &[Vec<f64>]) -> Ball {
    let d = points.first().map(|p| p.len()).unwrap_or(0);
    if points.is_empty() {
        return Ball { center: vec![], radius: 0.0 };
    }
    if d == 0 {
        return Ball { center: vec![], radius: 0.0 };
    }
    if d == 1 {
        let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        return Ball { center: vec![0.5 * (lo + hi)], radius: 0.5 * (hi - lo) };
    }
    let scale = points
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1e-300);
    let eps = 1e-12;
    let mut pts: Vec<Vec<f64>> = points.to_vec();
    // deterministic scramble keeps the expected running time linear
    let len = pts.len();
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    for i in (1..len).rev() {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let j = (state % (i as u64 + 1)) as usize;
        pts.swap(i, j);
    }
    let mut support: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    let mut ball = mtf(&mut pts, len, &mut support, d, eps * scale.max(1.0));
    // guard against round-off: enlarge to cover every input point
    let mut r = ball.radius;
    for p in points {
        r = r.max(norm(&sub(p, &ball.center)));
    }
    ball.radius = r;
    ball
}

fn mtf(pts: &mut Vec<Vec<f64>>, end: usize, support: &mut Vec<Vec<f64>>, d: usize, eps: f64) -> Ball {
    let mut ball = ball_from_support(support, d);
    if support.len() == d + 1 {
        return ball;
    }
    let mut i = 0;
    while i < end {
        if !ball.contains(&pts[i], eps) {
            support.push(pts[i].clone());
            ball = mtf(pts, i, support, d, eps);
            support.pop();
            let p = pts.remove(i);
            pts.insert(0, p);
        }
        i += 1;
    }
    ball
}

fn ball_from_support(s: &[Vec<f64>], d: usize) -> Ball {
    match s.len() {
        0 => Ball { center: vec![0.0; d], radius: -1.0 },
        1 => Ball { center: s[0].clone(), radius: 0.0 },
        _ => {
            let p0 = &s[0];
            let vs: Vec<Vec<f64>> = s[1..].iter().map(|p| sub(p, p0)).collect();
            let m = vs.len();
            let mut g = DMatrix::zeros(m, m);
            let mut rhs = DVector::zeros(m);
            for i in 0..m {
                for j in 0..m {
                    g[(i, j)] = 2.0 * dot(&vs[i], &vs[j]);
                }
                rhs[i] = dot(&vs[i], &vs[i]);
            }
            let lam = solve(g, rhs).filter(|l| l.iter().all(|x| x.is_finite()));
            match lam {
                Some(lam) => {
                    let mut c = p0.clone();
                    for (l, v) in lam.iter().zip(&vs) {
                        for (ci, vi) in c.iter_mut().zip(v) {
                            *ci += l * vi;
                        }
                    }
                    let r = s.iter().map(|p| norm(&sub(p, &c))).fold(0.0, f64::max);
                    Ball { center: c, radius: r }
                }
                None => {
                    // degenerate support: fall back to the farthest pair
                    let mut best = (0, 0, -1.0);
                    for i in 0..s.len() {
                        for j in i + 1..s.len() {
                            let dd = norm(&sub(&s[i], &s[j]));
                            if dd > best.2 {
                                best = (i, j, dd);
                            }
                        }
                    }
                    let c: Vec<f64> = s[best.0].iter().zip(&s[best.1]).map(|(a, b)| 0.5 * (a + b)).collect();
                    let r = s.iter().map(|p| norm(&sub(p, &c))).fold(0.0, f64::max);
                    Ball { center: c, radius: r }
                }
            }
        }
    }
}

/// Fibonacci lattice on the upper unit hemisphere (z >= 0).
pub fn hemisphere_directions(count: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = (i as f64 + 0.5) / count as f64;
            let rad = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            [rad * phi.cos(), rad * phi.sin(), z]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = vec![1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn meb_of_triangle() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 0.1]];
        let b = min_enclosing_ball(&pts);
        assert!((b.radius - 1.0).abs() < 1e-12);
        assert!((b.center[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn meb_equilateral() {
        let s = 3f64.sqrt();
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, s]];
        let b = min_enclosing_ball(&pts);
        assert!((b.radius - 2.0 / s).abs() < 1e-12);
    }

    #[test]
    fn complement_is_orthonormal() {
        let b = orthonormalize(&[vec![1.0, 1.0, 0.0]], 1e-12);
        let c = complement(&b, 3);
        assert_eq!(c.len(), 2);
        for v in &c {
            assert!(dot(v, &b[0]).abs() < 1e-12);
            assert!((norm(v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_sign_convention() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let (vals, vecs) = sym_eigen_sorted(&m);
        assert_eq!(vals, vec![1.0, 2.0]);
        assert!(vecs[0][1] > 0.0 && vecs[1][0] > 0.0);
    }
}
