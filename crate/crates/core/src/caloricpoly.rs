//! Exact polynomial algebra in (x, t) with rational coefficients.
//!
//! Polynomials are sparse maps from an exponent vector `[a_1, ..., a_n, k]`
//! (spatial multi-index followed by the power of t) to a nonzero rational.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::spacetime::SpaceTimePoint;

pub type Q = BigRational;

pub fn q_int(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

pub fn q_frac(p: i64, q: i64) -> Q {
    Q::new(BigInt::from(p), BigInt::from(q))
}

/// Exact rational value of a finite float.
pub fn q_from_f64(v: f64) -> Result<Q> {
    Q::from_float(v).ok_or_else(|| Error::InvalidArgument(format!("non-finite value {v}")))
}

pub fn q_to_f64(v: &Q) -> f64 {
    v.to_f64().unwrap_or_else(|| {
        // ratio of huge integers: scale down before converting
        let n = v.numer().to_f64().unwrap_or(f64::NAN);
        let d = v.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Parse `"p/q"`, an integer, or a finite decimal such as `"-0.125"` exactly.
pub fn parse_rational(s: &str) -> Result<Q> {
    let s = s.trim();
    let bad = || Error::Parse(format!("invalid rational '{s}'"));
    if let Some((a, b)) = s.split_once('/') {
        let p: BigInt = a.trim().parse().map_err(|_| bad())?;
        let q: BigInt = b.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(Error::Parse(format!("zero denominator in '{s}'")));
        }
        return Ok(Q::new(p, q));
    }
    if let Ok(p) = s.parse::<BigInt>() {
        return Ok(Q::from_integer(p));
    }
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (ip, fp) = mant.split_once('.').unwrap_or((mant, ""));
    if ip.is_empty() && fp.is_empty() {
        return Err(bad());
    }
    let digits = format!("{ip}{fp}");
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let mut val = Q::from_integer(digits.parse::<BigInt>().map_err(|_| bad())?);
    let shift = exp - fp.len() as i32;
    let ten = Q::from_integer(BigInt::from(10));
    if shift >= 0 {
        val *= num_traits::pow(ten, shift as usize);
    } else {
        val /= num_traits::pow(ten, (-shift) as usize);
    }
    Ok(if neg { -val } else { val })
}

fn binomial(n: u32, k: u32) -> BigInt {
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    r
}

/// Exact sparse polynomial in (x_1..x_n, t).
#[derive(Clone, PartialEq, Eq)]
pub struct CaloricPolynomial {
    n: usize,
    terms: BTreeMap<Vec<u32>, Q>,
}

impl fmt::Debug for CaloricPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for CaloricPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in self.terms.iter().rev() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})")?;
            for (i, &a) in e[..self.n].iter().enumerate() {
                if a > 0 {
                    write!(f, "*x{}^{}", i + 1, a)?;
                }
            }
            if e[self.n] > 0 {
                write!(f, "*t^{}", e[self.n])?;
            }
        }
        Ok(())
    }
}

impl CaloricPolynomial {
    pub fn zero(n: usize) -> Self {
        Self { n, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, c: Q) -> Self {
        let mut p = Self::zero(n);
        p.add_term(vec![0; n + 1], c);
        p
    }

    pub fn one(n: usize) -> Self {
        Self::constant(n, Q::one())
    }

    /// The coordinate function x_axis.
    pub fn x(n: usize, axis: usize) -> Self {
        let mut e = vec![0; n + 1];
        e[axis] = 1;
        Self::monomial(n, e, Q::one())
    }

    pub fn t(n: usize) -> Self {
        let mut e = vec![0; n + 1];
        e[n] = 1;
        Self::monomial(n, e, Q::one())
    }

    pub fn monomial(n: usize, exps: Vec<u32>, c: Q) -> Self {
        assert_eq!(exps.len(), n + 1, "exponent vector must have n+1 entries");
        let mut p = Self::zero(n);
        p.add_term(exps, c);
        p
    }

    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (Vec<u32>, Q)>) -> Result<Self> {
        let mut p = Self::zero(n);
        for (e, c) in terms {
            check_dim(n + 1, e.len())?;
            p.add_term(e, c);
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Q)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, exps: &[u32]) -> Q {
        self.terms.get(exps).cloned().unwrap_or_else(Q::zero)
    }

    pub fn add_term(&mut self, exps: Vec<u32>, c: Q) {
        if c.is_zero() {
            return;
        }
        let remove = {
            let entry = self.terms.entry(exps.clone()).or_insert_with(Q::zero);
            *entry += c;
            entry.is_zero()
        };
        if remove {
            self.terms.remove(&exps);
        }
    }

    /// Largest total spatial degree plus t-degree as an ordinary polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum::<u32>()).max().unwrap_or(0)
    }

    /// Largest parabolic (weighted) degree |alpha| + 2k.
    pub fn parabolic_degree(&self) -> u32 {
        self.terms.keys().map(|e| weighted_degree(e, self.n)).max().unwrap_or(0)
    }

    /// Highest power of x_i (or of t when `var == n`).
    pub fn degree_in(&self, var: usize) -> u32 {
        self.terms.keys().map(|e| e[var]).max().unwrap_or(0)
    }

    pub fn depends_on_t(&self) -> bool {
        self.terms.keys().any(|e| e[self.n] > 0)
    }

    fn same_dim(&self, other: &Self) {
        assert_eq!(self.n, other.n, "polynomials live in different dimensions");
    }

    pub fn add(&self, other: &Self) -> Self {
        self.same_dim(other);
        let mut p = self.clone();
        for (e, c) in &other.terms {
            p.add_term(e.clone(), c.clone());
        }
        p
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-Q::one()))
    }

    pub fn scale(&self, c: &Q) -> Self {
        if c.is_zero() {
            return Self::zero(self.n);
        }
        Self { n: self.n, terms: self.terms.iter().map(|(e, v)| (e.clone(), v * c)).collect() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.same_dim(other);
        let mut p = Self::zero(self.n);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                p.add_term(e, c1 * c2);
            }
        }
        p
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut r = Self::one(self.n);
        for _ in 0..k {
            r = r.mul(self);
        }
        r
    }

    /// Partial derivative in x_i, or in t when `var == n`.
    pub fn partial(&self, var: usize) -> Self {
        let mut p = Self::zero(self.n);
        for (e, c) in &self.terms {
            if e[var] > 0 {
                let mut f = e.clone();
                f[var] -= 1;
                p.add_term(f, c * Q::from_integer(BigInt::from(e[var])));
            }
        }
        p
    }

    pub fn dx(&self, i: usize) -> Self {
        assert!(i < self.n);
        self.partial(i)
    }

    pub fn dt(&self) -> Self {
        self.partial(self.n)
    }

    pub fn gradient(&self) -> Vec<Self> {
        (0..self.n).map(|i| self.dx(i)).collect()
    }

    pub fn laplacian(&self) -> Self {
        let mut p = Self::zero(self.n);
        for i in 0..self.n {
            p = p.add(&self.dx(i).dx(i));
        }
        p
    }

    /// Substitute x_i -> a_i x_i + b_i and t -> a_t t + b_t.
    pub fn affine_substitute(&self, a: &[Q], b: &[Q]) -> Self {
        assert_eq!(a.len(), self.n + 1);
        assert_eq!(b.len(), self.n + 1);
        let mut out = Self::zero(self.n);
        // per-variable expansions (a v + b)^p cached by (var, p)
        let mut cache: BTreeMap<(usize, u32), Vec<Q>> = BTreeMap::new();
        for (e, c) in &self.terms {
            let mut partial: Vec<(Vec<u32>, Q)> = vec![(vec![0; self.n + 1], c.clone())];
            for (var, &p) in e.iter().enumerate() {
                if p == 0 {
                    continue;
                }
                let coeffs = cache
                    .entry((var, p))
                    .or_insert_with(|| {
                        (0..=p)
                            .map(|j| {
                                Q::from_integer(binomial(p, j))
                                    * num_traits::pow(a[var].clone(), j as usize)
                                    * num_traits::pow(b[var].clone(), (p - j) as usize)
                            })
                            .collect()
                    })
                    .clone();
                let mut next = Vec::with_capacity(partial.len() * (p as usize + 1));
                for (pe, pc) in &partial {
                    for (j, cj) in coeffs.iter().enumerate() {
                        if cj.is_zero() {
                            continue;
                        }
                        let mut ne = pe.clone();
                        ne[var] += j as u32;
                        next.push((ne, pc * cj));
                    }
                }
                partial = next;
            }
            for (ne, nc) in partial {
                out.add_term(ne, nc);
            }
        }
        out
    }

    /// u(x + shift_x, t + shift_t).
    pub fn shift(&self, shift_x: &[Q], shift_t: &Q) -> Self {
        let a = vec![Q::one(); self.n + 1];
        let mut b: Vec<Q> = shift_x.to_vec();
        b.push(shift_t.clone());
        self.affine_substitute(&a, &b)
    }

    /// Restrict to a fixed time; the result has no t-dependence.
    pub fn at_time(&self, t: &Q) -> Self {
        let mut p = Self::zero(self.n);
        for (e, c) in &self.terms {
            let mut f = e.clone();
            let k = f[self.n];
            f[self.n] = 0;
            p.add_term(f, c * num_traits::pow(t.clone(), k as usize));
        }
        p
    }

    pub fn eval_exact(&self, x: &[Q], t: &Q) -> Q {
        let mut acc = Q::zero();
        for (e, c) in &self.terms {
            let mut v = c.clone();
            for (xi, &p) in x.iter().zip(e.iter()) {
                if p > 0 {
                    v *= num_traits::pow(xi.clone(), p as usize);
                }
            }
            if e[self.n] > 0 {
                v *= num_traits::pow(t.clone(), e[self.n] as usize);
            }
            acc += v;
        }
        acc
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        FloatPoly::from_exact(self).eval(x, t)
    }

    pub fn to_float(&self) -> FloatPoly {
        FloatPoly::from_exact(self)
    }

    pub fn max_abs_coefficient(&self) -> Q {
        self.terms.values().map(|c| c.abs()).max().unwrap_or_else(Q::zero)
    }
}

pub(crate) fn weighted_degree(e: &[u32], n: usize) -> u32 {
    e[..n].iter().sum::<u32>() + 2 * e[n]
}

/// 1D heat polynomial h_m in the variable x_axis, embedded in R^n x R.
pub fn heat_polynomial(n: usize, m: u32, axis: usize) -> CaloricPolynomial {
    assert!(axis < n, "axis {axis} out of range for n = {n}");
    let x = CaloricPolynomial::x(n, axis);
    let t = CaloricPolynomial::t(n);
    let mut prev = CaloricPolynomial::one(n);
    if m == 0 {
        return prev;
    }
    let mut cur = x.clone();
    for j in 1..m {
        let next = x.mul(&cur).add(&t.mul(&prev).scale(&q_int(2 * j as i64)));
        prev = cur;
        cur = next;
    }
    cur
}

/// Product of 1D heat polynomials, one per axis: h_alpha = prod_i h_{alpha_i}(x_i).
pub fn heat_polynomial_multi(alpha: &[u32]) -> CaloricPolynomial {
    let n = alpha.len();
    let mut p = CaloricPolynomial::one(n);
    for (i, &a) in alpha.iter().enumerate() {
        if a > 0 {
            p = p.mul(&heat_polynomial(n, a, i));
        }
    }
    p
}

/// dt p - Laplacian p.
pub fn heat_residual(p: &CaloricPolynomial) -> CaloricPolynomial {
    p.dt().sub(&p.laplacian())
}

pub fn is_caloric(p: &CaloricPolynomial) -> bool {
    heat_residual(p).is_zero()
}

/// The operator A = 2 (t0 - t) Laplacian - (x - x0) . grad centred at `base`.
#[derive(Debug, Clone)]
pub struct DriftOperator {
    pub x0: Vec<Q>,
    pub t0: Q,
}

impl DriftOperator {
    pub fn new(x0: Vec<Q>, t0: Q) -> Self {
        Self { x0, t0 }
    }

    pub fn at_origin(n: usize) -> Self {
        Self { x0: vec![Q::zero(); n], t0: Q::zero() }
    }

    pub fn from_point(p: &SpaceTimePoint) -> Result<Self> {
        Ok(Self {
            x0: p.x.iter().map(|&v| q_from_f64(v)).collect::<Result<_>>()?,
            t0: q_from_f64(p.t)?,
        })
    }
}

pub fn drift_apply(a: &DriftOperator, p: &CaloricPolynomial) -> CaloricPolynomial {
    let n = p.n();
    assert_eq!(a.x0.len(), n);
    let two_tau = CaloricPolynomial::constant(n, a.t0.clone()).sub(&CaloricPolynomial::t(n)).scale(&q_int(2));
    let mut out = two_tau.mul(&p.laplacian());
    for i in 0..n {
        let xi = CaloricPolynomial::x(n, i).sub(&CaloricPolynomial::constant(n, a.x0[i].clone()));
        out = out.sub(&xi.mul(&p.dx(i)));
    }
    out
}

/// [A1, A2] u computed literally as A1(A2 u) - A2(A1 u).
pub fn drift_commutator(a1: &DriftOperator, a2: &DriftOperator, u: &CaloricPolynomial) -> CaloricPolynomial {
    drift_apply(a1, &drift_apply(a2, u)).sub(&drift_apply(a2, &drift_apply(a1, u)))
}

/// Residuals of the spatial and temporal commutator identities between the
/// drift operators based at `x1` and `x2`.
///
/// spatial  = grad u . (x2 - x1) - (2 A2 u - 2 A1 u - [A1, A2] u)
/// temporal = 2 (t2 - t1) dt u - ([A1, A2] u + A1 u - A2 u)
pub fn commutator_residuals(
    u: &CaloricPolynomial,
    x1: &DriftOperator,
    x2: &DriftOperator,
) -> (CaloricPolynomial, CaloricPolynomial) {
    let n = u.n();
    let a1u = drift_apply(x1, u);
    let a2u = drift_apply(x2, u);
    let comm = drift_commutator(x1, x2, u);
    let mut grad_dir = CaloricPolynomial::zero(n);
    for i in 0..n {
        grad_dir = grad_dir.add(&u.dx(i).scale(&(&x2.x0[i] - &x1.x0[i])));
    }
    let two = q_int(2);
    let spatial = grad_dir.sub(&a2u.scale(&two).sub(&a1u.scale(&two)).sub(&comm));
    let dt_term = u.dt().scale(&(&(&x2.t0 - &x1.t0) * &two));
    let temporal = dt_term.sub(&comm.add(&a1u).sub(&a2u));
    (spatial, temporal)
}

/// Decompose a caloric polynomial into homogeneous caloric pieces at `base`.
///
/// The pieces are the weighted-degree components of u written in the
/// coordinates (x - x0, t - t0); they are mutually orthogonal in
/// L^2(nu_{base; t0 - tau}) for every tau > 0, so `tau` only has to be positive.
pub fn spectral_decompose(
    u: &CaloricPolynomial,
    base: &DriftOperator,
    tau: &Q,
) -> Result<Vec<(u32, CaloricPolynomial)>> {
    if !tau.is_positive() {
        return Err(Error::InvalidArgument("tau must be positive".into()));
    }
    let residual = heat_residual(u);
    if !residual.is_zero() {
        return Err(Error::NotCaloric { nonzero_terms: residual.num_terms() });
    }
    let n = u.n();
    let local = u.shift(&base.x0, &base.t0);
    let mut graded: BTreeMap<u32, CaloricPolynomial> = BTreeMap::new();
    for (e, c) in local.terms() {
        graded
            .entry(weighted_degree(e, n))
            .or_insert_with(|| CaloricPolynomial::zero(n))
            .add_term(e.clone(), c.clone());
    }
    let neg_x: Vec<Q> = base.x0.iter().map(|v| -v.clone()).collect();
    let neg_t = -base.t0.clone();
    Ok(graded
        .into_iter()
        .filter(|(_, p)| !p.is_zero())
        .map(|(m, p)| (m, p.shift(&neg_x, &neg_t)))
        .collect())
}

/// u(c + lambda (x - c), c_t + lambda^2 (t - c_t)).
pub fn parabolic_rescale(u: &CaloricPolynomial, center: &DriftOperator, lambda: &Q) -> CaloricPolynomial {
    let n = u.n();
    let one = Q::one();
    let l2 = lambda * lambda;
    let mut a: Vec<Q> = vec![lambda.clone(); n];
    a.push(l2.clone());
    let mut b: Vec<Q> = center.x0.iter().map(|c| c * (&one - lambda)).collect();
    b.push(&center.t0 * (&one - &l2));
    u.affine_substitute(&a, &b)
}

/// Random caloric polynomial: rational combination of products of heat
/// polynomials with total degree at most `max_degree`.
pub fn random_caloric<R: Rng>(rng: &mut R, n: usize, max_degree: u32, num_terms: usize) -> CaloricPolynomial {
    let mut p = CaloricPolynomial::zero(n);
    for _ in 0..num_terms {
        let total = rng.gen_range(0..=max_degree);
        let mut alpha = vec![0u32; n];
        for _ in 0..total {
            alpha[rng.gen_range(0..n)] += 1;
        }
        let num = rng.gen_range(-9i64..=9);
        let den = rng.gen_range(1i64..=5);
        p = p.add(&heat_polynomial_multi(&alpha).scale(&q_frac(num, den)));
    }
    if p.is_zero() {
        p = CaloricPolynomial::one(n);
    }
    p
}

/// Random polynomial in (x, t), generally not caloric.
pub fn random_polynomial<R: Rng>(rng: &mut R, n: usize, max_degree: u32, num_terms: usize) -> CaloricPolynomial {
    let mut p = CaloricPolynomial::zero(n);
    for _ in 0..num_terms {
        let total = rng.gen_range(0..=max_degree);
        let mut e = vec![0u32; n + 1];
        for _ in 0..total {
            e[rng.gen_range(0..=n)] += 1;
        }
        p.add_term(e, q_frac(rng.gen_range(-9i64..=9), rng.gen_range(1i64..=7)));
    }
    p
}

/// Serialized description of a polynomial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub n: usize,
    pub terms: Vec<TermSpec>,
    #[serde(default)]
    pub caloric_check: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermSpec {
    pub alpha: Vec<u32>,
    #[serde(default)]
    pub k: u32,
    pub coef: String,
}

impl FunctionSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Build the polynomial, rejecting a non-caloric input when `caloric_check` is set.
    pub fn to_polynomial(&self) -> Result<CaloricPolynomial> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("spatial dimension must be at least 1".into()));
        }
        let mut p = CaloricPolynomial::zero(self.n);
        for term in &self.terms {
            check_dim(self.n, term.alpha.len())?;
            let mut e = term.alpha.clone();
            e.push(term.k);
            p.add_term(e, parse_rational(&term.coef)?);
        }
        if self.caloric_check {
            let r = heat_residual(&p);
            if !r.is_zero() {
                return Err(Error::NotCaloric { nonzero_terms: r.num_terms() });
            }
        }
        Ok(p)
    }

    pub fn from_polynomial(p: &CaloricPolynomial, caloric_check: bool) -> Self {
        let n = p.n();
        let terms = p
            .terms()
            .map(|(e, c)| TermSpec { alpha: e[..n].to_vec(), k: e[n], coef: c.to_string() })
            .collect();
        Self { n, terms, caloric_check }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("function spec serializes")
    }
}

/// Floating-point view of a polynomial used by the numeric modules.
#[derive(Debug, Clone)]
pub struct FloatPoly {
    pub n: usize,
    /// (exponents [a_1..a_n, k], coefficient)
    pub terms: Vec<(Vec<u32>, f64)>,
    max_exp: Vec<u32>,
}

impl FloatPoly {
    pub fn new(n: usize, terms: Vec<(Vec<u32>, f64)>) -> Self {
        let mut max_exp = vec![0u32; n + 1];
        let terms: Vec<(Vec<u32>, f64)> = terms.into_iter().filter(|(_, c)| *c != 0.0).collect();
        for (e, _) in &terms {
            for (m, &v) in max_exp.iter_mut().zip(e) {
                *m = (*m).max(v);
            }
        }
        Self { n, terms, max_exp }
    }

    pub fn zero(n: usize) -> Self {
        Self::new(n, vec![])
    }

    pub fn from_exact(p: &CaloricPolynomial) -> Self {
        Self::new(p.n(), p.terms().map(|(e, c)| (e.clone(), q_to_f64(c))).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn depends_on_t(&self) -> bool {
        self.max_exp[self.n] > 0
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        let n = self.n;
        // small power tables per variable
        let mut pows: [[f64; 24]; 5] = [[0.0; 24]; 5];
        if n + 1 <= 5 && self.max_exp.iter().all(|&m| m < 24) {
            for v in 0..=n {
                let base = if v < n { x[v] } else { t };
                pows[v][0] = 1.0;
                for j in 1..=self.max_exp[v] as usize {
                    pows[v][j] = pows[v][j - 1] * base;
                }
            }
            let mut acc = 0.0;
            for (e, c) in &self.terms {
                let mut v = *c;
                for (var, &p) in e.iter().enumerate() {
                    v *= pows[var][p as usize];
                }
                acc += v;
            }
            return acc;
        }
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut v = *c;
                for (i, &p) in e.iter().enumerate() {
                    let b = if i < n { x[i] } else { t };
                    v *= b.powi(p as i32);
                }
                v
            })
            .sum()
    }

    pub fn partial(&self, var: usize) -> FloatPoly {
        let terms = self
            .terms
            .iter()
            .filter(|(e, _)| e[var] > 0)
            .map(|(e, c)| {
                let mut f = e.clone();
                f[var] -= 1;
                (f, c * e[var] as f64)
            })
            .collect();
        FloatPoly::new(self.n, terms)
    }

    /// Expansion of u(x0 + y, t0 + s) in the local coordinates (y, s).
    pub fn shifted(&self, x0: &[f64], t0: f64) -> FloatPoly {
        let n = self.n;
        let mut acc: std::collections::HashMap<Vec<u32>, f64> = std::collections::HashMap::new();
        let shifts: Vec<f64> = x0.iter().copied().chain(std::iter::once(t0)).collect();
        for (e, c) in &self.terms {
            let mut partial: Vec<(Vec<u32>, f64)> = vec![(vec![0; n + 1], *c)];
            for (var, &p) in e.iter().enumerate() {
                if p == 0 {
                    continue;
                }
                let b = shifts[var];
                let mut next = Vec::with_capacity(partial.len() * (p as usize + 1));
                for (pe, pc) in &partial {
                    if b == 0.0 {
                        let mut ne = pe.clone();
                        ne[var] += p;
                        next.push((ne, *pc));
                        continue;
                    }
                    let mut binom = 1.0;
                    for j in 0..=p {
                        let coeff = binom * b.powi((p - j) as i32);
                        let mut ne = pe.clone();
                        ne[var] += j;
                        next.push((ne, pc * coeff));
                        binom = binom * (p - j) as f64 / (j + 1) as f64;
                    }
                }
                partial = next;
            }
            for (ne, nc) in partial {
                *acc.entry(ne).or_insert(0.0) += nc;
            }
        }
        let mut terms: Vec<(Vec<u32>, f64)> = acc.into_iter().collect();
        terms.sort_by(|a, b| a.0.cmp(&b.0));
        FloatPoly::new(n, terms)
    }

    /// Taylor coefficients about (x0, t0) scaled to a box of half-widths
    /// (hx per axis, ht): returns (value at center, bound on |u - u(center)|).
    pub fn box_bound(&self, x0: &[f64], t0: f64, hx: f64, ht: f64) -> (f64, f64) {
        let local = self.shifted(x0, t0);
        let mut c0 = 0.0;
        let mut rest = 0.0;
        for (e, c) in &local.terms {
            if e.iter().all(|&v| v == 0) {
                c0 += c;
            } else {
                let mut m = c.abs();
                for (var, &p) in e.iter().enumerate() {
                    let h = if var < self.n { hx } else { ht };
                    m *= h.powi(p as i32);
                }
                rest += m;
            }
        }
        (c0, rest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_polynomials_match_closed_forms() {
        let h2 = heat_polynomial(1, 2, 0);
        let expect = CaloricPolynomial::x(1, 0).pow(2).add(&CaloricPolynomial::t(1).scale(&q_int(2)));
        assert_eq!(h2, expect);
        let h4 = heat_polynomial(1, 4, 0);
        assert_eq!(h4.coefficient(&[4, 0]), q_int(1));
        assert_eq!(h4.coefficient(&[2, 1]), q_int(12));
        assert_eq!(h4.coefficient(&[0, 2]), q_int(12));
        assert_eq!(h4.num_terms(), 3);
    }

    #[test]
    fn residual_of_x_squared() {
        let r = heat_residual(&CaloricPolynomial::x(1, 0).pow(2));
        assert_eq!(r, CaloricPolynomial::constant(1, q_int(-2)));
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("3/4").unwrap(), q_frac(3, 4));
        assert_eq!(parse_rational("-0.125").unwrap(), q_frac(-1, 8));
        assert_eq!(parse_rational("2e-1").unwrap(), q_frac(1, 5));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn float_shift_matches_exact() {
        let u = heat_polynomial(2, 3, 0).mul(&heat_polynomial(2, 1, 1));
        let f = u.to_float();
        let s = f.shifted(&[0.5, -0.25], 0.75);
        let v1 = s.eval(&[0.1, 0.2], -0.3);
        let v2 = f.eval(&[0.6, -0.05], 0.45);
        assert!((v1 - v2).abs() < 1e-12);
    }

    #[test]
    fn spec_roundtrip() {
        let u = heat_polynomial(2, 2, 1).add(&CaloricPolynomial::one(2));
        let spec = FunctionSpec::from_polynomial(&u, true);
        let back = FunctionSpec::from_json(&spec.to_json()).unwrap().to_polynomial().unwrap();
        assert_eq!(back, u);
        let bad = FunctionSpec { n: 1, terms: vec![TermSpec { alpha: vec![2], k: 0, coef: "1".into() }], caloric_check: true };
        assert!(matches!(bad.to_polynomial(), Err(Error::NotCaloric { .. })));
    }
}
