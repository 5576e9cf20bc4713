//! Effective nodal and singular sets, quantitative strata on parabolic grids,
//! Minkowski content, dimension fits and time-slice disintegration.
//!
//! Sets live on the lattice x = c.x + i h, t = c.t + j h^2. A region stores,
//! per spatial index i, the sorted disjoint runs [j0, j1] of time indices it
//! contains.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caloricpoly::FloatPoly;
use crate::error::{check_dim, Error, Result};
use crate::frequency::{kalpha_pinched_below, pinching_candidates, CaloricFunction};
use crate::spacetime::{ParabolicBall, SpaceTimePoint};

/// Number of geometric levels used for "for all s in [r, 1]".
pub const SCALE_LEVELS: usize = 16;
/// Margins below this magnitude are reported as borderline.
pub const BORDERLINE: f64 = 1e-6;

/// Parabolic lattice restricted to a ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: ParabolicBall,
    pub hx: f64,
}

impl GridSpec {
    pub fn new(bounds: ParabolicBall, hx: f64) -> Result<Self> {
        if !(hx > 0.0) {
            return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {hx}")));
        }
        Ok(Self { bounds, hx })
    }

    pub fn ht(&self) -> f64 {
        self.hx * self.hx
    }

    pub fn n(&self) -> usize {
        self.bounds.center.dim()
    }

    pub fn cell_volume(&self) -> f64 {
        self.hx.powi(self.n() as i32) * self.ht()
    }

    pub fn x_of(&self, i: &[i64]) -> Vec<f64> {
        i.iter().zip(&self.bounds.center.x).map(|(&k, c)| c + k as f64 * self.hx).collect()
    }

    pub fn t_of(&self, j: i64) -> f64 {
        self.bounds.center.t + j as f64 * self.ht()
    }

    pub fn point(&self, i: &[i64], j: i64) -> SpaceTimePoint {
        SpaceTimePoint::new(self.x_of(i), self.t_of(j))
    }

    /// Time indices with |t_j - c_t| < R^2.
    pub fn time_range(&self) -> (i64, i64) {
        let r2 = self.bounds.radius * self.bounds.radius;
        let m = (r2 / self.ht()).ceil() as i64;
        let mut lo = -m;
        while (lo as f64 * self.ht()).abs() >= r2 {
            lo += 1;
        }
        (lo, -lo)
    }

    fn spatial_reach(&self) -> i64 {
        (self.bounds.radius / self.hx).ceil() as i64
    }

    /// Spatial indices with |x_i - c_x| < R.
    pub fn spatial_indices(&self) -> Vec<Vec<i64>> {
        let n = self.n();
        let m = self.spatial_reach();
        let side = (2 * m + 1) as usize;
        let r = self.bounds.radius;
        let mut out = Vec::new();
        for flat in 0..side.pow(n as u32) {
            let mut rem = flat;
            let idx: Vec<i64> = (0..n)
                .map(|_| {
                    let v = (rem % side) as i64 - m;
                    rem /= side;
                    v
                })
                .collect();
            let d2: f64 = idx.iter().map(|&k| (k as f64 * self.hx).powi(2)).sum();
            if d2.sqrt() < r {
                out.push(idx);
            }
        }
        out
    }

    pub fn num_cells(&self) -> usize {
        let (lo, hi) = self.time_range();
        self.spatial_indices().len() * (hi - lo + 1) as usize
    }
}

/// A set of grid cells stored as time runs per spatial index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRegion {
    pub spec: GridSpec,
    columns: BTreeMap<Vec<i64>, Vec<(i64, i64)>>,
    /// Points whose membership margin was within BORDERLINE of zero.
    pub borderline: Vec<(SpaceTimePoint, f64)>,
}

fn merge_runs(runs: &mut Vec<(i64, i64)>) {
    runs.sort_unstable();
    let mut out: Vec<(i64, i64)> = Vec::with_capacity(runs.len());
    for &(a, b) in runs.iter() {
        if let Some(last) = out.last_mut() {
            if a <= last.1 + 1 {
                last.1 = last.1.max(b);
                continue;
            }
        }
        out.push((a, b));
    }
    *runs = out;
}

impl GridRegion {
    pub fn empty(spec: GridSpec) -> Self {
        Self { spec, columns: BTreeMap::new(), borderline: Vec::new() }
    }

    pub fn insert_run(&mut self, i: Vec<i64>, j0: i64, j1: i64) {
        if j1 < j0 {
            return;
        }
        let runs = self.columns.entry(i).or_default();
        runs.push((j0, j1));
        merge_runs(runs);
    }

    pub fn insert(&mut self, i: Vec<i64>, j: i64) {
        self.insert_run(i, j, j);
    }

    fn from_columns(spec: GridSpec, mut cols: HashMap<Vec<i64>, Vec<(i64, i64)>>) -> Self {
        let mut columns = BTreeMap::new();
        for (k, mut v) in cols.drain() {
            merge_runs(&mut v);
            if !v.is_empty() {
                columns.insert(k, v);
            }
        }
        Self { spec, columns, borderline: Vec::new() }
    }

    pub fn contains(&self, i: &[i64], j: i64) -> bool {
        self.columns.get(i).map_or(false, |runs| {
            let pos = runs.partition_point(|r| r.1 < j);
            pos < runs.len() && runs[pos].0 <= j
        })
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> impl Iterator<Item = (&Vec<i64>, &Vec<(i64, i64)>)> {
        self.columns.iter()
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn cell_count(&self) -> u64 {
        self.columns.values().flat_map(|r| r.iter()).map(|(a, b)| (b - a + 1) as u64).sum()
    }

    pub fn volume(&self) -> f64 {
        self.cell_count() as f64 * self.spec.cell_volume()
    }

    /// First cell of `self` missing from `other`, if any. Both must share a lattice.
    pub fn difference_witness(&self, other: &GridRegion) -> Option<(Vec<i64>, i64)> {
        for (i, runs) in &self.columns {
            let theirs = other.columns.get(i).map(|v| v.as_slice()).unwrap_or(&[]);
            for &(a, b) in runs {
                let mut j = a;
                while j <= b {
                    let pos = theirs.partition_point(|r| r.1 < j);
                    if pos < theirs.len() && theirs[pos].0 <= j {
                        j = theirs[pos].1 + 1;
                    } else {
                        return Some((i.clone(), j));
                    }
                }
            }
        }
        None
    }

    pub fn is_subset_of(&self, other: &GridRegion) -> bool {
        self.difference_witness(other).is_none()
    }

    /// Run-length text dump: a header line, then `i1,..,in;j0:j1,j0:j1` per column.
    pub fn to_rle(&self) -> String {
        let c = &self.spec.bounds.center;
        let mut s = format!(
            "grid n={} center={} radius={:.17e} hx={:.17e}\n",
            self.spec.n(),
            c.to_csv_row(),
            self.spec.bounds.radius,
            self.spec.hx
        );
        for (i, runs) in &self.columns {
            let idx: Vec<String> = i.iter().map(|v| v.to_string()).collect();
            let rs: Vec<String> = runs.iter().map(|(a, b)| format!("{a}:{b}")).collect();
            s.push_str(&format!("{};{}\n", idx.join(","), rs.join(",")));
        }
        s
    }

    pub fn from_rle(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse("empty region dump".into()))?;
        let mut center = None;
        let mut radius = None;
        let mut hx = None;
        for tok in header.split_whitespace().skip(1) {
            let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse(format!("bad header token {tok}")))?;
            match k {
                "center" => center = Some(SpaceTimePoint::parse(v)?),
                "radius" => radius = Some(v.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?),
                "hx" => hx = Some(v.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?),
                _ => {}
            }
        }
        let (Some(center), Some(radius), Some(hx)) = (center, radius, hx) else {
            return Err(Error::Parse("region header needs center, radius and hx".into()));
        };
        let spec = GridSpec::new(ParabolicBall::new(center, radius)?, hx)?;
        let mut region = GridRegion::empty(spec);
        for line in lines {
            let (idx, runs) = line.split_once(';').ok_or_else(|| Error::Parse(format!("bad region line {line}")))?;
            let i: Vec<i64> = idx
                .split(',')
                .map(|v| v.trim().parse::<i64>().map_err(|e| Error::Parse(e.to_string())))
                .collect::<Result<_>>()?;
            check_dim(region.spec.n(), i.len())?;
            for r in runs.split(',').filter(|r| !r.is_empty()) {
                let (a, b) = r.split_once(':').ok_or_else(|| Error::Parse(format!("bad run {r}")))?;
                let a = a.trim().parse::<i64>().map_err(|e| Error::Parse(e.to_string()))?;
                let b = b.trim().parse::<i64>().map_err(|e| Error::Parse(e.to_string()))?;
                region.insert_run(i.clone(), a, b);
            }
        }
        Ok(region)
    }
}

/// Membership test result with a signed margin (nonnegative means member).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    pub margin: f64,
}

/// Geometric scale levels from r_min to 1 inclusive.
pub fn scale_levels(r_min: f64, r_max: f64, levels: usize) -> Vec<f64> {
    if levels <= 1 || r_min >= r_max {
        return vec![r_min];
    }
    let ratio = (r_max / r_min).powf(1.0 / (levels - 1) as f64);
    (0..levels).map(|i| r_min * ratio.powi(i as i32)).collect()
}

/// Sample offsets of P(0, rho): 9 spatial points per axis at spacing rho/4
/// (pulled slightly inside) and 9 time points.
fn inf_offsets(n: usize, rho: f64) -> Vec<(Vec<f64>, f64)> {
    let per = 9usize;
    let shrink = 0.999;
    let g = |i: usize| -> f64 { shrink * (-1.0 + 2.0 * i as f64 / (per - 1) as f64) };
    let mut out = Vec::new();
    for flat in 0..per.pow(n as u32) {
        let mut rem = flat;
        let dx: Vec<f64> = (0..n)
            .map(|_| {
                let v = g(rem % per) * rho;
                rem /= per;
                v
            })
            .collect();
        if crate::linalg::norm(&dx) >= rho {
            continue;
        }
        for j in 0..per {
            out.push((dx.clone(), g(j) * rho * rho));
        }
    }
    out
}

fn effective_margin(u: &CaloricFunction, x: &SpaceTimePoint, r_min: f64, singular: bool) -> Membership {
    let n = u.n();
    let prof = u.profile(x);
    let mut margin = f64::INFINITY;
    for s in scale_levels(r_min, 1.0, SCALE_LEVELS) {
        let h = prof.h(s * s);
        let rho = s / 16.0;
        let mut inf = f64::INFINITY;
        for (dx, dt) in inf_offsets(n, rho) {
            let y: Vec<f64> = x.x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let t = x.t + dt;
            let mut v = u.eval_at(&y, t).powi(2);
            if singular {
                let g = u.gradient_at(&y, t);
                v += 2.0 * s * s * crate::linalg::dot(&g, &g);
            }
            inf = inf.min(v);
        }
        let thresh = if singular { h / 16.0 } else { h / 8.0 };
        let m = if h > 0.0 { (thresh - inf) / h } else { 0.0 };
        margin = margin.min(m);
    }
    Membership { member: margin >= 0.0, margin }
}

/// x in Z_{r_min}: inf_{P(x, s/16)} u^2 <= H(s^2)/8 for every s on the scale grid.
pub fn effective_nodal_point(u: &CaloricFunction, x: &SpaceTimePoint, r_min: f64) -> Membership {
    effective_margin(u, x, r_min, false)
}

/// x in S_{r_min}: inf_{P(x, s/16)} (u^2 + 2 s^2 |grad u|^2) <= H(s^2)/16 for every s.
pub fn effective_singular_point(u: &CaloricFunction, x: &SpaceTimePoint, r_min: f64) -> Membership {
    effective_margin(u, x, r_min, true)
}

/// Evaluate a per-point predicate over the grid (or over the cells of `within`).
/// For time-invariant functions one evaluation per spatial index suffices.
fn evaluate_region<F>(grid: &GridSpec, time_invariant: bool, within: Option<&GridRegion>, pred: F) -> GridRegion
where
    F: Fn(&SpaceTimePoint) -> Membership + Sync,
{
    let (tlo, thi) = grid.time_range();
    let cols: Vec<(Vec<i64>, Vec<(i64, i64)>)> = match within {
        Some(w) => w.columns().map(|(i, r)| (i.clone(), r.clone())).collect(),
        None => grid.spatial_indices().into_iter().map(|i| (i, vec![(tlo, thi)])).collect(),
    };
    type Col = (Vec<i64>, Vec<(i64, i64)>, Vec<(SpaceTimePoint, f64)>);
    let results: Vec<Col> = cols
        .par_iter()
        .map(|(i, runs)| {
            let mut out = Vec::new();
            let mut border = Vec::new();
            if time_invariant {
                let p = grid.point(i, 0);
                let m = pred(&p);
                if m.margin.abs() < BORDERLINE {
                    border.push((p, m.margin));
                }
                if m.member {
                    out = runs.clone();
                }
            } else {
                for &(a, b) in runs {
                    for j in a..=b {
                        let p = grid.point(i, j);
                        let m = pred(&p);
                        if m.margin.abs() < BORDERLINE {
                            border.push((p, m.margin));
                        }
                        if m.member {
                            out.push((j, j));
                        }
                    }
                }
            }
            (i.clone(), out, border)
        })
        .collect();
    let mut map = HashMap::new();
    let mut borderline = Vec::new();
    for (i, runs, b) in results {
        if !runs.is_empty() {
            map.insert(i, runs);
        }
        borderline.extend(b);
    }
    let mut region = GridRegion::from_columns(grid.clone(), map);
    region.borderline = borderline;
    region
}

/// Z_{r_min} on a grid.
pub fn effective_nodal(u: &CaloricFunction, grid: &GridSpec, r_min: f64, within: Option<&GridRegion>) -> Result<GridRegion> {
    check_dim(u.n(), grid.n())?;
    Ok(evaluate_region(grid, u.is_time_invariant(), within, |p| effective_nodal_point(u, p, r_min)))
}

/// S_{r_min} on a grid.
pub fn effective_singular(
    u: &CaloricFunction,
    grid: &GridSpec,
    r_min: f64,
    within: Option<&GridRegion>,
) -> Result<GridRegion> {
    check_dim(u.n(), grid.n())?;
    Ok(evaluate_region(grid, u.is_time_invariant(), within, |p| effective_singular_point(u, p, r_min)))
}

/// Parameters of the quantitative stratum S^k_{eps, r}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumSpec {
    pub k: usize,
    pub eps: f64,
    pub r1: f64,
    pub r2: f64,
}

impl StratumSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.r1 > 0.0 && self.r1 <= self.r2 && self.r2 <= 1.0) {
            return Err(Error::InvalidArgument("need 0 < r1 <= r2 <= 1".into()));
        }
        if self.k == 0 || self.k > n + 1 {
            return Err(Error::InvalidArgument(format!("need 1 <= k <= n + 1, got {}", self.k)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument("eps must be positive".into()));
        }
        Ok(())
    }
}

/// x in S^k_{eps, r}: E^{k+1,1}_s(x) >= eps for every s on the scale grid in [r1, r2].
///
/// E^{k+1,1}_s(x) < eps exactly when the sampled candidates with E_s < eps form
/// a (k+1, s/20)-independent set, so each level costs one independence check.
/// Sampling makes the pinching an upper bound, which biases toward membership.
pub fn stratum_point(u: &CaloricFunction, spec: &StratumSpec, x: &SpaceTimePoint, seed: u64) -> Result<Membership> {
    for s in scale_levels(spec.r1, spec.r2, SCALE_LEVELS) {
        let cands = pinching_candidates(x, s, 1.0, spec.k + 1, seed);
        if kalpha_pinched_below(u, s, spec.k + 1, 1.0, spec.eps, &cands)? {
            return Ok(Membership { member: false, margin: -1.0 });
        }
    }
    Ok(Membership { member: true, margin: 1.0 })
}

pub fn stratum_membership(
    u: &CaloricFunction,
    spec: &StratumSpec,
    grid: &GridSpec,
    within: Option<&GridRegion>,
    seed: u64,
) -> Result<GridRegion> {
    check_dim(u.n(), grid.n())?;
    spec.validate(u.n())?;
    let failure = parking_lot::Mutex::new(None);
    let region = evaluate_region(grid, u.is_time_invariant(), within, |p| match stratum_point(u, spec, p, seed) {
        Ok(m) => m,
        Err(e) => {
            failure.lock().get_or_insert(e);
            Membership { member: false, margin: -1.0 }
        }
    });
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(region)
}

fn certified_zero(p: &FloatPoly, center: &[f64], t: f64, hx: f64, ht: f64) -> bool {
    let n = center.len();
    let dims = if ht > 0.0 { n + 1 } else { n };
    let c = p.eval(center, t);
    if c == 0.0 {
        return true;
    }
    for corner in 0..(1usize << dims) {
        let x: Vec<f64> = (0..n).map(|d| center[d] + if corner >> d & 1 == 1 { hx } else { -hx }).collect();
        let tt = if ht > 0.0 { t + if corner >> n & 1 == 1 { ht } else { -ht } } else { t };
        let v = p.eval(&x, tt);
        if v == 0.0 || v.signum() != c.signum() {
            return true;
        }
    }
    false
}

/// Cells of the grid whose closed box contains a certified zero of u
/// (`singular` = false) or of u and every spatial partial.
///
/// Boxes are pruned with a Taylor bound and split until single cells remain,
/// where a sign change among the corners and center certifies the zero.
pub fn zero_set(u: &CaloricFunction, grid: &GridSpec, singular: bool) -> Result<GridRegion> {
    check_dim(u.n(), grid.n())?;
    let n = u.n();
    let mut comps: Vec<FloatPoly> = vec![u.float().clone()];
    if singular {
        for i in 0..n {
            comps.push(u.float().partial(i));
        }
    }
    let invariant = u.is_time_invariant();
    let m = grid.spatial_reach();
    let (tlo, thi) = grid.time_range();
    let mut lo: Vec<i64> = vec![-m; n];
    let mut hi: Vec<i64> = vec![m + 1; n];
    if !invariant {
        lo.push(tlo);
        hi.push(thi + 1);
    }
    let mut cells: Vec<(Vec<i64>, i64)> = Vec::new();
    descend(grid, &comps, invariant, lo, hi, &mut cells);
    let mut region = GridRegion::empty(grid.clone());
    for (i, j) in cells {
        if invariant {
            region.insert_run(i, tlo, thi);
        } else {
            region.insert(i, j);
        }
    }
    Ok(region)
}

fn descend(
    grid: &GridSpec,
    comps: &[FloatPoly],
    invariant: bool,
    lo: Vec<i64>,
    hi: Vec<i64>,
    out: &mut Vec<(Vec<i64>, i64)>,
) {
    let n = grid.n();
    let h = grid.hx;
    let ht = grid.ht();
    // spatial box geometry
    let cx: Vec<f64> = (0..n).map(|d| grid.bounds.center.x[d] + (lo[d] + hi[d] - 1) as f64 * 0.5 * h).collect();
    let half: Vec<f64> = (0..n).map(|d| (hi[d] - lo[d]) as f64 * 0.5 * h).collect();
    // prune boxes that miss the ball
    let near2: f64 = (0..n)
        .map(|d| ((cx[d] - grid.bounds.center.x[d]).abs() - half[d]).max(0.0).powi(2))
        .sum();
    if near2.sqrt() >= grid.bounds.radius {
        return;
    }
    let (tc, th) = if invariant {
        (grid.bounds.center.t, 0.0)
    } else {
        let a = lo[n];
        let b = hi[n];
        (grid.t_of(0) + (a + b - 1) as f64 * 0.5 * ht, (b - a) as f64 * 0.5 * ht)
    };
    let hmax = half.iter().copied().fold(0.0, f64::max);
    for p in comps {
        let (val, bound) = p.box_bound(&cx, tc, hmax, th);
        if val.abs() > bound * (1.0 + 1e-12) {
            return;
        }
    }
    let sizes: Vec<i64> = lo.iter().zip(&hi).map(|(a, b)| b - a).collect();
    if sizes.iter().all(|&s| s == 1) {
        let i: Vec<i64> = lo[..n].to_vec();
        let x = grid.x_of(&i);
        let d2: f64 = x.iter().zip(&grid.bounds.center.x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2.sqrt() >= grid.bounds.radius {
            return;
        }
        let j = if invariant { 0 } else { lo[n] };
        let t = grid.t_of(j);
        let hht = if invariant { 0.0 } else { 0.5 * ht };
        if comps.iter().all(|p| certified_zero(p, &x, t, 0.5 * h, hht)) {
            out.push((i, j));
        }
        return;
    }
    let dims = lo.len();
    let split: Vec<usize> = (0..dims).filter(|&d| sizes[d] > 1).collect();
    for mask in 0..(1usize << split.len()) {
        let mut l2 = lo.clone();
        let mut h2 = hi.clone();
        for (bit, &d) in split.iter().enumerate() {
            let mid = lo[d] + sizes[d] / 2;
            if mask >> bit & 1 == 0 {
                h2[d] = mid;
            } else {
                l2[d] = mid;
            }
        }
        descend(grid, comps, invariant, l2, h2, out);
    }
}

/// Volume of P(set, r) cap ambient, by dilating grid cells: a cell belongs to
/// the neighborhood when its center is within d_P < r of a set cell center.
pub fn minkowski_content(region: &GridRegion, r: f64, ambient: &ParabolicBall) -> Result<f64> {
    let spec = &region.spec;
    check_dim(spec.n(), ambient.center.dim())?;
    if !(r > 0.0) {
        return Err(Error::InvalidArgument("r must be positive".into()));
    }
    if spec.hx > r / 8.0 * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "grid spacing {} is coarser than r/8 = {}",
            spec.hx,
            r / 8.0
        )));
    }
    let n = spec.n();
    let h = spec.hx;
    let ht = spec.ht();
    let wx = (r / h).ceil() as i64 - 1;
    let wt = (r * r / ht).ceil() as i64 - 1;
    let side = (2 * wx + 1) as usize;
    let mut stencil = Vec::new();
    for flat in 0..side.pow(n as u32) {
        let mut rem = flat;
        let d: Vec<i64> = (0..n)
            .map(|_| {
                let v = (rem % side) as i64 - wx;
                rem /= side;
                v
            })
            .collect();
        let dist = d.iter().map(|&v| (v as f64 * h).powi(2)).sum::<f64>().sqrt();
        if dist < r {
            stencil.push(d);
        }
    }
    // ambient time index window on the region lattice
    let r2 = ambient.radius * ambient.radius;
    let t0 = spec.bounds.center.t;
    let jlo = ((ambient.center.t - r2 - t0) / ht).floor() as i64;
    let jhi = ((ambient.center.t + r2 - t0) / ht).ceil() as i64;
    let (mut alo, mut ahi) = (jlo, jhi);
    while (spec.t_of(alo) - ambient.center.t).abs() >= r2 {
        alo += 1;
    }
    while (spec.t_of(ahi) - ambient.center.t).abs() >= r2 {
        ahi -= 1;
    }
    if ahi < alo {
        return Ok(0.0);
    }
    let mut targets: HashMap<Vec<i64>, Vec<(i64, i64)>> = HashMap::new();
    let mut inside_cache: HashMap<Vec<i64>, bool> = HashMap::new();
    for (i, runs) in region.columns() {
        for d in &stencil {
            let ti: Vec<i64> = i.iter().zip(d).map(|(a, b)| a + b).collect();
            let inside = *inside_cache.entry(ti.clone()).or_insert_with(|| {
                let x = spec.x_of(&ti);
                let d2: f64 = x.iter().zip(&ambient.center.x).map(|(a, b)| (a - b) * (a - b)).sum();
                d2.sqrt() < ambient.radius
            });
            if !inside {
                continue;
            }
            let entry = targets.entry(ti).or_default();
            for &(a, b) in runs {
                let a2 = (a - wt).max(alo);
                let b2 = (b + wt).min(ahi);
                if a2 <= b2 {
                    entry.push((a2, b2));
                }
            }
        }
    }
    let mut count: u64 = 0;
    for (_, mut runs) in targets {
        merge_runs(&mut runs);
        count += runs.iter().map(|(a, b)| (b - a + 1) as u64).sum::<u64>();
    }
    Ok(count as f64 * spec.cell_volume())
}

/// (r, vol) for P(Z, r) cap ambient at each radius, where Z is the zero set
/// (or singular set) extracted on a grid of spacing r/8 over P(center, R + r).
pub fn minkowski_profile(
    u: &CaloricFunction,
    ambient: &ParabolicBall,
    radii: &[f64],
    singular: bool,
) -> Result<Vec<(f64, f64)>> {
    radii
        .iter()
        .map(|&r| {
            let bounds = ParabolicBall::new(ambient.center.clone(), ambient.radius + r)?;
            let grid = GridSpec::new(bounds, r / 8.0)?;
            let z = zero_set(u, &grid, singular)?;
            Ok((r, minkowski_content(&z, r, ambient)?))
        })
        .collect()
}

/// Log-log least-squares slope with a bootstrap confidence interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
}

fn ols(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-300 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Fit log(vol) = slope log(r) + c on at least four scales spanning a decade.
pub fn dimension_fit(volumes: &[(f64, f64)], resamples: usize, seed: u64) -> Result<DimensionFit> {
    if volumes.len() < 4 {
        return Err(Error::InsufficientData(format!("need at least 4 scales, got {}", volumes.len())));
    }
    if volumes.iter().any(|(r, v)| !(*r > 0.0) || !(*v > 0.0)) {
        return Err(Error::InsufficientData("radii and volumes must be positive".into()));
    }
    let rmin = volumes.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let rmax = volumes.iter().map(|p| p.0).fold(0.0, f64::max);
    if rmax / rmin < 10.0 * (1.0 - 1e-12) {
        return Err(Error::InsufficientData(format!("scales span {:.3} < one decade", rmax / rmin)));
    }
    let xs: Vec<f64> = volumes.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = volumes.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept) = ols(&xs, &ys).ok_or_else(|| Error::InsufficientData("degenerate radii".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slopes = Vec::with_capacity(resamples);
    let m = xs.len();
    while slopes.len() < resamples {
        let idx: Vec<usize> = (0..m).map(|_| rng.gen_range(0..m)).collect();
        let bx: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
        let by: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
        if let Some((s, _)) = ols(&bx, &by) {
            slopes.push(s);
        }
    }
    slopes.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| -> f64 {
        if slopes.is_empty() {
            return slope;
        }
        let pos = (p * (slopes.len() - 1) as f64).round() as usize;
        slopes[pos]
    };
    Ok(DimensionFit { slope, intercept, ci_low: q(0.025), ci_high: q(0.975), resamples })
}

/// Time-slice disintegration of a grid set against its parabolic box count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceReport {
    pub k: usize,
    /// (t_start, t_end, cells per slice) on maximal intervals of constant count.
    pub slices: Vec<(f64, f64, u64)>,
    /// sum_t (cells in E_t) h^(k-2) dt.
    pub lhs: f64,
    /// N_P(rho) rho^k with rho = coarse_factor h.
    pub rhs: f64,
    pub ratio: f64,
}

/// Box-count shadow of int H^{k-2}(E_t) dt <= C H_P^k(E).
pub fn time_slice_measures(region: &GridRegion, k: usize, coarse_factor: u32) -> Result<SliceReport> {
    if k < 2 {
        return Err(Error::InvalidArgument("slice measures need k >= 2".into()));
    }
    if coarse_factor == 0 {
        return Err(Error::InvalidArgument("coarse factor must be positive".into()));
    }
    let spec = &region.spec;
    let h = spec.hx;
    let ht = spec.ht();
    let mut events: BTreeMap<i64, i64> = BTreeMap::new();
    for (_, runs) in region.columns() {
        for &(a, b) in runs {
            *events.entry(a).or_insert(0) += 1;
            *events.entry(b + 1).or_insert(0) -= 1;
        }
    }
    let mut slices = Vec::new();
    let mut level: i64 = 0;
    let mut prev: Option<i64> = None;
    let mut lhs_cells: u128 = 0;
    for (&j, &delta) in &events {
        if let Some(p) = prev {
            if level > 0 && j > p {
                slices.push((spec.t_of(p) - 0.5 * ht, spec.t_of(j - 1) + 0.5 * ht, level as u64));
                lhs_cells += (level as u128) * ((j - p) as u128);
            }
        }
        level += delta;
        prev = Some(j);
    }
    let lhs = lhs_cells as f64 * h.powi(k as i32 - 2) * ht;
    let m = coarse_factor as i64;
    let mt = m * m;
    let mut coarse: HashSet<(Vec<i64>, i64)> = HashSet::new();
    for (i, runs) in region.columns() {
        let ci: Vec<i64> = i.iter().map(|v| v.div_euclid(m)).collect();
        for &(a, b) in runs {
            for cj in a.div_euclid(mt)..=b.div_euclid(mt) {
                coarse.insert((ci.clone(), cj));
            }
        }
    }
    let rho = m as f64 * h;
    let rhs = coarse.len() as f64 * rho.powi(k as i32);
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(SliceReport { k, slices, lhs, rhs, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caloricpoly::{heat_polynomial, CaloricPolynomial};

    fn grid(n: usize, r: f64, h: f64) -> GridSpec {
        GridSpec::new(ParabolicBall::new(SpaceTimePoint::origin(n), r).unwrap(), h).unwrap()
    }

    #[test]
    fn h1_zero_set_is_one_column() {
        let u = CaloricFunction::new(heat_polynomial(1, 1, 0));
        let g = grid(1, 1.0, 1.0 / 64.0);
        let z = zero_set(&u, &g, false).unwrap();
        assert_eq!(z.num_columns(), 1);
        assert!(z.contains(&[0], 0));
    }

    #[test]
    fn slab_content() {
        let u = CaloricFunction::new(heat_polynomial(1, 1, 0));
        let r = 1.0 / 16.0;
        let g = grid(1, 1.2, r / 8.0);
        let z = zero_set(&u, &g, false).unwrap();
        let amb = ParabolicBall::new(SpaceTimePoint::origin(1), 1.0).unwrap();
        let v = minkowski_content(&z, r, &amb).unwrap();
        assert!((v - 4.0 * r).abs() < 0.1 * 4.0 * r, "{v}");
    }

    #[test]
    fn rle_roundtrip() {
        let mut reg = GridRegion::empty(grid(2, 1.0, 0.25));
        reg.insert_run(vec![0, 1], -3, 5);
        reg.insert(vec![-1, 0], 2);
        let back = GridRegion::from_rle(&reg.to_rle()).unwrap();
        assert_eq!(back.to_rle(), reg.to_rle());
        assert!(back.contains(&[0, 1], 4) && !back.contains(&[0, 1], 6));
    }

    #[test]
    fn constant_is_not_nodal() {
        let u = CaloricFunction::new(CaloricPolynomial::one(1));
        assert!(!effective_nodal_point(&u, &SpaceTimePoint::origin(1), 0.01).member);
        let h1 = CaloricFunction::new(heat_polynomial(1, 1, 0));
        assert!(effective_nodal_point(&h1, &SpaceTimePoint::origin(1), 0.01).member);
        assert!(!effective_singular_point(&h1, &SpaceTimePoint::origin(1), 0.01).member);
    }

    #[test]
    fn exact_power_law_fit() {
        let data: Vec<(f64, f64)> = (0..6).map(|i| {
            let r = 0.5f64.powi(i);
            (r, 3.0 * r)
        }).collect();
        let f = dimension_fit(&data, 200, 1).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
    }
}
