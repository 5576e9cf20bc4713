//! Command bodies. Each writes its artifacts through the shared writer.

use std::path::PathBuf;

use anyhow::anyhow;
use serde_json::json;

use caloric_core::checks::{run_verify, Fault, VerifyOptions};
use caloric_core::frequency::{frequency_profile, geometric_taus, nearest_integer, CaloricFunction};
use caloric_core::graph::{graph_from_centers, regularity_sweep, GridFunction};
use caloric_core::measures::ahlfors_check;
use caloric_core::neck::{greedy_neck_decomposition, packing_measure, verify_neck, whitney_cover_check, DecompositionParams};
use caloric_core::strata::{
    dimension_fit, effective_nodal, effective_singular, minkowski_profile, stratum_membership, zero_set, GridSpec,
    StratumSpec,
};
use caloric_core::symmetry::best_symmetry_plane;
use caloric_core::{ParabolicBall, SpaceTimePoint};

use crate::config::ExperimentConfig;
use crate::output::{Meta, Writer};
use crate::Failure;

pub struct Context {
    pub cfg: ExperimentConfig,
    pub root: PathBuf,
    pub out: Writer,
}

impl Context {
    pub fn new(cfg: ExperimentConfig, root: PathBuf, command: &str) -> Result<Self, Failure> {
        let meta = Meta {
            tool: "caloric",
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: cfg.hash(),
            seed: cfg.seed,
            command: command.into(),
        };
        let out = Writer::new(&PathBuf::from(&cfg.out_dir), cfg.format, meta).map_err(Failure::Config)?;
        Ok(Self { cfg, root, out })
    }

    pub fn write_config(&mut self) -> Result<(), Failure> {
        let body = self.cfg.to_toml();
        self.out.text("config.toml", &body).map_err(Failure::Run)?;
        Ok(())
    }

    fn function(&self) -> Result<CaloricFunction, Failure> {
        let p = self.cfg.polynomial(&self.root).map_err(Failure::Config)?;
        Ok(CaloricFunction::new(p))
    }

    fn base(&self, x: &[f64], t: f64, n: usize) -> Result<SpaceTimePoint, Failure> {
        if x.is_empty() {
            return Ok(SpaceTimePoint::new(vec![0.0; n], t));
        }
        if x.len() != n {
            return Err(Failure::Config(anyhow!("base point has {} coordinates, function has n = {n}", x.len())));
        }
        Ok(SpaceTimePoint::new(x.to_vec(), t))
    }

    fn ball(&self, n: usize, radius: f64) -> Result<ParabolicBall, Failure> {
        Ok(ParabolicBall::new(SpaceTimePoint::origin(n), radius)?)
    }
}

fn run_err(e: anyhow::Error) -> Failure {
    Failure::Run(e)
}

pub fn frequency(ctx: &mut Context) -> Result<(), Failure> {
    let u = ctx.function()?;
    let c = ctx.cfg.frequency.clone();
    let base = ctx.base(&c.base_x, c.base_t, u.n())?;
    let taus = geometric_taus(c.tau_min, c.tau_max, c.ratio)?;
    let prof = frequency_profile(&u, &base, &taus)?;
    ctx.out.table("frequency_profile", &prof.to_csv()).map_err(run_err)?;
    let min_step = prof.n.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let summary = json!({
        "scales": taus.len(),
        "n_min": prof.n.iter().copied().fold(f64::INFINITY, f64::min),
        "n_max": prof.n.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "min_increment": if min_step.is_finite() { json!(min_step) } else { json!(null) },
        "nearest_integer_at_tau_max": nearest_integer(*prof.n.last().unwrap_or(&0.0)),
    });
    ctx.out.json("frequency_summary", &summary).map_err(run_err)?;
    Ok(())
}

pub fn symmetry(ctx: &mut Context) -> Result<(), Failure> {
    let u = ctx.function()?;
    let c = ctx.cfg.symmetry.clone();
    let base = ctx.base(&c.base_x, c.base_t, u.n())?;
    let mut csv = String::from("r,score,vertical\n");
    let mut best = Vec::new();
    for i in 0..8 {
        let r = c.r * 0.5f64.powi(i);
        let s = best_symmetry_plane(&u, &base, r, c.k)?;
        csv.push_str(&format!("{:.17e},{:.17e},{}\n", r, s.score, s.plane.vertical as u8));
        best.push(s);
    }
    ctx.out.table("symmetry_scales", &csv).map_err(run_err)?;
    ctx.out.json("symmetry_best", &serde_json::to_value(&best).map_err(|e| run_err(e.into()))?).map_err(run_err)?;
    Ok(())
}

pub fn strata(ctx: &mut Context) -> Result<(), Failure> {
    let u = ctx.function()?;
    let c = ctx.cfg.strata.clone();
    let grid = GridSpec::new(ctx.ball(u.n(), c.radius)?, c.hx)?;
    let region = match c.set.as_str() {
        "nodal" => effective_nodal(&u, &grid, c.r_min, None)?,
        "singular" => effective_singular(&u, &grid, c.r_min, None)?,
        "zero" => zero_set(&u, &grid, false)?,
        "stratum" => {
            let k = if c.k == 0 { u.n() + 1 } else { c.k };
            let spec = StratumSpec { k, eps: c.eps, r1: c.r_min, r2: 1.0 };
            stratum_membership(&u, &spec, &grid, None, ctx.cfg.seed)?
        }
        other => return Err(Failure::Config(anyhow!("unknown set {other:?}; expected nodal, singular, zero or stratum"))),
    };
    ctx.out.text(&format!("strata_{}.rle", c.set), &region.to_rle()).map_err(run_err)?;
    let summary = json!({
        "set": c.set,
        "cells": region.cell_count(),
        "columns": region.num_columns(),
        "volume": region.volume(),
        "borderline": region.borderline.len(),
        "grid_cells": grid.num_cells(),
    });
    ctx.out.json("strata_summary", &summary).map_err(run_err)?;
    Ok(())
}

pub fn minkowski(ctx: &mut Context) -> Result<(), Failure> {
    let u = ctx.function()?;
    let c = ctx.cfg.minkowski.clone();
    let ambient = ctx.ball(u.n(), c.radius)?;
    let vols = minkowski_profile(&u, &ambient, &c.radii, c.singular)?;
    let mut csv = String::from("r,vol\n");
    for (r, v) in &vols {
        csv.push_str(&format!("{r:.17e},{v:.17e}\n"));
    }
    ctx.out.table("minkowski", &csv).map_err(run_err)?;
    let fit = dimension_fit(&vols, c.resamples, ctx.cfg.seed)?;
    let data = json!({
        "slope": fit.slope,
        "intercept": fit.intercept,
        "ci_low": fit.ci_low,
        "ci_high": fit.ci_high,
        "resamples": fit.resamples,
        "codimension": u.n() as f64 + 2.0 - fit.slope,
    });
    ctx.out.json("minkowski_fit", &data).map_err(run_err)?;
    Ok(())
}

fn decomposition_params(ctx: &Context, n: usize) -> DecompositionParams {
    let c = &ctx.cfg.neck;
    let k = if c.k == 0 { n + 1 } else { c.k };
    let mut p = DecompositionParams::new(k, c.eps, c.eta, c.r_star);
    p.delta = c.delta;
    p.alpha = c.alpha;
    p.gamma = c.gamma;
    p.max_depth = c.max_depth;
    p
}

pub fn neck(ctx: &mut Context) -> Result<(), Failure> {
    let u = ctx.function()?;
    let ball = ctx.ball(u.n(), ctx.cfg.neck.radius)?;
    let params = decomposition_params(ctx, u.n());
    let dec = greedy_neck_decomposition(&u, &ball, &params)?;
    let n = u.n();
    let mut head: Vec<String> = vec!["id".into(), "parent".into(), "depth".into(), "class".into(), "m".into()];
    head.extend((1..=n).map(|i| format!("x{i}")));
    head.extend(["t".into(), "radius".into(), "neck".into()]);
    let mut csv = head.join(",") + "\n";
    for (id, node) in dec.tree.iter().enumerate() {
        let class = serde_json::to_value(node.class).map_err(|e| run_err(e.into()))?;
        let mut row = vec![
            id.to_string(),
            node.parent.map_or("-1".into(), |p| p.to_string()),
            node.depth.to_string(),
            class.as_str().unwrap_or("?").to_string(),
            node.m.to_string(),
        ];
        row.extend(node.ball.center.x.iter().map(|v| format!("{v:.17e}")));
        row.push(format!("{:.17e}", node.ball.center.t));
        row.push(format!("{:.17e}", node.ball.radius));
        row.push(node.neck.map_or("-1".into(), |i| i.to_string()));
        csv.push_str(&(row.join(",") + "\n"));
    }
    ctx.out.table("neck_tree", &csv).map_err(run_err)?;
    ctx.out.table("neck_ledger", &dec.ledger.to_csv()).map_err(run_err)?;
    let mut reports = Vec::new();
    let mut all_ok = true;
    for (i, neck) in dec.necks.iter().enumerate() {
        ctx.out.table(&format!("neck_{i}_centers"), &neck.centers.to_csv()).map_err(run_err)?;
        let report = verify_neck(&u, neck, false, ctx.cfg.neck.verify_samples)?;
        let whitney = whitney_cover_check(neck, ctx.cfg.neck.verify_samples)?;
        all_ok &= report.weak_passed();
        let mu = packing_measure(neck)?;
        let mut scales = Vec::new();
        let mut s = 2.0 * neck.net_spacing;
        while s <= neck.scale() {
            scales.push(s);
            s *= 2.0;
        }
        let ahlfors = if scales.is_empty() {
            json!(null)
        } else {
            serde_json::to_value(ahlfors_check(&mu, neck.k, &scales, Some(&neck.center_ball), 512, 4.0)?)
                .map_err(|e| run_err(e.into()))?
        };
        reports.push(json!({
            "neck": i,
            "centers": neck.len(),
            "scale": neck.scale(),
            "m": neck.m,
            "vertical": neck.model_plane.vertical,
            "axioms": report.axioms,
            "n4b_constant": report.n4b_constant,
            "weak_passed": report.weak_passed(),
            "whitney_covered": whitney.covered,
            "whitney_uncovered": whitney.uncovered.len(),
            "ahlfors": ahlfors,
        }));
    }
    let data = json!({
        "partial": dec.partial,
        "ledger": dec.ledger,
        "ledger_total": dec.ledger.total(),
        "necks": reports,
    });
    ctx.out.json("neck_report", &data).map_err(run_err)?;
    if !all_ok {
        return Err(Failure::Assert("a neck region failed the axioms (n1)-(n4)".into()));
    }
    Ok(())
}

/// Periodic test surface with a spread of temporal frequencies.
fn test_surface(nv: usize, nt: usize) -> GridFunction {
    let hv = 1.0 / (nv - 1) as f64;
    let ht = 0.5 / (nt - 1) as f64;
    let period = nt as f64 * ht;
    GridFunction::from_fn(1, hv, nv, ht, nt, (vec![0.0], 0.0), |v, t| {
        (1..=6)
            .map(|k| {
                let w = 2.0 * std::f64::consts::PI * k as f64 / period;
                (w * t + 0.7 * k as f64 + 1.3 * k as f64 * v[0]).cos() / (k as f64).powf(1.5)
            })
            .sum()
    })
}

pub fn graph(ctx: &mut Context) -> Result<(), Failure> {
    let u = ctx.function()?;
    let ball = ctx.ball(u.n(), ctx.cfg.neck.radius)?;
    let params = decomposition_params(ctx, u.n());
    let dec = greedy_neck_decomposition(&u, &ball, &params)?;
    let mut graph_info = json!(null);
    if let Some(neck) = dec.necks.iter().find(|nk| nk.model_plane.vertical) {
        let g = graph_from_centers(&neck.centers, &neck.model_plane, neck.net_spacing)?;
        ctx.out.table("graph_sample", &g.to_csv()).map_err(run_err)?;
        graph_info = json!({ "samples": g.len(), "lipschitz_est": g.lipschitz_est, "cell": neck.net_spacing });
    }
    let c = ctx.cfg.graph.clone();
    if c.nv < 2 || c.nt < 5 {
        return Err(Failure::Config(anyhow!("graph grid needs nv >= 2 and nt >= 5")));
    }
    let sweep = regularity_sweep(&test_surface(c.nv, c.nt), &c.deltas, c.c_impl, c.carleson_levels)?;
    let mut csv = String::from("delta,lipschitz,kappa_energy,bmo_half_derivative,ratio,implication_holds,delta_regular\n");
    for (d, r) in &sweep {
        csv.push_str(&format!(
            "{d:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{}\n",
            r.lipschitz_est,
            r.kappa_energy,
            r.bmo_half_derivative,
            r.bmo_half_derivative / r.kappa_energy.sqrt(),
            r.implication_holds as u8,
            r.delta_regular as u8
        ));
    }
    ctx.out.table("graph_regularity", &csv).map_err(run_err)?;
    ctx.out.json("graph_summary", &json!({ "graph": graph_info, "sweep": sweep.len() })).map_err(run_err)?;
    Ok(())
}

pub fn verify(ctx: &mut Context, suites: Vec<String>, faults: Vec<Fault>) -> Result<(), Failure> {
    for s in &suites {
        if !caloric_core::checks::SUITES.contains(&s.as_str()) {
            return Err(Failure::Config(anyhow!("unknown suite {s:?}")));
        }
    }
    let opts = VerifyOptions { quad_order: ctx.cfg.quad_order(), faults, seed: ctx.cfg.seed, suites };
    let report = run_verify(&opts);
    for c in &report.checks {
        println!("{} {}/{}: {}", if c.passed { "ok  " } else { "FAIL" }, c.suite, c.name, c.detail);
    }
    ctx.out.json("verify_report", &serde_json::to_value(&report).map_err(|e| run_err(e.into()))?).map_err(run_err)?;
    let failed: Vec<String> = report.failures().iter().map(|c| format!("{}/{}", c.suite, c.name)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assert(format!("failed checks: {}", failed.join(", "))))
    }
}
