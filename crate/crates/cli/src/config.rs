//! Experiment configuration: one TOML document with explicit defaults.

use std::path::Path;

use anyhow::{bail, Context};
use caloric_core::caloricpoly::{heat_polynomial, CaloricPolynomial, FunctionSpec};
use caloric_core::neck::{DEFAULT_ALPHA, DEFAULT_DELTA, DEFAULT_GAMMA, DEFAULT_MAX_DEPTH};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `builtin:<name>` (h1, h2, xy, one_plus_h2) or a path to a function JSON file.
    pub function: String,
    pub seed: u64,
    /// Gauss–Hermite order; 0 selects the degree-exact order.
    pub quad_order: usize,
    pub out_dir: String,
    pub format: Format,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub frequency: FrequencyConfig,
    pub symmetry: SymmetryConfig,
    pub strata: StrataConfig,
    pub minkowski: MinkowskiConfig,
    pub neck: NeckConfig,
    pub graph: GraphConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrequencyConfig {
    /// Spatial base point; empty means the origin.
    pub base_x: Vec<f64>,
    pub base_t: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymmetryConfig {
    pub base_x: Vec<f64>,
    pub base_t: f64,
    pub r: f64,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrataConfig {
    /// nodal, singular or stratum.
    pub set: String,
    pub radius: f64,
    pub hx: f64,
    pub r_min: f64,
    /// Stratum index; 0 means n + 1 for `stratum`.
    pub k: usize,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinkowskiConfig {
    pub singular: bool,
    pub radius: f64,
    pub radii: Vec<f64>,
    pub resamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeckConfig {
    /// Neck dimension; 0 means n + 1.
    pub k: usize,
    pub radius: f64,
    pub eps: f64,
    pub eta: f64,
    pub delta: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub r_star: f64,
    pub max_depth: usize,
    pub verify_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub nv: usize,
    pub nt: usize,
    pub deltas: Vec<f64>,
    pub c_impl: f64,
    pub carleson_levels: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            function: "builtin:h1".into(),
            seed: 0,
            quad_order: 0,
            out_dir: "out".into(),
            format: Format::Csv,
            threads: 0,
            frequency: FrequencyConfig::default(),
            symmetry: SymmetryConfig::default(),
            strata: StrataConfig::default(),
            minkowski: MinkowskiConfig::default(),
            neck: NeckConfig::default(),
            graph: GraphConfig::default(),
        }
    }
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        Self { base_x: vec![], base_t: 0.0, tau_min: 1.0 / 64.0, tau_max: 4.0, ratio: 2f64.powf(0.125) }
    }
}

impl Default for SymmetryConfig {
    fn default() -> Self {
        Self { base_x: vec![], base_t: 0.0, r: 0.5, k: 2 }
    }
}

impl Default for StrataConfig {
    fn default() -> Self {
        Self { set: "nodal".into(), radius: 1.0, hx: 1.0 / 64.0, r_min: 1.0 / 64.0, k: 0, eps: 1e-3 }
    }
}

impl Default for MinkowskiConfig {
    fn default() -> Self {
        Self { singular: false, radius: 1.0, radii: (3..=7).map(|i| 0.5f64.powi(i)).collect(), resamples: 1000 }
    }
}

impl Default for NeckConfig {
    fn default() -> Self {
        Self {
            k: 0,
            radius: 1.0,
            eps: 0.05,
            eta: 0.05,
            delta: DEFAULT_DELTA,
            alpha: DEFAULT_ALPHA,
            gamma: DEFAULT_GAMMA,
            r_star: 1.0 / 32.0,
            max_depth: DEFAULT_MAX_DEPTH,
            verify_samples: 2000,
        }
    }
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { nv: 33, nt: 256, deltas: vec![0.02, 0.05, 0.1, 0.2], c_impl: 10.0, carleson_levels: 3 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form, ignoring the output directory and
    /// thread count, which do not affect results.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.out_dir.clear();
        canon.threads = 0;
        let digest = Sha256::digest(canon.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn quad_order(&self) -> Option<usize> {
        (self.quad_order > 0).then_some(self.quad_order)
    }

    /// Resolve the configured function, relative paths against `root`.
    pub fn polynomial(&self, root: &Path) -> anyhow::Result<CaloricPolynomial> {
        if let Some(name) = self.function.strip_prefix("builtin:") {
            return builtin(name);
        }
        let path = root.join(&self.function);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading function {}", path.display()))?;
        let spec = FunctionSpec::from_json(&text)?;
        Ok(spec.to_polynomial()?)
    }
}

pub fn builtin(name: &str) -> anyhow::Result<CaloricPolynomial> {
    Ok(match name {
        "h1" => heat_polynomial(1, 1, 0),
        "h2" => heat_polynomial(1, 2, 0),
        "one_plus_h2" => CaloricPolynomial::one(1).add(&heat_polynomial(1, 2, 0)),
        "xy" => heat_polynomial(2, 1, 0).mul(&heat_polynomial(2, 1, 1)),
        other => bail!("unknown builtin function {other:?}; expected h1, h2, one_plus_h2 or xy"),
    })
}
