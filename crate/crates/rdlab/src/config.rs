//! JSON experiment configs for the CLI. Field names are documented in
//! `docs/config.md`; unknown fields are rejected so typos surface as
//! config errors rather than silently ignored knobs.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::distortion::DistortionMeasure;
use crate::error::{Budget, RdError, Result};
use crate::prob::{Channel, JointPmf, Pmf, Symbol};
use crate::rd::GammaGrid;
use crate::systems::ReconstructionFn;

/// Optional per-config budget overrides, applied on top of the environment
/// budget (`RDLAB_BUDGET`).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetOverride {
    pub enum_states: Option<u64>,
    pub codebook_symbols: Option<u64>,
    pub binning_states: Option<u64>,
    pub type_classes: Option<u64>,
}

impl BudgetOverride {
    pub fn apply(&self, base: &Budget) -> Budget {
        Budget {
            enum_states: self.enum_states.unwrap_or(base.enum_states),
            codebook_symbols: self.codebook_symbols.unwrap_or(base.codebook_symbols),
            binning_states: self.binning_states.unwrap_or(base.binning_states),
            type_classes: self.type_classes.unwrap_or(base.type_classes),
        }
    }
}

fn config_err(context: &str, e: RdError) -> RdError {
    RdError::Config(format!("{context}: {e}"))
}

pub fn parse_pmf(probs: &[f64], field: &str) -> Result<Pmf> {
    Pmf::new(probs.to_vec()).map_err(|e| config_err(field, e))
}

pub fn parse_channel(rows: &[Vec<f64>], field: &str) -> Result<Channel> {
    Channel::new(rows.to_vec()).map_err(|e| config_err(field, e))
}

pub fn parse_joint(rows: &[Vec<f64>], field: &str) -> Result<JointPmf> {
    JointPmf::from_matrix(rows).map_err(|e| config_err(field, e))
}

pub fn parse_distortion(rows: &[Vec<f64>], field: &str) -> Result<DistortionMeasure> {
    DistortionMeasure::new(rows.to_vec()).map_err(|e| config_err(field, e))
}

pub fn parse_phi(table: &[Vec<Symbol>], field: &str) -> Result<ReconstructionFn> {
    ReconstructionFn::new(table.to_vec()).map_err(|e| config_err(field, e))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct P2pConfig {
    pub source: Vec<f64>,
    /// row-major P(y|x)
    pub test_channel: Vec<Vec<f64>>,
    pub distortion: Vec<Vec<f64>>,
    pub rate: f64,
    pub n: usize,
    pub distortion_limit: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub budget: Option<BudgetOverride>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WzConfig {
    /// row-major joint P(x, z)
    pub joint: Vec<Vec<f64>>,
    /// row-major P(v|x)
    pub aux_channel: Vec<Vec<f64>>,
    /// reconstruction table phi[v][z] -> y
    pub phi: Vec<Vec<Symbol>>,
    pub distortion: Vec<Vec<f64>>,
    pub rate: f64,
    /// bin rate R'
    pub rate2: f64,
    pub n: usize,
    pub distortion_limit: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub budget: Option<BudgetOverride>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BtConfig {
    /// row-major joint P(x1, x2)
    pub joint: Vec<Vec<f64>>,
    /// row-major P(u1|x1)
    pub channel1: Vec<Vec<f64>>,
    /// row-major P(u2|x2)
    pub channel2: Vec<Vec<f64>>,
    /// phi1[u1][u2] -> y1
    pub phi1: Vec<Vec<Symbol>>,
    /// phi2[u1][u2] -> y2
    pub phi2: Vec<Vec<Symbol>>,
    pub distortion1: Vec<Vec<f64>>,
    pub distortion2: Vec<Vec<f64>>,
    pub rate1: f64,
    pub rate2: f64,
    /// encoder 2's bin rate R2'
    pub rate2p: f64,
    pub n: usize,
    pub distortion_limits: [f64; 2],
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub budget: Option<BudgetOverride>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftcoverConfig {
    pub source: Vec<f64>,
    pub test_channel: Vec<Vec<f64>>,
    pub rates: Vec<f64>,
    pub n_list: Vec<usize>,
    pub codebooks_per_cell: usize,
    pub seed: u64,
    /// emit one row per codebook instead of per-cell aggregates
    #[serde(default)]
    pub per_codebook: bool,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub budget: Option<BudgetOverride>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub alpha_max: Option<f64>,
    pub alpha_points: Option<usize>,
    pub alpha_prime_min: Option<f64>,
    pub alpha_prime_points: Option<usize>,
}

impl GridConfig {
    pub fn to_grid(&self) -> GammaGrid {
        let d = GammaGrid::default();
        GammaGrid {
            alpha_max: self.alpha_max.unwrap_or(d.alpha_max),
            alpha_points: self.alpha_points.unwrap_or(d.alpha_points),
            alpha_prime_min: self.alpha_prime_min.unwrap_or(d.alpha_prime_min),
            alpha_prime_points: self.alpha_prime_points.unwrap_or(d.alpha_prime_points),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentConfig {
    pub source: Vec<f64>,
    /// single test channel: emit one exponent report (JSON)
    #[serde(default)]
    pub test_channel: Option<Vec<Vec<f64>>>,
    /// candidate channels: emit the bound table CSV instead
    #[serde(default)]
    pub candidates: Option<Vec<Vec<Vec<f64>>>>,
    pub distortion: Vec<Vec<f64>>,
    pub distortion_limit: f64,
    pub rate: f64,
    /// blocklengths for the bound table (candidates mode)
    #[serde(default)]
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdCurveConfig {
    pub source: Vec<f64>,
    pub distortion: Vec<Vec<f64>>,
    pub d_list: Vec<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_tol() -> f64 {
    1e-9
}

fn default_max_iter() -> usize {
    5000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpeConfig {
    pub source: Vec<f64>,
    pub test_channel: Vec<Vec<f64>>,
    pub distortion: Vec<Vec<f64>>,
    pub rate: f64,
    /// membership rate R'
    pub rate2: f64,
    pub n: usize,
    pub distortion_limit: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub budget: Option<BudgetOverride>,
}

/// Likelihood encoder vs PPE at matched resources; emits the comparison CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub source: Vec<f64>,
    pub test_channel: Vec<Vec<f64>>,
    pub distortion: Vec<Vec<f64>>,
    pub rate: f64,
    /// PPE membership rate R'
    pub rate2: f64,
    pub n: usize,
    pub distortion_limit: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub budget: Option<BudgetOverride>,
}

pub fn load<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RdError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| RdError::Config(format!("{}: {e}", path.display())))
}
