//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "seed": 0,
//!   "model": { "kind": "flow" },
//!   "prior": { "kind": "gaussian_mixture", "k": 2, "distance": 20.0 },
//!   "assignment": { "mode": "labels" },
//!   "data": { "dim": 2 },
//!   "train": { "epochs": 20 }
//! }
//! ```
//!
//! Every section except `model` and `prior` has defaults. Unknown keys are
//! rejected, and [`ExperimentConfig::validate`] runs before any compute.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{Allocation, ChannelFactors};
use crate::data::{AssignmentMode, SyntheticSpec};
use crate::error::{Error, Result};
use crate::flow::{FlowConfig, TrainConfig};
use crate::priors::{
    unit_variance_alpha, GaussianComponent, GeneralizedGaussianComponent, Placement, Prior,
};
use crate::vae::VaeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Flow(FlowConfig),
    Vae(VaeConfig),
}

impl ModelConfig {
    pub fn latent_dim(&self, data_dim: usize) -> usize {
        match self {
            ModelConfig::Flow(_) => data_dim,
            ModelConfig::Vae(v) => v.latent_dim.unwrap_or(data_dim),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ModelConfig::Flow(_) => "flow",
            ModelConfig::Vae(_) => "vae",
        }
    }
}

fn default_k() -> usize {
    2
}

fn one() -> f64 {
    1.0
}

fn four() -> f64 {
    4.0
}

/// Prior block. Mixture means come from `means` if given, otherwise from
/// `distance` and `placement`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    Standard,
    GaussianMixture {
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default)]
        distance: Option<f64>,
        #[serde(default)]
        means: Option<Vec<Vec<f64>>>,
        #[serde(default = "one")]
        variance: f64,
        #[serde(default)]
        placement: Placement,
    },
    GenGaussianMixture {
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default)]
        distance: Option<f64>,
        #[serde(default)]
        means: Option<Vec<Vec<f64>>>,
        #[serde(default = "four")]
        beta: f64,
        /// Defaults to the unit-variance scale for `beta`.
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        placement: Placement,
    },
}

fn mixture_means(
    dim: usize,
    k: usize,
    distance: Option<f64>,
    means: &Option<Vec<Vec<f64>>>,
    placement: Placement,
) -> Result<Vec<Vec<f64>>> {
    match (means, distance) {
        (Some(m), None) => {
            if m.len() != k {
                return Err(Error::Config(format!("prior lists {} means but k = {k}", m.len())));
            }
            if let Some(bad) = m.iter().find(|v| v.len() != dim) {
                return Err(Error::Config(format!(
                    "prior mean has {} dims, latent space has {dim}",
                    bad.len()
                )));
            }
            Ok(m.clone())
        }
        (None, Some(d)) => crate::priors::component_means(dim, k, d, placement)
            .map_err(|e| Error::Config(format!("prior placement: {e}"))),
        (Some(_), Some(_)) => Err(Error::Config("give either prior means or distance, not both".into())),
        (None, None) => Err(Error::Config("mixture prior needs means or a distance".into())),
    }
}

impl PriorConfig {
    /// Parse a standalone prior block.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("prior: {e}")))
    }

    pub fn is_mixture(&self) -> bool {
        !matches!(self, PriorConfig::Standard)
    }

    pub fn k(&self) -> usize {
        match self {
            PriorConfig::Standard => 1,
            PriorConfig::GaussianMixture { k, .. } | PriorConfig::GenGaussianMixture { k, .. } => *k,
        }
    }

    /// Same family with the component distance replaced.
    pub fn with_distance(&self, d: f64) -> Self {
        let mut p = self.clone();
        match &mut p {
            PriorConfig::Standard => {}
            PriorConfig::GaussianMixture { distance, means, .. }
            | PriorConfig::GenGaussianMixture { distance, means, .. } => {
                *distance = Some(d);
                *means = None;
            }
        }
        p
    }

    pub fn build(&self, dim: usize) -> Result<Prior> {
        let to_config = |e: Error| Error::Config(format!("prior: {e}"));
        match self {
            PriorConfig::Standard => Ok(Prior::standard(dim)),
            PriorConfig::GaussianMixture {
                k,
                distance,
                means,
                variance,
                placement,
            } => {
                let comps = mixture_means(dim, *k, *distance, means, *placement)?
                    .into_iter()
                    .map(|mu| GaussianComponent::new(mu, vec![*variance; dim]))
                    .collect::<Result<Vec<_>>>()
                    .map_err(to_config)?;
                Prior::gaussian_mixture(comps).map_err(to_config)
            }
            PriorConfig::GenGaussianMixture {
                k,
                distance,
                means,
                beta,
                alpha,
                placement,
            } => {
                if !(*beta > 0.0 && beta.is_finite()) {
                    return Err(Error::Config(format!("beta must be positive, got {beta}")));
                }
                let a = alpha.unwrap_or_else(|| unit_variance_alpha(*beta));
                let comps = mixture_means(dim, *k, *distance, means, *placement)?
                    .into_iter()
                    .map(|mu| GeneralizedGaussianComponent::new(mu, a, *beta))
                    .collect::<Result<Vec<_>>>()
                    .map_err(to_config)?;
                Prior::gen_gaussian_mixture(comps).map_err(to_config)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OodConfig {
    /// Must equal the in-distribution dimension when given.
    pub dim: Option<usize>,
    pub n: usize,
    pub variance: f64,
}

impl Default for OodConfig {
    fn default() -> Self {
        Self {
            dim: None,
            n: 5000,
            variance: 0.01,
        }
    }
}

/// Synthetic data description, or CSV paths that replace it. Relative paths
/// resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub dim: usize,
    pub n_per_component: usize,
    /// Component means; defaults to `[±3.5, 0, …, 0]`.
    pub means: Option<Vec<Vec<f64>>>,
    /// Diagonal variances; defaults to `diag(0.5, 1, …, 1)`.
    pub variances: Option<Vec<Vec<f64>>>,
    pub ood: OodConfig,
    pub in_csv: Option<PathBuf>,
    pub ood_csv: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            n_per_component: 10_000,
            means: None,
            variances: None,
            ood: OodConfig::default(),
            in_csv: None,
            ood_csv: None,
        }
    }
}

impl DataConfig {
    pub fn synthetic_spec(&self, seed: u64) -> SyntheticSpec {
        let base = SyntheticSpec::two_cluster(self.dim, self.n_per_component, seed);
        SyntheticSpec {
            means: self.means.clone().unwrap_or(base.means),
            variances: self.variances.clone().unwrap_or(base.variances),
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub bins: usize,
    /// Importance samples per input for VAE likelihoods.
    pub iw_samples: usize,
    /// Monte-Carlo samples per input for reported VAE ELBOs.
    pub elbo_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            bins: 80,
            iw_samples: 1000,
            elbo_samples: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub sigma2_psi: f64,
    /// Per-channel factors; every dimension its own channel with `g = 1` if absent.
    pub factors: Option<ChannelFactors>,
    pub allocation: Allocation,
    pub mean_samples: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            sigma2_psi: 1.0,
            factors: None,
            allocation: Allocation::Latent,
            mean_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepFamily {
    Gaussian,
    GenGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub distances: Vec<f64>,
    pub families: Vec<SweepFamily>,
    pub k: usize,
    pub variance: f64,
    pub beta: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            distances: vec![2.0, 4.0, 8.0, 16.0, 32.0],
            families: vec![SweepFamily::Gaussian, SweepFamily::GenGaussian],
            k: 2,
            variance: 1.0,
            beta: 4.0,
        }
    }
}

impl SweepConfig {
    pub fn prior(&self, family: SweepFamily, d: f64) -> PriorConfig {
        match family {
            SweepFamily::Gaussian => PriorConfig::GaussianMixture {
                k: self.k,
                distance: Some(d),
                means: None,
                variance: self.variance,
                placement: Placement::Collinear,
            },
            SweepFamily::GenGaussian => PriorConfig::GenGaussianMixture {
                k: self.k,
                distance: Some(d),
                means: None,
                beta: self.beta,
                alpha: None,
                placement: Placement::Collinear,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    pub prior: PriorConfig,
    #[serde(default)]
    pub assignment: Option<AssignmentMode>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    /// Directory that relative data paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn latent_dim(&self) -> usize {
        self.model.latent_dim(self.data.dim)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn build_prior(&self) -> Result<Prior> {
        self.prior.build(self.latent_dim())
    }

    pub fn factors(&self) -> ChannelFactors {
        self.analysis
            .factors
            .clone()
            .unwrap_or_else(|| ChannelFactors::identity(self.data.dim))
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let d = &self.data;
        if d.dim == 0 {
            return bad("data.dim must be ≥ 1".into());
        }
        if let Some(od) = d.ood.dim {
            if od != d.dim {
                return bad(format!("ood dim {od} differs from in-distribution dim {}", d.dim));
            }
        }
        if d.ood.n == 0 || !(d.ood.variance > 0.0) {
            return bad("ood.n must be ≥ 1 and ood.variance positive".into());
        }
        if d.in_csv.is_none() {
            if d.n_per_component == 0 {
                return bad("data.n_per_component must be ≥ 1".into());
            }
            self.data
                .synthetic_spec(0)
                .validate()
                .map_err(|e| Error::Config(format!("data: {e}")))?;
            if d.synthetic_spec(0).dim() != d.dim {
                return bad(format!("data means have {} dims, data.dim is {}", d.synthetic_spec(0).dim(), d.dim));
            }
        }

        match &self.model {
            ModelConfig::Flow(f) => {
                if d.dim < 2 {
                    return bad("flow models need data.dim ≥ 2".into());
                }
                if f.couplings == 0 || f.hidden == 0 || !(f.scale_offset >= 0.0) {
                    return bad("flow needs couplings ≥ 1, hidden ≥ 1 and scale_offset ≥ 0".into());
                }
            }
            ModelConfig::Vae(v) => {
                if v.hidden == 0 || v.latent_dim == Some(0) {
                    return bad("vae needs hidden ≥ 1 and latent_dim ≥ 1".into());
                }
            }
        }

        self.build_prior()?;
        match (&self.assignment, self.prior.is_mixture()) {
            (None, true) => {
                return bad("a mixture prior needs an assignment mode (labels or kmeans)".into());
            }
            (Some(AssignmentMode::Kmeans { k, max_iter, .. }), _) => {
                if *k != self.prior.k() {
                    return bad(format!("kmeans k = {k} but the prior has {} components", self.prior.k()));
                }
                if *max_iter == 0 {
                    return bad("kmeans max_iter must be ≥ 1".into());
                }
            }
            _ => {}
        }

        let t = &self.train;
        if t.epochs == 0 || t.batch_size == 0 {
            return bad("train.epochs and train.batch_size must be ≥ 1".into());
        }
        t.adam.validate().map_err(|e| Error::Config(format!("train.adam: {e}")))?;

        let e = &self.eval;
        if e.bins == 0 || e.iw_samples == 0 || e.elbo_samples == 0 {
            return bad("eval.bins, eval.iw_samples and eval.elbo_samples must be ≥ 1".into());
        }

        let a = &self.analysis;
        if !(a.sigma2_psi > 0.0 && a.sigma2_psi.is_finite()) {
            return bad(format!("analysis.sigma2_psi must be positive, got {}", a.sigma2_psi));
        }
        if a.mean_samples == 0 {
            return bad("analysis.mean_samples must be ≥ 1".into());
        }
        if let Some(f) = &a.factors {
            f.validate(d.dim).map_err(|e| Error::Config(format!("analysis.factors: {e}")))?;
        }

        let s = &self.sweep;
        if s.distances.len() < 2 {
            return bad("sweep.distances needs at least two values".into());
        }
        if s.distances.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return bad("sweep distances must be finite and ≥ 0".into());
        }
        if s.families.is_empty() || s.k == 0 || !(s.variance > 0.0) || !(s.beta > 0.0) {
            return bad("sweep needs ≥ 1 family, k ≥ 1, positive variance and beta".into());
        }
        Ok(())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
