//! Second-order likelihood-gap analysis and latent force-out measurement.
//!
//! With per-component squared deviations `σ²_{D_i}` of a dataset `D` around
//! the model's component mean images and allocation ratios `w_i`, the
//! expected log-likelihood gap between an outlier set `D` and the training
//! set `D*` is approximated by
//!
//! ```text
//! Δ = −1/(2σ²_ψ) Σ_c g_c Σ_{dims ∈ c} Σ_i (w_i σ²_{D_i} − w*_i σ²_{D*_i})
//! ```
//!
//! and bounded above by the largest single-pair term over `(i, i')`.

use serde::{Deserialize, Serialize};

use crate::data::nearest;
use crate::error::{Error, Result};
use crate::flow::FlowModel;
use crate::gradkit::Tensor;
use crate::priors::Prior;
use crate::rng::seeded;
use crate::vae::VaeModel;

/// A model with an encoder into the prior's latent space and a mean decoder.
pub trait LatentModel {
    fn data_dim(&self) -> usize;
    fn latent_dim(&self) -> usize;
    /// Flow: `z = f(x)`. VAE: posterior mean.
    fn encode(&self, x: &Tensor) -> Result<Tensor>;
    /// Flow: `f⁻¹(z)`. VAE: decoder mean.
    fn decode_mean(&self, z: &Tensor) -> Result<Tensor>;
    fn is_vae(&self) -> bool {
        false
    }
}

impl LatentModel for FlowModel {
    fn data_dim(&self) -> usize {
        self.dim()
    }

    fn latent_dim(&self) -> usize {
        self.dim()
    }

    fn encode(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x)?.0)
    }

    fn decode_mean(&self, z: &Tensor) -> Result<Tensor> {
        self.inverse(z)
    }
}

impl LatentModel for VaeModel {
    fn data_dim(&self) -> usize {
        VaeModel::data_dim(self)
    }

    fn latent_dim(&self) -> usize {
        VaeModel::latent_dim(self)
    }

    fn encode(&self, x: &Tensor) -> Result<Tensor> {
        Ok(VaeModel::encode(self, x)?.0)
    }

    fn decode_mean(&self, z: &Tensor) -> Result<Tensor> {
        VaeModel::decode_mean(self, z)
    }

    fn is_vae(&self) -> bool {
        true
    }
}

fn check_latent(model: &dyn LatentModel, prior: &Prior) -> Result<()> {
    if prior.dim() != model.latent_dim() {
        return Err(Error::shape(
            "analysis",
            format!("prior dim {} vs latent dim {}", prior.dim(), model.latent_dim()),
        ));
    }
    Ok(())
}

/// Index of the nearest prior mean (Euclidean, in latent space) for every
/// row. Ties go to the lowest index; a unimodal prior allocates everything
/// to component 0.
pub fn allocate_nearest(model: &dyn LatentModel, prior: &Prior, x: &Tensor) -> Result<Vec<usize>> {
    check_latent(model, prior)?;
    if prior.k() == 1 {
        return Ok(vec![0; x.rows()]);
    }
    let z = model.encode(x)?;
    let means = prior.means();
    Ok((0..z.rows()).map(|r| nearest(z.row(r), &means).0).collect())
}

/// Observation-space mean image of one prior component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanImage {
    /// Elementwise mean of decoded draws from the component.
    pub sampled: Vec<f64>,
    /// Decoded component mean.
    pub decoded_mean: Vec<f64>,
    /// Standard error of `sampled`, per dimension.
    pub standard_error: Vec<f64>,
    pub n_samples: usize,
}

pub fn component_mean_image(
    model: &dyn LatentModel,
    prior: &Prior,
    i: usize,
    n_samples: usize,
    seed: u64,
) -> Result<MeanImage> {
    check_latent(model, prior)?;
    if n_samples == 0 {
        return Err(Error::InvalidArgument("mean image needs ≥ 1 sample".into()));
    }
    let z = prior.sample_component(i, n_samples, &mut seeded(seed))?;
    let x = model.decode_mean(&z)?;
    let d = x.cols();
    let mut mean = vec![0.0; d];
    for r in 0..x.rows() {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n_samples as f64);
    let mut var = vec![0.0; d];
    for r in 0..x.rows() {
        for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let denom = (n_samples.max(2) - 1) as f64;
    let standard_error = var.iter().map(|s| (s / denom / n_samples as f64).sqrt()).collect();
    let mu = Tensor::matrix(1, prior.dim(), prior.means()[i].clone())?;
    Ok(MeanImage {
        sampled: mean,
        decoded_mean: model.decode_mean(&mu)?.into_data(),
        standard_error,
        n_samples,
    })
}

/// Per-component squared-deviation statistics of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub mean_images: Vec<Vec<f64>>,
    /// `σ²_{i,dim}`; `None` for a component with no allocated rows.
    pub sigma2: Vec<Option<Vec<f64>>>,
    pub weights: Vec<f64>,
    pub counts: Vec<usize>,
}

impl ComponentStats {
    pub fn k(&self) -> usize {
        self.mean_images.len()
    }

    pub fn dim(&self) -> usize {
        self.mean_images.first().map_or(0, Vec::len)
    }

    /// `Σ_i w_i σ²_{i,dim}` for every dimension.
    pub fn weighted_sigma2(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (w, s) in self.weights.iter().zip(&self.sigma2) {
            if let Some(s) = s {
                for (o, v) in out.iter_mut().zip(s) {
                    *o += w * v;
                }
            }
        }
        out
    }
}

/// Mean squared deviation from each component's mean image over the rows
/// allocated to it. These are not variances: the centre is the model's mean
/// image, not the data mean.
pub fn component_sigma(x: &Tensor, assignment: &[usize], mean_images: &[Vec<f64>]) -> Result<ComponentStats> {
    let n = x.rows();
    if assignment.len() != n {
        return Err(Error::InvalidArgument(format!("assignment has {} rows, data has {n}", assignment.len())));
    }
    let k = mean_images.len();
    let d = x.cols();
    if mean_images.iter().any(|m| m.len() != d) {
        return Err(Error::shape("component_sigma", "mean image width differs from data"));
    }
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (r, &c) in assignment.iter().enumerate() {
        if c >= k {
            return Err(Error::InvalidArgument(format!("component {c} out of range for K={k}")));
        }
        counts[c] += 1;
        for ((s, v), m) in sums[c].iter_mut().zip(x.row(r)).zip(&mean_images[c]) {
            *s += (v - m) * (v - m);
        }
    }
    let sigma2 = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| (c > 0).then(|| s.into_iter().map(|v| v / c as f64).collect()))
        .collect();
    let weights = counts.iter().map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 }).collect();
    Ok(ComponentStats {
        mean_images: mean_images.to_vec(),
        sigma2,
        weights,
        counts,
    })
}

/// Per-channel factors `g_c` and the channel of every dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFactors {
    pub g: Vec<f64>,
    pub channel_of: Vec<usize>,
}

impl ChannelFactors {
    /// Every dimension its own channel with `g = 1`.
    pub fn identity(dim: usize) -> Self {
        Self {
            g: vec![1.0; dim],
            channel_of: (0..dim).collect(),
        }
    }

    pub fn uniform(dim: usize, g: f64) -> Self {
        Self {
            g: vec![g; dim],
            channel_of: (0..dim).collect(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.channel_of.len() != dim {
            return Err(Error::shape("channel factors", format!("{} dims mapped, data has {dim}", self.channel_of.len())));
        }
        if self.channel_of.iter().any(|&c| c >= self.g.len()) {
            return Err(Error::InvalidArgument("channel index out of range".into()));
        }
        if self.g.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::InvalidArgument("channel factors must be finite and ≥ 0".into()));
        }
        Ok(())
    }

    fn factor(&self, dim: usize) -> f64 {
        self.g[self.channel_of[dim]]
    }
}

fn check_pair(in_stats: &ComponentStats, out_stats: &ComponentStats, factors: &ChannelFactors, sigma2_psi: f64) -> Result<()> {
    if in_stats.dim() != out_stats.dim() {
        return Err(Error::shape("second_order", format!("{} vs {} dims", in_stats.dim(), out_stats.dim())));
    }
    factors.validate(in_stats.dim())?;
    if !(sigma2_psi > 0.0 && sigma2_psi.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma2_psi must be positive, got {sigma2_psi}")));
    }
    Ok(())
}

fn g_weighted_sum(s: &[f64], factors: &ChannelFactors) -> f64 {
    s.iter().enumerate().map(|(d, v)| factors.factor(d) * v).sum()
}

/// Likelihood-gap estimate Δ of the outlier set `out_stats` relative to
/// the training set `in_stats`. Positive Δ predicts higher likelihood for
/// the outliers. Empty components contribute nothing.
pub fn second_order_delta(
    in_stats: &ComponentStats,
    out_stats: &ComponentStats,
    factors: &ChannelFactors,
    sigma2_psi: f64,
) -> Result<f64> {
    check_pair(in_stats, out_stats, factors, sigma2_psi)?;
    let side = |s: &ComponentStats| g_weighted_sum(&s.weighted_sigma2(), factors);
    Ok(-(side(out_stats) - side(in_stats)) / (2.0 * sigma2_psi))
}

/// Upper bound on Δ and the maximizing pair `(i, i')` of outlier and
/// training components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub value: f64,
    pub out_component: usize,
    pub in_component: usize,
}

/// Max over pairs `(i, i')` of `−1/(2σ²_ψ) Σ g (σ²_{D_i} − σ²_{D*_i'})`.
/// Fails if any component is empty on either side.
pub fn second_order_bound(
    in_stats: &ComponentStats,
    out_stats: &ComponentStats,
    factors: &ChannelFactors,
    sigma2_psi: f64,
) -> Result<Bound> {
    for (side, s) in [("training", in_stats), ("outlier", out_stats)] {
        if let Some(i) = s.sigma2.iter().position(Option::is_none) {
            return Err(Error::InvalidArgument(format!("component {i} is empty on the {side} side")));
        }
    }
    second_order_bound_nonempty(in_stats, out_stats, factors, sigma2_psi)
}

/// As [`second_order_bound`], skipping empty components.
pub fn second_order_bound_nonempty(
    in_stats: &ComponentStats,
    out_stats: &ComponentStats,
    factors: &ChannelFactors,
    sigma2_psi: f64,
) -> Result<Bound> {
    check_pair(in_stats, out_stats, factors, sigma2_psi)?;
    let mut best: Option<Bound> = None;
    for (i, so) in out_stats.sigma2.iter().enumerate() {
        let Some(so) = so else { continue };
        let a = g_weighted_sum(so, factors);
        for (j, si) in in_stats.sigma2.iter().enumerate() {
            let Some(si) = si else { continue };
            let value = -(a - g_weighted_sum(si, factors)) / (2.0 * sigma2_psi);
            if best.map_or(true, |b| value > b.value) {
                best = Some(Bound {
                    value,
                    out_component: i,
                    in_component: j,
                });
            }
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no non-empty component pair".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderReport {
    pub in_stats: ComponentStats,
    pub out_stats: ComponentStats,
    pub delta: f64,
    pub bound: Bound,
    pub sigma2_psi: f64,
    pub factors: ChannelFactors,
    /// Components skipped by the bound because they were empty.
    pub empty_components: Vec<usize>,
    /// How rows were allocated to components.
    pub allocation: String,
    /// Mean-likelihood difference (outlier − training) measured on the model, if supplied.
    pub measured_gap: Option<f64>,
    /// Whether the sign of Δ matches `measured_gap`.
    pub sign_agrees: Option<bool>,
}

impl SecondOrderReport {
    /// Assemble a report; Δ exceeding the bound is an error.
    pub fn new(
        in_stats: ComponentStats,
        out_stats: ComponentStats,
        factors: ChannelFactors,
        sigma2_psi: f64,
        allocation: impl Into<String>,
        measured_gap: Option<f64>,
    ) -> Result<Self> {
        let delta = second_order_delta(&in_stats, &out_stats, &factors, sigma2_psi)?;
        let bound = second_order_bound_nonempty(&in_stats, &out_stats, &factors, sigma2_psi)?;
        if delta > bound.value + 1e-9 * bound.value.abs().max(1.0) {
            return Err(Error::numeric(format!("second-order delta {delta} exceeds bound {}", bound.value)));
        }
        let empty_components: Vec<usize> = in_stats
            .sigma2
            .iter()
            .zip(&out_stats.sigma2)
            .enumerate()
            .filter(|(_, (a, b))| a.is_none() || b.is_none())
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            sign_agrees: measured_gap.map(|g| (g < 0.0) == (delta < 0.0)),
            in_stats,
            out_stats,
            delta,
            bound,
            sigma2_psi,
            factors,
            empty_components,
            allocation: allocation.into(),
            measured_gap,
        })
    }

    /// Fraction of dimensions where the outlier `Σ_i w_i σ²_i` exceeds the
    /// training one.
    pub fn fraction_dims_out_above_in(&self) -> f64 {
        let a = self.out_stats.weighted_sigma2();
        let b = self.in_stats.weighted_sigma2();
        let above = a.iter().zip(&b).filter(|(o, i)| o > i).count();
        above as f64 / a.len().max(1) as f64
    }
}

/// Where rows are matched to components for the second-order report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// Nearest prior mean to the encoded row (posterior mean for a VAE).
    #[default]
    Latent,
    /// Nearest component mean image to the raw row.
    Observation,
}

impl Allocation {
    fn describe(self, model: &dyn LatentModel) -> String {
        match self {
            Allocation::Latent if model.is_vae() => "nearest prior mean to the posterior mean in latent space".into(),
            Allocation::Latent => "nearest prior mean in latent space".into(),
            Allocation::Observation => "nearest component mean image in observation space".into(),
        }
    }
}

/// Allocate both sets, build mean images from `n_mean_samples` decoded
/// draws per component, and compute the report.
#[allow(clippy::too_many_arguments)]
pub fn second_order_report(
    model: &dyn LatentModel,
    prior: &Prior,
    in_x: &Tensor,
    out_x: &Tensor,
    factors: &ChannelFactors,
    sigma2_psi: f64,
    allocation: Allocation,
    n_mean_samples: usize,
    seed: u64,
    measured_gap: Option<f64>,
) -> Result<(SecondOrderReport, Vec<MeanImage>)> {
    let images = (0..prior.k())
        .map(|i| component_mean_image(model, prior, i, n_mean_samples, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let centres: Vec<Vec<f64>> = images.iter().map(|m| m.sampled.clone()).collect();
    let allocate = |x: &Tensor| match allocation {
        Allocation::Latent => allocate_nearest(model, prior, x),
        Allocation::Observation => Ok((0..x.rows()).map(|r| nearest(x.row(r), &centres).0).collect()),
    };
    let in_stats = component_sigma(in_x, &allocate(in_x)?, &centres)?;
    let out_stats = component_sigma(out_x, &allocate(out_x)?, &centres)?;
    let report = SecondOrderReport::new(
        in_stats,
        out_stats,
        factors.clone(),
        sigma2_psi,
        allocation.describe(model),
        measured_gap,
    )?;
    Ok((report, images))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceOut {
    /// Fraction of latents inside the 3σ box of their nearest component.
    pub fraction_within: f64,
    /// Latent coordinates `[rows, latent_dim]`.
    pub latents: Tensor,
}

/// Fraction of latents whose every coordinate lies within three standard
/// deviations of the nearest component mean.
pub fn fraction_within_modes(prior: &Prior, z: &Tensor) -> Result<f64> {
    if z.cols() != prior.dim() {
        return Err(Error::shape("forceout", format!("{} latent dims vs prior {}", z.cols(), prior.dim())));
    }
    if z.rows() == 0 {
        return Ok(0.0);
    }
    let means = prior.means();
    let sd: Vec<Vec<f64>> = (0..prior.k())
        .map(|i| prior.component_variance(i).iter().map(|v| v.sqrt()).collect())
        .collect();
    let inside = (0..z.rows())
        .filter(|&r| {
            let row = z.row(r);
            let (c, _) = nearest(row, &means);
            row.iter().zip(&means[c]).zip(&sd[c]).all(|((v, m), s)| (v - m).abs() <= 3.0 * s)
        })
        .count();
    Ok(inside as f64 / z.rows() as f64)
}

pub fn latent_forceout(model: &dyn LatentModel, prior: &Prior, x: &Tensor) -> Result<ForceOut> {
    check_latent(model, prior)?;
    let latents = model.encode(x)?;
    Ok(ForceOut {
        fraction_within: fraction_within_modes(prior, &latents)?,
        latents,
    })
}
