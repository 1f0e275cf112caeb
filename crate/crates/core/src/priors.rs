//! Frozen latent priors: standard Gaussian, Gaussian mixtures and
//! generalized-Gaussian mixtures with uniform component weights.
//!
//! A generalized Gaussian has per-dimension density
//!
//! ```text
//! p(x; μ, α, β) = β / (2 α Γ(1/β)) · exp(-(|x - μ| / α)^β)
//! ```
//!
//! which is a Gaussian of variance α²/2 at β = 2 and becomes lighter-tailed
//! as β grows. Its variance is α² Γ(3/β) / Γ(1/β), so
//! [`unit_variance_alpha`] picks α = √(Γ(1/β)/Γ(3/β)).

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradkit::{Graph, Tensor, Var};
use crate::rng::{fill_standard_normal, seeded};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0 (Lanczos, g = 7, 9 coefficients).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection: Γ(x) Γ(1-x) = π / sin(πx)
        let s = (std::f64::consts::PI * x).sin();
        return std::f64::consts::PI.ln() - s.abs().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS_COEF[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * LN_2PI + (x + 0.5) * t.ln() - t + a.ln()
}

pub fn gamma(x: f64) -> f64 {
    ln_gamma(x).exp()
}

/// α giving a generalized Gaussian of shape `beta` unit variance.
pub fn unit_variance_alpha(beta: f64) -> f64 {
    (0.5 * (ln_gamma(1.0 / beta) - ln_gamma(3.0 / beta))).exp()
}

/// Numerically stable `ln Σ exp(v)`; `-inf` for an empty slice.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianComponent {
    pub fn new(mu: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mu.len() != var.len() || mu.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "gaussian component: mean has {} dims, variance {}",
                mu.len(),
                var.len()
            )));
        }
        if var.iter().any(|v| !(*v > 0.0 && v.is_finite())) || mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("gaussian component needs finite mean and positive variance".into()));
        }
        Ok(Self { mu, var })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mu: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Σ_d [−½ ln(2π var_d) − (z_d − μ_d)² / (2 var_d)]
    pub fn log_pdf(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(&self.mu)
            .zip(&self.var)
            .map(|((z, m), v)| -0.5 * (LN_2PI + v.ln()) - (z - m) * (z - m) / (2.0 * v))
            .sum()
    }
}

/// Generalized Gaussian with shared α and β across dimensions; the density
/// factorizes per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedGaussianComponent {
    pub mu: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl GeneralizedGaussianComponent {
    pub fn new(mu: Vec<f64>, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "generalized gaussian needs finite positive alpha and beta, got alpha={alpha}, beta={beta}"
            )));
        }
        if mu.is_empty() || mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("generalized gaussian needs a finite mean".into()));
        }
        Ok(Self { mu, alpha, beta })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Per-dimension variance α² Γ(3/β) / Γ(1/β).
    pub fn variance(&self) -> f64 {
        self.alpha * self.alpha * (ln_gamma(3.0 / self.beta) - ln_gamma(1.0 / self.beta)).exp()
    }

    fn log_norm(&self) -> f64 {
        self.beta.ln() - (2.0 * self.alpha).ln() - ln_gamma(1.0 / self.beta)
    }

    pub fn log_pdf(&self, z: &[f64]) -> f64 {
        let c = self.log_norm();
        z.iter()
            .zip(&self.mu)
            .map(|(z, m)| c - ((z - m).abs() / self.alpha).powf(self.beta))
            .sum()
    }
}

/// Where mixture component means go. `Collinear` puts component `i` of `K`
/// at `d·(i − (K−1)/2)` on the first axis, which is `[±d/2, 0, …]` for
/// `K = 2`. `Axes` puts pairs of components at `±d/2` along successive axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    Collinear,
    Axes,
}

pub fn component_means(dim: usize, k: usize, distance: f64, placement: Placement) -> Result<Vec<Vec<f64>>> {
    if k == 0 || dim == 0 {
        return Err(Error::InvalidArgument("mixture needs k ≥ 1 and dim ≥ 1".into()));
    }
    let means = match placement {
        Placement::Collinear => (0..k)
            .map(|i| {
                let mut m = vec![0.0; dim];
                m[0] = distance * (i as f64 - (k as f64 - 1.0) / 2.0);
                m
            })
            .collect(),
        Placement::Axes => {
            if k > 2 * dim {
                return Err(Error::InvalidArgument(format!(
                    "axes placement fits at most {} components in {dim} dims",
                    2 * dim
                )));
            }
            (0..k)
                .map(|i| {
                    let mut m = vec![0.0; dim];
                    let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
                    m[i / 2] = sign * distance / 2.0;
                    m
                })
                .collect()
        }
    };
    Ok(means)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    StandardGaussian { dim: usize },
    GaussianMixture { components: Vec<GaussianComponent> },
    GenGaussianMixture { components: Vec<GeneralizedGaussianComponent> },
}

impl Prior {
    pub fn standard(dim: usize) -> Self {
        Prior::StandardGaussian { dim }
    }

    pub fn gaussian_mixture(components: Vec<GaussianComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("mixture needs at least one component".into()))?;
        if components.iter().any(|c| c.dim() != first.dim()) {
            return Err(Error::InvalidArgument("mixture components differ in dimension".into()));
        }
        Ok(Prior::GaussianMixture { components })
    }

    pub fn gen_gaussian_mixture(components: Vec<GeneralizedGaussianComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("mixture needs at least one component".into()))?;
        if components.iter().any(|c| c.dim() != first.dim() || c.beta != first.beta) {
            return Err(Error::InvalidArgument(
                "generalized gaussian components must share dimension and beta".into(),
            ));
        }
        Ok(Prior::GenGaussianMixture { components })
    }

    /// `k` Gaussian components of equal per-dim variance placed `distance` apart.
    pub fn gaussian_mixture_placed(dim: usize, k: usize, distance: f64, variance: f64, placement: Placement) -> Result<Self> {
        let comps = component_means(dim, k, distance, placement)?
            .into_iter()
            .map(|mu| GaussianComponent::new(mu, vec![variance; dim]))
            .collect::<Result<Vec<_>>>()?;
        Self::gaussian_mixture(comps)
    }

    /// `k` unit-variance generalized-Gaussian components of shape `beta`.
    pub fn gen_gaussian_mixture_placed(dim: usize, k: usize, distance: f64, beta: f64, placement: Placement) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        let alpha = unit_variance_alpha(beta);
        let comps = component_means(dim, k, distance, placement)?
            .into_iter()
            .map(|mu| GeneralizedGaussianComponent::new(mu, alpha, beta))
            .collect::<Result<Vec<_>>>()?;
        Self::gen_gaussian_mixture(comps)
    }

    pub fn dim(&self) -> usize {
        match self {
            Prior::StandardGaussian { dim } => *dim,
            Prior::GaussianMixture { components } => components[0].dim(),
            Prior::GenGaussianMixture { components } => components[0].dim(),
        }
    }

    /// Number of components; 1 for the standard Gaussian.
    pub fn k(&self) -> usize {
        match self {
            Prior::StandardGaussian { .. } => 1,
            Prior::GaussianMixture { components } => components.len(),
            Prior::GenGaussianMixture { components } => components.len(),
        }
    }

    pub fn is_mixture(&self) -> bool {
        !matches!(self, Prior::StandardGaussian { .. })
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        match self {
            Prior::StandardGaussian { dim } => vec![vec![0.0; *dim]],
            Prior::GaussianMixture { components } => components.iter().map(|c| c.mu.clone()).collect(),
            Prior::GenGaussianMixture { components } => components.iter().map(|c| c.mu.clone()).collect(),
        }
    }

    /// Per-dimension variance of component `i`.
    pub fn component_variance(&self, i: usize) -> Vec<f64> {
        match self {
            Prior::StandardGaussian { dim } => vec![1.0; *dim],
            Prior::GaussianMixture { components } => components[i].var.clone(),
            Prior::GenGaussianMixture { components } => vec![components[i].variance(); components[i].dim()],
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.k() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("component {i} out of range for K={}", self.k())))
        }
    }

    /// ln p_i(z) for a single point, without the −ln K mixture weight.
    pub fn component_log_pdf(&self, z: &[f64], i: usize) -> Result<f64> {
        self.check_index(i)?;
        if z.len() != self.dim() {
            return Err(Error::shape("component_log_pdf", format!("{} dims vs prior {}", z.len(), self.dim())));
        }
        Ok(self.component_log_pdf_unchecked(z, i))
    }

    fn component_log_pdf_unchecked(&self, z: &[f64], i: usize) -> f64 {
        match self {
            Prior::StandardGaussian { dim } => GaussianComponent::standard(*dim).log_pdf(z),
            Prior::GaussianMixture { components } => components[i].log_pdf(z),
            Prior::GenGaussianMixture { components } => components[i].log_pdf(z),
        }
    }

    /// ln((1/K) Σ_i p_i(z)) for one point, via log-sum-exp.
    pub fn log_pdf_point(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::shape("mixture_log_pdf", format!("{} dims vs prior {}", z.len(), self.dim())));
        }
        let k = self.k();
        if k == 1 {
            return Ok(self.component_log_pdf_unchecked(z, 0));
        }
        let lp: Vec<f64> = (0..k).map(|i| self.component_log_pdf_unchecked(z, i)).collect();
        Ok(log_sum_exp(&lp) - (k as f64).ln())
    }

    /// Full-mixture log-density of every row of `z`.
    pub fn log_pdf(&self, z: &Tensor) -> Result<Vec<f64>> {
        (0..z.rows()).map(|r| self.log_pdf_point(z.row(r))).collect()
    }

    /// Component log-density ln p_{a(r)}(z_r) of every row, as a graph node of
    /// shape `[rows]`. `assignment` is required for mixtures and ignored for
    /// the standard Gaussian.
    pub fn component_log_pdf_graph(&self, g: &mut Graph, z: Var, assignment: Option<&[usize]>) -> Result<Var> {
        let shape = g.shape(z).to_vec();
        if shape.len() != 2 || shape[1] != self.dim() {
            return Err(Error::shape("component_log_pdf", format!("{shape:?} vs prior dim {}", self.dim())));
        }
        let (rows, dim) = (shape[0], shape[1]);
        let comp_of = |r: usize| -> Result<usize> {
            match (self, assignment) {
                (Prior::StandardGaussian { .. }, _) => Ok(0),
                (_, Some(a)) => {
                    let i = *a.get(r).ok_or_else(|| {
                        Error::InvalidArgument(format!("assignment has {} rows, batch has {rows}", a.len()))
                    })?;
                    self.check_index(i)?;
                    Ok(i)
                }
                (_, None) => Err(Error::InvalidArgument(
                    "mixture prior needs a component assignment during training".into(),
                )),
            }
        };
        let comps = (0..rows).map(comp_of).collect::<Result<Vec<_>>>()?;
        let means = self.means();
        let mut mean_rows = Vec::with_capacity(rows * dim);
        for &c in &comps {
            mean_rows.extend_from_slice(&means[c]);
        }
        let m = g.constant(Tensor::matrix(rows, dim, mean_rows)?)?;
        let u = g.sub(z, m)?;

        match self {
            Prior::StandardGaussian { .. } | Prior::GaussianMixture { .. } => {
                let mut inv_var = Vec::with_capacity(rows * dim);
                let mut offset = Vec::with_capacity(rows);
                for &c in &comps {
                    let var = self.component_variance(c);
                    offset.push(var.iter().map(|v| -0.5 * (LN_2PI + v.ln())).sum::<f64>());
                    inv_var.extend(var.iter().map(|v| 1.0 / v));
                }
                let iv = g.constant(Tensor::matrix(rows, dim, inv_var)?)?;
                let sq = g.square(u)?;
                let q = g.mul(sq, iv)?;
                let s = g.sum_axis(q, 1)?;
                let s = g.scale(s, -0.5)?;
                let c = g.constant(Tensor::vector(offset))?;
                g.add(s, c)
            }
            Prior::GenGaussianMixture { components } => {
                let beta = components[0].beta;
                let mut inv_alpha = Vec::with_capacity(rows * dim);
                let mut offset = Vec::with_capacity(rows);
                for &c in &comps {
                    let comp = &components[c];
                    offset.push(dim as f64 * comp.log_norm());
                    inv_alpha.extend(std::iter::repeat(1.0 / comp.alpha).take(dim));
                }
                let ia = g.constant(Tensor::matrix(rows, dim, inv_alpha)?)?;
                let a = g.abs(u)?;
                let a = g.mul(a, ia)?;
                let p = g.powf(a, beta)?;
                let s = g.sum_axis(p, 1)?;
                let c = g.constant(Tensor::vector(offset))?;
                g.sub(c, s)
            }
        }
    }

    /// Draw `n` points from component `i`.
    pub fn sample_component<R: Rng + ?Sized>(&self, i: usize, n: usize, rng: &mut R) -> Result<Tensor> {
        self.check_index(i)?;
        let dim = self.dim();
        let mut out = vec![0.0; n * dim];
        match self {
            Prior::StandardGaussian { .. } | Prior::GaussianMixture { .. } => {
                fill_standard_normal(rng, &mut out);
                let mean = &self.means()[i];
                let sd: Vec<f64> = self.component_variance(i).iter().map(|v| v.sqrt()).collect();
                for row in out.chunks_exact_mut(dim) {
                    for d in 0..dim {
                        row[d] = mean[d] + sd[d] * row[d];
                    }
                }
            }
            Prior::GenGaussianMixture { components } => {
                let c = &components[i];
                // |x − μ| = W^(1/β) with W ~ Gamma(shape 1/β, scale α^β); random sign.
                let w = Gamma::new(1.0 / c.beta, c.alpha.powf(c.beta))
                    .map_err(|e| Error::InvalidArgument(format!("gamma sampler: {e}")))?;
                for row in out.chunks_exact_mut(dim) {
                    for d in 0..dim {
                        let mag = w.sample(rng).powf(1.0 / c.beta);
                        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                        row[d] = c.mu[d] + sign * mag;
                    }
                }
            }
        }
        Tensor::matrix(n, dim, out)
    }

    /// `n` draws from the mixture: component uniformly, then the component.
    /// Returns the samples and their component labels.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(Tensor, Vec<usize>)> {
        let mut rng = seeded(seed);
        let dim = self.dim();
        let k = self.k();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let mut data = Vec::with_capacity(n * dim);
        for &l in &labels {
            data.extend_from_slice(self.sample_component(l, 1, &mut rng)?.data());
        }
        Ok((Tensor::matrix(n, dim, data)?, labels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        let pi = std::f64::consts::PI;
        assert!((gamma(0.5) - pi.sqrt()).abs() < 1e-13);
        assert!((gamma(1.5) - pi.sqrt() / 2.0).abs() < 1e-13);
        assert!((gamma(3.0) - 2.0).abs() < 1e-12);
        assert!((gamma(5.0) - 24.0).abs() < 1e-11);
        assert!(ln_gamma(1.0).abs() < 1e-14);
        // Γ(1/4) = 3.625609908221908...
        assert!((gamma(0.25) - 3.625_609_908_221_908_3).abs() / 3.6256 < 1e-12);
    }

    #[test]
    fn unit_alpha_closed_forms() {
        assert!((unit_variance_alpha(2.0) - 2f64.sqrt()).abs() < 1e-12);
        assert!((unit_variance_alpha(1.0) - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn standard_gaussian_at_origin() {
        let p = Prior::standard(1);
        let v = p.log_pdf_point(&[0.0]).unwrap();
        assert!((v - (-0.918_938_533_204_672_7)).abs() < 1e-12);
    }

    #[test]
    fn shift_invariance() {
        let c = GaussianComponent::new(vec![1.5, -2.0], vec![0.5, 2.0]).unwrap();
        let z = GaussianComponent::new(vec![0.0, 0.0], vec![0.5, 2.0]).unwrap();
        let u = [0.3, -0.7];
        let shifted = [1.5 + 0.3, -2.0 - 0.7];
        assert!((c.log_pdf(&shifted) - z.log_pdf(&u)).abs() < 1e-14);
    }

    #[test]
    fn gen_gaussian_at_mean() {
        let (alpha, beta) = (1.3, 4.0);
        let c = GeneralizedGaussianComponent::new(vec![0.4], alpha, beta).unwrap();
        let expected = (beta / (2.0 * alpha * gamma(1.0 / beta))).ln();
        assert!((c.log_pdf(&[0.4]) - expected).abs() < 1e-12);
    }

    #[test]
    fn gen_gaussian_rejects_bad_parameters() {
        assert!(GeneralizedGaussianComponent::new(vec![0.0], 0.0, 2.0).is_err());
        assert!(GeneralizedGaussianComponent::new(vec![0.0], 1.0, -1.0).is_err());
        assert!(GaussianComponent::new(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn gen_gaussian_symmetric_exactly() {
        let c = GeneralizedGaussianComponent::new(vec![0.75, -1.0], 1.2, 3.3).unwrap();
        for u in [0.1, 0.5, 2.25, 7.0] {
            let plus = c.log_pdf(&[0.75 + u, -1.0 + u]);
            let minus = c.log_pdf(&[0.75 - u, -1.0 - u]);
            assert_eq!(plus, minus);
        }
    }

    #[test]
    fn single_and_duplicate_components() {
        let c = GaussianComponent::new(vec![1.0, 2.0], vec![1.0, 1.0]).unwrap();
        let one = Prior::gaussian_mixture(vec![c.clone()]).unwrap();
        let two = Prior::gaussian_mixture(vec![c.clone(), c.clone()]).unwrap();
        let z = [0.3, 2.9];
        assert_eq!(one.log_pdf_point(&z).unwrap(), c.log_pdf(&z));
        assert!((two.log_pdf_point(&z).unwrap() - c.log_pdf(&z)).abs() < 1e-14);
    }

    #[test]
    fn mixture_stable_for_tiny_densities() {
        let p = Prior::gaussian_mixture_placed(1, 2, 2.0, 1e-8, Placement::Collinear).unwrap();
        // Each component is ~ -1e8 or lower here.
        let v = p.log_pdf_point(&[3.0]).unwrap();
        assert!(v.is_finite());
        assert!(v < -1e7);
    }

    #[test]
    fn component_index_out_of_range() {
        let p = Prior::gaussian_mixture_placed(2, 2, 4.0, 1.0, Placement::Collinear).unwrap();
        assert!(p.component_log_pdf(&[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn far_component_matches_mixture_plus_ln_k() {
        let p = Prior::gaussian_mixture_placed(2, 2, 200.0, 1.0, Placement::Collinear).unwrap();
        let z = [-100.2, 0.4];
        let comp = p.component_log_pdf(&z, 0).unwrap();
        let mix = p.log_pdf_point(&z).unwrap();
        assert!((comp - (mix + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn placements() {
        let m = component_means(3, 2, 8.0, Placement::Collinear).unwrap();
        assert_eq!(m, vec![vec![-4.0, 0.0, 0.0], vec![4.0, 0.0, 0.0]]);
        let m = component_means(3, 4, 8.0, Placement::Collinear).unwrap();
        assert_eq!(m[0][0], -12.0);
        assert_eq!(m[3][0], 12.0);
        let m = component_means(2, 4, 8.0, Placement::Axes).unwrap();
        assert_eq!(m, vec![vec![-4.0, 0.0], vec![4.0, 0.0], vec![0.0, -4.0], vec![0.0, 4.0]]);
        assert!(component_means(1, 3, 1.0, Placement::Axes).is_err());
    }

    #[test]
    fn graph_log_pdf_matches_pointwise() {
        let z = Tensor::from_rows(&[vec![0.3, -1.0], vec![2.0, 0.5], vec![-1.5, 1.1]]).unwrap();
        let assign = [0usize, 1, 1];
        for prior in [
            Prior::standard(2),
            Prior::gaussian_mixture_placed(2, 2, 3.0, 1.0, Placement::Collinear).unwrap(),
            Prior::gen_gaussian_mixture_placed(2, 2, 3.0, 4.0, Placement::Collinear).unwrap(),
        ] {
            let mut g = Graph::new();
            let zv = g.constant(z.clone()).unwrap();
            let out = prior.component_log_pdf_graph(&mut g, zv, Some(&assign)).unwrap();
            for r in 0..3 {
                let c = if prior.is_mixture() { assign[r] } else { 0 };
                let expected = prior.component_log_pdf(z.row(r), c).unwrap();
                assert!((g.value(out).data()[r] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mixture_graph_requires_assignment() {
        let prior = Prior::gaussian_mixture_placed(2, 2, 3.0, 1.0, Placement::Collinear).unwrap();
        let mut g = Graph::new();
        let zv = g.constant(Tensor::zeros(&[1, 2])).unwrap();
        assert!(prior.component_log_pdf_graph(&mut g, zv, None).is_err());
    }

    #[test]
    fn sampling_empty_and_seeded() {
        let p = Prior::gen_gaussian_mixture_placed(2, 2, 4.0, 4.0, Placement::Collinear).unwrap();
        let (z, l) = p.sample(0, 1).unwrap();
        assert_eq!(z.rows(), 0);
        assert!(l.is_empty());
        assert_eq!(p.sample(50, 9).unwrap(), p.sample(50, 9).unwrap());
    }
}
