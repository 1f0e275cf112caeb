//! MLP variational autoencoder with a frozen (possibly mixture) prior and a
//! diagonal Gaussian visible distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{run_training, TrainConfig};
use crate::gradkit::{Graph, Mlp, ParamSet, Tensor, Var};
use crate::priors::{log_sum_exp, Prior, LN_2PI};
use crate::rng::{fill_standard_normal, seeded};

/// Decoder log-variance is clamped to `[ln 1e-4, ln 1e4]`.
pub const DECODER_LOGVAR_MIN: f64 = -9.210_340_371_976_184;
pub const DECODER_LOGVAR_MAX: f64 = 9.210_340_371_976_184;

// Rows per decoder pass when evaluating many latent samples.
const EVAL_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaeConfig {
    /// Latent dimension; `None` uses the data dimension.
    pub latent_dim: Option<usize>,
    pub hidden: usize,
    pub hidden_layers: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            latent_dim: None,
            hidden: 64,
            hidden_layers: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    data_dim: usize,
    latent_dim: usize,
    config: VaeConfig,
    encoder: Mlp,
    decoder: Mlp,
    params: ParamSet,
}

/// Per-input ELBO terms; `total == reconstruction − kl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboEstimate {
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
    pub n_mc: usize,
}

fn sizes(input: usize, cfg: &VaeConfig, output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend(std::iter::repeat(cfg.hidden).take(cfg.hidden_layers));
    s.push(output);
    s
}

impl VaeModel {
    pub fn new(data_dim: usize, config: VaeConfig, seed: u64) -> Result<Self> {
        let latent_dim = config.latent_dim.unwrap_or(data_dim);
        if data_dim == 0 || latent_dim == 0 || config.hidden == 0 {
            return Err(Error::InvalidArgument("vae dimensions must be ≥ 1".into()));
        }
        let mut rng = seeded(seed);
        let mut params = ParamSet::new();
        let encoder = Mlp::new(&mut params, "encoder", &sizes(data_dim, &config, 2 * latent_dim), false, false, &mut rng)?;
        let decoder = Mlp::new(&mut params, "decoder", &sizes(latent_dim, &config, 2 * data_dim), false, false, &mut rng)?;
        Ok(Self {
            data_dim,
            latent_dim,
            config,
            encoder,
            decoder,
            params,
        })
    }

    /// Rebuild around trained parameters, checking names and shapes.
    pub fn from_params(data_dim: usize, config: VaeConfig, params: ParamSet) -> Result<Self> {
        let template = Self::new(data_dim, config, 0)?;
        if template.params.len() != params.len() {
            return Err(Error::Format(format!(
                "vae expects {} parameter tensors, dump has {}",
                template.params.len(),
                params.len()
            )));
        }
        for (a, b) in template.params.iter().zip(params.iter()) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::Format(format!("parameter {} does not match expected {}", b.name, a.name)));
            }
        }
        Ok(Self { params, ..template })
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn config(&self) -> &VaeConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Posterior mean and log-variance.
    pub fn encode_graph(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<(Var, Var)> {
        let h = self.encoder.forward(g, vars, x)?;
        g.split(h, self.latent_dim)
    }

    /// Observation mean and clamped log-variance.
    pub fn decode_graph(&self, g: &mut Graph, vars: &[Var], z: Var) -> Result<(Var, Var)> {
        let h = self.decoder.forward(g, vars, z)?;
        let (m, lv) = g.split(h, self.data_dim)?;
        let lv = g.clamp(lv, DECODER_LOGVAR_MIN, DECODER_LOGVAR_MAX)?;
        Ok((m, lv))
    }

    fn check_x(&self, x: &Tensor) -> Result<()> {
        if x.rank() != 2 || x.cols() != self.data_dim {
            return Err(Error::shape("vae", format!("input {:?} vs data dim {}", x.shape(), self.data_dim)));
        }
        Ok(())
    }

    fn check_prior(&self, prior: &Prior) -> Result<()> {
        if prior.dim() != self.latent_dim {
            return Err(Error::shape("vae", format!("prior dim {} vs latent dim {}", prior.dim(), self.latent_dim)));
        }
        Ok(())
    }

    pub fn encode(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_x(x)?;
        let mut g = Graph::new();
        let vars = g.bind(&self.params)?;
        let xv = g.constant(x.clone())?;
        let (m, lv) = self.encode_graph(&mut g, &vars, xv)?;
        Ok((g.value(m).clone(), g.value(lv).clone()))
    }

    pub fn decode(&self, z: &Tensor) -> Result<(Tensor, Tensor)> {
        if z.rank() != 2 || z.cols() != self.latent_dim {
            return Err(Error::shape("vae decode", format!("latent {:?} vs dim {}", z.shape(), self.latent_dim)));
        }
        let mut means = Vec::with_capacity(z.rows() * self.data_dim);
        let mut logvars = Vec::with_capacity(z.rows() * self.data_dim);
        for start in (0..z.rows()).step_by(EVAL_CHUNK) {
            let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(z.rows())).collect();
            let mut g = Graph::new();
            let vars = g.bind(&self.params)?;
            let zv = g.constant(z.gather_rows(&idx))?;
            let (m, lv) = self.decode_graph(&mut g, &vars, zv)?;
            means.extend_from_slice(g.value(m).data());
            logvars.extend_from_slice(g.value(lv).data());
        }
        Ok((
            Tensor::matrix(z.rows(), self.data_dim, means)?,
            Tensor::matrix(z.rows(), self.data_dim, logvars)?,
        ))
    }

    pub fn decode_mean(&self, z: &Tensor) -> Result<Tensor> {
        Ok(self.decode(z)?.0)
    }

    /// Per-row single-sample ELBO as a graph node `[rows]`, with the latent
    /// drawn as `z = m + exp(lv/2) ⊙ eps`. The KL term is closed form against
    /// Gaussian components and a one-sample estimate otherwise. A mixture
    /// prior needs `assignment`.
    pub fn elbo_graph(
        &self,
        g: &mut Graph,
        vars: &[Var],
        prior: &Prior,
        x: Var,
        assignment: Option<&[usize]>,
        eps: &Tensor,
    ) -> Result<Var> {
        let (m, lv) = self.encode_graph(g, vars, x)?;
        let rows = g.shape(x)[0];
        if eps.shape() != [rows, self.latent_dim] {
            return Err(Error::shape("elbo", format!("noise {:?} vs [{rows}, {}]", eps.shape(), self.latent_dim)));
        }
        let half = g.scale(lv, 0.5)?;
        let sd = g.exp(half)?;
        let e = g.constant(eps.clone())?;
        let noise = g.mul(sd, e)?;
        let z = g.add(m, noise)?;
        let recon = self.recon_graph(g, vars, x, z)?;

        let kl = match prior {
            Prior::GenGaussianMixture { .. } => {
                // log q(z|x) − log p_i(z), with (z − m)²/v = eps².
                let sq: Vec<f64> = eps
                    .data()
                    .chunks(self.latent_dim)
                    .map(|r| r.iter().map(|v| v * v).sum::<f64>())
                    .collect();
                let c = -0.5 * LN_2PI * self.latent_dim as f64;
                let sq = Tensor::vector(sq.into_iter().map(|s| c - 0.5 * s).collect());
                let sq = g.constant(sq)?;
                let lv_sum = g.sum_axis(lv, 1)?;
                let lv_sum = g.scale(lv_sum, -0.5)?;
                let log_q = g.add(sq, lv_sum)?;
                let log_p = prior.component_log_pdf_graph(g, z, assignment)?;
                g.sub(log_q, log_p)?
            }
            _ => self.gaussian_kl_graph(g, prior, m, lv, assignment)?,
        };
        g.sub(recon, kl)
    }

    fn recon_graph(&self, g: &mut Graph, vars: &[Var], x: Var, z: Var) -> Result<Var> {
        let (dm, dlv) = self.decode_graph(g, vars, z)?;
        let diff = g.sub(x, dm)?;
        let sq = g.square(diff)?;
        let neg = g.neg(dlv)?;
        let prec = g.exp(neg)?;
        let q = g.mul(sq, prec)?;
        let t = g.add(q, dlv)?;
        let t = g.add_scalar(t, LN_2PI)?;
        let s = g.sum_axis(t, 1)?;
        g.scale(s, -0.5)
    }

    // KL(N(m, e^lv) ‖ N(μ_i, σ²_i)) = ½ Σ [ln σ² − lv + (e^lv + (m − μ)²)/σ² − 1]
    fn gaussian_kl_graph(&self, g: &mut Graph, prior: &Prior, m: Var, lv: Var, assignment: Option<&[usize]>) -> Result<Var> {
        let rows = g.shape(m)[0];
        let l = self.latent_dim;
        let comps = component_rows(prior, rows, assignment)?;
        let means = prior.means();
        let mut mu = Vec::with_capacity(rows * l);
        let mut inv = Vec::with_capacity(rows * l);
        let mut ln_var = Vec::with_capacity(rows);
        for &c in &comps {
            let var = prior.component_variance(c);
            mu.extend_from_slice(&means[c]);
            inv.extend(var.iter().map(|v| 1.0 / v));
            ln_var.push(var.iter().map(|v| v.ln() - 1.0).sum::<f64>());
        }
        let mu = g.constant(Tensor::matrix(rows, l, mu)?)?;
        let inv = g.constant(Tensor::matrix(rows, l, inv)?)?;
        let diff = g.sub(m, mu)?;
        let sq = g.square(diff)?;
        let v = g.exp(lv)?;
        let num = g.add(v, sq)?;
        let ratio = g.mul(num, inv)?;
        let t = g.sub(ratio, lv)?;
        let s = g.sum_axis(t, 1)?;
        let c = g.constant(Tensor::vector(ln_var))?;
        let s = g.add(s, c)?;
        g.scale(s, 0.5)
    }

    /// Closed-form KL of the posterior against component `i` per row
    /// (Gaussian priors only).
    pub fn kl_closed_form(&self, prior: &Prior, x: &Tensor, assignment: Option<&[usize]>) -> Result<Vec<f64>> {
        if matches!(prior, Prior::GenGaussianMixture { .. }) {
            return Err(Error::InvalidArgument("no closed-form KL for generalized gaussian components".into()));
        }
        self.check_x(x)?;
        self.check_prior(prior)?;
        let (m, lv) = self.encode(x)?;
        let comps = component_rows(prior, x.rows(), assignment)?;
        Ok(comps
            .iter()
            .enumerate()
            .map(|(r, &c)| gaussian_kl(m.row(r), lv.row(r), &prior.means()[c], &prior.component_variance(c)))
            .collect())
    }

    /// Reparameterized latent samples `z_s` for every row plus their
    /// `log q(z_s|x)`; rows are grouped per input (`S` consecutive rows).
    fn posterior_samples(&self, x: &Tensor, s: usize, seed: u64) -> Result<(Tensor, Vec<f64>)> {
        let (m, lv) = self.encode(x)?;
        let l = self.latent_dim;
        let mut eps = vec![0.0; x.rows() * s * l];
        fill_standard_normal(&mut seeded(seed), &mut eps);
        let mut z = Vec::with_capacity(eps.len());
        let mut log_q = Vec::with_capacity(x.rows() * s);
        for r in 0..x.rows() {
            let (mr, lr) = (m.row(r), lv.row(r));
            for k in 0..s {
                let e = &eps[(r * s + k) * l..][..l];
                let mut lq = 0.0;
                for j in 0..l {
                    z.push(mr[j] + (0.5 * lr[j]).exp() * e[j]);
                    lq += -0.5 * (LN_2PI + lr[j] + e[j] * e[j]);
                }
                log_q.push(lq);
            }
        }
        Ok((Tensor::matrix(x.rows() * s, l, z)?, log_q))
    }

    fn recon_values(&self, x: &Tensor, z: &Tensor, s: usize) -> Result<Vec<f64>> {
        let (dm, dlv) = self.decode(z)?;
        Ok((0..z.rows())
            .map(|k| {
                let xr = x.row(k / s);
                gaussian_log_pdf_diag(xr, dm.row(k), dlv.row(k))
            })
            .collect())
    }
}

fn component_rows(prior: &Prior, rows: usize, assignment: Option<&[usize]>) -> Result<Vec<usize>> {
    if !prior.is_mixture() {
        return Ok(vec![0; rows]);
    }
    let a = assignment
        .ok_or_else(|| Error::InvalidArgument("mixture prior needs a component assignment".into()))?;
    if a.len() != rows {
        return Err(Error::InvalidArgument(format!("assignment has {} rows, data has {rows}", a.len())));
    }
    if let Some(&bad) = a.iter().find(|&&c| c >= prior.k()) {
        return Err(Error::InvalidArgument(format!("component {bad} out of range for K={}", prior.k())));
    }
    Ok(a.to_vec())
}

/// KL(N(m, e^lv) ‖ N(mu, var)) for diagonal Gaussians.
pub fn gaussian_kl(m: &[f64], lv: &[f64], mu: &[f64], var: &[f64]) -> f64 {
    m.iter()
        .zip(lv)
        .zip(mu.iter().zip(var))
        .map(|((m, lv), (mu, v))| 0.5 * (v.ln() - lv + (lv.exp() + (m - mu) * (m - mu)) / v - 1.0))
        .sum()
}

fn gaussian_log_pdf_diag(x: &[f64], m: &[f64], lv: &[f64]) -> f64 {
    x.iter()
        .zip(m)
        .zip(lv)
        .map(|((x, m), lv)| -0.5 * (LN_2PI + lv + (x - m) * (x - m) * (-lv).exp()))
        .sum()
}

/// ELBO per row of `x` with `n_mc` reparameterized samples.
///
/// With a component `assignment` (or a standard prior) the KL is taken
/// against the assigned component: closed form for Gaussian components, a
/// Monte-Carlo estimate for generalized-Gaussian ones. Without an assignment
/// on a mixture prior the KL is a Monte-Carlo estimate against the full
/// mixture.
pub fn vae_elbo(
    model: &VaeModel,
    prior: &Prior,
    x: &Tensor,
    assignment: Option<&[usize]>,
    n_mc: usize,
    seed: u64,
) -> Result<Vec<ElboEstimate>> {
    if n_mc == 0 {
        return Err(Error::InvalidArgument("n_mc must be ≥ 1".into()));
    }
    model.check_x(x)?;
    model.check_prior(prior)?;
    let full_mixture = prior.is_mixture() && assignment.is_none();
    let comps = if full_mixture { vec![0; x.rows()] } else { component_rows(prior, x.rows(), assignment)? };
    let closed = !full_mixture && !matches!(prior, Prior::GenGaussianMixture { .. });

    let (z, log_q) = model.posterior_samples(x, n_mc, seed)?;
    let recon = model.recon_values(x, &z, n_mc)?;
    let kl_closed = if closed { Some(model.kl_closed_form(prior, x, assignment)?) } else { None };

    let mut out = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let rows = r * n_mc..(r + 1) * n_mc;
        let reconstruction = recon[rows.clone()].iter().sum::<f64>() / n_mc as f64;
        let kl = match &kl_closed {
            Some(k) => k[r],
            None => {
                let mut acc = 0.0;
                for k in rows {
                    let lp = if full_mixture {
                        prior.log_pdf_point(z.row(k))?
                    } else {
                        prior.component_log_pdf(z.row(k), comps[r])?
                    };
                    acc += log_q[k] - lp;
                }
                acc / n_mc as f64
            }
        };
        out.push(ElboEstimate {
            reconstruction,
            kl,
            total: reconstruction - kl,
            n_mc,
        });
    }
    Ok(out)
}

/// Importance-weighted estimate of `log p(x)` with `s` posterior samples
/// under the full mixture prior.
pub fn vae_iw_log_likelihood(model: &VaeModel, prior: &Prior, x: &Tensor, s: usize, seed: u64) -> Result<Vec<f64>> {
    if s == 0 {
        return Err(Error::InvalidArgument("importance samples must be ≥ 1".into()));
    }
    model.check_x(x)?;
    model.check_prior(prior)?;
    // Bound memory: process inputs in blocks so a block holds ~EVAL_CHUNK samples.
    let block = (EVAL_CHUNK / s).max(1);
    let mut out = Vec::with_capacity(x.rows());
    let mut rng = seeded(seed);
    for start in (0..x.rows()).step_by(block) {
        let idx: Vec<usize> = (start..(start + block).min(x.rows())).collect();
        let xb = x.gather_rows(&idx);
        let (z, log_q) = model.posterior_samples(&xb, s, rand::Rng::gen(&mut rng))?;
        let recon = model.recon_values(&xb, &z, s)?;
        let mut w = vec![0.0; s];
        for r in 0..xb.rows() {
            for k in 0..s {
                let i = r * s + k;
                w[k] = recon[i] + prior.log_pdf_point(z.row(i))? - log_q[i];
            }
            let v = log_sum_exp(&w) - (s as f64).ln();
            if !v.is_finite() {
                return Err(Error::numeric("vae_iw_log_likelihood"));
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// Maximize the mean single-sample ELBO by Adam. Mixture priors need an
/// assignment for every row. Returns the per-epoch mean negative ELBO.
pub fn train_vae(
    model: &mut VaeModel,
    prior: &Prior,
    data: &Tensor,
    assignment: Option<&[usize]>,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    model.check_x(data)?;
    model.check_prior(prior)?;
    let assignment = if prior.is_mixture() {
        Some(assignment.ok_or_else(|| {
            Error::InvalidArgument("mixture prior requires a component assignment for every row".into())
        })?)
    } else {
        None
    };
    let shell = VaeModel {
        params: ParamSet::new(),
        ..model.clone()
    };
    let l = model.latent_dim;
    run_training(&mut model.params, data, assignment, config, |g, vars, x, a, step_seed| {
        let rows = g.shape(x)[0];
        let mut eps = vec![0.0; rows * l];
        fill_standard_normal(&mut seeded(step_seed), &mut eps);
        let eps = Tensor::matrix(rows, l, eps)?;
        let elbo = shell.elbo_graph(g, vars, prior, x, a, &eps)?;
        let m = g.mean(elbo)?;
        g.neg(m)
    })
}
