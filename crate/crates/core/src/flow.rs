//! Affine-coupling normalizing flow with feature reversal between couplings.
//!
//! The forward direction maps data `x` to latents `z`. Each coupling keeps
//! the first `⌈dim/2⌉` coordinates (part A) and transforms the rest (part B):
//!
//! ```text
//! s = exp(clamp(s_raw(A), -7, 7)) + scale_offset
//! z_B = x_B ⊙ s + t(A)
//! ```
//!
//! so `log|det ∂z/∂x| = Σ ln s`. A reversal permutation sits between
//! consecutive couplings and contributes nothing to the log-determinant.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradkit::{adam_step, AdamConfig, AdamState, Graph, Mlp, ParamSet, Tensor, Var};
use crate::priors::Prior;
use crate::rng::seeded;

pub const SCALE_RAW_LIMIT: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub couplings: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub scale_offset: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            couplings: 4,
            hidden: 64,
            hidden_layers: 2,
            scale_offset: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineCoupling {
    pub split_point: usize,
    scale_net: Mlp,
    shift_net: Mlp,
    pub scale_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Coupling(AffineCoupling),
    Reverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    dim: usize,
    config: FlowConfig,
    layers: Vec<Layer>,
    params: ParamSet,
}

/// Reverse the last axis.
pub fn reverse_features(x: &Tensor) -> Tensor {
    let mut out = Vec::with_capacity(x.len());
    for r in 0..x.rows() {
        out.extend(x.row(r).iter().rev());
    }
    Tensor::new(x.shape().to_vec(), out).expect("same size")
}

fn reverse_graph(g: &mut Graph, x: Var) -> Result<Var> {
    let w = g.shape(x)[1];
    let cols = (0..w).rev().map(|j| g.slice(x, j, j + 1)).collect::<Result<Vec<_>>>()?;
    g.concat(&cols)
}

impl AffineCoupling {
    /// Scale and shift for part B given part A.
    fn scale_shift(&self, g: &mut Graph, vars: &[Var], a: Var) -> Result<(Var, Var, Var)> {
        let s_raw = self.scale_net.forward(g, vars, a)?;
        let s_raw = g.clamp(s_raw, -SCALE_RAW_LIMIT, SCALE_RAW_LIMIT)?;
        let s = g.exp(s_raw)?;
        let s = g.add_scalar(s, self.scale_offset)?;
        let t = self.shift_net.forward(g, vars, a)?;
        let log_s = g.ln(s)?;
        Ok((s, t, log_s))
    }

    fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<(Var, Var)> {
        let (a, b) = g.split(x, self.split_point)?;
        let (s, t, log_s) = self.scale_shift(g, vars, a)?;
        let zb = g.mul(b, s)?;
        let zb = g.add(zb, t)?;
        let z = g.concat(&[a, zb])?;
        let ld = g.sum_axis(log_s, 1)?;
        Ok((z, ld))
    }

    fn inverse(&self, vars_params: &ParamSet, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = g.bind(vars_params)?;
        let zv = g.constant(z.clone())?;
        let (a, b) = g.split(zv, self.split_point)?;
        let (s, t, _) = self.scale_shift(&mut g, &vars, a)?;
        let (av, bv, sv, tv) = (g.value(a), g.value(b), g.value(s), g.value(t));
        let wa = av.cols();
        let wb = bv.cols();
        let mut out = Vec::with_capacity(z.len());
        for r in 0..z.rows() {
            out.extend_from_slice(av.row(r));
            for j in 0..wb {
                let k = r * wb + j;
                out.push((bv.data()[k] - tv.data()[k]) / sv.data()[k]);
            }
        }
        let x = Tensor::matrix(z.rows(), wa + wb, out)?;
        if !x.is_finite() {
            return Err(Error::numeric("flow inverse"));
        }
        Ok(x)
    }
}

impl FlowModel {
    /// Fresh model. Hidden layers are random, the scale and shift heads start
    /// at zero so every coupling begins as `z_B = (1 + scale_offset) x_B`.
    pub fn new(dim: usize, config: FlowConfig, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!("coupling flow needs dim ≥ 2, got {dim}")));
        }
        if config.couplings == 0 || config.hidden == 0 {
            return Err(Error::InvalidArgument("flow needs ≥ 1 coupling and ≥ 1 hidden unit".into()));
        }
        if !(config.scale_offset >= 0.0 && config.scale_offset.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale_offset must be ≥ 0, got {}", config.scale_offset)));
        }
        let mut rng = seeded(seed);
        let mut params = ParamSet::new();
        let split = dim.div_ceil(2);
        let mut layers = Vec::new();
        for c in 0..config.couplings {
            if c > 0 {
                layers.push(Layer::Reverse);
            }
            let mut sizes = vec![split];
            sizes.extend(std::iter::repeat(config.hidden).take(config.hidden_layers));
            sizes.push(dim - split);
            let scale_net = Mlp::new(&mut params, &format!("coupling{c}.scale"), &sizes, false, true, &mut rng)?;
            let shift_net = Mlp::new(&mut params, &format!("coupling{c}.shift"), &sizes, false, true, &mut rng)?;
            layers.push(Layer::Coupling(AffineCoupling {
                split_point: split,
                scale_net,
                shift_net,
                scale_offset: config.scale_offset,
            }));
        }
        Ok(Self {
            dim,
            config,
            layers,
            params,
        })
    }

    /// Rebuild a model around previously trained parameters.
    pub fn from_params(dim: usize, config: FlowConfig, params: ParamSet) -> Result<Self> {
        let template = Self::new(dim, config, 0)?;
        if template.params.len() != params.len() {
            return Err(Error::Format(format!(
                "flow expects {} parameter tensors, dump has {}",
                template.params.len(),
                params.len()
            )));
        }
        for (a, b) in template.params.iter().zip(params.iter()) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::Format(format!(
                    "parameter {} {:?} does not match expected {} {:?}",
                    b.name,
                    b.value.shape(),
                    a.name,
                    a.value.shape()
                )));
            }
        }
        Ok(Self {
            params,
            ..template
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Graph-level forward pass: latents and per-sample log-determinant.
    pub fn forward_graph(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<(Var, Var)> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != self.dim {
            return Err(Error::shape("flow_forward", format!("{shape:?} vs model dim {}", self.dim)));
        }
        let mut h = x;
        let mut log_det = g.constant(Tensor::zeros(&[shape[0]]))?;
        for layer in &self.layers {
            match layer {
                Layer::Coupling(c) => {
                    let (z, ld) = c.forward(g, vars, h)?;
                    h = z;
                    log_det = g.add(log_det, ld)?;
                }
                Layer::Reverse => h = reverse_graph(g, h)?,
            }
        }
        Ok((h, log_det))
    }

    /// `x → (z, log|det ∂z/∂x|)`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let mut g = Graph::new();
        let vars = g.bind(&self.params)?;
        let xv = g.constant(x.clone())?;
        let (z, ld) = self.forward_graph(&mut g, &vars, xv)?;
        Ok((g.value(z).clone(), g.value(ld).data().to_vec()))
    }

    pub fn inverse(&self, z: &Tensor) -> Result<Tensor> {
        if z.rank() != 2 || z.cols() != self.dim {
            return Err(Error::shape("flow_inverse", format!("{:?} vs model dim {}", z.shape(), self.dim)));
        }
        if !z.is_finite() {
            return Err(Error::numeric("flow inverse input"));
        }
        let mut h = z.clone();
        for layer in self.layers.iter().rev() {
            h = match layer {
                Layer::Coupling(c) => c.inverse(&self.params, &h)?,
                Layer::Reverse => reverse_features(&h),
            };
        }
        Ok(h)
    }

    fn check_prior(&self, prior: &Prior) -> Result<()> {
        if prior.dim() != self.dim {
            return Err(Error::shape("flow prior", format!("prior dim {} vs model dim {}", prior.dim(), self.dim)));
        }
        Ok(())
    }

    /// Exact `ln p(x) = ln p_prior(z) + log_det` under the full prior.
    pub fn log_likelihood(&self, prior: &Prior, x: &Tensor) -> Result<Vec<f64>> {
        self.check_prior(prior)?;
        let (z, ld) = self.forward(x)?;
        let lp = prior.log_pdf(&z)?;
        Ok(lp.iter().zip(&ld).map(|(a, b)| a + b).collect())
    }

    /// Mean negative log-likelihood of a batch where each row is scored under
    /// its assigned component only.
    pub fn nll_graph(
        &self,
        g: &mut Graph,
        vars: &[Var],
        prior: &Prior,
        x: Var,
        assignment: Option<&[usize]>,
    ) -> Result<Var> {
        let (z, ld) = self.forward_graph(g, vars, x)?;
        let lp = prior.component_log_pdf_graph(g, z, assignment)?;
        let ll = g.add(lp, ld)?;
        let m = g.mean(ll)?;
        g.neg(m)
    }

    /// `n` samples: `z ~ prior`, `x = inverse(z)`.
    pub fn sample(&self, prior: &Prior, n: usize, seed: u64) -> Result<Tensor> {
        self.check_prior(prior)?;
        let (z, _) = prior.sample(n, seed)?;
        if n == 0 {
            return Ok(Tensor::zeros(&[0, self.dim]));
        }
        self.inverse(&z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Shuffling and noise seed; set by the caller, not read from config.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 256,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Shared minibatch loop. `loss` builds the scalar objective for one batch
/// from the bound parameters, the batch rows and their assignment. Returns
/// the mean loss per epoch.
pub(crate) fn run_training<F>(
    params: &mut ParamSet,
    data: &Tensor,
    assignment: Option<&[usize]>,
    config: &TrainConfig,
    mut loss: F,
) -> Result<Vec<f64>>
where
    F: FnMut(&mut Graph, &[Var], Var, Option<&[usize]>, u64) -> Result<Var>,
{
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be ≥ 1".into()));
    }
    let n = data.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("training data is empty".into()));
    }
    if let Some(a) = assignment {
        if a.len() != n {
            return Err(Error::InvalidArgument(format!("assignment has {} rows, data has {n}", a.len())));
        }
    }
    let mut state = AdamState::new(params, config.adam)?;
    let mut rng = seeded(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut step = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = data.gather_rows(chunk);
            let batch_assign: Option<Vec<usize>> = assignment.map(|a| chunk.iter().map(|&i| a[i]).collect());
            let mut g = Graph::new();
            let vars = g.bind(params).map_err(|e| e.at_step(step))?;
            let xv = g.constant(batch).map_err(|e| e.at_step(step))?;
            let step_seed = rand::Rng::gen::<u64>(&mut rng);
            let out = loss(&mut g, &vars, xv, batch_assign.as_deref(), step_seed).map_err(|e| e.at_step(step))?;
            let value = g.value(out).item();
            let grads = g.backward(out).map_err(|e| e.at_step(step))?;
            adam_step(params, &grads.for_params(params), &mut state).map_err(|e| e.at_step(step))?;
            total += value * chunk.len() as f64;
            step += 1;
        }
        trace.push(total / n as f64);
    }
    Ok(trace)
}

/// Fit by Adam on mean negative log-likelihood. With a mixture prior each
/// row only sees its assigned component; a standard prior ignores the
/// assignment. Returns the per-epoch mean training loss.
pub fn train_flow(
    model: &mut FlowModel,
    prior: &Prior,
    data: &Tensor,
    assignment: Option<&[usize]>,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    model.check_prior(prior)?;
    if data.cols() != model.dim {
        return Err(Error::shape("train_flow", format!("data has {} columns, model dim {}", data.cols(), model.dim)));
    }
    let assignment = if prior.is_mixture() {
        Some(assignment.ok_or_else(|| {
            Error::InvalidArgument("mixture prior requires a component assignment for every row".into())
        })?)
    } else {
        None
    };
    let shell = model_shell(model);
    run_training(&mut model.params, data, assignment, config, |g, vars, x, a, _| {
        shell.nll_graph(g, vars, prior, x, a)
    })
}

// Structure of `model` without its parameter values; the layers only hold
// parameter indices, so this can build graphs while `params` is borrowed
// mutably by the optimizer.
fn model_shell(model: &FlowModel) -> FlowModel {
    FlowModel {
        dim: model.dim,
        config: model.config,
        layers: model.layers.clone(),
        params: ParamSet::new(),
    }
}
