//! Independent reference implementations and randomized checkers shared by
//! the property suites and the acceptance report.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use mixprior::analysis::{second_order_bound_nonempty, second_order_delta, ChannelFactors, ComponentStats};
use mixprior::data::kmeans;
use mixprior::flow::{FlowConfig, FlowModel};
use mixprior::gradkit::{adam_step, gradient_check, AdamConfig, AdamState, Graph, Mlp, ParamSet, Tensor, Var};
use mixprior::priors::{GaussianComponent, GeneralizedGaussianComponent, Placement, Prior};
use mixprior::vae::{gaussian_kl, VaeConfig, VaeModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut impl Rng) -> f64 {
    r.sample(rand_distr::StandardNormal)
}

pub fn normals(r: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * normal(r)).collect()
}

pub fn perturb(params: &mut ParamSet, r: &mut impl Rng, scale: f64) {
    for p in params.iter_mut() {
        for v in p.value.data_mut() {
            *v += scale * normal(r);
        }
    }
}

// ---------------------------------------------------------------- gradients

/// Number of distinct single-primitive gradient configurations.
pub const PRIMITIVES: u64 = 20;

fn uniform_tensor(r: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| r.gen_range(lo..hi)).collect()).unwrap()
}

/// One primitive applied to random inputs in `[−2, 2]` (positive inputs
/// for `ln` and `powf`), reduced to a scalar through fixed random weights.
/// Returns the worst relative gradient error at `h = 1e-5`.
pub fn primitive_gradient_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let kind = seed % PRIMITIVES;
    let (rows, cols) = (r.gen_range(1..=4), r.gen_range(if kind == 18 { 2 } else { 1 }..=4));
    let (lo, hi) = if matches!(kind, 7 | 10) { (0.1, 2.0) } else { (-2.0, 2.0) };
    let mut params = ParamSet::new();
    params.insert("a", uniform_tensor(&mut r, rows, cols, lo, hi)).unwrap();
    params.insert("b", uniform_tensor(&mut r, rows, cols, -2.0, 2.0)).unwrap();
    params.insert("c", uniform_tensor(&mut r, cols, 3, -2.0, 2.0)).unwrap();
    params.insert("bias", uniform_tensor(&mut r, 1, cols, -2.0, 2.0)).unwrap();
    let k = r.gen_range(0.1..3.0) * if r.gen_bool(0.5) { 1.0 } else { -1.0 };
    let at = r.gen_range(1..cols.max(2));
    gradient_check(
        |g, v| {
            let (a, b, c, bias) = (v[0], v[1], v[2], v[3]);
            let out = match kind {
                0 => g.matmul(a, c)?,
                1 => g.add(a, b)?,
                2 => {
                    let bias = g.sum_axis(bias, 0)?;
                    g.add(a, bias)?
                }
                3 => g.sub(a, b)?,
                4 => g.mul(a, b)?,
                5 => g.neg(a)?,
                6 => g.scale(a, k)?,
                7 => g.ln(a)?,
                8 => g.exp(a)?,
                9 => g.tanh(a)?,
                10 => g.powf(a, k.abs() + 0.5)?,
                11 => g.abs(a)?,
                12 => g.square(a)?,
                13 => g.clamp(a, -1.0, 1.0)?,
                14 => g.sum_axis(a, 0)?,
                15 => g.sum_axis(a, 1)?,
                16 => g.add_scalar(a, k)?,
                17 => g.concat(&[a, b])?,
                18 => {
                    let (p, q) = g.split(a, at)?;
                    let p2 = g.square(p)?;
                    g.concat(&[p2, q])?
                }
                _ => {
                    let m = g.mean(a)?;
                    let s = g.sum(b)?;
                    let ms = g.mul(m, s)?;
                    return Ok(ms);
                }
            };
            let shape = g.shape(out).to_vec();
            let n: usize = shape.iter().product();
            let w: Vec<f64> = (0..n).map(|i| ((i * 7919 + 13) % 17) as f64 / 8.0 - 1.0).collect();
            let w = g.constant(Tensor::new(shape, w)?)?;
            let wo = g.mul(out, w)?;
            g.sum(wo)
        },
        &params,
        1e-5,
    )
    .unwrap()
}

/// Max over entries of `|a − n| / max(|a|, |n|, 1e-3)` between reverse-mode
/// and central-difference gradients (`h = 1e-5`) of `f`.
pub fn model_gradient_error<F>(f: F, params: &ParamSet) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> mixprior::Result<Var>,
{
    let eval = |p: &ParamSet| {
        let mut g = Graph::new();
        let v = g.bind(p).unwrap();
        let o = f(&mut g, &v).unwrap();
        (g, v, o)
    };
    let (g, vars, out) = eval(params);
    let grads = g.backward(out).unwrap();
    let h = 1e-5;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (pi, &v) in vars.iter().enumerate() {
        let a = grads.get(v);
        for k in 0..a.len() {
            let orig = probe.get_index(pi).value.data()[k];
            probe.get_index_mut(pi).value.data_mut()[k] = orig + h;
            let (gp, _, op) = eval(&probe);
            probe.get_index_mut(pi).value.data_mut()[k] = orig - h;
            let (gm, _, om) = eval(&probe);
            probe.get_index_mut(pi).value.data_mut()[k] = orig;
            let n = (gp.value(op).item() - gm.value(om).item()) / (2.0 * h);
            let an = a.data()[k];
            worst = worst.max((an - n).abs() / an.abs().max(n.abs()).max(1e-3));
        }
    }
    worst
}

/// Random flow, VAE, MLP or prior loss; returns [`model_gradient_error`].
pub fn model_gradient_config_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let rows = r.gen_range(1..=4);
    match seed % 5 {
        0 => {
            let mut params = ParamSet::new();
            let n_in = r.gen_range(1..=4);
            let n_out = r.gen_range(1..=3);
            let mut sizes = vec![n_in];
            sizes.extend((0..r.gen_range(1..=2)).map(|_| r.gen_range(2..=5)));
            sizes.push(n_out);
            let mlp = Mlp::new(&mut params, "net", &sizes, r.gen_bool(0.5), false, &mut r).unwrap();
            perturb(&mut params, &mut r, 0.2);
            let x = Tensor::matrix(rows, n_in, normals(&mut r, rows * n_in, 1.0)).unwrap();
            let y = Tensor::matrix(rows, n_out, normals(&mut r, rows * n_out, 1.0)).unwrap();
            model_gradient_error(
                |g, v| {
                    let xv = g.constant(x.clone())?;
                    let yv = g.constant(y.clone())?;
                    let out = mlp.forward(g, v, xv)?;
                    let d = g.sub(out, yv)?;
                    let s = g.square(d)?;
                    g.mean(s)
                },
                &params,
            )
        }
        1 => {
            let cols = r.gen_range(1..=4);
            let k = r.gen_range(1..=3);
            let mut params = ParamSet::new();
            params.insert("a", Tensor::matrix(rows, cols, normals(&mut r, rows * cols, 0.8)).unwrap()).unwrap();
            params.insert("b", Tensor::matrix(rows, cols, normals(&mut r, rows * cols, 0.8)).unwrap()).unwrap();
            params.insert("c", Tensor::matrix(cols, k, normals(&mut r, cols * k, 0.8)).unwrap()).unwrap();
            model_gradient_error(
                |g, v| {
                    let (a, b, c) = (v[0], v[1], v[2]);
                    let ab = g.mul(a, b)?;
                    let t = g.tanh(ab)?;
                    let sa = g.scale(a, 0.3)?;
                    let e = g.exp(sa)?;
                    let b2 = g.square(b)?;
                    let b21 = g.add_scalar(b2, 1.0)?;
                    let l = g.ln(b21)?;
                    let a2 = g.square(a)?;
                    let a25 = g.add_scalar(a2, 0.5)?;
                    let p = g.powf(a25, 1.5)?;
                    let s1 = g.add(t, e)?;
                    let s2 = g.sub(l, p)?;
                    let s = g.add(s1, s2)?;
                    let both = g.concat(&[s, a])?;
                    let cols = g.shape(a)[1];
                    let part = g.slice(both, 1, cols + 1)?;
                    let m = g.matmul(part, c)?;
                    let rowsum = g.sum_axis(m, 1)?;
                    let colsum = g.sum_axis(s, 0)?;
                    let q = g.sum(rowsum)?;
                    let w = g.sum(colsum)?;
                    let qn = g.neg(q)?;
                    let tot = g.add(qn, w)?;
                    let ab_abs = g.abs(tot)?;
                    g.add(ab_abs, tot)
                },
                &params,
            )
        }
        2 => {
            let dim = r.gen_range(2..=4);
            let cfg = FlowConfig {
                couplings: r.gen_range(1..=3),
                hidden: r.gen_range(3..=6),
                hidden_layers: r.gen_range(1..=2),
                scale_offset: 0.1,
            };
            let mut model = FlowModel::new(dim, cfg, seed).unwrap();
            perturb(model.params_mut(), &mut r, 0.3);
            let prior = random_prior(&mut r, dim);
            let assign: Vec<usize> = (0..rows).map(|_| r.gen_range(0..prior.k())).collect();
            let x = Tensor::matrix(rows, dim, normals(&mut r, rows * dim, 2.0)).unwrap();
            let params = model.params().clone();
            model_gradient_error(
                |g, v| {
                    let xv = g.constant(x.clone())?;
                    model.nll_graph(g, v, &prior, xv, prior.is_mixture().then_some(assign.as_slice()))
                },
                &params,
            )
        }
        3 => {
            let dim = r.gen_range(1..=4);
            let latent = r.gen_range(1..=3);
            let cfg = VaeConfig {
                latent_dim: Some(latent),
                hidden: r.gen_range(2..=5),
                hidden_layers: 1,
            };
            let mut model = VaeModel::new(dim, cfg, seed).unwrap();
            perturb(model.params_mut(), &mut r, 0.2);
            let prior = random_prior(&mut r, latent);
            let assign: Vec<usize> = (0..rows).map(|_| r.gen_range(0..prior.k())).collect();
            let x = Tensor::matrix(rows, dim, normals(&mut r, rows * dim, 1.5)).unwrap();
            let eps = Tensor::matrix(rows, latent, normals(&mut r, rows * latent, 1.0)).unwrap();
            let params = model.params().clone();
            model_gradient_error(
                |g, v| {
                    let xv = g.constant(x.clone())?;
                    let e = model.elbo_graph(g, v, &prior, xv, prior.is_mixture().then_some(assign.as_slice()), &eps)?;
                    let m = g.mean(e)?;
                    g.neg(m)
                },
                &params,
            )
        }
        _ => {
            let dim = r.gen_range(1..=4);
            let prior = random_prior(&mut r, dim);
            let assign: Vec<usize> = (0..rows).map(|_| r.gen_range(0..prior.k())).collect();
            let mut params = ParamSet::new();
            params.insert("z", Tensor::matrix(rows, dim, normals(&mut r, rows * dim, 2.0)).unwrap()).unwrap();
            model_gradient_error(
                |g, v| {
                    let lp = prior.component_log_pdf_graph(g, v[0], prior.is_mixture().then_some(assign.as_slice()))?;
                    g.sum(lp)
                },
                &params,
            )
        }
    }
}

/// Standard, Gaussian-mixture or smooth generalized-Gaussian-mixture prior.
pub fn random_prior(r: &mut impl Rng, dim: usize) -> Prior {
    let k = r.gen_range(2..=3);
    let d = r.gen_range(1.0..6.0);
    match r.gen_range(0..3) {
        0 => Prior::standard(dim),
        1 => Prior::gaussian_mixture_placed(dim, k, d, r.gen_range(0.5..2.0), Placement::Collinear).unwrap(),
        _ => {
            let beta = [2.0, 3.0, 4.0][r.gen_range(0..3)];
            Prior::gen_gaussian_mixture_placed(dim, k, d, beta, Placement::Collinear).unwrap()
        }
    }
}

// --------------------------------------------------------------------- flow

pub fn random_flow(r: &mut impl Rng, dim: usize, seed: u64) -> FlowModel {
    let cfg = FlowConfig {
        couplings: r.gen_range(1..=4),
        hidden: r.gen_range(4..=16),
        hidden_layers: r.gen_range(1..=2),
        scale_offset: 0.1,
    };
    let mut m = FlowModel::new(dim, cfg, seed).unwrap();
    perturb(m.params_mut(), r, 0.3);
    m
}

/// Max |f⁻¹(f(x)) − x| for a random perturbed flow.
pub fn inversion_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dim = r.gen_range(2..=10);
    let rows = r.gen_range(1..=8);
    let m = random_flow(&mut r, dim, seed);
    let x = Tensor::matrix(rows, dim, normals(&mut r, rows * dim, 3.0)).unwrap();
    let (z, _) = m.forward(&x).unwrap();
    m.inverse(&z).unwrap().max_abs_diff(&x)
}

fn det(a: &[Vec<f64>]) -> f64 {
    match a.len() {
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        3 => {
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        }
        n => panic!("det for {n}x{n} not needed"),
    }
}

/// `|log_det − ln|det J|| / max(1, |log_det|)` with `J` a central-difference
/// Jacobian, for a random flow in 2 or 3 dims.
pub fn log_det_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dim = r.gen_range(2..=3);
    let m = random_flow(&mut r, dim, seed);
    let x = normals(&mut r, dim, 2.0);
    let f = |p: &[f64]| m.forward(&Tensor::matrix(1, dim, p.to_vec()).unwrap()).unwrap();
    let (_, ld) = f(&x);
    let h = 1e-6;
    let mut jac = vec![vec![0.0; dim]; dim];
    for j in 0..dim {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[j] += h;
        xm[j] -= h;
        let (zp, zm) = (f(&xp).0, f(&xm).0);
        for i in 0..dim {
            jac[i][j] = (zp.data()[i] - zm.data()[i]) / (2.0 * h);
        }
    }
    let numeric = det(&jac).abs().ln();
    (ld[0] - numeric).abs() / ld[0].abs().max(1.0)
}

// ------------------------------------------------------------------- priors

/// Composite Simpson rule over `[a, b]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// Integral of a 1D density, split at `kinks` so every panel is smooth.
pub fn integrate_density(f: impl Fn(f64) -> f64, kinks: &[f64], half_width: f64) -> f64 {
    let mut pts: Vec<f64> = kinks.to_vec();
    let lo = kinks.iter().copied().fold(f64::INFINITY, f64::min) - half_width;
    let hi = kinks.iter().copied().fold(f64::NEG_INFINITY, f64::max) + half_width;
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.windows(2).map(|w| simpson(&f, w[0], w[1], 20_000)).sum()
}

/// Log-density of a Gaussian component written out from scratch.
pub fn oracle_gauss(z: &[f64], mu: &[f64], var: &[f64]) -> f64 {
    z.iter()
        .zip(mu)
        .zip(var)
        .map(|((z, m), v)| -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (z - m) * (z - m) / (2.0 * v))
        .sum()
}

/// Generalized-Gaussian log-density with an independent log-gamma.
pub fn oracle_gen_gauss(z: &[f64], mu: &[f64], alpha: f64, beta: f64) -> f64 {
    let c = beta.ln() - (2.0 * alpha).ln() - ln_gamma(1.0 / beta);
    z.iter().zip(mu).map(|(z, m)| c - ((z - m).abs() / alpha).powf(beta)).sum()
}

/// Double-double accumulator (Knuth two-sum).
#[derive(Default, Clone, Copy)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    pub fn add(&mut self, x: f64) {
        let s = self.hi + x;
        let bb = s - self.hi;
        let err = (self.hi - (s - bb)) + (x - bb);
        let lo = self.lo + err;
        self.hi = s + lo;
        self.lo = lo - (self.hi - s);
    }

    pub fn ln(self) -> f64 {
        self.hi.ln() + self.lo / self.hi
    }
}

/// Mixture log-density by direct summation of component densities, each
/// rescaled by the largest one and accumulated in double-double.
pub fn oracle_mixture(component_logs: &[f64]) -> f64 {
    let top = component_logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut acc = DoubleDouble::default();
    for l in component_logs {
        acc.add((l - top).exp());
    }
    top + acc.ln() - (component_logs.len() as f64).ln()
}

/// Random mixture in `dim` dims with its oracle component log-densities.
pub fn mixture_vs_oracle(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dim = r.gen_range(1..=6);
    let k = r.gen_range(1..=5);
    let mus: Vec<Vec<f64>> = (0..k).map(|_| normals(&mut r, dim, 5.0)).collect();
    let spread = r.gen_range(0.5..30.0);
    let z = normals(&mut r, dim, spread);
    let (prior, logs): (Prior, Vec<f64>) = if r.gen_bool(0.5) {
        let vars: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| r.gen_range(0.1..4.0)).collect()).collect();
        let comps = mus.iter().zip(&vars).map(|(m, v)| GaussianComponent::new(m.clone(), v.clone()).unwrap()).collect();
        let logs = mus.iter().zip(&vars).map(|(m, v)| oracle_gauss(&z, m, v)).collect();
        (Prior::gaussian_mixture(comps).unwrap(), logs)
    } else {
        let beta = r.gen_range(0.8..8.0);
        let alpha = r.gen_range(0.3..3.0);
        let comps = mus.iter().map(|m| GeneralizedGaussianComponent::new(m.clone(), alpha, beta).unwrap()).collect();
        let logs = mus.iter().map(|m| oracle_gen_gauss(&z, m, alpha, beta)).collect();
        (Prior::gen_gaussian_mixture(comps).unwrap(), logs)
    };
    let got = prior.log_pdf_point(&z).unwrap();
    let want = oracle_mixture(&logs);
    (got - want).abs() / want.abs()
}

// ----------------------------------------------------------------- analysis

pub struct StatInstance {
    pub in_stats: ComponentStats,
    pub out_stats: ComponentStats,
    pub factors: ChannelFactors,
    pub sigma2_psi: f64,
}

fn random_stats(r: &mut impl Rng, k: usize, dim: usize, allow_empty: bool) -> ComponentStats {
    let mut counts: Vec<usize> = (0..k).map(|_| r.gen_range(1..50)).collect();
    if allow_empty && k > 1 && r.gen_bool(0.3) {
        counts[r.gen_range(0..k)] = 0;
    }
    let n: usize = counts.iter().sum();
    ComponentStats {
        mean_images: vec![vec![0.0; dim]; k],
        sigma2: counts
            .iter()
            .map(|&c| (c > 0).then(|| (0..dim).map(|_| r.gen_range(0.0..5.0f64).powi(2)).collect()))
            .collect(),
        weights: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        counts,
    }
}

pub fn stat_instance(seed: u64, allow_empty: bool) -> StatInstance {
    let mut r = rng(seed);
    let dim = r.gen_range(1..=8);
    let channels = r.gen_range(1..=dim);
    let mut channel_of: Vec<usize> = (0..dim).map(|_| r.gen_range(0..channels)).collect();
    channel_of[..channels].iter_mut().enumerate().for_each(|(i, c)| *c = i);
    let (k_in, k_out) = (r.gen_range(1..=4), r.gen_range(1..=4));
    StatInstance {
        in_stats: random_stats(&mut r, k_in, dim, allow_empty),
        out_stats: random_stats(&mut r, k_out, dim, allow_empty),
        factors: ChannelFactors {
            g: (0..channels).map(|_| r.gen_range(0.0..3.0)).collect(),
            channel_of,
        },
        sigma2_psi: r.gen_range(0.1..4.0),
    }
}

/// Δ by explicit loops over channels, components and dimensions. Also
/// returns the sum of absolute terms as the conditioning scale.
pub fn oracle_delta(s: &StatInstance) -> (f64, f64) {
    let (mut acc, mut scale) = (0.0, 0.0);
    for (c, g) in s.factors.g.iter().enumerate() {
        for (sign, stats) in [(-1.0, &s.out_stats), (1.0, &s.in_stats)] {
            for (i, sig) in stats.sigma2.iter().enumerate() {
                let Some(sig) = sig else { continue };
                for (d, v) in sig.iter().enumerate() {
                    if s.factors.channel_of[d] == c {
                        let t = sign * g * stats.weights[i] * v;
                        acc += t;
                        scale += t.abs();
                    }
                }
            }
        }
    }
    let k = 1.0 / (2.0 * s.sigma2_psi);
    (acc * k, scale * k)
}

pub fn delta_vs_oracle(seed: u64) -> f64 {
    let s = stat_instance(seed, true);
    let got = second_order_delta(&s.in_stats, &s.out_stats, &s.factors, s.sigma2_psi).unwrap();
    let (want, scale) = oracle_delta(&s);
    (got - want).abs() / scale.max(f64::MIN_POSITIVE)
}

/// `bound − Δ`, scaled by the magnitude of the terms (≥ 0 when the bound holds).
pub fn bound_slack(seed: u64) -> f64 {
    let s = stat_instance(seed, true);
    let d = second_order_delta(&s.in_stats, &s.out_stats, &s.factors, s.sigma2_psi).unwrap();
    let b = second_order_bound_nonempty(&s.in_stats, &s.out_stats, &s.factors, s.sigma2_psi).unwrap();
    let (_, scale) = oracle_delta(&s);
    (b.value - d) / scale.max(f64::MIN_POSITIVE)
}

// ------------------------------------------------------------------ k-means

/// Minimum inertia over every split of the rows into two non-empty groups.
pub fn exhaustive_two_means(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let dim = points[0].len();
    let cost = |mask: u32, side: bool| {
        let idx: Vec<usize> = (0..n).filter(|&i| ((mask >> i) & 1 == 1) == side).collect();
        let mut c = vec![0.0; dim];
        for &i in &idx {
            for d in 0..dim {
                c[d] += points[i][d];
            }
        }
        c.iter_mut().for_each(|v| *v /= idx.len() as f64);
        idx.iter()
            .map(|&i| points[i].iter().zip(&c).map(|(p, m)| (p - m) * (p - m)).sum::<f64>())
            .sum::<f64>()
    };
    // Fix the last point on side 0 so each split is visited once.
    (1u32..(1 << (n - 1)))
        .map(|mask| cost(mask, true) + cost(mask, false))
        .fold(f64::INFINITY, f64::min)
}

/// Two blobs of 2–6 points each, `sep` apart.
pub fn two_blob_points(seed: u64, sep: f64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    let dim = r.gen_range(1..=3);
    let dir: Vec<f64> = {
        let v = normals(&mut r, dim, 1.0);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    };
    let (a, b) = (r.gen_range(2..=6), r.gen_range(2..=6));
    let mut pts = Vec::new();
    for (count, side) in [(a, 0.0), (b, 1.0)] {
        for _ in 0..count {
            pts.push(normals(&mut r, dim, 1.0).iter().zip(&dir).map(|(e, u)| e + side * sep * u).collect());
        }
    }
    pts
}

/// `kmeans` inertia minus the exhaustive optimum (≥ 0; 0 when optimal).
pub fn kmeans_excess(points: &[Vec<f64>], seed: u64) -> f64 {
    let x = Tensor::from_rows(points).unwrap();
    let got = kmeans(&x, 2, seed, 100).unwrap().inertia;
    got - exhaustive_two_means(points)
}

// --------------------------------------------------------------------- adam

/// Max |library − scalar recurrence| over a random run of Adam steps.
pub fn adam_vs_recurrence(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.gen_range(1..=6);
    let steps = r.gen_range(1..=30);
    let cfg = AdamConfig {
        learning_rate: r.gen_range(1e-4..1e-1),
        beta1: r.gen_range(0.0..0.99),
        beta2: r.gen_range(0.9..0.9999),
        epsilon: 10f64.powf(r.gen_range(-10.0..-4.0)),
    };
    let w0 = normals(&mut r, n, 1.0);
    let mut params = ParamSet::new();
    params.insert("w", Tensor::vector(w0.clone())).unwrap();
    let mut state = AdamState::new(&params, cfg).unwrap();
    let (mut w, mut m, mut v) = (w0, vec![0.0; n], vec![0.0; n]);
    let mut worst: f64 = 0.0;
    for t in 1..=steps {
        let scale = r.gen_range(0.01..10.0);
        let g = normals(&mut r, n, scale);
        adam_step(&mut params, &[Tensor::vector(g.clone())], &mut state).unwrap();
        for i in 0..n {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mh = m[i] / (1.0 - cfg.beta1.powi(t));
            let vh = v[i] / (1.0 - cfg.beta2.powi(t));
            w[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
        }
        let got = params.get("w").unwrap().value.data();
        worst = worst.max(got.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    worst
}

// ---------------------------------------------------------------------- vae

/// Closed-form Gaussian KL and a Monte-Carlo estimate with its standard
/// error, for a random diagonal posterior and component.
pub fn kl_closed_vs_mc(seed: u64, samples: usize) -> (f64, f64, f64) {
    let mut r = rng(seed);
    let dim = r.gen_range(1..=4);
    let m = normals(&mut r, dim, 1.5);
    let lv: Vec<f64> = (0..dim).map(|_| r.gen_range(-2.0..1.0)).collect();
    let mu = normals(&mut r, dim, 1.5);
    let var: Vec<f64> = (0..dim).map(|_| r.gen_range(0.3..3.0)).collect();
    let closed = gaussian_kl(&m, &lv, &mu, &var);
    let q_var: Vec<f64> = lv.iter().map(|l| l.exp()).collect();
    let terms: Vec<f64> = (0..samples)
        .map(|_| {
            let z: Vec<f64> = m.iter().zip(&q_var).map(|(a, v)| a + v.sqrt() * normal(&mut r)).collect();
            oracle_gauss(&z, &m, &q_var) - oracle_gauss(&z, &mu, &var)
        })
        .collect();
    let (mean, se) = mean_se(&terms);
    (closed, mean, se)
}

pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-row `IW − ELBO` for a perturbed VAE under a bimodal prior.
pub fn iw_minus_elbo(seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let dim = r.gen_range(1..=3);
    let mut model = VaeModel::new(
        dim,
        VaeConfig {
            latent_dim: Some(r.gen_range(1..=2)),
            hidden: 8,
            hidden_layers: 1,
        },
        seed,
    )
    .unwrap();
    perturb(model.params_mut(), &mut r, 0.2);
    let prior = Prior::gaussian_mixture_placed(model.latent_dim(), 2, 4.0, 1.0, Placement::Collinear).unwrap();
    let rows = 200;
    let x = Tensor::matrix(rows, dim, normals(&mut r, rows * dim, 2.0)).unwrap();
    let iw = mixprior::vae::vae_iw_log_likelihood(&model, &prior, &x, 64, seed ^ 1).unwrap();
    let elbo = mixprior::vae::vae_elbo(&model, &prior, &x, None, 64, seed ^ 2).unwrap();
    iw.iter().zip(&elbo).map(|(a, b)| a - b.total).collect()
}
