//! Experiment pipeline behind the command-line tool: data generation,
//! training, evaluation, the distance sweep, second-order analysis and
//! k-means allocation. Every random stream is derived from the config's
//! master seed, so a config and seed fully determine every output file.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{latent_forceout, second_order_report, LatentModel, MeanImage, SecondOrderReport};
use crate::config::{hex, ExperimentConfig, ModelConfig, SweepFamily};
use crate::data::{assign_components, canonicalize, csv_read, csv_write, gen_mixture, gen_ood, kmeans, AssignmentMode, Dataset, KMeansResult};
use crate::dump::Dump;
use crate::error::{Error, Result};
use crate::flow::{train_flow, FlowModel, TrainConfig};
use crate::gradkit::{ParamSet, Tensor};
use crate::priors::Prior;
use crate::rng::derive_seed;
use crate::vae::{train_vae, vae_elbo, vae_iw_log_likelihood, VaeModel};

pub const IN_CSV: &str = "in_dist.csv";
pub const OOD_CSV: &str = "ood.csv";
pub const MODEL_FILE: &str = "model.pscp";
pub const LOSS_CSV: &str = "loss.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const LOGLIK_CSV: &str = "loglik.csv";
pub const LATENTS_CSV: &str = "latents.csv";
pub const HISTOGRAM_CSV: &str = "histogram.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const REPORT_JSON: &str = "report.json";
pub const SIGMA2_CSV: &str = "sigma2.csv";
pub const KMEANS_CSV: &str = "kmeans.csv";
pub const KMEANS_JSON: &str = "kmeans.json";

pub fn seed_for(cfg: &ExperimentConfig, run: u64, purpose: &str) -> u64 {
    derive_seed(cfg.seed, run, purpose)
}

/// Generated in-distribution and outlier sets for `cfg`.
pub fn synthetic_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let spec = cfg.data.synthetic_spec(seed_for(cfg, 0, "data-in"));
    let in_dist = gen_mixture(&spec)?;
    let ood = gen_ood(cfg.data.dim, cfg.data.ood.n, cfg.data.ood.variance, seed_for(cfg, 0, "data-ood"))?;
    Ok((in_dist, ood))
}

fn data_paths(cfg: &ExperimentConfig, out: &Path) -> (PathBuf, PathBuf) {
    let pick = |p: &Option<PathBuf>, default: &str| p.as_ref().map_or_else(|| out.join(default), |p| cfg.resolve(p));
    (pick(&cfg.data.in_csv, IN_CSV), pick(&cfg.data.ood_csv, OOD_CSV))
}

/// Read the data files named by the config, or the ones `gen-data` wrote to `out`.
pub fn load_data(cfg: &ExperimentConfig, out: &Path) -> Result<(Dataset, Dataset)> {
    let (pi, po) = data_paths(cfg, out);
    let (in_dist, ood) = (csv_read(&pi)?, csv_read(&po)?);
    for (d, p) in [(&in_dist, &pi), (&ood, &po)] {
        if d.dim() != cfg.data.dim {
            return Err(Error::Config(format!(
                "{} has {} columns, config data.dim is {}",
                p.display(),
                d.dim(),
                cfg.data.dim
            )));
        }
    }
    Ok((in_dist, ood))
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Flow(FlowModel),
    Vae(VaeModel),
}

impl TrainedModel {
    pub fn new(model: &ModelConfig, data_dim: usize, seed: u64) -> Result<Self> {
        Ok(match model {
            ModelConfig::Flow(f) => TrainedModel::Flow(FlowModel::new(data_dim, *f, seed)?),
            ModelConfig::Vae(v) => TrainedModel::Vae(VaeModel::new(data_dim, *v, seed)?),
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            TrainedModel::Flow(_) => "flow",
            TrainedModel::Vae(_) => "vae",
        }
    }

    pub fn latent(&self) -> &dyn LatentModel {
        match self {
            TrainedModel::Flow(m) => m,
            TrainedModel::Vae(m) => m,
        }
    }

    pub fn params(&self) -> &ParamSet {
        match self {
            TrainedModel::Flow(m) => m.params(),
            TrainedModel::Vae(m) => m.params(),
        }
    }

    fn model_config(&self) -> ModelConfig {
        match self {
            TrainedModel::Flow(m) => ModelConfig::Flow(*m.config()),
            TrainedModel::Vae(m) => ModelConfig::Vae(*m.config()),
        }
    }

    /// Exact (flow) or importance-weighted (VAE) log-likelihood under the
    /// full mixture.
    pub fn log_likelihood(&self, prior: &Prior, x: &Tensor, iw_samples: usize, seed: u64) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Flow(m) => m.log_likelihood(prior, x),
            TrainedModel::Vae(m) => vae_iw_log_likelihood(m, prior, x, iw_samples, seed),
        }
    }

    pub fn to_dump(&self, prior: &Prior, config_sha256: &str, final_train_nll: f64) -> Result<Dump> {
        Ok(Dump::new(self.params().clone())
            .with_meta("kind", self.kind())
            .with_meta("dim", self.latent().data_dim())
            .with_meta("latent_dim", self.latent().latent_dim())
            .with_meta("model", to_json(&self.model_config())?)
            .with_meta("prior", to_json(prior)?)
            .with_meta("config_sha256", config_sha256)
            .with_meta("final_train_nll", format!("{final_train_nll:?}")))
    }

    /// Rebuild a model and its prior from a dump.
    pub fn from_dump(dump: &Dump) -> Result<(Self, Prior)> {
        let parse = |key: &str| -> Result<serde_json::Value> {
            serde_json::from_str(dump.meta(key)?).map_err(|e| Error::Format(format!("dump entry {key:?}: {e}")))
        };
        let model: ModelConfig =
            serde_json::from_value(parse("model")?).map_err(|e| Error::Format(format!("dump model: {e}")))?;
        let prior: Prior =
            serde_json::from_value(parse("prior")?).map_err(|e| Error::Format(format!("dump prior: {e}")))?;
        let dim: usize = dump.meta_parse("dim")?;
        let params = dump.params.clone();
        let m = match model {
            ModelConfig::Flow(f) => TrainedModel::Flow(FlowModel::from_params(dim, f, params)?),
            ModelConfig::Vae(v) => TrainedModel::Vae(VaeModel::from_params(dim, v, params)?),
        };
        if m.kind() != dump.meta("kind")? {
            return Err(Error::Format("dump kind disagrees with its model description".into()));
        }
        if prior.dim() != m.latent().latent_dim() {
            return Err(Error::Format("dump prior and model latent dims differ".into()));
        }
        Ok((m, prior))
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Format(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub prior: Prior,
    pub loss: Vec<f64>,
    pub assignment: Option<Vec<usize>>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.loss.last().copied().unwrap_or(f64::NAN)
    }
}

/// Train the configured model on `data`. `run` selects the derived seeds,
/// so sweep runs draw independent initializations and batch orders.
pub fn train_model(cfg: &ExperimentConfig, data: &Dataset, run: u64) -> Result<TrainOutcome> {
    let prior = cfg.build_prior()?;
    let assignment = match (&cfg.assignment, prior.is_mixture()) {
        (Some(mode), true) => Some(assign_components(data, mode)?),
        (None, true) => return Err(Error::Config("mixture prior needs an assignment mode".into())),
        (_, false) => None,
    };
    let mut model = TrainedModel::new(&cfg.model, data.dim(), seed_for(cfg, run, "init"))?;
    let train = TrainConfig {
        seed: seed_for(cfg, run, "train"),
        ..cfg.train
    };
    let loss = match &mut model {
        TrainedModel::Flow(m) => train_flow(m, &prior, &data.x, assignment.as_deref(), &train)?,
        TrainedModel::Vae(m) => train_vae(m, &prior, &data.x, assignment.as_deref(), &train)?,
    };
    Ok(TrainOutcome {
        model,
        prior,
        loss,
        assignment,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl SetSummary {
    pub fn of(v: &[f64]) -> Self {
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n.max(1) as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n.max(1) as f64;
        Self {
            n,
            mean,
            std: var.sqrt(),
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Shared-edge histogram of two sets over `[min, max]` of their union.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub in_dist: Vec<u64>,
    pub ood: Vec<u64>,
}

pub fn histogram(a: &[f64], b: &[f64], bins: usize) -> Histogram {
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
    let count = |v: &[f64]| {
        let mut c = vec![0u64; bins];
        for x in v {
            let i = (((x - lo) / width) as usize).min(bins - 1);
            c[i] += 1;
        }
        c
    };
    Histogram {
        edges,
        in_dist: count(a),
        ood: count(b),
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub in_ll: Vec<f64>,
    pub ood_ll: Vec<f64>,
    pub in_latents: Tensor,
    pub ood_latents: Tensor,
    pub forceout_in: f64,
    pub forceout_ood: f64,
    /// Mean ELBO of each set against the full mixture (VAE only).
    pub elbo: Option<(f64, f64)>,
}

impl Evaluation {
    pub fn mean_in(&self) -> f64 {
        SetSummary::of(&self.in_ll).mean
    }

    pub fn mean_ood(&self) -> f64 {
        SetSummary::of(&self.ood_ll).mean
    }
}

pub fn evaluate(
    cfg: &ExperimentConfig,
    model: &TrainedModel,
    prior: &Prior,
    in_dist: &Tensor,
    ood: &Tensor,
    run: u64,
) -> Result<Evaluation> {
    let s = cfg.eval.iw_samples;
    let in_ll = model.log_likelihood(prior, in_dist, s, seed_for(cfg, run, "eval-in"))?;
    let ood_ll = model.log_likelihood(prior, ood, s, seed_for(cfg, run, "eval-ood"))?;
    let fin = latent_forceout(model.latent(), prior, in_dist)?;
    let fout = latent_forceout(model.latent(), prior, ood)?;
    let elbo = match model {
        TrainedModel::Vae(m) => {
            let n = cfg.eval.elbo_samples;
            let mean = |v: Vec<crate::vae::ElboEstimate>| v.iter().map(|e| e.total).sum::<f64>() / v.len().max(1) as f64;
            let a = vae_elbo(m, prior, in_dist, None, n, seed_for(cfg, run, "elbo-in"))?;
            let b = vae_elbo(m, prior, ood, None, n, seed_for(cfg, run, "elbo-ood"))?;
            Some((mean(a), mean(b)))
        }
        TrainedModel::Flow(_) => None,
    };
    Ok(Evaluation {
        in_ll,
        ood_ll,
        in_latents: fin.latents,
        ood_latents: fout.latents,
        forceout_in: fin.fraction_within,
        forceout_ood: fout.fraction_within,
        elbo,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: String,
    pub in_dist: SetSummary,
    pub ood: SetSummary,
    /// Mean in-distribution minus mean outlier log-likelihood.
    pub gap: f64,
    pub elbo_in: Option<f64>,
    pub elbo_ood: Option<f64>,
    pub forceout_in: f64,
    pub forceout_ood: f64,
    pub histogram: Histogram,
    pub final_train_nll: Option<f64>,
    pub config: ExperimentConfig,
    pub config_sha256: String,
    /// SHA-256 over the config, the model dump and both datasets.
    pub content_sha256: String,
}

fn content_hash(cfg: &ExperimentConfig, dump_bytes: &[u8], sets: &[&Tensor]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    h.update(dump_bytes);
    for t in sets {
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// CSV writer whose first line is `# config-sha256: <hash>`.
fn csv_out(path: &Path, cfg_hash: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let mut f = create(path)?;
    writeln!(f, "# config-sha256: {cfg_hash}").map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Format(format!("{}: {e}", path.display()))
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(f).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))
}

fn ensure_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

/// Write the in-distribution and outlier CSVs. Returns their row counts.
pub fn cmd_gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<(usize, usize)> {
    ensure_dir(out)?;
    let (in_dist, ood) = synthetic_data(cfg)?;
    let (pi, po) = data_paths(cfg, out);
    let comment = [format!("config-sha256: {}", cfg.sha256())];
    csv_write(&pi, &in_dist, &comment)?;
    csv_write(&po, &ood, &comment)?;
    Ok((in_dist.len(), ood.len()))
}

/// Train on the in-distribution CSV; writes the model dump and loss trace.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainOutcome> {
    ensure_dir(out)?;
    let (in_dist, _) = load_data(cfg, out)?;
    let outcome = train_model(cfg, &in_dist, 0)?;
    let hash = cfg.sha256();
    outcome
        .model
        .to_dump(&outcome.prior, &hash, outcome.final_loss())?
        .save(&out.join(MODEL_FILE))?;
    let path = out.join(LOSS_CSV);
    let mut w = csv_out(&path, &hash)?;
    w.write_record(["epoch", "loss"]).map_err(csv_err(&path))?;
    for (i, l) in outcome.loss.iter().enumerate() {
        w.write_record([(i + 1).to_string(), num(*l)]).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(outcome)
}

fn load_model(cfg: &ExperimentConfig, model_path: &Path) -> Result<(TrainedModel, Prior, Dump, Vec<u8>)> {
    let bytes = std::fs::read(model_path).map_err(|e| Error::io(model_path, e))?;
    let dump = Dump::from_bytes(&bytes)?;
    let dim: usize = dump.meta_parse("dim")?;
    if dim != cfg.data.dim {
        return Err(Error::Config(format!(
            "model {} was trained on {dim}-dimensional data, config data.dim is {}",
            model_path.display(),
            cfg.data.dim
        )));
    }
    let (model, prior) = TrainedModel::from_dump(&dump)?;
    let want = cfg.build_prior()?;
    if want != prior {
        return Err(Error::Config(format!("model {} was trained with a different prior", model_path.display())));
    }
    Ok((model, prior, dump, bytes))
}

/// Evaluate a trained dump on both datasets and write the summary, the
/// per-sample log-likelihoods, the latents and the histogram.
pub fn cmd_eval(cfg: &ExperimentConfig, model_path: &Path, out: &Path) -> Result<RunSummary> {
    ensure_dir(out)?;
    let (model, prior, dump, bytes) = load_model(cfg, model_path)?;
    let (in_dist, ood) = load_data(cfg, out)?;
    let ev = evaluate(cfg, &model, &prior, &in_dist.x, &ood.x, 0)?;
    let hash = cfg.sha256();

    let hist = histogram(&ev.in_ll, &ev.ood_ll, cfg.eval.bins);
    let (si, so) = (SetSummary::of(&ev.in_ll), SetSummary::of(&ev.ood_ll));
    let summary = RunSummary {
        model: model.kind().into(),
        gap: si.mean - so.mean,
        in_dist: si,
        ood: so,
        elbo_in: ev.elbo.map(|e| e.0),
        elbo_ood: ev.elbo.map(|e| e.1),
        forceout_in: ev.forceout_in,
        forceout_ood: ev.forceout_ood,
        histogram: hist.clone(),
        final_train_nll: dump.meta_parse("final_train_nll").ok(),
        config: cfg.clone(),
        config_sha256: hash.clone(),
        content_sha256: content_hash(cfg, &bytes, &[&in_dist.x, &ood.x]),
    };
    write_json(&out.join(SUMMARY_JSON), &summary)?;

    let path = out.join(LOGLIK_CSV);
    let mut w = csv_out(&path, &hash)?;
    w.write_record(["set", "index", "loglik"]).map_err(csv_err(&path))?;
    for (set, v) in [("in_dist", &ev.in_ll), ("ood", &ev.ood_ll)] {
        for (i, l) in v.iter().enumerate() {
            w.write_record([set.to_string(), i.to_string(), num(*l)]).map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = out.join(LATENTS_CSV);
    let mut w = csv_out(&path, &hash)?;
    let l = ev.in_latents.cols();
    let mut header = vec!["set".to_string(), "index".to_string()];
    header.extend((0..l).map(|j| format!("z{j}")));
    w.write_record(&header).map_err(csv_err(&path))?;
    for (set, z) in [("in_dist", &ev.in_latents), ("ood", &ev.ood_latents)] {
        for r in 0..z.rows() {
            let mut rec = vec![set.to_string(), r.to_string()];
            rec.extend(z.row(r).iter().map(|v| num(*v)));
            w.write_record(&rec).map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = out.join(HISTOGRAM_CSV);
    let mut w = csv_out(&path, &hash)?;
    w.write_record(["lo", "hi", "in_dist", "ood"]).map_err(csv_err(&path))?;
    for i in 0..hist.in_dist.len() {
        w.write_record([
            num(hist.edges[i]),
            num(hist.edges[i + 1]),
            hist.in_dist[i].to_string(),
            hist.ood[i].to_string(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub family: SweepFamily,
    pub distance: f64,
    pub run: u64,
    pub mean_in: f64,
    pub mean_ood: f64,
    pub final_train_nll: f64,
    /// `ok`, or the error that stopped this run.
    pub status: String,
}

impl SweepRow {
    pub fn gap(&self) -> f64 {
        self.mean_in - self.mean_ood
    }

    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// One sweep run: the config's model trained with `family` at distance `d`.
pub fn sweep_run(cfg: &ExperimentConfig, data: &(Dataset, Dataset), family: SweepFamily, d: f64, run: u64) -> SweepRow {
    let mut row = SweepRow {
        family,
        distance: d,
        run,
        mean_in: f64::NAN,
        mean_ood: f64::NAN,
        final_train_nll: f64::NAN,
        status: "ok".into(),
    };
    let result = (|| -> Result<()> {
        let mut c = cfg.clone();
        c.prior = cfg.sweep.prior(family, d);
        if c.assignment.is_none() {
            c.assignment = Some(AssignmentMode::Labels);
        }
        c.validate()?;
        let t = train_model(&c, &data.0, run)?;
        row.final_train_nll = t.final_loss();
        let ev = evaluate(&c, &t.model, &t.prior, &data.0.x, &data.1.x, run)?;
        row.mean_in = ev.mean_in();
        row.mean_ood = ev.mean_ood();
        Ok(())
    })();
    if let Err(e) = result {
        row.status = e.to_string();
    }
    row
}

/// Train and evaluate one model per (family, distance). Failed runs are
/// recorded in their row and the sweep continues.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SweepRow>> {
    ensure_dir(out)?;
    let data = load_data(cfg, out)?;
    let mut rows = Vec::new();
    let mut run = 0;
    for &family in &cfg.sweep.families {
        for &d in &cfg.sweep.distances {
            run += 1;
            rows.push(sweep_run(cfg, &data, family, d, run));
        }
    }
    let path = out.join(SWEEP_CSV);
    let mut w = csv_out(&path, &cfg.sha256())?;
    w.write_record(["family", "distance", "run", "mean_in", "mean_ood", "gap", "final_train_nll", "status"])
        .map_err(csv_err(&path))?;
    for r in &rows {
        let family = match r.family {
            SweepFamily::Gaussian => "gaussian",
            SweepFamily::GenGaussian => "gen_gaussian",
        };
        w.write_record([
            family.to_string(),
            num(r.distance),
            r.run.to_string(),
            num(r.mean_in),
            num(r.mean_ood),
            num(r.gap()),
            num(r.final_train_nll),
            r.status.clone(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutput {
    pub report: SecondOrderReport,
    pub mean_images: Vec<MeanImage>,
    pub fraction_dims_out_above_in: f64,
    pub forceout_in: f64,
    pub forceout_ood: f64,
    pub config_sha256: String,
}

/// Second-order report and force-out fractions of a trained model on the
/// in-distribution and outlier sets.
pub fn analyze(cfg: &ExperimentConfig, model: &TrainedModel, prior: &Prior, in_dist: &Tensor, ood: &Tensor) -> Result<AnalysisOutput> {
    let s = cfg.eval.iw_samples;
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let gap = mean(model.log_likelihood(prior, ood, s, seed_for(cfg, 0, "analyze-ood"))?)
        - mean(model.log_likelihood(prior, in_dist, s, seed_for(cfg, 0, "analyze-in"))?);
    let (report, mean_images) = second_order_report(
        model.latent(),
        prior,
        in_dist,
        ood,
        &cfg.factors(),
        cfg.analysis.sigma2_psi,
        cfg.analysis.allocation,
        cfg.analysis.mean_samples,
        seed_for(cfg, 0, "mean-image"),
        Some(gap),
    )?;
    Ok(AnalysisOutput {
        fraction_dims_out_above_in: report.fraction_dims_out_above_in(),
        forceout_in: latent_forceout(model.latent(), prior, in_dist)?.fraction_within,
        forceout_ood: latent_forceout(model.latent(), prior, ood)?.fraction_within,
        report,
        mean_images,
        config_sha256: cfg.sha256(),
    })
}

/// Write the second-order report and per-dimension σ² table.
pub fn cmd_analyze(cfg: &ExperimentConfig, model_path: &Path, out: &Path) -> Result<AnalysisOutput> {
    ensure_dir(out)?;
    let (model, prior, _, _) = load_model(cfg, model_path)?;
    let (in_dist, ood) = load_data(cfg, out)?;
    let result = analyze(cfg, &model, &prior, &in_dist.x, &ood.x)?;
    write_json(&out.join(REPORT_JSON), &result)?;

    let path = out.join(SIGMA2_CSV);
    let mut w = csv_out(&path, &result.config_sha256)?;
    w.write_record(["set", "component", "weight", "count", "dim", "sigma2"]).map_err(csv_err(&path))?;
    for (set, stats) in [("in_dist", &result.report.in_stats), ("ood", &result.report.out_stats)] {
        for (i, s) in stats.sigma2.iter().enumerate() {
            let Some(s) = s else { continue };
            for (d, v) in s.iter().enumerate() {
                w.write_record([
                    set.to_string(),
                    i.to_string(),
                    num(stats.weights[i]),
                    stats.counts[i].to_string(),
                    d.to_string(),
                    num(*v),
                ])
                .map_err(csv_err(&path))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct KMeansSummary {
    k: usize,
    centroids: Vec<Vec<f64>>,
    inertia: f64,
    iterations: usize,
    inertia_trace: Vec<f64>,
    config_sha256: String,
}

/// Cluster the in-distribution set with the configured k-means settings
/// (k = number of prior components if none are given) and write the
/// canonical assignment.
pub fn cmd_kmeans(cfg: &ExperimentConfig, out: &Path) -> Result<KMeansResult> {
    ensure_dir(out)?;
    let (in_dist, _) = load_data(cfg, out)?;
    let (k, seed, max_iter) = match cfg.assignment {
        Some(AssignmentMode::Kmeans { k, seed, max_iter }) => (k, seed, max_iter),
        _ => (cfg.prior.k(), seed_for(cfg, 0, "kmeans"), 100),
    };
    let raw = kmeans(&in_dist.x, k, seed, max_iter)?;
    let (assignment, centroids) = canonicalize(&raw);
    let result = KMeansResult {
        assignment,
        centroids,
        ..raw
    };
    let hash = cfg.sha256();
    let path = out.join(KMEANS_CSV);
    let mut w = csv_out(&path, &hash)?;
    w.write_record(["index", "component"]).map_err(csv_err(&path))?;
    for (i, c) in result.assignment.iter().enumerate() {
        w.write_record([i.to_string(), c.to_string()]).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_json(
        &out.join(KMEANS_JSON),
        &KMeansSummary {
            k,
            centroids: result.centroids.clone(),
            inertia: result.inertia,
            iterations: result.iterations,
            inertia_trace: result.inertia_trace.clone(),
            config_sha256: hash,
        },
    )?;
    Ok(result)
}
