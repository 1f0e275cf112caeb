use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mixprior::config::ExperimentConfig;
use mixprior::experiment::{self, MODEL_FILE};
use mixprior::Error;

/// Flows and VAEs with fixed mixture priors: data generation, training,
/// likelihood evaluation and second-order analysis.
#[derive(Parser)]
#[command(name = "mixprior", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct WithModel {
    #[command(flatten)]
    common: Common,
    /// Model dump; defaults to `<out>/model.pscp`.
    #[arg(long)]
    model: Option<PathBuf>,
}

impl WithModel {
    fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.common.out.join(MODEL_FILE))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the in-distribution and outlier CSVs.
    GenData(Common),
    /// Train a model and write its dump and loss trace.
    Train(Common),
    /// Evaluate a trained model on both datasets.
    Eval(WithModel),
    /// Train and evaluate one model per prior family and distance.
    SweepDistance(Common),
    /// Second-order likelihood-gap report for a trained model.
    Analyze(WithModel),
    /// Cluster the in-distribution data.
    Kmeans(Common),
}

fn load(c: &Common) -> mixprior::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

fn run(cli: Cli) -> mixprior::Result<()> {
    match cli.command {
        Command::GenData(c) => {
            let cfg = load(&c)?;
            let (n_in, n_ood) = experiment::cmd_gen_data(&cfg, &c.out)?;
            println!("in-distribution rows: {n_in}");
            println!("outlier rows: {n_ood}");
        }
        Command::Train(c) => {
            let cfg = load(&c)?;
            let t = experiment::cmd_train(&cfg, &c.out)?;
            println!("epochs: {}", t.loss.len());
            println!("final train nll: {:.6}", t.final_loss());
            println!("model: {}", show(&c.out.join(MODEL_FILE)));
        }
        Command::Eval(m) => {
            let cfg = load(&m.common)?;
            let s = experiment::cmd_eval(&cfg, &m.model_path(), &m.common.out)?;
            println!("mean log-likelihood in-dist: {:.4}", s.in_dist.mean);
            println!("mean log-likelihood outlier: {:.4}", s.ood.mean);
            println!("gap: {:.4}", s.gap);
            println!("fraction within modes: in-dist {:.4}, outlier {:.4}", s.forceout_in, s.forceout_ood);
        }
        Command::SweepDistance(c) => {
            let cfg = load(&c)?;
            for r in experiment::cmd_sweep(&cfg, &c.out)? {
                println!(
                    "{:?} d={} in={:.4} ood={:.4} gap={:.4} {}",
                    r.family,
                    r.distance,
                    r.mean_in,
                    r.mean_ood,
                    r.gap(),
                    r.status
                );
            }
        }
        Command::Analyze(m) => {
            let cfg = load(&m.common)?;
            let a = experiment::cmd_analyze(&cfg, &m.model_path(), &m.common.out)?;
            println!("delta: {:.6}", a.report.delta);
            println!("bound: {:.6}", a.report.bound.value);
            if let Some(gap) = a.report.measured_gap {
                println!("measured gap (outlier - in-dist): {gap:.4}");
            }
            println!("dims with outlier sigma2 above in-dist: {:.2}", a.fraction_dims_out_above_in);
        }
        Command::Kmeans(c) => {
            let cfg = load(&c)?;
            let k = experiment::cmd_kmeans(&cfg, &c.out)?;
            println!("iterations: {}", k.iterations);
            println!("inertia: {:.6}", k.inertia);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if let Error::Numeric { .. } = e { 2 } else { 1 })
        }
    }
}
