use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use autoadversary::harness::{self, ExperimentConfig, SEED_ENV};
use autoadversary::Result;

#[derive(Parser)]
#[command(name = "aadv", version, about = "Sparse targeted adversarial attacks on a toy classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset and train the classifier.
    Train(Flags),
    /// Run the sparse attack on correctly classified validation images.
    Attack(Flags),
    /// Compare the full attack with the dense, random, l1-delta and no-encoder baselines.
    Ablate(Flags),
    /// Compare the fully connected and convolutional encoders.
    Encoders(Flags),
    /// Pretty-print a stored report.
    Report {
        path: PathBuf,
    },
}

/// Every flag is also a key of the `--config` file.
#[derive(Args)]
struct Flags {
    /// Flat key=value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    /// Output directory for reports and images.
    #[arg(long)]
    out: Option<String>,
    /// Root seed; falls back to $AADV_SEED, then 1.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    count: Option<String>,
    /// Radius on the [0, 1] scale, decimal or ratio such as 8/255.
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    alpha_start: Option<String>,
    #[arg(long)]
    alpha_end: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    /// Defaults to eps/10.
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    enc_lr: Option<String>,
    #[arg(long)]
    enc_momentum: Option<String>,
    /// fc or conv.
    #[arg(long)]
    encoder: Option<String>,
    /// One mask value per pixel position, shared by its channels.
    #[arg(long)]
    channel_shared: bool,
    #[arg(long)]
    workers: Option<String>,
    /// Write original, adversarial, difference and mask images.
    #[arg(long)]
    dump_images: bool,
    #[arg(long)]
    l1_lambda: Option<String>,
    #[arg(long)]
    accuracy_floor: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
}

impl Flags {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut pairs = Vec::new();
        let mut add = |k: &str, v: &Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v.clone()));
            }
        };
        add("model", &self.model);
        add("dataset", &self.dataset);
        add("out", &self.out);
        add("seed", &self.seed);
        add("count", &self.count);
        add("eps", &self.eps);
        add("iters", &self.iters);
        add("c", &self.c);
        add("gamma", &self.gamma);
        add("alpha-start", &self.alpha_start);
        add("alpha-end", &self.alpha_end);
        add("mu", &self.mu);
        add("beta", &self.beta);
        add("enc-lr", &self.enc_lr);
        add("enc-momentum", &self.enc_momentum);
        add("encoder", &self.encoder);
        add("workers", &self.workers);
        add("l1-lambda", &self.l1_lambda);
        add("accuracy-floor", &self.accuracy_floor);
        add("epochs", &self.epochs);
        if self.channel_shared {
            pairs.push(("channel-shared".into(), "true".into()));
        }
        if self.dump_images {
            pairs.push(("dump-images".into(), "true".into()));
        }
        let env_seed = std::env::var(SEED_ENV).ok();
        ExperimentConfig::resolve(self.config.as_deref(), &pairs, env_seed.as_deref())
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(flags) => {
            let cfg = flags.resolve()?;
            let s = harness::cmd_train(&cfg)?;
            for e in &s.history.epochs {
                println!(
                    "epoch {:>3}  loss {:.4}  train {:.4}  val {:.4}",
                    e.epoch, e.train_loss, e.train_accuracy, e.val_accuracy
                );
            }
            println!("validation accuracy {:.4}", s.val_accuracy);
            println!("model {} ({})", s.model_path.display(), s.checksum);
            println!("dataset {}", s.dataset_path.display());
        }
        Command::Attack(flags) => print!("{}", harness::cmd_attack(&flags.resolve()?)?.render()),
        Command::Ablate(flags) => print!("{}", harness::cmd_ablate(&flags.resolve()?)?.render()),
        Command::Encoders(flags) => print!("{}", harness::cmd_encoders(&flags.resolve()?)?.render()),
        Command::Report { path } => print!("{}", harness::cmd_report(&path)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
