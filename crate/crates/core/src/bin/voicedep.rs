use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use voicedep::cli::{self, RunConfig};
use voicedep::{Error, Label, Result};

/// Speech-based depression classification with 1d-CNN ensembles.
#[derive(Parser)]
#[command(name = "voicedep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override a configuration value, e.g. `--set train.epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and its manifest.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Store `synth:<seed>` references instead of writing WAV files.
        #[arg(long)]
        no_audio: bool,
    },
    /// Trim, crop and featurize a manifest into train/test caches.
    Featurize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train the ensemble on a train cache.
    Train {
        #[command(flatten)]
        common: Common,
        /// Cache directory or train cache file.
        #[arg(long)]
        cache: PathBuf,
        /// Cache scored after every epoch for the history.
        #[arg(long)]
        val: Option<PathBuf>,
    },
    /// Score a test cache and write speaker-level metrics.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        cache: PathBuf,
    },
    /// F1 against ensemble size for all fusion methods.
    Curve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        cache: PathBuf,
    },
    /// Speaker-disjoint k-fold cross-validation.
    Crossval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cache: PathBuf,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth { common, .. }
            | Command::Featurize { common, .. }
            | Command::Train { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Curve { common, .. }
            | Command::Crossval { common, .. } => common,
        }
    }
}

fn print_report(scope: &str, m: &voicedep::evaluation::MetricsReport) {
    for label in Label::BOTH {
        let c = m.class(label);
        println!(
            "{scope} {:<14} precision {:.3} recall {:.3} f1 {:.3}",
            label.name(),
            c.precision,
            c.recall,
            c.f1
        );
    }
    println!("{scope} accuracy {:.3}", m.accuracy);
}

fn run(command: &Command) -> Result<()> {
    let common = command.common();
    let cfg = RunConfig::resolve(common.config.as_deref(), &common.overrides, common.seed)?;
    let out = &common.out;
    match command {
        Command::Synth { no_audio, .. } => {
            let m = cli::cmd_synth(&cfg, out, !no_audio)?;
            println!("wrote {} speakers to {}", m.entries.len(), out.join(cli::MANIFEST_FILE).display());
        }
        Command::Featurize { manifest, .. } => {
            let s = cli::cmd_featurize(manifest, &cfg, out)?;
            println!(
                "train {} crops ({} speakers per class x {} crops), test {} crops, {}x{}",
                s.train_crops, s.speakers_per_class, s.crops_per_speaker, s.test_crops, s.f0, s.t0
            );
        }
        Command::Train { cache, val, .. } => {
            let epochs = cfg.train.epochs;
            let trained = cli::cmd_train(cache, &cfg, out, val.as_deref(), &|m, r| {
                eprintln!("machine {m} epoch {}/{epochs} lr {:.4} loss {:.5}", r.epoch + 1, r.lr, r.train_loss);
            })?;
            println!("wrote {} models to {}", trained.len(), out.display());
        }
        Command::Evaluate { models, cache, .. } => {
            let m = cli::cmd_evaluate(models, cache, &cfg, out)?;
            print_report("test", &m);
        }
        Command::Curve { models, cache, .. } => {
            let curves = cli::cmd_curve(models, cache, &cfg, out)?;
            for (method, pts) in &curves {
                if let Some(p) = pts.last() {
                    println!(
                        "method {} M={} f1 depressed {:.3}±{:.3} non_depressed {:.3}±{:.3}",
                        method.number(),
                        p.machines,
                        p.f1_mean.depressed,
                        p.f1_std.depressed,
                        p.f1_mean.non_depressed,
                        p.f1_std.non_depressed
                    );
                }
            }
        }
        Command::Crossval { cache, .. } => {
            let r = cli::cmd_crossval(cache, &cfg, out)?;
            for (scope, m) in r.metrics_rows() {
                print_report(&scope, &m);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let jobs = args.command.common().jobs;
    let result = match jobs {
        Some(0) => Err(Error::InvalidArgument("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))
            .and_then(|pool| pool.install(|| run(&args.command))),
        None => run(&args.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
