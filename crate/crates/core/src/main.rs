use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use torus_rds::runner::{self, Experiment, CONFIG_KEYS};

#[derive(Parser)]
#[command(name = "torus-rds", version, about = "Random compositions of volume-preserving torus maps", after_long_help = CONFIG_KEYS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON config file (see `--help` for keys).
    #[arg(long)]
    config: PathBuf,
    /// Override `seed` (0 draws from entropy).
    #[arg(long)]
    seed: Option<u64>,
    /// Override `out_path`; writes <OUT>.csv and <OUT>.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override `threads`.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Full Lyapunov spectrum by the QR cocycle, one row per trial.
    #[command(after_long_help = CONFIG_KEYS)]
    Spectrum(Common),
    /// Spectrum over each L in `l_values`.
    #[command(after_long_help = CONFIG_KEYS)]
    Sweep(Common),
    /// Critical-set measure over `l_values` with a log-log slope fit.
    #[command(after_long_help = CONFIG_KEYS)]
    F2(Common),
    /// Conditioned cone-escape fraction against L^(-beta n).
    #[command(after_long_help = CONFIG_KEYS)]
    ConeEscape(Common),
    /// Cone-condition norms and histogram spread of the noise model.
    #[command(after_long_help = CONFIG_KEYS)]
    NoiseCheck(Common),
    /// Grid-and-refine minimum of |det Dpsi| + |grad det Dpsi|.
    #[command(after_long_help = CONFIG_KEYS)]
    Transversality(Common),
    /// Grassmannian metric identities on Haar pairs.
    #[command(after_long_help = CONFIG_KEYS)]
    MetricCheck(Common),
    /// KS uniformity of the time-n pushforward of Lebesgue.
    #[command(after_long_help = CONFIG_KEYS)]
    Uniformity(Common),
}

impl Command {
    fn split(self) -> (Experiment, Common) {
        match self {
            Command::Spectrum(c) => (Experiment::Spectrum, c),
            Command::Sweep(c) => (Experiment::Sweep, c),
            Command::F2(c) => (Experiment::F2, c),
            Command::ConeEscape(c) => (Experiment::ConeEscape, c),
            Command::NoiseCheck(c) => (Experiment::NoiseCheck, c),
            Command::Transversality(c) => (Experiment::Transversality, c),
            Command::MetricCheck(c) => (Experiment::MetricCheck, c),
            Command::Uniformity(c) => (Experiment::Uniformity, c),
        }
    }
}

fn main() -> ExitCode {
    let (experiment, args) = Cli::parse().command.split();
    let outcome = std::fs::read_to_string(&args.config)
        .map_err(|e| {
            torus_rds::Error::Config(format!("cannot read {}: {e}", args.config.display()))
        })
        .and_then(|text| runner::parse_config(&text))
        .and_then(|mut cfg| {
            if let Some(e) = cfg.experiment.filter(|e| *e != experiment) {
                return Err(torus_rds::Error::Config(format!(
                    "config names experiment `{}` but the subcommand is `{}`",
                    e.name(),
                    experiment.name()
                )));
            }
            cfg.experiment = Some(experiment);
            if let Some(s) = args.seed {
                cfg.seed = s;
            }
            if let Some(t) = args.threads {
                cfg.threads = t;
            }
            cfg.validate()?;
            runner::run(&cfg, args.out.as_deref())
        });
    match outcome {
        Ok((csv, json)) => {
            println!("{}\n{}", csv.display(), json.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(runner::exit_code(&e) as u8)
        }
    }
}
