use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pairvmc::checks::{run_suite, Suite};
use pairvmc::config::{parse_override, preset_text};
use pairvmc::{bench, run, CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "pairvmc",
    version,
    about = "Variational Monte Carlo with pairwise antisymmetrization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration (hydrogen, harmonic1d-n2, harmonic1d-n3,
    /// li-pairprime, li-pairdouble, be-pairdouble).
    #[arg(long)]
    preset: Option<String>,
    /// Override a configuration key, e.g. `--set train.iterations=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let overrides = self
            .overrides
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>, _>>()?;
        match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path, &overrides),
            (None, Some(name)) => RunConfig::from_toml_with(preset_text(name)?, &overrides),
            (None, None) => Err(CliError::Config(
                "either --config or --preset is required".into(),
            )),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a wavefunction and write trace, checkpoint and summary.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Suppress progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Run a property suite: all, antisymmetry, universality, obstruction,
    /// gradients.
    Check {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time the antisymmetrization stage on a doubling grid of N.
    Bench {
        #[arg(long)]
        max_n: usize,
        #[arg(long, default_value_t = 32)]
        min_n: usize,
        /// CSV output path.
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
    },
    /// Estimate the energy of a checkpoint with frozen parameters.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    pairvmc::init_threads()?;
    match cli.command {
        Command::Train {
            config,
            resume,
            quiet,
        } => {
            let cfg = config.load()?;
            let s = run::train(&cfg, resume.as_deref(), !quiet)?;
            println!(
                "energy {:.6} +/- {:.6} Ha (last {} iterations, stride {}); output in {}",
                s.energy,
                s.stderr,
                s.window,
                s.stride,
                cfg.output.display()
            );
        }
        Command::Check { suite, seed } => {
            let suite: Suite = suite.parse()?;
            let results = run_suite(suite, seed);
            for r in &results {
                println!("{r}");
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(CliError::CheckFailed(failed));
            }
        }
        Command::Bench { max_n, min_n, out } => {
            if max_n < 64 || min_n < 2 || min_n > max_n {
                return Err(CliError::Config(
                    "bench needs 2 <= --min-n <= --max-n and --max-n >= 64".into(),
                ));
            }
            let report = bench::run(
                &bench::BenchConfig {
                    min_n,
                    ..bench::BenchConfig::up_to(max_n)
                },
                0,
            );
            let file = std::fs::File::create(&out)
                .map_err(CliError::io(format!("writing {}", out.display())))?;
            report
                .write_csv(std::io::BufWriter::new(file))
                .map_err(CliError::io(format!("writing {}", out.display())))?;
            for (kind, slope) in &report.slopes {
                println!("{kind}: log-log slope {slope:.3}");
            }
            println!("timings written to {}", out.display());
        }
        Command::Evaluate { ckpt, config } => {
            let cfg = config.load()?;
            let e = run::evaluate(&cfg, &ckpt)?;
            println!(
                "E = {:.6} +/- {:.6} Ha ({} blocks x {} sweeps x {} walkers)",
                e.energy, e.sigma, e.blocks, e.sweeps_per_block, e.walkers
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
