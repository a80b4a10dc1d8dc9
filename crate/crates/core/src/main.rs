use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kdfair::pipeline::{self, ExperimentManifest};
use kdfair::Error;

#[derive(Parser)]
#[command(name = "kdfair", version, about = "Distillation bias and fairness experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset described by a manifest.
    Generate(Common),
    /// Train teacher, student and distilled-student groups.
    Run(Common),
    /// Significance tests, disagreement matrices and fairness tables.
    Audit(Common),
    /// Long-format plot data from a completed audit.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// Experiment manifest (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: manifest `output_dir`, else $KDFAIR_OUT/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Maximum number of training runs in flight.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    /// Replace the manifest's generation seed.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Manifest used to locate the output directory when `--out` is absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn manifest(c: &Common) -> Result<ExperimentManifest, Error> {
    let mut m = ExperimentManifest::load(&c.config)?;
    if let Some(seed) = c.seed_override {
        m.generation_seed = seed;
    }
    Ok(m)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate(c) => {
            let m = manifest(&c)?;
            let out = m.resolve_out(c.out.as_deref());
            let d = pipeline::cmd_generate(&m, &out)?;
            println!("generated {} examples in {}", d.len(), out.join("dataset").display());
        }
        Command::Run(c) => {
            let m = manifest(&c)?;
            let out = m.resolve_out(c.out.as_deref());
            let index = pipeline::cmd_run(&m, &out, c.jobs as usize)?;
            println!(
                "trained {} seeds x {} model groups in {}",
                index.seeds.len(),
                index.temperatures.len() + 2,
                out.join("runs").display()
            );
        }
        Command::Audit(c) => {
            let m = manifest(&c)?;
            let out = m.resolve_out(c.out.as_deref());
            let report = pipeline::cmd_audit(&m, &out)?;
            println!("temperature  acc%    #SC  #TC");
            for t in &report.temperatures {
                println!("{:>11}  {:>5.2}  {:>3}  {:>3}", t.temperature, 100.0 * t.overall_acc_mean, t.num_sc, t.num_tc);
            }
        }
        Command::Report(r) => {
            let out = match (r.out, r.config) {
                (Some(o), _) => o,
                (None, Some(c)) => ExperimentManifest::load(c)?.resolve_out(None),
                (None, None) => return Err(Error::config("--out", "pass --out or --config")),
            };
            let files = pipeline::cmd_report(&out)?;
            println!("{}", files.bias.display());
            for f in files.fairness {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
