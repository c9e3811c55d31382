use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpsmagic_cli::config::Overrides;
use mpsmagic_cli::{execute, replot, CliError, ErrorReport};

#[derive(Parser)]
#[command(name = "mpsmagic", version, about = "Magic and entanglement of spin-1 chain ground states")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// TOML experiment configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Critical-point preset, replacing the [model] section
    #[arg(long)]
    preset: Option<String>,
    /// Base seed for DMRG initialization and sampling
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent cells
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Also write SVG figures
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Clone, Debug)]
struct PlotArgs {
    /// Run directory holding manifest.json
    #[arg(long)]
    out: PathBuf,
    /// Result CSV to plot instead of the one named in the manifest
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Verb {
    /// Phase-diagram scan of m1 on a (Jz, D) grid
    Scan(Common),
    /// Full-state SRE densities, or the chi ladder with 1/chi^2 fits
    Sre(Common),
    /// Renyi-2 mutual information from Pauli-Markov chains
    MutualInfo(Common),
    /// Long-range magic from Pauli-Markov chains
    Lrm(Common),
    /// Integrated autocorrelation times of I2 and W chains
    Autocorr(Common),
    /// Cross-method oracle check on random states
    Check(Common),
    /// Redraw SVG figures of a finished run
    Plot(PlotArgs),
}

fn run(verb: Verb) -> anyhow::Result<String> {
    let (name, common) = match verb {
        Verb::Plot(p) => {
            let plots = replot(&p.out, p.input.as_deref())?;
            return Ok(serde_json::to_string_pretty(&serde_json::json!({ "status": "ok", "plots": plots }))?);
        }
        Verb::Scan(c) => ("scan", c),
        Verb::Sre(c) => ("sre", c),
        Verb::MutualInfo(c) => ("mutual-info", c),
        Verb::Lrm(c) => ("lrm", c),
        Verb::Autocorr(c) => ("autocorr", c),
        Verb::Check(c) => ("check", c),
    };
    if common.threads == 0 {
        return Err(CliError::Usage("--threads must be >= 1".into()).into());
    }
    let ov = Overrides { preset: common.preset, seed: common.seed, out_dir: common.out };
    let summary = execute(name, common.config.as_deref(), ov, common.threads, common.plot)?;
    Ok(serde_json::to_string_pretty(&summary)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err: anyhow::Error = CliError::Usage(e.render().to_string().trim().to_string()).into();
            return report(&err);
        }
    };
    match run(cli.verb) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => report(&e),
    }
}

/// The report is the last stderr line, after any log output.
fn report(err: &anyhow::Error) -> ExitCode {
    let r = ErrorReport::from_error(err);
    eprintln!("{}", serde_json::to_string(&r).unwrap_or_else(|_| r.message.clone()));
    ExitCode::from(r.exit_code as u8)
}
