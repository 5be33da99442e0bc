use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use robust_psd::harness::{parse_config, render, run_experiment, write_report, Format, Mode};
use robust_psd::Error;

#[derive(Parser)]
#[command(name = "robust-psd", version, about = "Robust detection experiments over PSD uncertainty sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error exponents, genie bound and finite-n KL rates.
    Exponent(Common),
    /// Dominance search and finite-n ratio expectations.
    Dominance(Common),
    /// Monte Carlo miss exponents of the robust detector.
    Simulate(Common),
    /// Mixture-KL minimisation, KKT certificates and regularity probe.
    Minimax(Common),
    /// The whole pipeline end to end.
    Full(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file; defaults to `output` in the config, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    format: OutFormat,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `grid_size` in the config.
    #[arg(long)]
    grid: Option<usize>,
}

fn run(mode: Mode, args: Common) -> Result<(), Error> {
    let text = fs::read_to_string(&args.config).map_err(|source| Error::Io {
        path: args.config.clone(),
        source,
    })?;
    let mut config = parse_config(&text)?;
    config.mode = mode;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(grid) = args.grid {
        config.grid_size = grid;
    }
    config.validate()?;
    let format = match args.format {
        OutFormat::Json => Format::Json,
        OutFormat::Csv => Format::Csv,
    };
    let out = args.out.or_else(|| config.output.as_ref().map(PathBuf::from));
    let record = run_experiment(&config)?;
    match out {
        Some(path) => write_report(&record, &path, format),
        None => {
            let body = render(&record, format)?;
            std::io::stdout()
                .write_all(body.as_bytes())
                .map_err(|source| Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Exponent(a) => (Mode::Exponent, a),
        Command::Dominance(a) => (Mode::Dominance, a),
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Minimax(a) => (Mode::Minimax, a),
        Command::Full(a) => (Mode::Full, a),
    };
    match run(mode, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
