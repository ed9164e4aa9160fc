use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use zkpoi_cli::output::write_artifacts;
use zkpoi_cli::{run, CliError, Format, Invocation, Scenario, SEED_ENV};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Area {
    Identity,
    Register,
    Registry,
    Sim,
    Econ,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Coordinated,
    Receipts,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

/// Runs one seeded scenario and writes its tables plus a manifest.
#[derive(Debug, Parser)]
#[command(name = "zkpoi", version)]
struct Args {
    area: Area,
    verb: String,
    /// JSON config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed and the environment.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, or `csv` / `json` to print to stdout.
    #[arg(long)]
    out: Option<String>,
    /// Table format when writing to a directory.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Threads for independent seeds and epochs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Epoch protocol for `sim epoch` and `sim pipeline`.
    #[arg(long, value_enum)]
    protocol: Option<ProtocolArg>,
}

enum Destination {
    Stdout,
    Dir(PathBuf),
}

fn area_name(a: Area) -> &'static str {
    match a {
        Area::Identity => "identity",
        Area::Register => "register",
        Area::Registry => "registry",
        Area::Sim => "sim",
        Area::Econ => "econ",
    }
}

fn execute(args: Args) -> Result<(), CliError> {
    let scenario = Scenario::parse(area_name(args.area), &args.verb)?;
    let mut inv = Invocation::new(scenario);
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CliError::IoFailure { path: path.display().to_string(), source })?;
        inv.config = Some(text);
    }
    inv.seed = args.seed;
    inv.env_seed = std::env::var(SEED_ENV).ok();
    inv.jobs = args.jobs;
    if let Some(p) = args.protocol {
        if !matches!(scenario, Scenario::SimEpoch | Scenario::SimPipeline) {
            return Err(CliError::invalid("protocol", "only `sim epoch` and `sim pipeline` take a protocol"));
        }
        let name = match p {
            ProtocolArg::Coordinated => "coordinated",
            ProtocolArg::Receipts => "receipts",
        };
        inv.overrides.push(("protocol".into(), name.into()));
    }
    let (dest, format) = match args.out.as_deref() {
        None | Some("csv") => (Destination::Stdout, Format::Csv),
        Some("json") => (Destination::Stdout, Format::Json),
        Some(dir) => (Destination::Dir(dir.into()), Format::Csv),
    };
    inv.format = match args.format {
        Some(FormatArg::Csv) => Format::Csv,
        Some(FormatArg::Json) => Format::Json,
        None => format,
    };

    let out = run(&inv)?;
    match dest {
        Destination::Dir(dir) => {
            write_artifacts(&dir, &out.artifacts, &out.manifest)?;
            eprintln!("wrote {} artifacts to {}", out.artifacts.len(), dir.display());
        }
        Destination::Stdout => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            let io = |source| CliError::IoFailure { path: "<stdout>".into(), source };
            for a in &out.artifacts {
                writeln!(stdout, "# {}", a.name).map_err(io)?;
                stdout.write_all(&a.bytes).map_err(io)?;
            }
            let manifest = serde_json::to_string_pretty(&out.manifest).expect("manifest serializes");
            writeln!(stdout, "# manifest.json\n{manifest}").map_err(io)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
