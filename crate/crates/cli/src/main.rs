use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qmzk_cli::{list_invariants, render, report, run_scenario, CliError, Format, Overrides};

#[derive(Parser)]
#[command(name = "qmzk", version, about = "Run qmzk scenarios and render their reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Text,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Text => Format::Text,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and emit its report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the checks a scenario kind emits.
    Invariants {
        kind: String,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
    },
    /// Re-render a JSON report.
    Render {
        report: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(doc: &str, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, doc).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{doc}");
            if !doc.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run { scenario, seed, samples, format, out } => {
            let rep = run_scenario(&scenario, Overrides { seed, samples })?;
            emit(&render(&rep, format.into()), out.as_ref())?;
            Ok(rep.exit_code())
        }
        Command::Invariants { kind, format } => {
            let entries = list_invariants(&kind)?;
            let doc = match Format::from(format) {
                Format::Json => serde_json::to_string_pretty(entries).expect("static catalogue serializes"),
                Format::Text => entries
                    .iter()
                    .map(|e| format!("{:<34} [{} / {}] {}\n", e.check, e.module, e.invariant, e.description))
                    .collect(),
            };
            emit(&doc, None)?;
            Ok(0)
        }
        Command::Render { report: path, format, out } => {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let rep = report::from_json(&text).map_err(CliError::Parse)?;
            emit(&render(&rep, format.into()), out.as_ref())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("qmzk: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
