use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use iop::protocol::{parse_protocol, validate_protocol, ProtocolSpec};

mod agent;

#[derive(Parser)]
#[command(name = "bspl", version, about = "Verify information protocols and run protocol agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a protocol property; exits 0 if it holds, 1 if not, 2 on bad input.
    Verify {
        kind: Kind,
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Parse and validate a protocol; exits 2 if it has errors.
    Check {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run protocol agents.
    Agent {
        #[command(subcommand)]
        command: AgentCommand,
    },
}

#[derive(Subcommand)]
enum AgentCommand {
    Run(agent::RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Liveness,
    Safety,
    #[value(name = "all_paths", alias = "all-paths")]
    AllPaths,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Structured,
}

const EXIT_FAILS: u8 = 1;
const EXIT_BAD_INPUT: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify { kind, file, format } => verify(kind, &file, format),
        Command::Check { file, format } => check(&file, format),
        Command::Agent {
            command: AgentCommand::Run(args),
        } => agent::run(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_BAD_INPUT)
        }
    }
}

pub fn load_protocol(path: &Path) -> Result<ProtocolSpec, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_protocol(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Loads a protocol and refuses it if validation reports errors.
pub fn load_valid_protocol(path: &Path) -> Result<ProtocolSpec, String> {
    let spec = load_protocol(path)?;
    let errors: Vec<_> = validate_protocol(&spec)
        .into_iter()
        .filter(|d| d.is_error())
        .map(|d| d.to_string())
        .collect();
    if errors.is_empty() {
        Ok(spec)
    } else {
        Err(format!("{}: {}", path.display(), errors.join("; ")))
    }
}

fn verify(kind: Kind, file: &Path, format: Format) -> Result<u8, String> {
    let spec = load_valid_protocol(file)?;
    let (holds, text, json) = match kind {
        Kind::Liveness | Kind::Safety => {
            let verdict = match kind {
                Kind::Liveness => iop::verify::check_liveness(&spec),
                _ => iop::verify::check_safety(&spec),
            }
            .map_err(|e| e.to_string())?;
            (verdict.holds, verdict.transcript(), serde_json::to_string(&verdict))
        }
        Kind::AllPaths => {
            let report = iop::verify::all_paths_report(&spec).map_err(|e| e.to_string())?;
            (true, report.render(), serde_json::to_string(&report))
        }
    };
    match format {
        Format::Text => println!("{text}"),
        Format::Structured => println!("{}", json.map_err(|e| e.to_string())?),
    }
    Ok(if holds { 0 } else { EXIT_FAILS })
}

fn check(file: &Path, format: Format) -> Result<u8, String> {
    let spec = load_protocol(file)?;
    let diags = validate_protocol(&spec);
    match format {
        Format::Text => {
            for d in &diags {
                println!("{d}");
            }
            if diags.is_empty() {
                println!("{}: ok", spec.name);
            }
        }
        Format::Structured => {
            let list: Vec<_> = diags
                .iter()
                .map(|d| serde_json::json!({"severity": format!("{:?}", d.severity).to_lowercase(), "message": d.message}))
                .collect();
            println!("{}", serde_json::json!({"protocol": spec.name, "diagnostics": list}));
        }
    }
    Ok(if diags.iter().any(|d| d.is_error()) { EXIT_BAD_INPUT } else { 0 })
}
