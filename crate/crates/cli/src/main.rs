use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use freespec::generate::MemberKind;
use freespec::tuple::Field;
use freespec_cli::*;

#[derive(Parser)]
#[command(name = "freespec", version, about = "Arveson dilations and extreme-point decompositions of free spectrahedra")]
struct Cli {
    /// Tolerance overrides, e.g. `tau_psd=1e-10,max_iter=800`.
    #[arg(long, global = true)]
    tol: Option<String>,
    /// Also write the run report to this file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Membership of a tuple in the spectrahedron of a pencil.
    Check { pencil: PathBuf, tuple: PathBuf },
    /// Dilate a member to the Arveson boundary and write the trace.
    Dilate {
        pencil: PathBuf,
        tuple: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a member as a matrix convex combination of absolute extreme points.
    Decompose {
        pencil: PathBuf,
        tuple: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a decomposition file against the pencil.
    Verify { pencil: PathBuf, decomposition: PathBuf },
    /// Generate a bounded random pencil and a member; writes pencil.json and tuple.json.
    Gen {
        /// Size of the random part; 2g bounding rows are appended.
        #[arg(long)]
        d: usize,
        #[arg(long)]
        g: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long, value_enum, default_value_t = FieldArg::Real)]
        field: FieldArg,
        #[arg(long, value_enum, default_value_t = KindArg::Interior)]
        kind: KindArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parameter counts of classical and matrix convex representations.
    Params {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        g: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldArg {
    Real,
    Complex,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Interior,
    Boundary,
}

fn init_logging() {
    let level = match std::env::var("FS_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        Ok("trace") => log::LevelFilter::Trace,
        _ => log::LevelFilter::Warn,
    };
    env_logger::Builder::new().filter_level(level).target(env_logger::Target::Stderr).init();
}

/// Sends a document to `out`, or to stdout when no path is given.
fn emit(doc: &str, out: Option<&PathBuf>, outcome: &mut Outcome) -> Result<bool, Failure> {
    match out {
        Some(path) => {
            std::fs::write(path, doc).map_err(|e| Failure { code: EXIT_INPUT, message: format!("cannot write {}: {e}", path.display()) })?;
            outcome.outputs.push(path.clone());
            Ok(false)
        }
        None => {
            println!("{doc}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let cfg = match parse_tolerances(cli.tol.as_deref()) {
        Ok(c) => c,
        Err(f) => {
            eprintln!("error: {}", f.message);
            return ExitCode::from(f.code as u8);
        }
    };
    let (name, seed) = match &cli.command {
        Command::Check { .. } => ("check", None),
        Command::Dilate { seed, .. } => ("dilate", Some(*seed)),
        Command::Decompose { seed, .. } => ("decompose", Some(*seed)),
        Command::Verify { .. } => ("verify", None),
        Command::Gen { seed, .. } => ("gen", Some(*seed)),
        Command::Params { .. } => ("params", None),
    };
    let mut session = Session::new(name, cfg, seed);
    // the report goes to stderr when stdout carries a document
    let mut doc_on_stdout = false;
    let result = match &cli.command {
        Command::Check { pencil, tuple } => cmd_check(&mut session, pencil, tuple),
        Command::Dilate { pencil, tuple, out, .. } => cmd_dilate(&mut session, pencil, tuple).and_then(|(c, mut o, doc)| {
            doc_on_stdout = emit(&doc, out.as_ref(), &mut o)?;
            Ok((c, o))
        }),
        Command::Decompose { pencil, tuple, out, .. } => {
            cmd_decompose(&mut session, pencil, tuple).and_then(|(c, mut o, doc)| {
                doc_on_stdout = emit(&doc, out.as_ref(), &mut o)?;
                Ok((c, o))
            })
        }
        Command::Verify { pencil, decomposition } => cmd_verify(&mut session, pencil, decomposition),
        Command::Gen { d, g, n, index, field, kind, out, .. } => {
            let opts = GenOptions {
                d: *d,
                g: *g,
                n: *n,
                index: *index,
                field: match field {
                    FieldArg::Real => Field::Real,
                    FieldArg::Complex => Field::Complex,
                },
                kind: match kind {
                    KindArg::Interior => MemberKind::Interior,
                    KindArg::Boundary => MemberKind::Boundary,
                },
            };
            cmd_gen(&mut session, &opts, out)
        }
        Command::Params { n, g } => cmd_params(*n, *g),
    };
    let report = session.finish(result);
    if let Some(msg) = &report.message {
        eprintln!("error: {msg}");
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(path) = &cli.report {
        if let Err(e) = std::fs::write(path, &text) {
            eprintln!("error: cannot write report {}: {e}", path.display());
        }
    }
    if doc_on_stdout {
        eprintln!("{text}");
    } else {
        let _ = writeln!(std::io::stdout(), "{text}");
    }
    ExitCode::from(report.exit_code as u8)
}
