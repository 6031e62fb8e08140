use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dynalg::algebra::prove_equal;
use dynalg::products::Pairings;
use dynalg_cli::report::ReplayContext;
use dynalg_cli::{diff, CliError, Report, Scenario, World};

#[derive(Parser)]
#[command(name = "dynalg", version, about = "Run and replay dynamical-algebra scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Unproven {
    Warn,
    Fail,
}

#[derive(Clone, Copy, ValueEnum)]
enum Engine {
    Solver,
    ClosedForm,
}

#[derive(Subcommand)]
enum Command {
    /// Run every check of a scenario and write the report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, value_enum, default_value = "warn")]
        unproven: Unproven,
        /// Store certificate fields as packed base64 instead of decimals.
        #[arg(long)]
        packed: bool,
    },
    /// Re-execute the certificates stored in a report.
    Replay {
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "warn")]
        unproven: Unproven,
    },
    /// Print the propagator pairings of two scenario fields.
    Pairings {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        f: String,
        #[arg(long)]
        g: String,
        #[arg(long, value_enum, default_value = "solver")]
        engine: Engine,
    },
    /// Search for an equality proof between two words.
    Prove {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        lhs: String,
        #[arg(long)]
        rhs: String,
        #[arg(long, default_value_t = 200)]
        budget: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two reports, ignoring wall times.
    ReportDiff { a: PathBuf, b: PathBuf },
}

fn write_out(path: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn summary_line(r: &Report) {
    let s = &r.summary;
    eprintln!("{} checks: {} pass, {} fail, {} unproven", s.total, s.pass, s.fail, s.unproven);
    for rec in r.records.iter().filter(|c| c.message.is_some()) {
        eprintln!("  {} [{:?}]: {}", rec.name, rec.status, rec.message.as_deref().unwrap_or(""));
    }
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            threads,
            unproven,
            packed,
        } => {
            let s = Scenario::load(&scenario)?;
            let report = dynalg_cli::run(s, threads, packed)?;
            write_out(&out, &report.to_json())?;
            summary_line(&report);
            Ok(report.ok(matches!(unproven, Unproven::Fail)))
        }
        Command::Replay { report, out, unproven } => {
            let r = Report::load(&report)?.replay();
            if out.is_some() {
                write_out(&out, &r.to_json())?;
            }
            summary_line(&r);
            Ok(r.ok(matches!(unproven, Unproven::Fail)))
        }
        Command::Pairings { scenario, f, g, engine } => {
            let world = World::new(Scenario::load(&scenario)?)?;
            let (f, g) = (world.field(&f)?, world.field(&g)?);
            let m = world.lagrangian.mass;
            let p = match engine {
                Engine::Solver => Pairings::solver(m),
                Engine::ClosedForm => Pairings::closed_form(m),
            }
            .map_err(|e| CliError::runtime("pairings", e))?;
            let rt = |e| CliError::runtime("pairing", e);
            let c = p.commutator(&f, &g).map_err(rt)?;
            let d = p.dirac(&f, &g).map_err(rt)?;
            let w = p.one_particle(&f, &g).map_err(rt)?;
            let out = serde_json::json!({
                "commutator": c,
                "dirac": d,
                "one_particle": { "re": w.re, "im": w.im },
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
            Ok(true)
        }
        Command::Prove {
            scenario,
            lhs,
            rhs,
            budget,
            out,
        } => {
            let world = World::new(Scenario::load(&scenario)?)?;
            let table = world.table();
            let a = dynalg_cli::words::build_word(&world, &table, &lhs)?;
            let b = dynalg_cli::words::build_word(&world, &table, &rhs)?;
            let p = prove_equal(&table, &a, &b, budget);
            let context = ReplayContext {
                lattice: (*world.lattice).clone(),
                lagrangian: world.lagrangian.clone(),
                margin: table.margin(),
            };
            let proved = p.status == dynalg::algebra::ProofStatus::Proved;
            let doc = dynalg::algebra::CertificateDoc::encode(&table, &p.lhs, &p.rhs, &p.certificate, false)
                .map_err(|e| CliError::runtime("certificate", e))?;
            eprintln!("{}", if proved { "proved" } else { "unproven" });
            write_out(&out, &(serde_json::to_string_pretty(&serde_json::json!({
                "status": if proved { "proved" } else { "unproven" },
                "context": context,
                "certificate": doc,
            })).expect("json") + "\n"))?;
            Ok(proved)
        }
        Command::ReportDiff { a, b } => {
            let d = diff(&Report::load(&a)?, &Report::load(&b)?);
            for line in &d {
                println!("{line}");
            }
            Ok(d.is_empty())
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
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Schema { .. } | CliError::Invalid(_) | CliError::Expression(_) | CliError::Io(_) => 2,
                CliError::Runtime { .. } => 1,
            })
        }
    }
}
