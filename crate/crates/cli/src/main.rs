//! absq: experiment driver for the anisotropic Boussinesq channel solver.
//!
//! Three subcommands: `run` integrates one configured experiment and writes
//! its artifacts, `check` executes a seeded verification battery and prints
//! the JSON report, `budget` recomputes norm budgets from stored snapshots.
//!
//! Exit codes: 0 pass, 1 invariant failure, 2 config/usage error, 3 blow-up.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use absq_core::diagnostics::BudgetRow;
use absq_core::{
    budget_rows, check_suite, load_config, load_snapshots, resolve_output_dir, run_experiment,
    PhysParams, SuiteKind,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "absq",
    version,
    about = "Pseudo-spectral Boussinesq channel: experiments, invariant checks, budget audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one experiment from a TOML config and write its artifacts.
    Run {
        /// Experiment config file.
        config: PathBuf,
        /// Artifact directory; beats ABSQ_OUTPUT_DIR and the config value.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run a verification battery and print its JSON report.
    Check {
        /// One of: grid, decomposition, inequalities, budget, all.
        suite: String,
        /// Ensemble size; each battery has its own default.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Recompute H1/H2 budgets from a snapshot directory into a CSV table.
    Budget {
        /// Directory containing manifest.json and the snapshot files.
        snapshot_dir: PathBuf,
        /// Budget table destination (default: <snapshot-dir>/budget.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, output_dir } => cmd_run(&config, output_dir.as_deref()),
        Command::Check { suite, seeds } => cmd_check(&suite, seeds),
        Command::Budget {
            snapshot_dir,
            output,
        } => cmd_budget(&snapshot_dir, output.as_deref()),
    };
    ExitCode::from(code)
}

fn cmd_run(config_path: &Path, flag_dir: Option<&Path>) -> u8 {
    let cfg = match load_config(config_path) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    let out_dir = resolve_output_dir(&cfg, flag_dir);
    match run_experiment(&cfg, &out_dir) {
        Ok(artifacts) => {
            match serde_json::to_string_pretty(&artifacts.summary) {
                Ok(js) => println!("{js}"),
                Err(e) => {
                    eprintln!("summary serialization failed: {e}");
                    return 1;
                }
            }
            if !artifacts.summary.flags.is_empty() {
                eprintln!("flagged: {}", artifacts.summary.flags.join(", "));
            }
            eprintln!("artifacts in {}", out_dir.display());
            artifacts.exit_code as u8
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            e.exit_code() as u8
        }
    }
}

fn cmd_check(suite: &str, seeds: Option<usize>) -> u8 {
    // an unknown suite name is a usage error, not a check failure
    let kind: SuiteKind = match suite.parse() {
        Ok(kind) => kind,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    match check_suite(kind, seeds) {
        Ok(report) => {
            match serde_json::to_string_pretty(&report) {
                Ok(js) => println!("{js}"),
                Err(e) => {
                    eprintln!("report serialization failed: {e}");
                    return 1;
                }
            }
            if report.passed {
                0
            } else {
                for c in report.checks.iter().filter(|c| !c.passed) {
                    eprintln!(
                        "FAIL {}::{} measured {:e} vs threshold {:e}",
                        c.module, c.name, c.measured, c.threshold
                    );
                }
                1
            }
        }
        Err(e) => {
            eprintln!("check failed: {e}");
            1
        }
    }
}

fn cmd_budget(dir: &Path, output: Option<&Path>) -> u8 {
    let set = match load_snapshots(dir) {
        Ok(set) => set,
        Err(e) => {
            eprintln!("cannot load snapshots: {e}");
            return 2;
        }
    };
    let params = PhysParams::new(set.nu, set.kappa);
    let rows = match budget_rows(&set.states, &params) {
        Ok(rows) => rows,
        Err(e) => {
            eprintln!("budget evaluation failed: {e}");
            return 1;
        }
    };
    let path = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join("budget.csv"));
    match write_budget_csv(&path, &rows) {
        Ok(()) => {
            eprintln!("wrote {} budget rows to {}", rows.len(), path.display());
            0
        }
        Err(e) => {
            eprintln!("cannot write {}: {e}", path.display());
            1
        }
    }
}

/// Every budget term by name, then the centered-difference closure residuals
/// (blank on the window endpoints, where no centered difference exists).
const BUDGET_COLUMNS: [&str; 54] = [
    "t", "m", "m1", "m2", "m3", "m4", "m31", "m32", "m33", "m34", "m41", "m42", "h1_dissipation",
    "h1_lhs_rate", "h1_energy", "n", "n1", "n2", "n3", "n4", "n31", "n32", "n33", "n34", "p",
    "p1", "p2", "p3", "p4", "p5", "p6", "p11", "p12", "p13", "p14", "p21", "p22", "p23", "p24",
    "p51", "p52", "p53", "p54", "p61", "p62", "p63", "p64", "h2_dissipation", "h2_lhs_rate",
    "h2_energy", "tail_ratio", "tail_flagged", "h1_closure", "h2_closure",
];

fn write_budget_csv(path: &Path, rows: &[BudgetRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(BUDGET_COLUMNS)?;
    // {:?} prints f64 with enough digits to round-trip
    let f = |v: f64| format!("{v:?}");
    for r in rows {
        let (h1, h2) = (&r.h1, &r.h2);
        let record = [
            f(r.t),
            f(h1.m),
            f(h1.m1),
            f(h1.m2),
            f(h1.m3),
            f(h1.m4),
            f(h1.m31),
            f(h1.m32),
            f(h1.m33),
            f(h1.m34),
            f(h1.m41),
            f(h1.m42),
            f(h1.dissipation),
            f(h1.lhs_rate),
            f(h1.energy),
            f(h2.n),
            f(h2.n1),
            f(h2.n2),
            f(h2.n3),
            f(h2.n4),
            f(h2.n31),
            f(h2.n32),
            f(h2.n33),
            f(h2.n34),
            f(h2.p),
            f(h2.p1),
            f(h2.p2),
            f(h2.p3),
            f(h2.p4),
            f(h2.p5),
            f(h2.p6),
            f(h2.p11),
            f(h2.p12),
            f(h2.p13),
            f(h2.p14),
            f(h2.p21),
            f(h2.p22),
            f(h2.p23),
            f(h2.p24),
            f(h2.p51),
            f(h2.p52),
            f(h2.p53),
            f(h2.p54),
            f(h2.p61),
            f(h2.p62),
            f(h2.p63),
            f(h2.p64),
            f(h2.dissipation),
            f(h2.lhs_rate),
            f(h2.energy),
            f(h2.tail_ratio),
            h2.tail_flagged.to_string(),
            r.h1_closure.map(f).unwrap_or_default(),
            r.h2_closure.map(f).unwrap_or_default(),
        ];
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
