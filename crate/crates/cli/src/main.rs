use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lipstokes::verify::{self, RunOptions, Scenario, Verdict};
use lipstokes::{BoundarySign, Error, Result};

#[derive(Parser)]
#[command(
    name = "lipstokes",
    version,
    about = "Numerical Stokes verification for Lipschitz forms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and print its report.
    Verify {
        scenario: PathBuf,
        /// Number of refinement levels.
        #[arg(long)]
        levels: Option<usize>,
        /// Cells per axis at the coarsest level.
        #[arg(long)]
        cells: Option<usize>,
        /// Seed for sampled checks.
        #[arg(long)]
        seed: Option<u64>,
        /// Write per-level rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Negate the boundary orientation (debugging aid).
        #[arg(long)]
        flip_sign: bool,
    },
    /// Run the built-in scenario catalog.
    Suite {
        /// Only run scenarios whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
        /// Negate the boundary orientation (debugging aid).
        #[arg(long)]
        flip_sign: bool,
    },
}

fn sign(flip: bool) -> BoundarySign {
    if flip {
        BoundarySign::Flipped
    } else {
        BoundarySign::Standard
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn print_verdict(v: &Verdict) {
    let r = &v.report;
    println!("scenario {}", r.name);
    println!(
        "{:>6} {:>8} {:>22} {:>22} {:>12}",
        "level", "m", "boundary", "interior", "residual"
    );
    for row in &r.levels {
        println!(
            "{:>6} {:>8} {:>22.15e} {:>22.15e} {:>12.3e}",
            row.level, row.m, row.boundary_integral, row.interior_integral, row.residual
        );
    }
    if let Some(u) = &r.unmollified {
        println!();
        println!("{:>12} {:>22} {:>22}", "eps", "boundary", "interior");
        println!(
            "{:>12} {:>22.15e} {:>22.15e}",
            "0", u.boundary_integral, u.interior_integral
        );
        for row in &r.mollification {
            println!(
                "{:>12.4e} {:>22.15e} {:>22.15e}",
                row.eps, row.boundary_integral, row.interior_integral
            );
        }
    }
    println!();
    println!("relative residual {:.3e}", r.relative_residual);
    for c in &v.checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
}

fn run_verify(
    path: &Path,
    opts: RunOptions,
    csv: Option<&Path>,
    json: Option<&Path>,
) -> Result<i32> {
    let scenario = Scenario::load(path)?;
    let verdict = verify::verify_scenario(&scenario, &opts)?;
    print_verdict(&verdict);
    if let Some(p) = csv {
        verdict.report.write_csv(create(p)?)?;
    }
    if let Some(p) = json {
        std::fs::write(p, verdict.report.to_json()?)
            .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
    }
    Ok(verdict.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                verify::EXIT_CONFIG as u8
            } else {
                0
            });
        }
    };
    let result = match cli.command {
        Command::Verify {
            scenario,
            levels,
            cells,
            seed,
            csv,
            json,
            flip_sign,
        } => {
            let opts = RunOptions {
                levels,
                cells,
                seed,
                sign: sign(flip_sign),
            };
            run_verify(&scenario, opts, csv.as_deref(), json.as_deref())
        }
        Command::Suite { filter, flip_sign } => {
            let opts = RunOptions {
                sign: sign(flip_sign),
                ..RunOptions::default()
            };
            verify::run_suite(filter.as_deref(), &opts).map(|s| {
                print!("{}", s.table());
                s.exit_code()
            })
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(verify::exit_code(&e) as u8)
        }
    }
}
