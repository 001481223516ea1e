use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use restcontrol::cli::{run_scenario, selftest, verify_dir, Report, Scenario};

/// Bounded Neumann boundary control of a membrane to rest.
#[derive(Parser)]
#[command(name = "restcontrol", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a control plan for a scenario and verify it.
    Run {
        config: PathBuf,
        /// Worker threads for the quadrature and solver loops.
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-verify a plan directory against a scenario's initial data.
    Verify {
        plan_dir: PathBuf,
        config: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Closed-form and round-trip checks.
    Selftest,
}

const EXIT_PIPELINE: u8 = 2;
const EXIT_UNVERIFIED: u8 = 3;

fn load(path: &PathBuf) -> Result<Scenario, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut scn = Scenario::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    scn.apply_seed_override().map_err(|e| e.to_string())?;
    Ok(scn)
}

fn pool(jobs: Option<usize>) -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n.max(1));
    }
    b.build().expect("thread pool")
}

fn finish(report: restcontrol::Result<Report>) -> ExitCode {
    match report {
        Ok(r) => {
            print!("{}", r.to_text());
            if r.verified() {
                ExitCode::SUCCESS
            } else {
                eprintln!("verification failed: admissible = {}, rel_terminal_energy = {:e} (limit {:e})",
                    r.admissible, r.rel_terminal_energy, r.max_rel_energy);
                ExitCode::from(EXIT_UNVERIFIED)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_PIPELINE)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Run { config, jobs, out } => {
            let scn = match load(&config) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_PIPELINE);
                }
            };
            let out = out.unwrap_or_else(|| scn.out.clone());
            finish(pool(jobs).install(|| run_scenario(&scn, &out)))
        }
        Cmd::Verify { plan_dir, config, jobs } => {
            let scn = match load(&config) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_PIPELINE);
                }
            };
            finish(pool(jobs).install(|| verify_dir(&plan_dir, &scn)))
        }
        Cmd::Selftest => {
            let checks = selftest();
            for c in &checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().all(|c| c.pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_PIPELINE)
            }
        }
    }
}
