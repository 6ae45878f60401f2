//! Command-line surface. Exit codes: 0 all checks pass, 1 a check failed,
//! 2 configuration error, 3 numerical failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nlslab_core::LabError;

use crate::config::load_config;
use crate::lemmas::{emit_lemma_outputs, verify_lemmas};
use crate::outputs::{read_record, summary_markdown};
use crate::run::{run_experiment, RunRecord};
use crate::sweep::{load_sweep, run_sweep};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "nlslab", version, about = "Defocusing NLS scattering laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve a configuration and write every artifact.
    Simulate {
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured lemma rows.
    VerifyLemmas {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evolve and report the free-channel wave operator and the remainder.
    Extract {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter sweep.
    Sweep { spec: PathBuf },
    /// Re-render the summary of a finished run directory.
    Report { run_dir: PathBuf },
}

/// Maps an error to its exit code.
pub fn exit_code(e: &LabError) -> u8 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        match e {
            LabError::Config(_) | LabError::Domain(_) | LabError::Precondition(_) => EXIT_CONFIG,
            _ => EXIT_NUMERICAL,
        }
    }
}

fn print_checks(r: &RunRecord, only: Option<&[&str]>) -> bool {
    let mut ok = true;
    for c in &r.checks {
        if only.is_some_and(|o| !o.contains(&c.name.as_str())) {
            continue;
        }
        ok &= !c.failed();
        println!(
            "{:<28} {:>24.16e} {:<8} {:>24.16e}  {}",
            c.name,
            c.value,
            c.relation.as_str(),
            c.threshold,
            c.status.as_str()
        );
    }
    ok
}

fn with_out(path: &Path, out: &Option<PathBuf>) -> Result<crate::config::LoadedConfig, LabError> {
    let mut l = load_config(path)?;
    for f in l.compliance.iter().filter(|f| !f.holds) {
        eprintln!("note: {}", f.message);
    }
    if let Some(o) = out {
        l.config.output_dir = std::env::current_dir().map(|d| d.join(o)).unwrap_or_else(|_| o.clone());
    }
    Ok(l)
}

const SCATTERING_CHECKS: [&str; 6] = [
    "cauchy_final_h1",
    "cauchy_monotone_rise",
    "u_loc_exterior_mass",
    "u_loc_exterior_energy",
    "incoming_exterior_mass",
    "low_exterior_mass",
];

fn run(cli: &Cli) -> Result<u8, LabError> {
    let verdict = |ok: bool| if ok { EXIT_PASS } else { EXIT_CHECK_FAILED };
    match &cli.command {
        Command::Simulate { config, out } => {
            let l = with_out(config, out)?;
            let r = run_experiment(&l)?;
            let ok = print_checks(&r, None);
            println!("artifacts: {}", l.config.output_path().display());
            Ok(verdict(ok))
        }
        Command::Extract { config, out } => {
            let l = with_out(config, out)?;
            let r = run_experiment(&l)?;
            if let Some(sc) = &r.scattering {
                println!("u_plus: L2 {:.16e}, H1 {:.16e}", sc.u_plus_l2, sc.u_plus_h1);
                for k in 0..sc.cauchy_h1.len() {
                    println!(
                        "increment {:>10.4} -> {:>10.4}: L2 {:.6e}  H1 {:.6e}",
                        sc.times[k],
                        sc.times[k + 1],
                        sc.cauchy_l2[k],
                        sc.cauchy_h1[k]
                    );
                }
            } else {
                println!("no sample times configured; wave operator not extracted");
            }
            let ok = print_checks(&r, Some(&SCATTERING_CHECKS));
            Ok(verdict(ok))
        }
        Command::VerifyLemmas { config, out } => {
            let l = with_out(config, out)?;
            let suite = verify_lemmas(&l.config.lemmas, l.config.profile()?, l.config.seed)?;
            for row in &suite.rows {
                println!("{:<24} {:<20} {}", row.lemma, row.status.as_str(), row.detail);
            }
            emit_lemma_outputs(&suite, &l.config.output_path())?;
            Ok(verdict(suite.pass()))
        }
        Command::Sweep { spec } => {
            let spec = load_sweep(spec)?;
            let s = run_sweep(&spec)?;
            for row in &s.rows {
                let status = match &row.outcome {
                    Ok(r) if r.all_pass() => "pass".to_string(),
                    Ok(_) => "fail".to_string(),
                    Err(e) => format!("error: {e}"),
                };
                println!("run {:03}: {status}", row.index);
            }
            println!("aggregate: {}", s.aggregate.display());
            Ok(verdict(!s.any_failure()))
        }
        Command::Report { run_dir } => {
            let r = read_record(run_dir)?;
            let text = summary_markdown(&r);
            std::fs::write(run_dir.join("summary.md"), &text)
                .map_err(|e| LabError::Resource(format!("cannot write summary: {e}")))?;
            print!("{text}");
            Ok(verdict(r.all_pass()))
        }
    }
}

/// Runs the command and returns the process exit code.
pub fn execute(cli: &Cli) -> u8 {
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&LabError::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&LabError::Solver("x".into())), EXIT_NUMERICAL);
        assert_eq!(
            exit_code(&LabError::BoundaryLeak {
                t: 1.0,
                fraction: 1.0,
                budget: 0.1
            }),
            EXIT_NUMERICAL
        );
    }

    #[test]
    fn missing_config_exits_with_config_code() {
        let cli = Cli::parse_from(["nlslab", "simulate", "/nonexistent/config.toml"]);
        assert_eq!(execute(&cli), EXIT_CONFIG);
    }

    #[test]
    fn empty_lemma_list_succeeds() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.toml");
        std::fs::write(&path, "lemmas = []\noutput_dir = \"o\"\n").unwrap();
        let cli = Cli::parse_from(["nlslab", "verify-lemmas", path.to_str().unwrap()]);
        assert_eq!(execute(&cli), EXIT_PASS);
        assert!(dir.path().join("o/lemmas.csv").is_file());
    }
}
