//! Command-line front end: argument parsing, subcommand dispatch,
//! deterministic seeding, and CSV/JSON output with a reproducibility
//! manifest next to every output file.
//!
//! Exit codes: 0 success, 2 usage error (bad flag or precondition), 1
//! runtime error (I/O).

use crate::bayes::{accumulate_posterior, estimate_phase, EstimatorConfig, PhaseGrid};
use crate::experiment::{
    run_phase_scan, run_sweep, validate_photon_total, EfficiencyRule, PhaseRule, ScanConfig,
    SweepConfig,
};
use crate::interferometer::{build_outcome_distribution, simulate_bursts, RandomSource};
use crate::output::{
    emit_dist_csv, emit_json, emit_posterior_csv, emit_scan_csv, emit_sweep_csv, RunManifest,
};
use crate::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::ffi::OsString;
use std::io::Write;

#[derive(Parser, Debug)]
#[command(
    name = "twinfock",
    version,
    about = "Twin-Fock Mach-Zehnder interferometry: Monte Carlo simulation and Bayesian phase estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact outcome distribution over the number difference m
    Dist {
        /// Total photons per burst (N, even); the input is |N/2>|N/2>
        #[arg(long)]
        photons: u64,
        /// Interferometer phase in radians
        #[arg(long)]
        phase: f64,
        /// Output path, or - for stdout
        #[arg(long, default_value = "-")]
        out: String,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Simulate a burst set and emit the reconstructed phase posterior
    Simulate {
        #[arg(long)]
        photons: u64,
        /// True phase in radians (estimation domain [0, pi/2])
        #[arg(long)]
        phase: f64,
        /// Detector efficiency in [0, 1], or the rule "1-1/N"
        #[arg(long, default_value = "1.0")]
        efficiency: String,
        /// Bursts per measurement
        #[arg(long, default_value_t = 10)]
        bursts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Coarse posterior grid points on [0, pi/2]
        #[arg(long, default_value_t = 1024)]
        grid: usize,
        #[arg(long, default_value = "-")]
        out: String,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Phase-error scaling sweep over photon numbers
    Sweep {
        /// Comma-separated photon totals, e.g. 10,100,1000,10000
        #[arg(long)]
        photons: String,
        #[arg(long, default_value = "1.0")]
        efficiency: String,
        #[arg(long, default_value_t = 10)]
        bursts: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Fixed true phase; defaults to the rule phi = 1/N
        #[arg(long)]
        phase: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1024)]
        grid: usize,
        #[arg(long, default_value = "-")]
        out: String,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Measured-vs-true phase table at fixed N and efficiency
    PhaseScan {
        #[arg(long)]
        photons: u64,
        #[arg(long, default_value = "1.0")]
        efficiency: String,
        /// Comma-separated true phases in radians, strictly increasing
        #[arg(long)]
        phases: String,
        #[arg(long, default_value_t = 10)]
        bursts: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1024)]
        grid: usize,
        #[arg(long, default_value = "-")]
        out: String,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => 1,
        _ => 2,
    }
}

/// Parse an argument vector and run the matching subcommand.
pub fn parse_and_dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn parse_u64_list(s: &str, flag: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("{flag}: not an integer: {tok:?}")))
        })
        .collect()
}

fn parse_f64_list(s: &str, flag: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{flag}: not a number: {tok:?}")))
        })
        .collect()
}

fn estimator_with_grid(grid: usize) -> Result<EstimatorConfig> {
    if grid < 2 {
        return Err(Error::Config(format!(
            "--grid must be >= 2 points, got {grid}"
        )));
    }
    Ok(EstimatorConfig {
        coarse_points: grid,
        ..EstimatorConfig::default()
    })
}

/// Write the payload to the sink; file sinks also get a
/// `<path>.manifest.json` with the resolved configuration and checksums.
fn write_output<C: Serialize>(out: &str, bytes: &[u8], config: &C, seed: u64) -> Result<()> {
    if out == "-" {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(bytes).map_err(|source| Error::Io {
            path: "-".into(),
            source,
        })?;
        return Ok(());
    }
    std::fs::write(out, bytes).map_err(|source| Error::Io {
        path: out.into(),
        source,
    })?;
    let mut manifest = RunManifest::new(config, seed)?;
    manifest.record_output(out, bytes);
    let mut mbytes = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
    mbytes.push(b'\n');
    let mpath = format!("{out}.manifest.json");
    std::fs::write(&mpath, &mbytes).map_err(|source| Error::Io {
        path: mpath.clone(),
        source,
    })?;
    Ok(())
}

#[derive(Serialize)]
struct DistConfig {
    subcommand: &'static str,
    photons: u64,
    phase: f64,
}

#[derive(Serialize)]
struct SimulateConfig {
    subcommand: &'static str,
    photons: u64,
    phase: f64,
    efficiency: f64,
    bursts: usize,
    seed: u64,
    estimator: EstimatorConfig,
}

#[derive(Serialize)]
struct DistRow {
    m: i64,
    probability: f64,
}

#[derive(Serialize)]
struct PosteriorRow {
    phase: f64,
    relative_probability: f64,
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Dist {
            photons,
            phase,
            out,
            format,
        } => {
            validate_photon_total(photons)?;
            let dist = build_outcome_distribution(photons / 2, phase)?;
            let mut bytes = Vec::new();
            match format {
                Format::Csv => emit_dist_csv(&dist, &mut bytes)?,
                Format::Json => {
                    let j = dist.j();
                    let rows: Vec<DistRow> = (-j..=j)
                        .map(|m| DistRow {
                            m,
                            probability: dist.probability(m),
                        })
                        .collect();
                    emit_json(&rows, &mut bytes)?;
                }
            }
            write_output(
                &out,
                &bytes,
                &DistConfig {
                    subcommand: "dist",
                    photons,
                    phase,
                },
                0,
            )
        }
        Command::Simulate {
            photons,
            phase,
            efficiency,
            bursts,
            seed,
            grid,
            out,
            format,
        } => {
            validate_photon_total(photons)?;
            let estimator = estimator_with_grid(grid)?;
            if !(0.0..=estimator.hi).contains(&phase) {
                return Err(Error::Config(format!(
                    "--phase {phase} outside the estimation domain [0, {}]",
                    estimator.hi
                )));
            }
            let eta = efficiency.parse::<EfficiencyRule>()?.resolve(photons);
            let mut rng = RandomSource::new(seed, 0);
            let records = simulate_bursts(photons / 2, phase, eta, bursts, &mut rng)?;
            let pgrid = PhaseGrid::uniform(estimator.lo, estimator.hi, estimator.coarse_points)?;
            let posterior = accumulate_posterior(&records, &pgrid)?;
            let estimate = estimate_phase(&records, Some(phase), &estimator)?;
            if estimate.valid {
                eprintln!(
                    "phi_hat = {} rad, sigma_post = {} rad, abs_error = {} rad ({} bursts)",
                    estimate.phi_hat,
                    estimate.sigma_post,
                    estimate.abs_error.unwrap(),
                    estimate.k
                );
            } else {
                eprintln!("posterior flat: no usable estimate ({bursts} bursts)");
            }
            let mut bytes = Vec::new();
            match format {
                Format::Csv => emit_posterior_csv(&posterior, &mut bytes)?,
                Format::Json => {
                    let rows: Vec<PosteriorRow> = posterior
                        .grid()
                        .points()
                        .iter()
                        .zip(posterior.log_weight())
                        .map(|(p, lw)| PosteriorRow {
                            phase: *p,
                            relative_probability: lw.exp(),
                        })
                        .collect();
                    emit_json(&rows, &mut bytes)?;
                }
            }
            write_output(
                &out,
                &bytes,
                &SimulateConfig {
                    subcommand: "simulate",
                    photons,
                    phase,
                    efficiency: eta,
                    bursts,
                    seed,
                    estimator,
                },
                seed,
            )
        }
        Command::Sweep {
            photons,
            efficiency,
            bursts,
            trials,
            phase,
            seed,
            grid,
            out,
            format,
        } => {
            let cfg = SweepConfig {
                photon_totals: parse_u64_list(&photons, "--photons")?,
                efficiency: efficiency.parse()?,
                bursts_per_trial: bursts,
                trials,
                phase_rule: phase.map_or(PhaseRule::InverseN, PhaseRule::Fixed),
                master_seed: seed,
                estimator: estimator_with_grid(grid)?,
            };
            cfg.validate()?;
            let points = run_sweep(&cfg)?;
            let mut bytes = Vec::new();
            match format {
                Format::Csv => emit_sweep_csv(&points, &mut bytes)?,
                Format::Json => emit_json(&points, &mut bytes)?,
            }
            write_output(&out, &bytes, &cfg, seed)
        }
        Command::PhaseScan {
            photons,
            efficiency,
            phases,
            bursts,
            trials,
            seed,
            grid,
            out,
            format,
        } => {
            let cfg = ScanConfig {
                n_total: photons,
                eta: efficiency.parse::<EfficiencyRule>()?.resolve(photons),
                phases: parse_f64_list(&phases, "--phases")?,
                bursts_per_trial: bursts,
                trials,
                master_seed: seed,
                estimator: estimator_with_grid(grid)?,
            };
            cfg.validate()?;
            let rows = run_phase_scan(&cfg)?;
            let mut bytes = Vec::new();
            match format {
                Format::Csv => emit_scan_csv(&rows, &mut bytes)?,
                Format::Json => emit_json(&rows, &mut bytes)?,
            }
            write_output(&out, &bytes, &cfg, seed)
        }
    }
}
