use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dfsim::analysis::{self, RunSpec};
use dfsim::oracle::{self, OracleReport};
use dfsim::protocol::{distribute_qubit, run_phase_averaged, PairSource};
use dfsim::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "dfsim", version, about = "Decoherence-free entanglement distribution simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// Run file with `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Output path; commands writing two files put JSON next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the overlap (optional) and sweep the channel transmittance.
    Sweep(Io),
    /// Fit the overlap amplitude to the target X visibility.
    Calibrate(Io),
    /// Coincidences against the relative delay of photon and pulse.
    DelayScan(Io),
    /// Pair state sent directly, with and without collective phase noise.
    Tomography(Io),
    /// Seeded Monte Carlo click records.
    Sample {
        #[command(flatten)]
        io: Io,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare the engine against the dense reference pipeline.
    OracleCheck(Io),
    /// Distribute the configured qubit and report its fidelity.
    Qubit(Io),
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn json_path(out: &Path) -> PathBuf {
    if out.extension().is_some_and(|e| e == "json") {
        out.with_extension("meta.json")
    } else {
        out.with_extension("json")
    }
}

fn pretty(v: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Sweep(io) => {
            let spec = RunSpec::from_file(&io.config)?;
            let table = analysis::run_sweep(&spec)?;
            write(&io.out, &table.to_csv())?;
            write(&json_path(&io.out), &pretty(&table)?)?;
            Ok(format!("wrote {} rows to {}", table.rows.len(), io.out.display()))
        }
        Command::Calibrate(io) => {
            let spec = RunSpec::from_file(&io.config)?;
            let cal = analysis::calibrate_overlap(&spec.experiment, spec.anchor_t, spec.target_vx)?;
            write(&io.out, &pretty(&cal)?)?;
            Ok(format!("s0 = {:.6}", cal.s0))
        }
        Command::DelayScan(io) => {
            let spec = RunSpec::from_file(&io.config)?;
            let (scan, calibration) = analysis::run_delay_scan(&spec)?;
            write(&io.out, &scan.to_csv())?;
            write(&json_path(&io.out), &pretty(&json!({ "scan": scan, "calibration": calibration }))?)?;
            Ok(format!(
                "zero-delay visibility {:.4}, FWHM {:.1} um",
                scan.zero_delay_visibility, scan.fwhm_um
            ))
        }
        Command::Tomography(io) => {
            let spec = RunSpec::from_file(&io.config)?;
            let quiet = analysis::tomography_experiment(&spec.experiment, false)?;
            let noisy = analysis::tomography_experiment(&spec.experiment, true)?;
            write(&io.out, &pretty(&json!({ "noise_off": quiet, "noise_on": noisy }))?)?;
            Ok(format!(
                "fidelity {:.4} without noise, {:.4} with noise",
                quiet.fidelity, noisy.fidelity
            ))
        }
        Command::Sample { io, seed } => {
            let spec = RunSpec::from_file(&io.config)?;
            let events = analysis::sample_events(&spec.experiment, spec.n_pulses, seed)?;
            let triples = events.iter().filter(|e| e.triple()).count();
            write(&io.out, &analysis::events_to_csv(&events))?;
            Ok(format!(
                "{} pulses, {} with clicks, {} triple coincidences",
                spec.n_pulses,
                events.len(),
                triples
            ))
        }
        Command::OracleCheck(io) => {
            let spec = RunSpec::from_file(&io.config)?;
            let mut own = spec.experiment.clone();
            own.cutoff = own.cutoff.min(3);
            let mine = oracle::oracle_check_config(&own)?;
            let random = oracle::oracle_check(spec.oracle_seed, spec.oracle_cases)?;
            let mut cases = mine.cases;
            cases.extend(random.cases);
            let report = OracleReport {
                tolerance: oracle::ORACLE_TOLERANCE,
                max_deviation: cases.iter().map(|c| c.max_deviation).fold(0.0, f64::max),
                cases,
            };
            write(&io.out, &pretty(&report)?)?;
            let report = report.into_result()?;
            Ok(format!("{} cases, max deviation {:.3e}", report.cases.len(), report.max_deviation))
        }
        Command::Qubit(io) => {
            let spec = RunSpec::from_file(&io.config)?;
            let cfg = &spec.experiment;
            let PairSource::Encoded { alpha, beta } = cfg.source else {
                return Err(Error::Config("qubit needs qubit_alpha and qubit_beta".into()));
            };
            let fidelity = distribute_qubit(cfg)?;
            let outcome = run_phase_averaged(cfg)?;
            write(
                &io.out,
                &pretty(&json!({
                    "alpha": alpha,
                    "beta": beta,
                    "fidelity": fidelity,
                    "triple_coincidence": outcome.triple_coincidence,
                    "dm": outcome.dm()?,
                }))?,
            )?;
            Ok(format!("fidelity {fidelity:.10}"))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": e.kind(), "message": e.to_string() } }));
            ExitCode::FAILURE
        }
    }
}
