use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use mogvqe::ansatz::{export_qasm, Circuit};
use mogvqe::driver::{
    self, evaluate_individual, fidelity_estimate, run_hea_seeded, run_mogvqe_with_events,
    write_run_outputs, EnergyObjective, EventLog, FidelityParams, RunConfig,
};
use mogvqe::pauli::{self, parse_hamiltonian, Hamiltonian};
use mogvqe::seeds::derive_seed;
use mogvqe::Result;

#[derive(Parser)]
#[command(name = "mogvqe", version, about = "Multiobjective genetic VQE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the genetic circuit search.
    Run {
        #[arg(long)]
        hamiltonian: PathBuf,
        /// JSON run configuration; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Optimize the layered hardware-efficient ansatz; prints CSV.
    Hea {
        #[arg(long)]
        hamiltonian: PathBuf,
        #[arg(long)]
        layers: usize,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the exact ground energy.
    Exact {
        #[arg(long)]
        hamiltonian: PathBuf,
        #[arg(long, default_value_t = pauli::DEFAULT_DENSE_LIMIT)]
        limit: usize,
    },
    /// Evaluate a stored circuit at its stored angles.
    Eval {
        #[arg(long)]
        hamiltonian: PathBuf,
        #[arg(long)]
        circuit: PathBuf,
        /// Re-optimize the angles with CMA-ES instead of using the stored ones.
        #[arg(long)]
        optimize: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a stored circuit as OpenQASM 2.0.
    ExportQasm {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Independent-error fidelity estimate.
    Fidelity {
        #[arg(long)]
        nrot: usize,
        #[arg(long)]
        ncnot: usize,
        #[arg(long)]
        eps_rot: f64,
        #[arg(long)]
        eps_cnot: f64,
    },
}

fn load_hamiltonian(path: &PathBuf) -> Result<Hamiltonian> {
    parse_hamiltonian(&fs::read_to_string(path)?)
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::from_json(&fs::read_to_string(p)?),
        None => Ok(RunConfig::default()),
    }
}

#[derive(Serialize)]
struct EvalReport {
    energy: f64,
    n_cnot: usize,
    magnetization: f64,
    parity: f64,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            hamiltonian,
            config,
            out,
            seed,
            workers,
        } => {
            let h = load_hamiltonian(&hamiltonian)?;
            let mut cfg = load_config(config.as_ref())?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(w) = workers {
                cfg.worker_count = w;
            }
            cfg.validate()?;
            fs::create_dir_all(&out)?;
            let mut log = EventLog::new(BufWriter::new(fs::File::create(out.join("run.jsonl"))?));
            let record = run_mogvqe_with_events(&h, &cfg, |event| {
                if let driver::RunEvent::Generation {
                    generation,
                    best_energy,
                    min_cnot,
                    ..
                } = event
                {
                    eprintln!("gen {generation:>4}  best energy {best_energy:.8}  min cnot {min_cnot}");
                }
                log.record(event);
            })?;
            log.finish()?;
            write_run_outputs(&record, &cfg, &out)?;
            println!("{}", serde_json::to_string_pretty(&record.summary(cfg.chemical_accuracy))?);
        }
        Command::Hea {
            hamiltonian,
            layers,
            repeats,
            config,
            seed,
        } => {
            let h = load_hamiltonian(&hamiltonian)?;
            let mut cfg = load_config(config.as_ref())?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            println!("repeat,layers,n_cnot,energy,cma_evaluations");
            for r in 0..repeats {
                let res = run_hea_seeded(
                    &h,
                    layers,
                    &cfg,
                    derive_seed(&[cfg.master_seed, layers as u64, r as u64]),
                )?;
                println!("{r},{layers},{},{},{}", res.n_cnot, res.energy, res.cma_evaluations);
            }
        }
        Command::Exact { hamiltonian, limit } => {
            let h = load_hamiltonian(&hamiltonian)?;
            println!("{}", pauli::exact_ground_energy_with_limit(&h, limit)?);
        }
        Command::Eval {
            hamiltonian,
            circuit,
            optimize,
            seed,
        } => {
            let h = load_hamiltonian(&hamiltonian)?;
            let mut c = Circuit::from_json(&fs::read_to_string(&circuit)?)?;
            if optimize {
                let eval = evaluate_individual(&c, &h, &RunConfig::default(), seed)?;
                c = c.with_angles(&eval.best_angles)?;
            }
            let angles = c.angles();
            let psi = EnergyObjective::new(&h, &c)?.state(&angles)?;
            let report = EvalReport {
                energy: h.expectation(&psi)?,
                n_cnot: c.cnot_count(),
                magnetization: pauli::magnetization(&psi),
                parity: pauli::parity(&psi),
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::ExportQasm { circuit, out } => {
            let c = Circuit::from_json(&fs::read_to_string(&circuit)?)?;
            fs::write(out, export_qasm(&c, &c.angles())?)?;
        }
        Command::Fidelity {
            nrot,
            ncnot,
            eps_rot,
            eps_cnot,
        } => {
            let fp = FidelityParams::new(nrot, ncnot, eps_rot, eps_cnot)?;
            println!("{}", fidelity_estimate(&fp));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
