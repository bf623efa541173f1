//! Run orchestration: per-circuit angle optimization inside the NSGA-II
//! generation loop, the hardware-efficient baseline, and run archiving.
//!
//! Every random stream is derived from the master seed and the task's
//! coordinates (generation, individual id), so a run is a pure function of
//! its inputs regardless of how many workers evaluate it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{self, random_angle, BlockKind, BlockSampler, Circuit, HeaCircuit};
use crate::cma::{self, CmaMode, CmaOptions};
use crate::error::{Error, Result};
use crate::moo::{self, Fitness, Individual, ParetoArchive};
use crate::pauli::{self, Hamiltonian};
use crate::seeds::derive_seed;
use crate::sim::StateVector;

const STREAM_INIT: u64 = 1;
const STREAM_MUTATE: u64 = 2;
const STREAM_EVAL: u64 = 3;
const STREAM_HEA: u64 = 4;

/// Drift of magnetization or parity from the reference state above this is
/// flagged in the symmetry report.
pub const SYMMETRY_DRIFT_THRESHOLD: f64 = 5e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub population: usize,
    pub mutation_probability: f64,
    pub max_generations: usize,
    /// Hartree.
    pub chemical_accuracy: f64,
    /// Angle optimizer settings. `seed` is ignored by the genetic search,
    /// which derives one seed per evaluation.
    pub cma: CmaOptions,
    pub n_cma_restarts: usize,
    pub insert_block_kind: BlockKind,
    /// Kind-B blocks start at their identity assignment.
    pub kind_b_identity_init: bool,
    /// Start the first CMA-ES run of an offspring from its stored angles
    /// (the parent's optimum for inherited blocks) instead of random ones.
    pub warm_start: bool,
    pub worker_count: usize,
    pub master_seed: u64,
    /// Reference energy for the chemical-accuracy stop. When absent and the
    /// system fits under `dense_limit` qubits, the exact ground energy is used.
    pub target_energy: Option<f64>,
    pub dense_limit: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            population: 64,
            mutation_probability: 1.0,
            max_generations: 60,
            chemical_accuracy: 1e-3,
            cma: CmaOptions::default(),
            n_cma_restarts: 1,
            insert_block_kind: BlockKind::A,
            kind_b_identity_init: false,
            warm_start: false,
            worker_count: 16,
            master_seed: 0,
            target_energy: None,
            dense_limit: pauli::DEFAULT_DENSE_LIMIT,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("population must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_probability) {
            return Err(Error::Config(format!(
                "mutation_probability must lie in [0, 1], got {}",
                self.mutation_probability
            )));
        }
        if self.worker_count == 0 {
            return Err(Error::Config("worker_count must be at least 1".into()));
        }
        if self.n_cma_restarts == 0 {
            return Err(Error::Config("n_cma_restarts must be at least 1".into()));
        }
        if !(self.chemical_accuracy > 0.0) {
            return Err(Error::Config("chemical_accuracy must be positive".into()));
        }
        self.cma.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn block_sampler(&self) -> BlockSampler {
        BlockSampler {
            kind: self.insert_block_kind,
            identity_init: self.kind_b_identity_init,
        }
    }
}

/// Energy of a fixed circuit topology as a function of its angles, reusing
/// one statevector across calls.
pub struct EnergyObjective<'a> {
    h: &'a Hamiltonian,
    circuit: &'a Circuit,
    psi: StateVector,
}

impl<'a> EnergyObjective<'a> {
    pub fn new(h: &'a Hamiltonian, circuit: &'a Circuit) -> Result<Self> {
        if circuit.n_qubits != h.n_qubits() {
            return Err(Error::DimensionMismatch {
                expected: h.n_qubits(),
                actual: circuit.n_qubits,
            });
        }
        Ok(Self {
            h,
            circuit,
            psi: StateVector::from_bits(h.n_qubits(), h.hf_state())?,
        })
    }

    pub fn energy(&mut self, angles: &[f64]) -> Result<f64> {
        self.psi.reset_to_bits(self.h.hf_state());
        self.circuit.apply(&mut self.psi, angles)?;
        self.h.expectation(&self.psi)
    }

    /// Prepared state for `angles`.
    pub fn state(&mut self, angles: &[f64]) -> Result<StateVector> {
        self.energy(angles)?;
        Ok(self.psi.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub fitness: Fitness,
    pub best_angles: Vec<f64>,
    pub cma_evaluations: usize,
}

/// Optimizes the angles of `c` and returns its objective pair.
///
/// A circuit without free angles is scored by a single energy evaluation.
pub fn evaluate_individual(
    c: &Circuit,
    h: &Hamiltonian,
    cfg: &RunConfig,
    seed: u64,
) -> Result<Evaluation> {
    let mut objective = EnergyObjective::new(h, c)?;
    let n_cnot = c.cnot_count();
    if c.n_params() == 0 {
        let energy = objective.energy(&[])?;
        return Ok(Evaluation {
            fitness: Fitness::new(energy, n_cnot),
            best_angles: Vec::new(),
            cma_evaluations: 0,
        });
    }
    let opts = cfg.cma.with_seed(seed);
    let n = c.n_params();
    let mut restart = 0;
    let warm = cfg.warm_start;
    let stored = c.angles();
    let sampler = |rng: &mut ChaCha8Rng| {
        let x0 = if warm && restart == 0 {
            stored.clone()
        } else {
            (0..n).map(|_| random_angle(rng)).collect()
        };
        restart += 1;
        x0
    };
    // simulator errors surface as a non-finite objective
    let result = cma::minimize_restarts(
        |x| objective.energy(x).unwrap_or(f64::NAN),
        sampler,
        &opts,
        cfg.n_cma_restarts,
    )?;
    Ok(Evaluation {
        fitness: Fitness::new(result.f_best, n_cnot),
        best_angles: result.x_best,
        cma_evaluations: result.evaluations_used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunTermination {
    ChemicalAccuracy,
    MaxGenerations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationLog {
    pub generation: usize,
    pub id: u64,
    pub parent_id: Option<u64>,
    pub energy: f64,
    pub n_cnot: usize,
    pub n_blocks: usize,
    pub cma_evaluations: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub hf_magnetization: f64,
    pub hf_parity: f64,
    pub best_magnetization: f64,
    pub best_parity: f64,
    pub drift_flagged: bool,
}

impl SymmetryReport {
    pub fn new(reference: &StateVector, best: &StateVector) -> Self {
        let hf_magnetization = pauli::magnetization(reference);
        let hf_parity = pauli::parity(reference);
        let best_magnetization = pauli::magnetization(best);
        let best_parity = pauli::parity(best);
        let drift_flagged = (best_magnetization - hf_magnetization).abs() >= SYMMETRY_DRIFT_THRESHOLD
            || (best_parity - hf_parity).abs() >= SYMMETRY_DRIFT_THRESHOLD;
        Self {
            hf_magnetization,
            hf_parity,
            best_magnetization,
            best_parity,
            drift_flagged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSolution {
    pub circuit_id: u64,
    pub energy: f64,
    pub n_cnot: usize,
    pub circuit: Circuit,
    pub angles: Vec<f64>,
}

/// Progress events emitted while a run executes.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RunEvent<'a> {
    Evaluation(&'a EvaluationLog),
    Generation {
        generation: usize,
        best_energy: f64,
        min_cnot: usize,
        front: &'a ParetoArchive,
        wall_ms: f64,
    },
    Finished {
        termination: RunTermination,
        generations: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub n_qubits: usize,
    /// `archives[g]` is the first front after generation `g`; index 0 is the
    /// evaluated initial population.
    pub archives: Vec<ParetoArchive>,
    pub evaluations: Vec<EvaluationLog>,
    /// Every circuit referenced by an archive, with its optimized angles stored.
    pub circuits: BTreeMap<u64, Circuit>,
    pub best: BestSolution,
    pub termination: RunTermination,
    pub target_energy: Option<f64>,
    pub hf_energy: f64,
    pub symmetry: SymmetryReport,
    pub final_population: Vec<Individual>,
}

impl RunRecord {
    pub fn generations(&self) -> usize {
        self.archives.len().saturating_sub(1)
    }

    /// Fewest CNOTs among archived solutions within `accuracy` of the target,
    /// scanning the last archive.
    pub fn min_cnot_within(&self, accuracy: f64) -> Option<usize> {
        let target = self.target_energy?;
        self.archives
            .last()?
            .entries
            .iter()
            .filter(|e| e.energy <= target + accuracy)
            .map(|e| e.n_cnot)
            .min()
    }

    pub fn summary(&self, chemical_accuracy: f64) -> RunSummary {
        RunSummary {
            n_qubits: self.n_qubits,
            generations: self.generations(),
            termination: self.termination,
            target_energy: self.target_energy,
            hf_energy: self.hf_energy,
            best_circuit_id: self.best.circuit_id,
            best_energy: self.best.energy,
            best_n_cnot: self.best.n_cnot,
            best_error: self.target_energy.map(|t| self.best.energy - t),
            min_cnot_at_chemical_accuracy: self.min_cnot_within(chemical_accuracy),
            total_cma_evaluations: self.evaluations.iter().map(|e| e.cma_evaluations).sum(),
            symmetry: self.symmetry.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_qubits: usize,
    pub generations: usize,
    pub termination: RunTermination,
    pub target_energy: Option<f64>,
    pub hf_energy: f64,
    pub best_circuit_id: u64,
    pub best_energy: f64,
    pub best_n_cnot: usize,
    pub best_error: Option<f64>,
    pub min_cnot_at_chemical_accuracy: Option<usize>,
    pub total_cma_evaluations: usize,
    pub symmetry: SymmetryReport,
}

/// Runs the genetic search without progress reporting.
pub fn run_mogvqe(h: &Hamiltonian, cfg: &RunConfig) -> Result<RunRecord> {
    run_mogvqe_with_events(h, cfg, |_| {})
}

struct Pending {
    id: u64,
    parent_id: Option<u64>,
    circuit: Circuit,
}

/// Evaluates `pending` in batches of `worker_count`, preserving order.
fn evaluate_batch(
    pool: &rayon::ThreadPool,
    pending: Vec<Pending>,
    generation: usize,
    h: &Hamiltonian,
    cfg: &RunConfig,
) -> Result<Vec<(Individual, EvaluationLog)>> {
    let mut out = Vec::with_capacity(pending.len());
    for chunk in pending.chunks(cfg.worker_count) {
        let results: Vec<Result<(Individual, EvaluationLog)>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|p| {
                    let start = Instant::now();
                    let seed = derive_seed(&[cfg.master_seed, STREAM_EVAL, generation as u64, p.id]);
                    let eval = evaluate_individual(&p.circuit, h, cfg, seed)?;
                    let circuit = p.circuit.with_angles(&eval.best_angles)?;
                    let log = EvaluationLog {
                        generation,
                        id: p.id,
                        parent_id: p.parent_id,
                        energy: eval.fitness.energy,
                        n_cnot: eval.fitness.n_cnot,
                        n_blocks: circuit.len(),
                        cma_evaluations: eval.cma_evaluations,
                        wall_ms: start.elapsed().as_secs_f64() * 1e3,
                    };
                    Ok((Individual::new(p.id, circuit, eval.fitness, eval.best_angles), log))
                })
                .collect()
        });
        for r in results {
            out.push(r?);
        }
    }
    Ok(out)
}

fn best_individual(pop: &[Individual]) -> &Individual {
    pop.iter()
        .min_by(|a, b| {
            a.fitness
                .energy
                .total_cmp(&b.fitness.energy)
                .then(a.fitness.n_cnot.cmp(&b.fitness.n_cnot))
                .then(a.id.cmp(&b.id))
        })
        .expect("population is never empty")
}

/// The multiobjective genetic search. `on_event` receives every
/// evaluation log and a summary of each generation as it completes.
pub fn run_mogvqe_with_events<E>(h: &Hamiltonian, cfg: &RunConfig, mut on_event: E) -> Result<RunRecord>
where
    E: FnMut(&RunEvent<'_>),
{
    cfg.validate()?;
    let n_qubits = h.n_qubits();
    if n_qubits < 2 {
        return Err(Error::Config(format!(
            "the genetic search needs at least 2 qubits, Hamiltonian has {n_qubits}"
        )));
    }
    let target_energy = match cfg.target_energy {
        Some(t) => Some(t),
        None if n_qubits <= cfg.dense_limit => {
            Some(pauli::exact_ground_energy_with_limit(h, cfg.dense_limit)?)
        }
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.worker_count)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let sampler = cfg.block_sampler();
    let reached = |pop: &[Individual]| {
        target_energy.is_some_and(|t| best_individual(pop).fitness.energy <= t + cfg.chemical_accuracy)
    };

    let mut next_id: u64 = 0;
    let mut archives = Vec::new();
    let mut logs = Vec::new();
    let mut circuits = BTreeMap::new();

    let mut record_generation = |generation: usize,
                                 pop: &[Individual],
                                 started: Instant,
                                 archives: &mut Vec<ParetoArchive>,
                                 on_event: &mut E| {
        let archive = ParetoArchive::from_population(generation, pop);
        for e in &archive.entries {
            if let Some(ind) = pop.iter().find(|i| i.id == e.circuit_id) {
                circuits.entry(ind.id).or_insert_with(|| ind.circuit.clone());
            }
        }
        on_event(&RunEvent::Generation {
            generation,
            best_energy: archive.min_energy().unwrap_or(f64::NAN),
            min_cnot: archive.min_cnot().unwrap_or(0),
            front: &archive,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        archives.push(archive);
    };

    let started = Instant::now();
    let initial: Vec<Pending> = (0..cfg.population)
        .map(|_| {
            let id = next_id;
            next_id += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.master_seed, STREAM_INIT, id]));
            ansatz::init_circuit(n_qubits, &sampler, &mut rng).map(|circuit| Pending {
                id,
                parent_id: None,
                circuit,
            })
        })
        .collect::<Result<_>>()?;
    let mut population: Vec<Individual> = Vec::with_capacity(cfg.population);
    for (ind, log) in evaluate_batch(&pool, initial, 0, h, cfg)? {
        on_event(&RunEvent::Evaluation(&log));
        logs.push(log);
        population.push(ind);
    }
    moo::rank_population(&mut population);
    record_generation(0, &population, started, &mut archives, &mut on_event);

    let mut termination = RunTermination::MaxGenerations;
    let mut generation = 0;
    loop {
        if reached(&population) {
            termination = RunTermination::ChemicalAccuracy;
            break;
        }
        if generation >= cfg.max_generations {
            break;
        }
        generation += 1;
        let started = Instant::now();

        let mut pending = Vec::new();
        let mut clones = Vec::new();
        for parent in &population {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[
                cfg.master_seed,
                STREAM_MUTATE,
                generation as u64,
                parent.id,
            ]));
            if rng.random_bool(cfg.mutation_probability) {
                let circuit = ansatz::mutate(&parent.circuit, &sampler, &mut rng);
                pending.push(Pending {
                    id: next_id,
                    parent_id: Some(parent.id),
                    circuit,
                });
                next_id += 1;
            } else {
                clones.push(parent.clone());
            }
        }
        let mut offspring = clones;
        for (ind, log) in evaluate_batch(&pool, pending, generation, h, cfg)? {
            on_event(&RunEvent::Evaluation(&log));
            logs.push(log);
            offspring.push(ind);
        }
        population = moo::environmental_select(population, offspring, cfg.population)?;
        record_generation(generation, &population, started, &mut archives, &mut on_event);
    }
    on_event(&RunEvent::Finished {
        termination,
        generations: generation,
    });

    let best = best_individual(&population).clone();
    let reference = StateVector::from_bits(n_qubits, h.hf_state())?;
    let hf_energy = h.expectation(&reference)?;
    let best_state = EnergyObjective::new(h, &best.circuit)?.state(&best.best_angles)?;
    let symmetry = SymmetryReport::new(&reference, &best_state);
    circuits.insert(best.id, best.circuit.clone());

    Ok(RunRecord {
        n_qubits,
        archives,
        evaluations: logs,
        circuits,
        best: BestSolution {
            circuit_id: best.id,
            energy: best.fitness.energy,
            n_cnot: best.fitness.n_cnot,
            circuit: best.circuit.clone(),
            angles: best.best_angles.clone(),
        },
        termination,
        target_energy,
        hf_energy,
        symmetry,
        final_population: population,
    })
}

/// Writes `pareto_<gen>.json`, `circuits/<id>.json`, `best.qasm` and
/// `summary.json` into `dir`.
pub fn write_run_outputs(record: &RunRecord, cfg: &RunConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("circuits"))?;
    for archive in &record.archives {
        let path = dir.join(format!("pareto_{}.json", archive.generation));
        fs::write(path, serde_json::to_string_pretty(&archive.entries)? + "\n")?;
    }
    for (id, circuit) in &record.circuits {
        fs::write(dir.join("circuits").join(format!("{id}.json")), circuit.to_json()? + "\n")?;
    }
    fs::write(
        dir.join("best.qasm"),
        ansatz::export_qasm(&record.best.circuit, &record.best.angles)?,
    )?;
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&record.summary(cfg.chemical_accuracy))? + "\n",
    )?;
    Ok(())
}

/// Appends events as JSON lines to a writer, remembering the first I/O error.
pub struct EventLog<W: std::io::Write> {
    out: W,
    error: Option<std::io::Error>,
}

impl<W: std::io::Write> EventLog<W> {
    pub fn new(out: W) -> Self {
        Self { out, error: None }
    }

    pub fn record(&mut self, event: &RunEvent<'_>) {
        if self.error.is_some() {
            return;
        }
        let line = match serde_json::to_string(event) {
            Ok(l) => l,
            Err(e) => {
                self.error = Some(e.into());
                return;
            }
        };
        if let Err(e) = writeln!(self.out, "{line}") {
            self.error = Some(e);
        }
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error {
            return Err(e.into());
        }
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeaResult {
    pub energy: f64,
    pub angles: Vec<f64>,
    pub n_cnot: usize,
    pub cma_evaluations: usize,
}

/// Optimizes the `layers`-deep hardware-efficient ansatz with sep-CMA-ES.
pub fn run_hea(h: &Hamiltonian, layers: usize, cfg: &RunConfig) -> Result<HeaResult> {
    run_hea_seeded(h, layers, cfg, derive_seed(&[cfg.master_seed, STREAM_HEA, layers as u64]))
}

pub fn run_hea_seeded(h: &Hamiltonian, layers: usize, cfg: &RunConfig, seed: u64) -> Result<HeaResult> {
    cfg.cma.validate()?;
    let template = HeaCircuit::new(h.n_qubits(), layers);
    let gates_for = |angles: &[f64]| template.gates(angles);
    let mut psi = StateVector::from_bits(h.n_qubits(), h.hf_state())?;
    let mut energy = |angles: &[f64]| -> Result<f64> {
        psi.reset_to_bits(h.hf_state());
        psi.apply_all(&gates_for(angles)?)?;
        h.expectation(&psi)
    };
    let n = template.n_params();
    let opts = CmaOptions {
        mode: CmaMode::Separable,
        ..cfg.cma.with_seed(seed)
    };
    let result = cma::minimize_restarts(
        |x| energy(x).unwrap_or(f64::NAN),
        |rng| (0..n).map(|_| random_angle(rng)).collect(),
        &opts,
        cfg.n_cma_restarts,
    )?;
    Ok(HeaResult {
        energy: result.f_best,
        angles: result.x_best,
        n_cnot: template.cnot_count(),
        cma_evaluations: result.evaluations_used,
    })
}

/// Independent-error fidelity model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityParams {
    pub n_rot: usize,
    pub n_cnot: usize,
    pub eps_rot: f64,
    pub eps_cnot: f64,
}

impl FidelityParams {
    pub fn new(n_rot: usize, n_cnot: usize, eps_rot: f64, eps_cnot: f64) -> Result<Self> {
        for (name, eps) in [("eps_rot", eps_rot), ("eps_cnot", eps_cnot)] {
            if !(0.0..1.0).contains(&eps) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {eps}")));
            }
        }
        Ok(Self {
            n_rot,
            n_cnot,
            eps_rot,
            eps_cnot,
        })
    }
}

/// `(1 - eps_rot)^n_rot * (1 - eps_cnot)^n_cnot`.
pub fn fidelity_estimate(fp: &FidelityParams) -> f64 {
    (1.0 - fp.eps_rot).powf(fp.n_rot as f64) * (1.0 - fp.eps_cnot).powf(fp.n_cnot as f64)
}
