//! NSGA-II machinery for the (energy, CNOT count) objective pair.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::ansatz::Circuit;
use crate::error::{Error, Result};

/// Objective pair, both minimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fitness {
    pub energy: f64,
    pub n_cnot: usize,
}

impl Fitness {
    pub fn new(energy: f64, n_cnot: usize) -> Self {
        Self { energy, n_cnot }
    }

    fn objective(&self, m: usize) -> f64 {
        match m {
            0 => self.energy,
            _ => self.n_cnot as f64,
        }
    }
}

/// Pareto dominance for minimization.
pub fn dominates(a: &Fitness, b: &Fitness) -> bool {
    a.energy <= b.energy
        && a.n_cnot <= b.n_cnot
        && (a.energy < b.energy || a.n_cnot < b.n_cnot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: u64,
    pub circuit: Circuit,
    pub fitness: Fitness,
    pub best_angles: Vec<f64>,
    pub rank: usize,
    pub crowding: f64,
}

impl Individual {
    pub fn new(id: u64, circuit: Circuit, fitness: Fitness, best_angles: Vec<f64>) -> Self {
        Self {
            id,
            circuit,
            fitness,
            best_angles,
            rank: 0,
            crowding: 0.0,
        }
    }
}

/// Fast non-dominated sort. Returns fronts as index lists in ascending
/// index order; front 0 holds the points no other point dominates.
pub fn non_dominated_sort(points: &[Fitness]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&points[i], &points[j]) {
                dominates_list[i].push(j);
                dominated_by_count[j] += 1;
            } else if dominates(&points[j], &points[i]) {
                dominates_list[j].push(i);
                dominated_by_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of a front. Boundary points get
/// `+inf`; an objective with zero range contributes nothing. Equal values
/// are ordered by position in `front`.
pub fn crowding_distance(front: &[Fitness]) -> Vec<f64> {
    let n = front.len();
    let mut distance = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    for m in 0..2 {
        order.sort_by(|&a, &b| {
            front[a]
                .objective(m)
                .total_cmp(&front[b].objective(m))
                .then(a.cmp(&b))
        });
        let lo = front[order[0]].objective(m);
        let hi = front[order[n - 1]].objective(m);
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for k in 1..n - 1 {
            let spread = front[order[k + 1]].objective(m) - front[order[k - 1]].objective(m);
            distance[order[k]] += spread / range;
        }
    }
    distance
}

/// Assigns `rank` and `crowding` to every individual and returns the fronts.
pub fn rank_population(pop: &mut [Individual]) -> Vec<Vec<usize>> {
    let points: Vec<Fitness> = pop.iter().map(|i| i.fitness).collect();
    let fronts = non_dominated_sort(&points);
    for (rank, front) in fronts.iter().enumerate() {
        let f: Vec<Fitness> = front.iter().map(|&i| points[i]).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&f)) {
            pop[i].rank = rank;
            pop[i].crowding = d;
        }
    }
    fronts
}

/// Crowded-comparison order: lower rank, then larger crowding distance,
/// then lower id.
pub fn crowded_compare(a: &Individual, b: &Individual) -> Ordering {
    a.rank
        .cmp(&b.rank)
        .then_with(|| b.crowding.total_cmp(&a.crowding))
        .then_with(|| a.id.cmp(&b.id))
}

/// NSGA-II environmental selection over `parents ∪ offspring`.
///
/// Individuals sharing an id are kept once (the first occurrence, parents
/// first). Ranks and crowding distances are recomputed on the union, which
/// is then ordered by [`crowded_compare`] and truncated to `n`.
pub fn environmental_select(
    parents: Vec<Individual>,
    offspring: Vec<Individual>,
    n: usize,
) -> Result<Vec<Individual>> {
    let mut seen = HashSet::new();
    let mut union: Vec<Individual> = parents
        .into_iter()
        .chain(offspring)
        .filter(|ind| seen.insert(ind.id))
        .collect();
    if union.len() < n {
        return Err(Error::InsufficientCandidates {
            needed: n,
            available: union.len(),
        });
    }
    rank_population(&mut union);
    union.sort_by(crowded_compare);
    union.truncate(n);
    Ok(union)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub energy: f64,
    pub n_cnot: usize,
    pub circuit_id: u64,
}

/// First front of one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive {
    pub generation: usize,
    pub entries: Vec<ArchiveEntry>,
}

impl ParetoArchive {
    /// Front 0 of `pop`, sorted by CNOT count, then energy, then id.
    pub fn from_population(generation: usize, pop: &[Individual]) -> Self {
        let points: Vec<Fitness> = pop.iter().map(|i| i.fitness).collect();
        let fronts = non_dominated_sort(&points);
        let mut entries: Vec<ArchiveEntry> = fronts
            .first()
            .map(|f| {
                f.iter()
                    .map(|&i| ArchiveEntry {
                        energy: pop[i].fitness.energy,
                        n_cnot: pop[i].fitness.n_cnot,
                        circuit_id: pop[i].id,
                    })
                    .collect()
            })
            .unwrap_or_default();
        entries.sort_by(|a, b| {
            a.n_cnot
                .cmp(&b.n_cnot)
                .then(a.energy.total_cmp(&b.energy))
                .then(a.circuit_id.cmp(&b.circuit_id))
        });
        Self {
            generation,
            entries,
        }
    }

    pub fn min_energy(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.energy).min_by(f64::total_cmp)
    }

    pub fn min_cnot(&self) -> Option<usize> {
        self.entries.iter().map(|e| e.n_cnot).min()
    }
}
