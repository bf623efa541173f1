//! Dense reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use mogvqe::moo::Fitness;
use mogvqe::pauli::{Axis, Hamiltonian};
use mogvqe::sim::Gate;

pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn eye(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

pub fn pauli_matrix(axis: Option<Axis>) -> CMat {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    match axis {
        None => CMat::from_row_slice(2, 2, &[o, z, z, o]),
        Some(Axis::X) => CMat::from_row_slice(2, 2, &[z, o, o, z]),
        Some(Axis::Y) => CMat::from_row_slice(2, 2, &[z, -i, i, z]),
        Some(Axis::Z) => CMat::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

/// `exp(-i angle P / 2)` written out from cos/sin.
pub fn rotation_matrix(axis: Axis, angle: f64) -> CMat {
    let co = (angle / 2.0).cos();
    let si = (angle / 2.0).sin();
    eye(2) * c(co, 0.0) - pauli_matrix(Some(axis)) * c(0.0, si)
}

/// Kronecker product of single-qubit factors, qubit 0 rightmost.
pub fn kron_all(factors: &[CMat]) -> CMat {
    let mut out = CMat::from_element(1, 1, c(1.0, 0.0));
    for f in factors.iter().rev() {
        out = out.kronecker(f);
    }
    out
}

pub fn single_qubit_op(n: usize, q: usize, m: &CMat) -> CMat {
    let factors: Vec<CMat> = (0..n)
        .map(|k| if k == q { m.clone() } else { eye(2) })
        .collect();
    kron_all(&factors)
}

/// CNOT as `|0><0| (x) I + |1><1| (x) X` on the control.
pub fn cnot_matrix(n: usize, control: usize, target: usize) -> CMat {
    let p0 = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    let p1 = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
    let a: Vec<CMat> = (0..n).map(|k| if k == control { p0.clone() } else { eye(2) }).collect();
    let b: Vec<CMat> = (0..n)
        .map(|k| {
            if k == control {
                p1.clone()
            } else if k == target {
                pauli_matrix(Some(Axis::X))
            } else {
                eye(2)
            }
        })
        .collect();
    kron_all(&a) + kron_all(&b)
}

pub fn gate_matrix(n: usize, g: &Gate) -> CMat {
    match *g {
        Gate::Rotation { axis, qubit, angle } => single_qubit_op(n, qubit, &rotation_matrix(axis, angle)),
        Gate::Cnot { control, target } => cnot_matrix(n, control, target),
    }
}

pub fn circuit_matrix(n: usize, gates: &[Gate]) -> CMat {
    let mut u = eye(1 << n);
    for g in gates {
        u = gate_matrix(n, g) * u;
    }
    u
}

pub fn dense_hamiltonian(h: &Hamiltonian) -> CMat {
    let n = h.n_qubits();
    let mut m = CMat::zeros(1 << n, 1 << n);
    for term in h.terms() {
        let factors: Vec<CMat> = (0..n).map(|q| pauli_matrix(term.ops.get(&q).copied())).collect();
        m += kron_all(&factors) * c(term.coefficient, 0.0);
    }
    m
}

/// Lowest eigenvalue via the real symmetric embedding `[[A, -B], [B, A]]`.
pub fn dense_ground_energy(m: &CMat) -> f64 {
    let d = m.nrows();
    let real = DMatrix::<f64>::from_fn(2 * d, 2 * d, |i, j| {
        let (a, b) = (i % d, j % d);
        let z = m[(a, b)];
        match (i < d, j < d) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    real.symmetric_eigenvalues().min()
}

pub fn dense_expectation(m: &CMat, psi: &[Complex64]) -> f64 {
    let v = DVector::from_column_slice(psi);
    (v.adjoint() * m * &v)[(0, 0)].re
}

pub fn apply_dense(u: &CMat, psi: &[Complex64]) -> Vec<Complex64> {
    (u * DVector::from_column_slice(psi)).iter().copied().collect()
}

pub fn max_deviation(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn random_state<R: Rng>(n: usize, rng: &mut R) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..1 << n)
        .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= norm);
    v
}

pub fn random_gate<R: Rng>(n: usize, rng: &mut R) -> Gate {
    if n >= 2 && rng.random_bool(0.3) {
        let control = rng.random_range(0..n);
        let mut target = rng.random_range(0..n - 1);
        if target >= control {
            target += 1;
        }
        Gate::cnot(control, target)
    } else {
        let axis = [Axis::X, Axis::Y, Axis::Z][rng.random_range(0..3)];
        Gate::Rotation {
            axis,
            qubit: rng.random_range(0..n),
            angle: rng.random_range(-7.0..7.0),
        }
    }
}

pub fn random_gates<R: Rng>(n: usize, count: usize, rng: &mut R) -> Vec<Gate> {
    (0..count).map(|_| random_gate(n, rng)).collect()
}

/// Largest entry of `U - e^{i phi} I`, with the phase taken from the trace.
pub fn phase_distance_to_identity(u: &CMat) -> f64 {
    let tr = u.trace();
    let phase = if tr.norm() > 0.0 { tr / tr.norm() } else { c(1.0, 0.0) };
    (u - eye(u.nrows()) * phase).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Front index of every point, by repeatedly peeling points that nothing
/// remaining dominates.
pub fn brute_force_ranks(points: &[Fitness]) -> Vec<usize> {
    let dom = |a: &Fitness, b: &Fitness| {
        (a.energy <= b.energy && a.n_cnot <= b.n_cnot) && (a.energy < b.energy || a.n_cnot < b.n_cnot)
    };
    let mut rank = vec![usize::MAX; points.len()];
    let mut level = 0;
    while rank.contains(&usize::MAX) {
        let remaining: Vec<usize> = (0..points.len()).filter(|&i| rank[i] == usize::MAX).collect();
        let layer: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| !remaining.iter().any(|&j| dom(&points[j], &points[i])))
            .collect();
        for i in layer {
            rank[i] = level;
        }
        level += 1;
    }
    rank
}

pub fn random_points<R: Rng>(n: usize, rng: &mut R) -> Vec<Fitness> {
    let coarse = rng.random_bool(0.5);
    (0..n)
        .map(|_| {
            let energy = if coarse {
                rng.random_range(0..8) as f64 * 0.25
            } else {
                rng.random_range(-2.0..2.0)
            };
            Fitness::new(energy, rng.random_range(0..20))
        })
        .collect()
}

/// Minimal OpenQASM 2.0 reader for the gate subset the exporter emits.
pub fn parse_qasm(text: &str) -> (usize, Vec<Gate>) {
    let mut n = 0;
    let mut gates = Vec::new();
    let qubit = |s: &str| -> usize {
        let s = s.trim();
        s.strip_prefix("q[").and_then(|r| r.strip_suffix(']')).unwrap().parse().unwrap()
    };
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let line = line.strip_suffix(';').expect("statement ends with ;");
        if line.starts_with("OPENQASM") || line.starts_with("include") {
            continue;
        }
        if let Some(rest) = line.strip_prefix("qreg ") {
            n = qubit(rest);
            continue;
        }
        if let Some(rest) = line.strip_prefix("cx ") {
            let (a, b) = rest.split_once(',').unwrap();
            gates.push(Gate::cnot(qubit(a), qubit(b)));
            continue;
        }
        let (head, arg) = line.split_once(' ').unwrap();
        let open = head.find('(').unwrap();
        let angle: f64 = head[open + 1..head.len() - 1].parse().unwrap();
        let axis = match &head[..open] {
            "rx" => Axis::X,
            "ry" => Axis::Y,
            "rz" => Axis::Z,
            other => panic!("unexpected gate {other}"),
        };
        gates.push(Gate::Rotation {
            axis,
            qubit: qubit(arg),
            angle,
        });
    }
    (n, gates)
}

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn load_data(name: &str) -> Hamiltonian {
    mogvqe::pauli::parse_hamiltonian(&std::fs::read_to_string(data_path(name)).unwrap()).unwrap()
}

/// Spectral norm of `U(angles) - e^{i phi} I` for a kind-A block on (0, 1).
fn kind_a_spectral_distance(x: &[f64]) -> f64 {
    use mogvqe::ansatz::{Block, BlockKind};
    let block = Block::new(BlockKind::A, 0, 1, x[..4].to_vec()).unwrap();
    let u = circuit_matrix(2, &block.lower());
    let phase = Complex64::from_polar(1.0, x[4]);
    (u - eye(4) * phase).singular_values().max()
}

/// Smallest distance to a phase times the identity found by restarted CMA-ES
/// over the four angles and the phase.
pub fn kind_a_min_distance(restarts: usize) -> f64 {
    use mogvqe::cma::{minimize_restarts, CmaOptions};
    let opts = CmaOptions {
        sigma0: 1.0,
        f_tolerance: 1e-12,
        max_evaluations: Some(20_000),
        seed: 99,
        ..CmaOptions::default()
    };
    let best = minimize_restarts(
        kind_a_spectral_distance,
        |rng| (0..5).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect(),
        &opts,
        restarts,
    )
    .unwrap();
    best.f_best
}

/// Median wall time per generation of separable CMA-ES on a constant objective.
pub fn separable_time_per_generation(n: usize) -> f64 {
    let generations = 60;
    let lambda = 10;
    let opts = mogvqe::cma::CmaOptions {
        mode: mogvqe::cma::CmaMode::Separable,
        population: Some(lambda),
        max_evaluations: Some(generations * lambda),
        f_tolerance: 1e-300,
        ..mogvqe::cma::CmaOptions::default()
    };
    let mut samples = Vec::new();
    for _ in 0..5 {
        let start = std::time::Instant::now();
        let r = mogvqe::cma::minimize(|_| 0.0, &vec![0.0; n], &opts).unwrap();
        samples.push(start.elapsed().as_secs_f64() / r.generations as f64);
    }
    samples.sort_by(f64::total_cmp);
    samples[2]
}
