//! Block-structured circuit ansätze.
//!
//! A [`Circuit`] is an ordered list of two-qubit [`Block`]s, each a fixed
//! gate template with its own rotation angles:
//!
//! * kind A: `RY c, RY t, CNOT(c,t), RY c, RY t` (4 angles, 1 CNOT)
//! * kind B: a basis-dressed controlled-RY,
//!   `RY(t1) c, RZ(t2) c, RZ(t3) t, RY(t4/2) t, CNOT, RY(-t4/2) t, CNOT,
//!   RZ(-t3) t, RZ(t5) t, RZ(-t2) c, RY(-t1) c` (5 angles, 2 CNOTs).
//!   With `t4 = t5 = 0` it is exactly the identity for any `t1, t2, t3`.
//!
//! The genetic search mutates circuits by inserting and deleting blocks; the
//! hardware-efficient baseline ([`HeaCircuit`]) is a fixed layered template.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::Axis;
use crate::sim::{Gate, StateVector};

/// Relative weights of insert, delete and large-scale mutations.
pub const MUTATION_WEIGHTS: [f64; 3] = [2.0, 1.0, 0.25];
/// Number of insert/delete steps in one large-scale mutation.
pub const LARGE_SCALE_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum BlockKind {
    #[default]
    A,
    B,
}

impl BlockKind {
    pub fn n_angles(self) -> usize {
        match self {
            BlockKind::A => 4,
            BlockKind::B => 5,
        }
    }

    pub fn n_cnots(self) -> usize {
        match self {
            BlockKind::A => 1,
            BlockKind::B => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    pub control: usize,
    pub target: usize,
    pub angles: Vec<f64>,
}

impl Block {
    pub fn new(kind: BlockKind, control: usize, target: usize, angles: Vec<f64>) -> Result<Self> {
        let block = Self {
            kind,
            control,
            target,
            angles,
        };
        block.validate(usize::MAX)?;
        Ok(block)
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.control == self.target {
            return Err(Error::SameQubit(self.control));
        }
        for q in [self.control, self.target] {
            if q >= n_qubits {
                return Err(Error::QubitOutOfRange { index: q, n_qubits });
            }
        }
        if self.angles.len() != self.kind.n_angles() {
            return Err(Error::DimensionMismatch {
                expected: self.kind.n_angles(),
                actual: self.angles.len(),
            });
        }
        Ok(())
    }

    /// The block's gate sequence using its stored angles.
    pub fn lower(&self) -> Vec<Gate> {
        let mut out = Vec::with_capacity(11);
        lower_into(self.kind, self.control, self.target, &self.angles, &mut out);
        out
    }
}

/// Gate sequence of a block; see the module docs for the layouts.
pub fn lower_block(b: &Block) -> Vec<Gate> {
    b.lower()
}

fn lower_into(kind: BlockKind, c: usize, t: usize, th: &[f64], out: &mut Vec<Gate>) {
    match kind {
        BlockKind::A => out.extend([
            Gate::ry(c, th[0]),
            Gate::ry(t, th[1]),
            Gate::cnot(c, t),
            Gate::ry(c, th[2]),
            Gate::ry(t, th[3]),
        ]),
        BlockKind::B => out.extend([
            Gate::ry(c, th[0]),
            Gate::rz(c, th[1]),
            Gate::rz(t, th[2]),
            Gate::ry(t, 0.5 * th[3]),
            Gate::cnot(c, t),
            Gate::ry(t, -0.5 * th[3]),
            Gate::cnot(c, t),
            Gate::rz(t, -th[2]),
            Gate::rz(t, th[4]),
            Gate::rz(c, -th[1]),
            Gate::ry(c, -th[0]),
        ]),
    }
}

fn apply_block(
    psi: &mut StateVector,
    kind: BlockKind,
    c: usize,
    t: usize,
    th: &[f64],
) -> Result<()> {
    match kind {
        BlockKind::A => {
            psi.apply_rotation(Axis::Y, c, th[0])?;
            psi.apply_rotation(Axis::Y, t, th[1])?;
            psi.apply_cnot(c, t)?;
            psi.apply_rotation(Axis::Y, c, th[2])?;
            psi.apply_rotation(Axis::Y, t, th[3])
        }
        BlockKind::B => {
            let mut gates = Vec::with_capacity(11);
            lower_into(kind, c, t, th, &mut gates);
            psi.apply_all(&gates)
        }
    }
}

/// Ordered list of blocks on `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub n_qubits: usize,
    pub blocks: Vec<Block>,
}

impl Circuit {
    pub fn new(n_qubits: usize, blocks: Vec<Block>) -> Result<Self> {
        let c = Self { n_qubits, blocks };
        c.validate()?;
        Ok(c)
    }

    pub fn empty(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            blocks: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.blocks.iter().try_for_each(|b| b.validate(self.n_qubits))
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Total number of free angles.
    pub fn n_params(&self) -> usize {
        self.blocks.iter().map(|b| b.kind.n_angles()).sum()
    }

    pub fn cnot_count(&self) -> usize {
        self.blocks.iter().map(|b| b.kind.n_cnots()).sum()
    }

    /// Concatenated stored angles, block by block.
    pub fn angles(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.angles.iter().copied()).collect()
    }

    /// Copy of the circuit with the stored angles replaced.
    pub fn with_angles(&self, angles: &[f64]) -> Result<Self> {
        self.check_angles(angles)?;
        let mut out = self.clone();
        let mut offset = 0;
        for b in &mut out.blocks {
            let k = b.kind.n_angles();
            b.angles.copy_from_slice(&angles[offset..offset + k]);
            offset += k;
        }
        Ok(out)
    }

    fn check_angles(&self, angles: &[f64]) -> Result<()> {
        if angles.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                actual: angles.len(),
            });
        }
        Ok(())
    }

    /// Lowered gate sequence with the given angle vector.
    pub fn gates(&self, angles: &[f64]) -> Result<Vec<Gate>> {
        self.check_angles(angles)?;
        let mut out = Vec::with_capacity(self.len() * 11);
        let mut offset = 0;
        for b in &self.blocks {
            let k = b.kind.n_angles();
            lower_into(b.kind, b.control, b.target, &angles[offset..offset + k], &mut out);
            offset += k;
        }
        Ok(out)
    }

    /// Applies the circuit in place without materializing the gate list.
    pub fn apply(&self, psi: &mut StateVector, angles: &[f64]) -> Result<()> {
        self.check_angles(angles)?;
        let mut offset = 0;
        for b in &self.blocks {
            let k = b.kind.n_angles();
            apply_block(psi, b.kind, b.control, b.target, &angles[offset..offset + k])?;
            offset += k;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Reads a circuit from JSON. Accepts the `{n_qubits, blocks}` object
    /// written by [`Circuit::to_json`], or a bare array of blocks, in which
    /// case the register size is the highest referenced qubit plus one.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let circuit = if value.is_array() {
            let blocks: Vec<Block> = serde_json::from_value(value)?;
            let n_qubits = blocks
                .iter()
                .map(|b| b.control.max(b.target) + 1)
                .max()
                .unwrap_or(1);
            Circuit { n_qubits, blocks }
        } else {
            serde_json::from_value(value)?
        };
        circuit.validate()?;
        Ok(circuit)
    }
}

pub fn cnot_count(c: &Circuit) -> usize {
    c.cnot_count()
}

/// Draws an angle uniformly from `(-pi, pi]`.
pub fn random_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    PI - 2.0 * PI * rng.random::<f64>()
}

/// How new blocks are generated for initialization and insertion.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlockSampler {
    pub kind: BlockKind,
    /// Kind B only: start new blocks at the identity assignment
    /// (`t4 = t5 = 0`, `t1..t3` random) instead of fully random angles.
    pub identity_init: bool,
}

impl BlockSampler {
    pub fn new(kind: BlockKind) -> Self {
        Self {
            kind,
            identity_init: false,
        }
    }

    pub fn angles<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut angles: Vec<f64> = (0..self.kind.n_angles()).map(|_| random_angle(rng)).collect();
        if self.kind == BlockKind::B && self.identity_init {
            angles[3] = 0.0;
            angles[4] = 0.0;
        }
        angles
    }

    pub fn block_on<R: Rng + ?Sized>(&self, control: usize, target: usize, rng: &mut R) -> Block {
        Block {
            kind: self.kind,
            control,
            target,
            angles: self.angles(rng),
        }
    }

    /// New block on a uniformly random ordered pair of distinct qubits.
    pub fn random_block<R: Rng + ?Sized>(&self, n_qubits: usize, rng: &mut R) -> Block {
        let (c, t) = random_pair(n_qubits, rng);
        self.block_on(c, t, rng)
    }
}

fn random_pair<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> (usize, usize) {
    debug_assert!(n_qubits >= 2);
    let c = rng.random_range(0..n_qubits);
    let mut t = rng.random_range(0..n_qubits - 1);
    if t >= c {
        t += 1;
    }
    (c, t)
}

/// Checkerboard of nearest-neighbour blocks: pairs `(0,1), (2,3), ...`
/// then `(1,2), (3,4), ...`, `n_qubits - 1` blocks in total.
pub fn checkerboard_circuit<R: Rng + ?Sized>(
    n_qubits: usize,
    sampler: &BlockSampler,
    rng: &mut R,
) -> Circuit {
    let blocks = (0..n_qubits - 1)
        .step_by(2)
        .chain((1..n_qubits - 1).step_by(2))
        .map(|q| sampler.block_on(q, q + 1, rng))
        .collect();
    Circuit { n_qubits, blocks }
}

/// Initial individual: the checkerboard with probability 1/2, otherwise
/// `U[N, 4N]` blocks on random qubit pairs.
pub fn init_circuit<R: Rng + ?Sized>(
    n_qubits: usize,
    sampler: &BlockSampler,
    rng: &mut R,
) -> Result<Circuit> {
    if n_qubits < 2 {
        return Err(Error::Config(format!(
            "circuit initialization needs at least 2 qubits, got {n_qubits}"
        )));
    }
    if rng.random_bool(0.5) {
        Ok(checkerboard_circuit(n_qubits, sampler, rng))
    } else {
        let count = rng.random_range(n_qubits..=4 * n_qubits);
        let blocks = (0..count).map(|_| sampler.random_block(n_qubits, rng)).collect();
        Ok(Circuit { n_qubits, blocks })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MutationOp {
    Insert,
    Delete,
    LargeScale,
}

fn insert_block<R: Rng + ?Sized>(c: &mut Circuit, sampler: &BlockSampler, rng: &mut R) {
    if c.n_qubits < 2 {
        return;
    }
    let block = sampler.random_block(c.n_qubits, rng);
    let pos = rng.random_range(0..=c.blocks.len());
    c.blocks.insert(pos, block);
}

fn delete_block<R: Rng + ?Sized>(c: &mut Circuit, rng: &mut R) {
    if !c.blocks.is_empty() {
        let pos = rng.random_range(0..c.blocks.len());
        c.blocks.remove(pos);
    }
}

/// Mutated copy of `c` together with the operation that was applied.
pub fn mutate_traced<R: Rng + ?Sized>(
    c: &Circuit,
    sampler: &BlockSampler,
    rng: &mut R,
) -> (Circuit, MutationOp) {
    let choice = WeightedIndex::new(MUTATION_WEIGHTS).expect("positive weights");
    let mut out = c.clone();
    let op = match choice.sample(rng) {
        0 => {
            insert_block(&mut out, sampler, rng);
            MutationOp::Insert
        }
        1 => {
            delete_block(&mut out, rng);
            MutationOp::Delete
        }
        _ => {
            let step = WeightedIndex::new(&MUTATION_WEIGHTS[..2]).expect("positive weights");
            for _ in 0..LARGE_SCALE_STEPS {
                if step.sample(rng) == 0 {
                    insert_block(&mut out, sampler, rng);
                } else {
                    delete_block(&mut out, rng);
                }
            }
            MutationOp::LargeScale
        }
    };
    (out, op)
}

pub fn mutate<R: Rng + ?Sized>(c: &Circuit, sampler: &BlockSampler, rng: &mut R) -> Circuit {
    mutate_traced(c, sampler, rng).0
}

/// Hardware-efficient layered ansatz.
///
/// Layer 0 is `RZ RX RZ` on every qubit; each of the `layers` subsequent
/// layers is a CNOT chain `i -> i+1` followed by `RX RZ` on every qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaCircuit {
    pub n_qubits: usize,
    pub layers: usize,
}

impl HeaCircuit {
    pub fn new(n_qubits: usize, layers: usize) -> Self {
        Self { n_qubits, layers }
    }

    pub fn n_params(&self) -> usize {
        3 * self.n_qubits + 2 * self.layers * self.n_qubits
    }

    pub fn cnot_count(&self) -> usize {
        self.layers * self.n_qubits.saturating_sub(1)
    }

    pub fn gates(&self, angles: &[f64]) -> Result<Vec<Gate>> {
        if angles.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                actual: angles.len(),
            });
        }
        let n = self.n_qubits;
        let mut it = angles.iter().copied();
        let mut next = || it.next().expect("angle count checked");
        let mut gates = Vec::with_capacity(self.n_params() + self.cnot_count());
        for q in 0..n {
            gates.push(Gate::rz(q, next()));
            gates.push(Gate::rx(q, next()));
            gates.push(Gate::rz(q, next()));
        }
        for _ in 0..self.layers {
            gates.extend((0..n.saturating_sub(1)).map(|q| Gate::cnot(q, q + 1)));
            for q in 0..n {
                gates.push(Gate::rx(q, next()));
                gates.push(Gate::rz(q, next()));
            }
        }
        Ok(gates)
    }
}

pub fn hea_circuit(n_qubits: usize, layers: usize) -> HeaCircuit {
    HeaCircuit::new(n_qubits, layers)
}

/// OpenQASM 2.0 text for a gate list.
pub fn gates_to_qasm(n_qubits: usize, gates: &[Gate]) -> String {
    let mut out = String::from("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
    let _ = writeln!(out, "qreg q[{n_qubits}];");
    for g in gates {
        let _ = match *g {
            Gate::Rotation { axis, qubit, angle } => {
                let name = match axis {
                    Axis::X => "rx",
                    Axis::Y => "ry",
                    Axis::Z => "rz",
                };
                writeln!(out, "{name}({angle}) q[{qubit}];")
            }
            Gate::Cnot { control, target } => writeln!(out, "cx q[{control}],q[{target}];"),
        };
    }
    out
}

pub fn export_qasm(c: &Circuit, angles: &[f64]) -> Result<String> {
    Ok(gates_to_qasm(c.n_qubits, &c.gates(angles)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn lowering_gate_counts() {
        let a = Block::new(BlockKind::A, 0, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let g = a.lower();
        assert_eq!(g.iter().filter(|g| g.is_cnot()).count(), 1);
        assert_eq!(g.len(), 5);
        let b = Block::new(BlockKind::B, 1, 0, vec![0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let g = b.lower();
        assert_eq!(g.iter().filter(|g| g.is_cnot()).count(), 2);
        assert_eq!(g.iter().filter(|g| !g.is_cnot()).count(), 9);
    }

    #[test]
    fn block_validation() {
        assert!(matches!(
            Block::new(BlockKind::A, 1, 1, vec![0.0; 4]),
            Err(Error::SameQubit(1))
        ));
        assert!(matches!(
            Block::new(BlockKind::B, 0, 1, vec![0.0; 4]),
            Err(Error::DimensionMismatch { expected: 5, actual: 4 })
        ));
        let b = Block::new(BlockKind::A, 0, 3, vec![0.0; 4]).unwrap();
        assert!(matches!(
            Circuit::new(3, vec![b]),
            Err(Error::QubitOutOfRange { index: 3, n_qubits: 3 })
        ));
    }

    #[test]
    fn cnot_counts() {
        assert_eq!(Circuit::empty(4).cnot_count(), 0);
        let mut r = rng(1);
        let a = BlockSampler::new(BlockKind::A);
        let b = BlockSampler::new(BlockKind::B);
        let seven_a = Circuit::new(8, (0..7).map(|q| a.block_on(q, q + 1, &mut r)).collect()).unwrap();
        assert_eq!(cnot_count(&seven_a), 7);
        let mut blocks: Vec<Block> = (0..3).map(|q| a.block_on(q, q + 1, &mut r)).collect();
        blocks.extend((0..2).map(|q| b.block_on(q + 1, q, &mut r)));
        let mixed = Circuit::new(4, blocks).unwrap();
        assert_eq!(mixed.cnot_count(), 7);
        assert_eq!(mixed.n_params(), 3 * 4 + 2 * 5);
    }

    #[test]
    fn checkerboard_pairs() {
        let s = BlockSampler::default();
        let c = checkerboard_circuit(8, &s, &mut rng(0));
        let pairs: Vec<_> = c.blocks.iter().map(|b| (b.control, b.target)).collect();
        assert_eq!(pairs, vec![(0, 1), (2, 3), (4, 5), (6, 7), (1, 2), (3, 4), (5, 6)]);
        let c = checkerboard_circuit(2, &s, &mut rng(0));
        assert_eq!(c.blocks.len(), 1);
        assert_eq!((c.blocks[0].control, c.blocks[0].target), (0, 1));
    }

    #[test]
    fn init_branches() {
        let s = BlockSampler::default();
        let mut r = rng(7);
        let (mut saw_checker, mut saw_random) = (false, false);
        for _ in 0..200 {
            let c = init_circuit(8, &s, &mut r).unwrap();
            c.validate().unwrap();
            let is_checker = c.len() == 7
                && c.blocks.iter().all(|b| b.target == b.control + 1);
            if is_checker {
                saw_checker = true;
            } else {
                assert!((8..=32).contains(&c.len()), "{}", c.len());
                saw_random = true;
            }
            for a in c.angles() {
                assert!(a > -PI && a <= PI);
            }
        }
        assert!(saw_checker && saw_random);
        assert!(init_circuit(1, &s, &mut r).is_err());
    }

    #[test]
    fn mutation_probabilities() {
        let total: f64 = MUTATION_WEIGHTS.iter().sum();
        let p: Vec<f64> = MUTATION_WEIGHTS.iter().map(|w| w / total).collect();
        for (got, want) in p.iter().zip([0.6154, 0.3077, 0.0769]) {
            assert!((got - want).abs() < 1e-4);
        }
    }

    #[test]
    fn delete_on_empty_is_noop() {
        let mut c = Circuit::empty(3);
        delete_block(&mut c, &mut rng(0));
        assert!(c.is_empty());
        let s = BlockSampler::default();
        let mut r = rng(3);
        for _ in 0..200 {
            let m = mutate(&Circuit::empty(3), &s, &mut r);
            assert_eq!(m.n_qubits, 3);
            m.validate().unwrap();
        }
    }

    #[test]
    fn mutate_leaves_input_unchanged() {
        let s = BlockSampler::default();
        let mut r = rng(11);
        let c = init_circuit(5, &s, &mut r).unwrap();
        let before = c.clone();
        for _ in 0..50 {
            let _ = mutate(&c, &s, &mut r);
        }
        assert_eq!(c, before);
    }

    #[test]
    fn identity_init_for_kind_b() {
        let s = BlockSampler {
            kind: BlockKind::B,
            identity_init: true,
        };
        let a = s.angles(&mut rng(2));
        assert_eq!(a.len(), 5);
        assert_eq!((a[3], a[4]), (0.0, 0.0));
    }

    #[test]
    fn hea_counts() {
        let h = hea_circuit(8, 10);
        assert_eq!(h.cnot_count(), 70);
        assert_eq!(hea_circuit(8, 30).cnot_count(), 210);
        let h0 = hea_circuit(4, 0);
        assert_eq!(h0.cnot_count(), 0);
        assert_eq!(h0.n_params(), 12);
        let g = h.gates(&vec![0.0; h.n_params()]).unwrap();
        assert_eq!(g.iter().filter(|g| g.is_cnot()).count(), 70);
        assert!(h.gates(&[0.0]).is_err());
    }

    #[test]
    fn qasm_export() {
        let empty = export_qasm(&Circuit::empty(2), &[]).unwrap();
        assert_eq!(empty, "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];\n");
        let c = Circuit::new(2, vec![Block::new(BlockKind::A, 0, 1, vec![0.0; 4]).unwrap()]).unwrap();
        let text = export_qasm(&c, &[0.5, -0.25, 1.0, 2.0]).unwrap();
        let body: Vec<&str> = text.lines().skip(3).collect();
        assert_eq!(
            body,
            vec![
                "ry(0.5) q[0];",
                "ry(-0.25) q[1];",
                "cx q[0],q[1];",
                "ry(1) q[0];",
                "ry(2) q[1];"
            ]
        );
        assert!(export_qasm(&c, &[0.0]).is_err());
    }

    #[test]
    fn json_roundtrip_and_bare_array() {
        let s = BlockSampler::default();
        let c = init_circuit(4, &s, &mut rng(5)).unwrap();
        let back = Circuit::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(c, back);
        let bare = r#"[{"kind":"A","control":2,"target":0,"angles":[0,0,0,0]}]"#;
        let c = Circuit::from_json(bare).unwrap();
        assert_eq!(c.n_qubits, 3);
        let bad = r#"[{"kind":"A","control":0,"target":0,"angles":[0,0,0,0]}]"#;
        assert!(Circuit::from_json(bad).is_err());
    }

    #[test]
    fn with_angles_roundtrip() {
        let s = BlockSampler::new(BlockKind::B);
        let c = init_circuit(3, &s, &mut rng(9)).unwrap();
        let angles: Vec<f64> = (0..c.n_params()).map(|i| i as f64 * 0.1).collect();
        assert_eq!(c.with_angles(&angles).unwrap().angles(), angles);
    }
}
