//! Dense statevector simulator.
//!
//! Amplitude index `b` encodes the computational basis state with qubit `q`
//! set iff bit `q` of `b` is set. Single-qubit kernels walk amplitude pairs
//! `(i, i + 2^q)` in stride blocks; CNOT is a masked pairwise swap.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::pauli::Axis;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Product state `|bits>`; `bits[0]` is qubit 0.
    pub fn basis_state(n_qubits: usize, bits: &str) -> Result<Self> {
        let parsed: Vec<bool> = bits
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Config(format!("invalid bit '{c}' in '{bits}'"))),
            })
            .collect::<Result<_>>()?;
        Self::from_bits(n_qubits, &parsed)
    }

    pub fn from_bits(n_qubits: usize, bits: &[bool]) -> Result<Self> {
        if bits.len() != n_qubits {
            return Err(Error::DimensionMismatch {
                expected: n_qubits,
                actual: bits.len(),
            });
        }
        let mut psi = Self::zero(n_qubits)?;
        psi.reset_to_bits(bits);
        Ok(psi)
    }

    /// `|0...0>`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits >= usize::BITS as usize {
            return Err(Error::Config(format!("unsupported qubit count {n_qubits}")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        if n_qubits == 0 || n_qubits >= usize::BITS as usize {
            return Err(Error::Config(format!("unsupported qubit count {n_qubits}")));
        }
        if amps.len() != 1 << n_qubits {
            return Err(Error::DimensionMismatch {
                expected: 1 << n_qubits,
                actual: amps.len(),
            });
        }
        Ok(Self { n_qubits, amps })
    }

    /// Overwrites the state with `|bits>` without reallocating.
    pub fn reset_to_bits(&mut self, bits: &[bool]) {
        debug_assert_eq!(bits.len(), self.n_qubits);
        let index = basis_index(bits);
        self.amps.fill(Complex64::new(0.0, 0.0));
        self.amps[index] = Complex64::new(1.0, 0.0);
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q < self.n_qubits {
            Ok(())
        } else {
            Err(Error::QubitOutOfRange {
                index: q,
                n_qubits: self.n_qubits,
            })
        }
    }

    /// Applies `exp(-i angle/2 P_axis)` on `qubit`.
    pub fn apply_rotation(&mut self, axis: Axis, qubit: usize, angle: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        let (s, c) = (0.5 * angle).sin_cos();
        let step = 1usize << qubit;
        match axis {
            Axis::X => {
                let mis = Complex64::new(0.0, -s);
                for_each_pair(&mut self.amps, step, |a0, a1| {
                    let (x0, x1) = (*a0, *a1);
                    *a0 = x0 * c + x1 * mis;
                    *a1 = x0 * mis + x1 * c;
                });
            }
            Axis::Y => for_each_pair(&mut self.amps, step, |a0, a1| {
                let (x0, x1) = (*a0, *a1);
                *a0 = x0 * c - x1 * s;
                *a1 = x0 * s + x1 * c;
            }),
            Axis::Z => {
                let lo = Complex64::new(c, -s);
                let hi = Complex64::new(c, s);
                for_each_pair(&mut self.amps, step, |a0, a1| {
                    *a0 *= lo;
                    *a1 *= hi;
                });
            }
        }
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::SameQubit(control));
        }
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        let dim = self.amps.len();
        // Enumerate indices with the control bit set and the target bit clear.
        let (lo, hi) = if cbit < tbit { (cbit, tbit) } else { (tbit, cbit) };
        let mut i = 0;
        while i < dim {
            if i & hi != 0 {
                i += hi;
                continue;
            }
            if i & lo != 0 {
                i += lo;
                continue;
            }
            let base = i | cbit;
            self.amps.swap(base, base | tbit);
            i += 1;
        }
        Ok(())
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        match *gate {
            Gate::Rotation { axis, qubit, angle } => self.apply_rotation(axis, qubit, angle),
            Gate::Cnot { control, target } => self.apply_cnot(control, target),
        }
    }

    pub fn apply_all<'a>(&mut self, gates: impl IntoIterator<Item = &'a Gate>) -> Result<()> {
        gates.into_iter().try_for_each(|g| self.apply(g))
    }
}

#[inline]
fn for_each_pair(amps: &mut [Complex64], step: usize, mut f: impl FnMut(&mut Complex64, &mut Complex64)) {
    for block in amps.chunks_exact_mut(2 * step) {
        let (lo, hi) = block.split_at_mut(step);
        for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
            f(a0, a1);
        }
    }
}

/// `sum_i bits[i] * 2^i`.
pub fn basis_index(bits: &[bool]) -> usize {
    bits.iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .fold(0, |acc, (i, _)| acc | (1 << i))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Rotation { axis: Axis, qubit: usize, angle: f64 },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn rx(qubit: usize, angle: f64) -> Self {
        Gate::Rotation { axis: Axis::X, qubit, angle }
    }

    pub fn ry(qubit: usize, angle: f64) -> Self {
        Gate::Rotation { axis: Axis::Y, qubit, angle }
    }

    pub fn rz(qubit: usize, angle: f64) -> Self {
        Gate::Rotation { axis: Axis::Z, qubit, angle }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Gate::Cnot { control, target }
    }

    pub fn is_cnot(&self) -> bool {
        matches!(self, Gate::Cnot { .. })
    }
}

/// Applies `gates` in order to a copy of `psi0`.
pub fn run_circuit(psi0: &StateVector, gates: &[Gate]) -> Result<StateVector> {
    let mut psi = psi0.clone();
    psi.apply_all(gates)?;
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn basis_state_indexing() {
        let s = StateVector::basis_state(2, "00").unwrap();
        assert_eq!(s.amplitudes()[0], Complex64::new(1.0, 0.0));
        let s = StateVector::basis_state(2, "10").unwrap();
        assert_eq!(s.amplitudes()[1], Complex64::new(1.0, 0.0));
        let s = StateVector::basis_state(3, "011").unwrap();
        assert_eq!(s.amplitudes()[6], Complex64::new(1.0, 0.0));
        assert_eq!(s.norm_sqr(), 1.0);
    }

    #[test]
    fn basis_state_length_mismatch() {
        assert!(matches!(
            StateVector::basis_state(3, "01"),
            Err(Error::DimensionMismatch { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn ry_zero_is_identity() {
        let mut s = StateVector::basis_state(2, "10").unwrap();
        let before = s.clone();
        s.apply_rotation(Axis::Y, 1, 0.0).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn ry_pi_flips_zero_to_one() {
        let mut s = StateVector::basis_state(1, "0").unwrap();
        s.apply_rotation(Axis::Y, 0, PI).unwrap();
        assert!(s.amplitudes()[0].norm() < 1e-16);
        assert!((s.amplitudes()[1] - Complex64::new(1.0, 0.0)).norm() < 1e-16);
    }

    #[test]
    fn rotation_out_of_range() {
        let mut s = StateVector::zero(2).unwrap();
        assert!(matches!(
            s.apply_rotation(Axis::X, 2, 0.1),
            Err(Error::QubitOutOfRange { index: 2, n_qubits: 2 })
        ));
    }

    #[test]
    fn cnot_truth_table() {
        let mut s = StateVector::basis_state(2, "10").unwrap();
        s.apply_cnot(0, 1).unwrap();
        assert_eq!(s, StateVector::basis_state(2, "11").unwrap());
        let mut s = StateVector::basis_state(2, "00").unwrap();
        s.apply_cnot(0, 1).unwrap();
        assert_eq!(s, StateVector::basis_state(2, "00").unwrap());
        let mut s = StateVector::basis_state(3, "001").unwrap();
        s.apply_cnot(2, 0).unwrap();
        assert_eq!(s, StateVector::basis_state(3, "101").unwrap());
    }

    #[test]
    fn cnot_equal_indices() {
        let mut s = StateVector::zero(2).unwrap();
        assert!(matches!(s.apply_cnot(1, 1), Err(Error::SameQubit(1))));
    }

    #[test]
    fn run_circuit_order() {
        let psi0 = StateVector::basis_state(2, "00").unwrap();
        assert_eq!(run_circuit(&psi0, &[]).unwrap(), psi0);
        let out = run_circuit(&psi0, &[Gate::ry(0, PI)]).unwrap();
        let expected = StateVector::basis_state(2, "10").unwrap();
        for (a, b) in out.amplitudes().iter().zip(expected.amplitudes()) {
            assert!((a - b).norm() < 1e-15);
        }
        // X then CNOT differs from CNOT then X
        let a = run_circuit(&psi0, &[Gate::ry(0, PI), Gate::cnot(0, 1)]).unwrap();
        assert!((a.amplitudes()[3].norm() - 1.0).abs() < 1e-15);
        let b = run_circuit(&psi0, &[Gate::cnot(0, 1), Gate::ry(0, PI)]).unwrap();
        assert!((b.amplitudes()[1].norm() - 1.0).abs() < 1e-15);
    }
}
