//! Pauli-string Hamiltonians.
//!
//! A Hamiltonian is a real-weighted sum of Pauli strings acting on `n_qubits`
//! qubits, plus the reference (Hartree-Fock) bitstring the ansatz starts from.
//! Qubit 0 is the least significant bit of a basis-state index, and the first
//! character of the `hf` bitstring is qubit 0.
//!
//! Expectation values are computed matrix-free: every string is compiled into
//! an X/Y flip mask, a Z/Y sign mask and an `i^ny` phase, so that
//! `P|b> = i^ny (-1)^popcount(b & z) |b ^ x>`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::StateVector;

/// Merged coefficients below this magnitude are dropped.
pub const COEFFICIENT_CUTOFF: f64 = 1e-12;

/// Default qubit limit for [`exact_ground_energy`].
pub const DEFAULT_DENSE_LIMIT: usize = 14;

/// Hilbert-space dimensions up to this size are diagonalized densely;
/// larger ones go through Lanczos.
const DENSE_DIM_MAX: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "X",
            Axis::Y => "Y",
            Axis::Z => "Z",
        })
    }
}

/// A single weighted Pauli string. Qubits absent from `ops` carry the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    pub coefficient: f64,
    pub ops: BTreeMap<usize, Axis>,
}

impl PauliTerm {
    pub fn new(coefficient: f64, ops: impl IntoIterator<Item = (usize, Axis)>) -> Self {
        Self {
            coefficient,
            ops: ops.into_iter().collect(),
        }
    }

    pub fn identity(coefficient: f64) -> Self {
        Self::new(coefficient, [])
    }

    pub fn is_identity(&self) -> bool {
        self.ops.is_empty()
    }

    fn compile(&self) -> CompiledTerm {
        let mut x_mask = 0usize;
        let mut z_mask = 0usize;
        let mut n_y = 0u32;
        for (&q, &axis) in &self.ops {
            let bit = 1usize << q;
            match axis {
                Axis::X => x_mask |= bit,
                Axis::Z => z_mask |= bit,
                Axis::Y => {
                    x_mask |= bit;
                    z_mask |= bit;
                    n_y += 1;
                }
            }
        }
        let phase = match n_y % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        CompiledTerm {
            x_mask,
            z_mask,
            weight: phase * self.coefficient,
        }
    }
}

impl fmt::Display for PauliTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.coefficient)?;
        if self.ops.is_empty() {
            return f.write_str(" I");
        }
        for (q, axis) in &self.ops {
            write!(f, " {axis}{q}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct CompiledTerm {
    x_mask: usize,
    z_mask: usize,
    /// coefficient * i^(number of Y factors)
    weight: Complex64,
}

#[inline]
fn sign(b: usize, z_mask: usize) -> f64 {
    if (b & z_mask).count_ones() & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Terms sharing one flip mask, evaluated in a single sweep.
#[derive(Debug, Clone)]
struct FlipGroup {
    x_mask: usize,
    terms: Vec<(usize, Complex64)>,
}

#[derive(Debug, Clone)]
pub struct Hamiltonian {
    n_qubits: usize,
    terms: Vec<PauliTerm>,
    hf_state: Vec<bool>,
    metadata: BTreeMap<String, String>,
    diagonal: Vec<f64>,
    off_diagonal: Vec<FlipGroup>,
}

impl Hamiltonian {
    /// Builds a Hamiltonian, merging duplicate strings and dropping
    /// near-zero coefficients.
    pub fn new(n_qubits: usize, terms: Vec<PauliTerm>, hf_state: Vec<bool>) -> Result<Self> {
        Self::with_metadata(n_qubits, terms, hf_state, BTreeMap::new())
    }

    pub fn with_metadata(
        n_qubits: usize,
        terms: Vec<PauliTerm>,
        hf_state: Vec<bool>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::Config("a Hamiltonian needs at least one qubit".into()));
        }
        if n_qubits >= usize::BITS as usize {
            return Err(Error::TooManyQubits {
                n_qubits,
                limit: usize::BITS as usize - 1,
            });
        }
        if hf_state.len() != n_qubits {
            return Err(Error::DimensionMismatch {
                expected: n_qubits,
                actual: hf_state.len(),
            });
        }
        for term in &terms {
            if !term.coefficient.is_finite() {
                return Err(Error::Config(format!(
                    "non-finite coefficient in term {term}"
                )));
            }
            if let Some((&q, _)) = term.ops.iter().next_back() {
                if q >= n_qubits {
                    return Err(Error::QubitOutOfRange { index: q, n_qubits });
                }
            }
        }
        let terms = merge_terms(terms);
        let (diagonal, off_diagonal) = compile_terms(n_qubits, &terms);
        Ok(Self {
            n_qubits,
            terms,
            hf_state,
            metadata,
            diagonal,
            off_diagonal,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    pub fn hf_state(&self) -> &[bool] {
        &self.hf_state
    }

    pub fn hf_bitstring(&self) -> String {
        self.hf_state.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    /// `<psi|H|psi>`.
    pub fn expectation(&self, psi: &StateVector) -> Result<f64> {
        let amps = psi.amplitudes();
        if amps.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: amps.len(),
            });
        }
        let mut energy: f64 = amps
            .iter()
            .zip(&self.diagonal)
            .map(|(a, d)| a.norm_sqr() * d)
            .sum();
        let mut imag = 0.0;
        for group in &self.off_diagonal {
            let mut acc = Complex64::new(0.0, 0.0);
            for (b, &amp) in amps.iter().enumerate() {
                let mut w = Complex64::new(0.0, 0.0);
                for &(z_mask, weight) in &group.terms {
                    w += weight * sign(b, z_mask);
                }
                acc += amps[b ^ group.x_mask].conj() * amp * w;
            }
            energy += acc.re;
            imag += acc.im;
        }
        debug_assert!(imag.abs() < 1e-10, "imaginary residue {imag}");
        Ok(energy)
    }

    /// `H|psi>` into `out`. Both slices must have length `2^n_qubits`.
    pub fn apply_into(&self, psi: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(psi.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        for ((o, a), d) in out.iter_mut().zip(psi).zip(&self.diagonal) {
            *o = a * d;
        }
        for group in &self.off_diagonal {
            for (b, &amp) in psi.iter().enumerate() {
                let mut w = Complex64::new(0.0, 0.0);
                for &(z_mask, weight) in &group.terms {
                    w += weight * sign(b, z_mask);
                }
                out[b ^ group.x_mask] += w * amp;
            }
        }
    }

    /// Serializes to the line-oriented text format read by [`parse_hamiltonian`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "qubits: {}", self.n_qubits);
        let _ = writeln!(out, "hf: {}", self.hf_bitstring());
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        for term in &self.terms {
            let _ = writeln!(out, "{term}");
        }
        out
    }
}

impl FromStr for Hamiltonian {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_hamiltonian(s)
    }
}

fn merge_terms(terms: Vec<PauliTerm>) -> Vec<PauliTerm> {
    let mut merged: Vec<PauliTerm> = Vec::with_capacity(terms.len());
    let mut index: BTreeMap<Vec<(usize, Axis)>, usize> = BTreeMap::new();
    for term in terms {
        let key: Vec<_> = term.ops.iter().map(|(&q, &a)| (q, a)).collect();
        match index.get(&key) {
            Some(&i) => merged[i].coefficient += term.coefficient,
            None => {
                index.insert(key, merged.len());
                merged.push(term);
            }
        }
    }
    merged.retain(|t| t.coefficient.abs() >= COEFFICIENT_CUTOFF);
    merged
}

fn compile_terms(n_qubits: usize, terms: &[PauliTerm]) -> (Vec<f64>, Vec<FlipGroup>) {
    let dim = 1usize << n_qubits;
    let mut diagonal = vec![0.0; dim];
    let mut groups: BTreeMap<usize, Vec<(usize, Complex64)>> = BTreeMap::new();
    for term in terms {
        let c = term.compile();
        if c.x_mask == 0 {
            // Pure Z strings have no Y factors, so the weight is real.
            for (b, d) in diagonal.iter_mut().enumerate() {
                *d += c.weight.re * sign(b, c.z_mask);
            }
        } else {
            groups.entry(c.x_mask).or_default().push((c.z_mask, c.weight));
        }
    }
    let off_diagonal = groups
        .into_iter()
        .map(|(x_mask, terms)| FlipGroup { x_mask, terms })
        .collect();
    (diagonal, off_diagonal)
}

/// Parses the Hamiltonian text format:
///
/// ```text
/// qubits: 2
/// hf: 10
/// # molecule=H2
/// 0.5 Z0 Z1
/// -0.25 X0   # trailing comments are fine
/// 1.0 I
/// ```
pub fn parse_hamiltonian(text: &str) -> Result<Hamiltonian> {
    let mut n_qubits: Option<usize> = None;
    let mut hf: Option<(usize, String)> = None;
    let mut metadata = BTreeMap::new();
    let mut terms = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let (content, comment) = match raw.find('#') {
            Some(pos) => (&raw[..pos], Some(raw[pos + 1..].trim())),
            None => (raw, None),
        };
        let content = content.trim();
        if content.is_empty() {
            if let Some((k, v)) = comment.and_then(|c| c.split_once('=')) {
                let k = k.trim();
                if !k.is_empty() && !k.contains(char::is_whitespace) {
                    metadata.insert(k.to_string(), v.trim().to_string());
                }
            }
            continue;
        }

        if let Some(rest) = content.strip_prefix("qubits:") {
            if n_qubits.is_some() {
                return Err(err("duplicate qubits header".into()));
            }
            let n: usize = rest
                .trim()
                .parse()
                .map_err(|_| err(format!("invalid qubit count '{}'", rest.trim())))?;
            if n == 0 {
                return Err(err("qubit count must be positive".into()));
            }
            n_qubits = Some(n);
            continue;
        }
        if let Some(rest) = content.strip_prefix("hf:") {
            let bits = rest.trim();
            if bits.is_empty() || !bits.chars().all(|c| c == '0' || c == '1') {
                return Err(err(format!("invalid hf bitstring '{bits}'")));
            }
            hf = Some((line_no, bits.to_string()));
            continue;
        }

        let n = n_qubits.ok_or_else(|| err("term before 'qubits:' header".into()))?;
        let mut tokens = content.split_whitespace();
        let coeff_tok = tokens.next().unwrap_or_default();
        let coefficient: f64 = coeff_tok
            .parse()
            .map_err(|_| err(format!("invalid coefficient '{coeff_tok}'")))?;
        if !coefficient.is_finite() {
            return Err(err(format!("non-finite coefficient '{coeff_tok}'")));
        }
        let ops_tokens: Vec<&str> = tokens.collect();
        let mut ops = BTreeMap::new();
        if ops_tokens.is_empty() {
            return Err(err("term has no operators (use 'I' for identity)".into()));
        }
        if ops_tokens != ["I"] {
            for tok in ops_tokens {
                let (axis, idx) = tok.split_at(tok.chars().next().map_or(0, char::len_utf8));
                let axis = match axis {
                    "X" => Axis::X,
                    "Y" => Axis::Y,
                    "Z" => Axis::Z,
                    _ => return Err(err(format!("invalid operator '{tok}'"))),
                };
                let q: usize = idx
                    .parse()
                    .map_err(|_| err(format!("invalid qubit index in '{tok}'")))?;
                if q >= n {
                    return Err(err(format!(
                        "qubit index {q} out of range for {n} qubits"
                    )));
                }
                if ops.insert(q, axis).is_some() {
                    return Err(err(format!("qubit {q} appears twice")));
                }
            }
        }
        terms.push(PauliTerm { coefficient, ops });
    }

    let n = n_qubits.ok_or(Error::Parse {
        line: 1,
        message: "missing 'qubits:' header".into(),
    })?;
    let (hf_line, bits) = hf.ok_or(Error::Parse {
        line: 2,
        message: "missing 'hf:' header".into(),
    })?;
    if bits.len() != n {
        return Err(Error::Parse {
            line: hf_line,
            message: format!("hf bitstring has length {}, expected {n}", bits.len()),
        });
    }
    let hf_state = bits.chars().map(|c| c == '1').collect();
    Hamiltonian::with_metadata(n, terms, hf_state, metadata)
}

/// Lowest eigenvalue of `h`, refusing systems above [`DEFAULT_DENSE_LIMIT`] qubits.
pub fn exact_ground_energy(h: &Hamiltonian) -> Result<f64> {
    exact_ground_energy_with_limit(h, DEFAULT_DENSE_LIMIT)
}

pub fn exact_ground_energy_with_limit(h: &Hamiltonian, limit: usize) -> Result<f64> {
    if h.n_qubits() > limit {
        return Err(Error::TooManyQubits {
            n_qubits: h.n_qubits(),
            limit,
        });
    }
    if h.dim() <= DENSE_DIM_MAX {
        Ok(dense_ground_energy(h))
    } else {
        Ok(lanczos_ground_energy(h))
    }
}

fn dense_ground_energy(h: &Hamiltonian) -> f64 {
    let dim = h.dim();
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    let mut e = vec![Complex64::new(0.0, 0.0); dim];
    let mut col = vec![Complex64::new(0.0, 0.0); dim];
    for j in 0..dim {
        e.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        e[j] = Complex64::new(1.0, 0.0);
        h.apply_into(&e, &mut col);
        for (i, v) in col.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Matrix-free Lanczos with full reorthogonalization.
pub fn lanczos_ground_energy(h: &Hamiltonian) -> f64 {
    const MAX_STEPS: usize = 400;
    const RESIDUAL_TOL: f64 = 1e-10;
    let dim = h.dim();
    let max_steps = MAX_STEPS.min(dim);

    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2c_5eed);
    let mut v: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    normalize(&mut v);

    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(max_steps);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![Complex64::new(0.0, 0.0); dim];
    let mut estimate = f64::INFINITY;

    for k in 0..max_steps {
        h.apply_into(&v, &mut w);
        let alpha = dot(&v, &w).re;
        basis.push(v.clone());
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let beta = norm(&w);
        alphas.push(alpha);

        let (theta, last) = tridiagonal_min(&alphas, &betas);
        estimate = theta;
        let residual = beta * last.abs();
        if residual < RESIDUAL_TOL || beta < 1e-14 || k + 1 == max_steps {
            break;
        }
        betas.push(beta);
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / beta;
        }
    }
    estimate
}

/// Smallest eigenvalue of the symmetric tridiagonal matrix and the last
/// component of its eigenvector.
fn tridiagonal_min(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    let k = alphas.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (idx, &theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty tridiagonal");
    (theta, eig.eigenvectors[(k - 1, idx)])
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(a: &mut [Complex64]) {
    let n = norm(a);
    a.iter_mut().for_each(|x| *x /= n);
}

/// Total magnetization `sum_i <Z_i>`.
pub fn magnetization(psi: &StateVector) -> f64 {
    let n = psi.n_qubits() as i64;
    psi.amplitudes()
        .iter()
        .enumerate()
        .map(|(b, a)| a.norm_sqr() * (n - 2 * b.count_ones() as i64) as f64)
        .sum()
}

/// `<prod_i Z_i>`.
pub fn parity(psi: &StateVector) -> f64 {
    psi.amplitudes()
        .iter()
        .enumerate()
        .map(|(b, a)| a.norm_sqr() * sign(b, usize::MAX))
        .sum()
}
