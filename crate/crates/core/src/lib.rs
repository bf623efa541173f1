//! Multiobjective genetic variational quantum eigensolver.
//!
//! Circuit topologies built from two-qubit gate blocks are evolved with
//! NSGA-II against two objectives, the variational energy and the CNOT
//! count. Each topology's rotation angles are optimized with CMA-ES on a
//! built-in statevector simulator.
//!
//! Modules, bottom-up:
//! * [`pauli`]: Pauli-string Hamiltonians, expectation values, exact ground energy
//! * [`sim`]: statevector simulator
//! * [`ansatz`]: gate blocks, circuits, mutation, the layered baseline, QASM export
//! * [`cma`]: CMA-ES and sep-CMA-ES
//! * [`moo`]: non-dominated sorting, crowding distance, environmental selection
//! * [`driver`]: the search loop, baseline runner and run archiving

pub mod ansatz;
pub mod cma;
pub mod driver;
pub mod error;
pub mod moo;
pub mod pauli;
pub mod seeds;
pub mod sim;

pub use error::{Error, Result};
