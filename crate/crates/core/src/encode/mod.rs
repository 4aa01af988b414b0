//! Steane encoding with traps, permutation and Pauli pads; transversal
//! Clifford measurement; the prover's consistency predicate; and the full
//! encoded session.

pub mod clifford;
pub mod key;
pub mod measure;
pub mod predicate;
pub mod session;
pub mod steane;
#[cfg(test)]
mod tests;

pub use clifford::{
    conjugation_residual, decompose_term, identify_pauli, pauli_conjugate, pauli_conjugate_unitary, stabilizer_basis,
    stabilizer_states, CliffordCircuit, CliffordGate, Pauli, PauliConjugation, TermDecomposition,
};
pub use key::{decode_register, encode_register, pad_twirl, EncodingKey, Trap, TWO_N};
pub use measure::{code_outcome_law, measure_term, measure_term_shots, transversal_clifford_measure, PauliKind, PhysicalError};
pub use predicate::{predicate_r, reduce_rtv_statement, rtv_witness, unpad_outcome, RtvStatement, RtvWitness};
pub use session::{
    decode_soundness_echo, run_final_protocol, Abort, Branch, Corruption, EchoReport, FinalProtocol, SessionConfig,
    SessionRecord, Stage,
};
pub use steane::{codewords, coset, steane_decode, steane_encode, N};

use thiserror::Error;

use crate::lhi::LhiError;
use crate::protocol::ProtocolError;
use crate::qsim::QsimError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("{0}")]
    Lhi(String),
    #[error(transparent)]
    Crypto(Box<crate::crypto::CryptoError>),
    #[error("expected {expected} qubits or blocks, got {got}")]
    Width { expected: usize, got: usize },
    #[error("state leaves the code space (weight {weight:.3e} outside)")]
    OffCode { weight: f64 },
    #[error("trap qubits do not match the key (weight {weight:.3e} outside)")]
    TrapMismatch { weight: f64 },
    #[error("malformed key: {0}")]
    Key(String),
    #[error("not Clifford: {0}")]
    NonClifford(String),
    #[error("toy parameters too large: {0}")]
    Oversized(String),
    #[error("{0}")]
    Malformed(String),
}

impl From<LhiError> for EncodeError {
    fn from(e: LhiError) -> Self {
        EncodeError::Lhi(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, EncodeError>;
