//! Exact simulation of multi-prover quantum interactive proofs and the
//! zero-knowledge transformations built on top of them.

pub mod crypto;
pub mod encode;
pub mod lhi;
pub mod protocol;
pub mod qsim;
pub mod seed;
pub mod zk;
