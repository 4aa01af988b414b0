//! Seven-qubit Steane code on the Hamming [7,4] parity-check matrix.

use crate::qsim::{c, PureState, C64};

use super::{EncodeError, Result};

pub const N: usize = 7;

/// Rows of the parity-check matrix; bit `j` is code position `j`, whose
/// column is the binary expansion of `j + 1`.
pub const PARITY_CHECK: [u8; 3] = [0b101_0101, 0b110_0110, 0b111_1000];

pub fn is_codeword(w: u8) -> bool {
    w < 1 << N && PARITY_CHECK.iter().all(|row| (row & w).count_ones().is_multiple_of(2))
}

/// All 16 codewords, ascending.
pub fn codewords() -> Vec<u8> {
    (0..1u8 << N).filter(|&w| is_codeword(w)).collect()
}

/// Codewords of logical `bit`: even weight for 0, odd weight for 1.
pub fn coset(bit: bool) -> Vec<u8> {
    codewords().into_iter().filter(|w| (w.count_ones() % 2 == 1) == bit).collect()
}

/// Logical value of a codeword, `None` off the code.
pub fn logical_value(w: u8) -> Option<bool> {
    is_codeword(w).then_some(w.count_ones() % 2 == 1)
}

/// Encodes `k` logical qubits into `7k`; logical qubit `i` becomes physical
/// qubits `7i..7i+7`.
pub fn encode_blocks(logical: &PureState) -> Result<PureState> {
    let k = logical.num_qubits();
    if N * k > crate::qsim::DEFAULT_QUBIT_CAP {
        return Err(EncodeError::Malformed(format!("{k} logical qubits exceed the simulator")));
    }
    let cosets = [coset(false), coset(true)];
    let norm = (cosets[0].len() as f64).powi(k as i32).sqrt().recip();
    let mut amps = vec![c(0.0, 0.0); 1 << (N * k)];
    for (x, &a) in logical.amplitudes().iter().enumerate() {
        if a.norm_sqr() == 0.0 {
            continue;
        }
        // Mixed-radix walk over one codeword per block.
        let mut idx = vec![0usize; k];
        loop {
            let phys = (0..k).fold(0usize, |acc, i| acc | (cosets[x >> i & 1][idx[i]] as usize) << (N * i));
            amps[phys] += a * norm;
            let mut i = 0;
            while i < k {
                idx[i] += 1;
                if idx[i] < 8 {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
            if i == k {
                break;
            }
        }
    }
    Ok(PureState::new(N * k, amps)?)
}

pub fn steane_encode(logical: &PureState) -> Result<PureState> {
    if logical.num_qubits() != 1 {
        return Err(EncodeError::Width { expected: 1, got: logical.num_qubits() });
    }
    encode_blocks(logical)
}

/// Inverse isometry; fails if the input leaves the code space.
pub fn steane_decode(block: &PureState) -> Result<PureState> {
    if block.num_qubits() != N {
        return Err(EncodeError::Width { expected: N, got: block.num_qubits() });
    }
    let amp = |bit: bool| -> C64 {
        let words = coset(bit);
        let s = (words.len() as f64).sqrt();
        words.iter().map(|&w| block.amplitudes()[w as usize]).sum::<C64>() / s
    };
    let (a0, a1) = (amp(false), amp(true));
    let kept = a0.norm_sqr() + a1.norm_sqr();
    if (1.0 - kept).abs() > 1e-9 {
        return Err(EncodeError::OffCode { weight: 1.0 - kept });
    }
    Ok(PureState::normalized(1, vec![a0, a1])?)
}
