//! Encoding keys and the encode / decode pipeline for one register.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::{from_bits, to_bits};
use crate::qsim::{c, PureState, C64};

use super::steane::{steane_decode, steane_encode, N};
use super::{EncodeError, Result};

pub const TWO_N: usize = 2 * N;
const PERM_FIELD: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Trap {
    Zero,
    Plus,
    /// `(|0⟩ + i|1⟩)/√2`.
    Circ,
}

impl Trap {
    pub const ALL: [Trap; 3] = [Trap::Zero, Trap::Plus, Trap::Circ];

    pub fn amplitudes(self) -> [C64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Trap::Zero => [c(1.0, 0.0), c(0.0, 0.0)],
            Trap::Plus => [c(h, 0.0), c(h, 0.0)],
            Trap::Circ => [c(h, 0.0), c(0.0, h)],
        }
    }

    pub fn state(self) -> PureState {
        PureState::new(1, self.amplitudes().to_vec()).expect("normalized trap")
    }
}

/// Secret key shared by the provers: traps, one permutation of the `2N`
/// positions used for every register, Pauli pads, and the commitment
/// randomness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingKey {
    /// `traps[i][o]` is the trap at original trap position `N + o`.
    pub traps: Vec<[Trap; N]>,
    /// `perm[o]` is the physical position of original position `o`.
    pub perm: [u8; TWO_N],
    /// Bit `j` is the X pad of physical position `j`.
    pub a: Vec<u16>,
    pub b: Vec<u16>,
    pub s: u64,
}

pub fn check_perm(perm: &[u8; TWO_N]) -> bool {
    let mut seen = [false; TWO_N];
    for &p in perm {
        if p as usize >= TWO_N || seen[p as usize] {
            return false;
        }
        seen[p as usize] = true;
    }
    true
}

pub fn identity_perm() -> [u8; TWO_N] {
    std::array::from_fn(|o| o as u8)
}

impl EncodingKey {
    pub fn random(registers: usize, rand_bits: usize, rng: &mut impl Rng) -> Self {
        let mut perm = identity_perm();
        perm.shuffle(rng);
        let mask = (1u16 << TWO_N) - 1;
        EncodingKey {
            traps: (0..registers).map(|_| std::array::from_fn(|_| Trap::ALL[rng.gen_range(0..3)])).collect(),
            perm,
            a: (0..registers).map(|_| rng.gen::<u16>() & mask).collect(),
            b: (0..registers).map(|_| rng.gen::<u16>() & mask).collect(),
            s: rng.gen::<u64>() & ((1u64 << rand_bits) - 1),
        }
    }

    /// Unpadded, unpermuted key with all-`|0⟩` traps.
    pub fn trivial(registers: usize) -> Self {
        EncodingKey { traps: vec![[Trap::Zero; N]; registers], perm: identity_perm(), a: vec![0; registers], b: vec![0; registers], s: 0 }
    }

    pub fn registers(&self) -> usize {
        self.traps.len()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.traps.len();
        if self.a.len() != n || self.b.len() != n {
            return Err(EncodeError::Key(format!("{n} trap strings but {} / {} pads", self.a.len(), self.b.len())));
        }
        if !check_perm(&self.perm) {
            return Err(EncodeError::Key("not a permutation".into()));
        }
        if self.a.iter().chain(&self.b).any(|&w| w >> TWO_N != 0) {
            return Err(EncodeError::Key("pad wider than 2N".into()));
        }
        Ok(())
    }

    pub fn inverse_perm(&self) -> [u8; TWO_N] {
        let mut inv = [0u8; TWO_N];
        for (o, &p) in self.perm.iter().enumerate() {
            inv[p as usize] = o as u8;
        }
        inv
    }

    /// Bits committed to: the permutation, then every `a_i`, then every `b_i`.
    pub fn committed_value(&self) -> Vec<bool> {
        committed_value(&self.perm, &self.a, &self.b)
    }

    pub fn committed_width(registers: usize) -> usize {
        TWO_N * PERM_FIELD + 2 * registers * TWO_N
    }
}

pub fn committed_value(perm: &[u8; TWO_N], a: &[u16], b: &[u16]) -> Vec<bool> {
    let mut bits: Vec<bool> = perm.iter().flat_map(|&p| to_bits(u64::from(p), PERM_FIELD)).collect();
    for w in a.iter().chain(b) {
        bits.extend(to_bits(u64::from(*w), TWO_N));
    }
    bits
}

/// Inverse of [`committed_value`]; `None` if the permutation is invalid.
pub fn parse_committed(bits: &[bool], registers: usize) -> Option<([u8; TWO_N], Vec<u16>, Vec<u16>)> {
    if bits.len() != EncodingKey::committed_width(registers) {
        return None;
    }
    let perm: [u8; TWO_N] = std::array::from_fn(|o| from_bits(&bits[o * PERM_FIELD..(o + 1) * PERM_FIELD]) as u8);
    if !check_perm(&perm) {
        return None;
    }
    let base = TWO_N * PERM_FIELD;
    let word = |k: usize| from_bits(&bits[base + k * TWO_N..base + (k + 1) * TWO_N]) as u16;
    Some((perm, (0..registers).map(word).collect(), (registers..2 * registers).map(word).collect()))
}

/// Moves the qubit at original position `o` to physical position `perm[o]`.
pub fn permute_amplitudes(amps: &[C64], perm: &[u8; TWO_N]) -> Vec<C64> {
    let mut out = vec![c(0.0, 0.0); amps.len()];
    for (i, &a) in amps.iter().enumerate() {
        let j = (0..TWO_N).fold(0usize, |acc, o| acc | (i >> o & 1) << perm[o]);
        out[j] = a;
    }
    out
}

/// `X^a Z^b` on the qubits set in the masks (Z first).
pub fn apply_pad(amps: &mut [C64], a: usize, b: usize) {
    if b != 0 {
        for (i, v) in amps.iter_mut().enumerate() {
            if (i & b).count_ones() % 2 == 1 {
                *v = -*v;
            }
        }
    }
    if a != 0 {
        for i in 0..amps.len() {
            let j = i ^ a;
            if i < j {
                amps.swap(i, j);
            }
        }
    }
}

/// Steane encode, append traps, permute, pad.
pub fn encode_register(state: &PureState, key: &EncodingKey, i: usize) -> Result<PureState> {
    key.check()?;
    if i >= key.registers() {
        return Err(EncodeError::Key(format!("register {i} of {}", key.registers())));
    }
    let mut s = steane_encode(state)?;
    for t in key.traps[i] {
        s = s.tensor(&t.state())?;
    }
    let mut amps = permute_amplitudes(s.amplitudes(), &key.perm);
    apply_pad(&mut amps, key.a[i].into(), key.b[i].into());
    Ok(PureState::new(TWO_N, amps)?)
}

/// Removes the pad and permutation, checks the traps, and decodes.
pub fn decode_register(block: &PureState, key: &EncodingKey, i: usize) -> Result<PureState> {
    key.check()?;
    if block.num_qubits() != TWO_N {
        return Err(EncodeError::Width { expected: TWO_N, got: block.num_qubits() });
    }
    if i >= key.registers() {
        return Err(EncodeError::Key(format!("register {i} of {}", key.registers())));
    }
    let mut amps = block.amplitudes().to_vec();
    // (X^a Z^b)^{-1} = Z^b X^a up to sign: undo X, then Z.
    apply_pad(&mut amps, key.a[i].into(), 0);
    apply_pad(&mut amps, 0, key.b[i].into());
    let amps = permute_amplitudes(&amps, &key.inverse_perm());
    let mut traps = key.traps[i][0].state();
    for t in &key.traps[i][1..] {
        traps = traps.tensor(&t.state())?;
    }
    let full = PureState::new(TWO_N, amps)?;
    let trap_q: Vec<usize> = (N..TWO_N).collect();
    let code = crate::qsim::partial_inner(&full, &traps, &trap_q)?;
    let kept: f64 = code.iter().map(|z| z.norm_sqr()).sum();
    if (1.0 - kept).abs() > 1e-9 {
        return Err(EncodeError::TrapMismatch { weight: 1.0 - kept });
    }
    steane_decode(&PureState::normalized(N, code)?)
}

/// Weight kept by the decoder: the squared norm left after projecting the
/// unpadded, unpermuted block onto the traps and then onto the code space.
pub fn decode_weight(block: &PureState, key: &EncodingKey, i: usize) -> Result<f64> {
    match decode_register(block, key, i) {
        Ok(_) => Ok(1.0),
        Err(EncodeError::TrapMismatch { weight }) => Ok(1.0 - weight),
        Err(EncodeError::OffCode { weight }) => {
            let mut amps = block.amplitudes().to_vec();
            apply_pad(&mut amps, key.a[i].into(), 0);
            apply_pad(&mut amps, 0, key.b[i].into());
            let amps = permute_amplitudes(&amps, &key.inverse_perm());
            let mut traps = key.traps[i][0].state();
            for t in &key.traps[i][1..] {
                traps = traps.tensor(&t.state())?;
            }
            let trap_q: Vec<usize> = (N..TWO_N).collect();
            let code = crate::qsim::partial_inner(&PureState::new(TWO_N, amps)?, &traps, &trap_q)?;
            let kept: f64 = code.iter().map(|z| z.norm_sqr()).sum();
            Ok(kept * (1.0 - weight))
        }
        Err(e) => Err(e),
    }
}

/// Average of `P ρ P†` over all `4^n` Pauli pads of a pure state.
pub fn pad_twirl(state: &PureState) -> Result<crate::qsim::CMat> {
    let n = state.num_qubits();
    if n > 6 {
        return Err(EncodeError::Malformed(format!("explicit twirl on {n} qubits")));
    }
    let dim = 1usize << n;
    let mut rho = crate::qsim::CMat::zeros(dim, dim);
    for a in 0..dim {
        for b in 0..dim {
            let mut amps = state.amplitudes().to_vec();
            apply_pad(&mut amps, a, b);
            let v = nalgebra::DVector::from_vec(amps);
            rho += &v * v.adjoint();
        }
    }
    Ok(rho / c((dim * dim) as f64, 0.0))
}
