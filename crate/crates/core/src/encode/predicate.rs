//! Prover-side consistency predicate and the enumeration-checked statement
//! that a reported outcome is consistent with the committed key.

use serde::{Deserialize, Serialize};

use crate::crypto::{commit, CommitParams, Commitment, NpStatement, NpWitness};
use crate::qsim::{CMat, C64};

use super::clifford::{pauli_conjugate, CliffordCircuit};
use super::key::{committed_value, parse_committed, EncodingKey, Trap, TWO_N};
use super::steane::{is_codeword, logical_value, N};
use super::{EncodeError, Result};

/// Threshold below which a trap amplitude counts as zero.
pub const ZERO_AMPLITUDE: f64 = 1e-10;
/// Largest register count for a statement.
pub const MAX_STATEMENT_REGISTERS: usize = 5;
/// Largest commitment randomness width for a statement.
pub const MAX_STATEMENT_RAND_BITS: usize = 19;

/// `(y, z)`: the code and trap bits of one register in original order.
pub fn unpermute(u: u16, perm: &[u8; TWO_N]) -> (u8, u8) {
    let bit = |o: usize| (u >> perm[o] & 1) as u8;
    let y = (0..N).fold(0u8, |acc, o| acc | bit(o) << o);
    let z = (0..N).fold(0u8, |acc, o| acc | bit(N + o) << o);
    (y, z)
}

/// Codeword condition: every `y_i` in the code, at least one of logical 1.
pub fn codeword_condition(ys: &[u8]) -> bool {
    ys.iter().all(|&y| is_codeword(y)) && ys.iter().any(|&y| logical_value(y) == Some(true))
}

/// `⟨z| C |r_1 … r_k⟩` for one trap slice; `phys` is the slice unitary.
pub fn trap_amplitude(phys: &CMat, traps: &[Trap], z: usize) -> C64 {
    let mut v = vec![C64::new(1.0, 0.0)];
    for t in traps {
        let [a0, a1] = t.amplitudes();
        // The new register is the highest qubit.
        v = v.iter().map(|x| x * a0).chain(v.iter().map(|x| x * a1)).collect();
    }
    (0..v.len()).map(|x| phys[(z, x)] * v[x]).sum()
}

/// Trap bits of slice `o` across registers.
fn slice_bits(zs: &[u8], o: usize) -> usize {
    zs.iter().enumerate().fold(0, |acc, (i, &z)| acc | ((z >> o & 1) as usize) << i)
}

/// `R_{t,v}(r, u, π)` for the outcome `u` with the pad contribution already
/// removed; `circuit` is the logical `C_{t,v}`.
pub fn predicate_r(traps: &[[Trap; N]], u: &[u16], perm: &[u8; TWO_N], circuit: &CliffordCircuit) -> Result<bool> {
    let k = u.len();
    if traps.len() != k || circuit.arity != k {
        return Err(EncodeError::Width { expected: circuit.arity, got: k });
    }
    if k > MAX_STATEMENT_REGISTERS {
        return Err(EncodeError::Malformed(format!("{k} registers")));
    }
    let (ys, zs): (Vec<u8>, Vec<u8>) = u.iter().map(|&w| unpermute(w, perm)).unzip();
    if !codeword_condition(&ys) {
        return Ok(false);
    }
    let phys = circuit.transversal().unitary();
    let mut amp = C64::new(1.0, 0.0);
    for o in 0..N {
        let slice: Vec<Trap> = traps.iter().map(|t| t[o]).collect();
        amp *= trap_amplitude(phys.matrix(), &slice, slice_bits(&zs, o));
    }
    Ok(amp.norm() > ZERO_AMPLITUDE)
}

/// `u ⊕ c`, removing the pads as they emerge from the transversal circuit.
pub fn unpad_outcome(u: &[u16], circuit: &CliffordCircuit, a: &[u16], b: &[u16]) -> Result<Vec<u16>> {
    let conj = pauli_conjugate(&circuit.transversal(), a, b)?;
    Ok(u.iter().zip(&conj.c).map(|(x, c)| x ^ c).collect())
}

/// Public data of "some key opens `commitment` and explains `u`".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtvStatement {
    pub params: CommitParams,
    pub commitment: Commitment,
    /// Total registers covered by the committed key.
    pub num_registers: usize,
    /// Key indices of the measured registers.
    pub registers: Vec<usize>,
    pub u: Vec<u16>,
    /// Logical `C_{t,v}`.
    pub circuit: CliffordCircuit,
    pub t: usize,
    pub v: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RtvWitness {
    pub s: u64,
    pub perm: [u8; TWO_N],
    pub a: Vec<u16>,
    pub b: Vec<u16>,
    /// Traps of the measured registers only.
    pub traps: Vec<[Trap; N]>,
}

impl RtvWitness {
    pub fn from_key(key: &EncodingKey, registers: &[usize]) -> Self {
        RtvWitness {
            s: key.s,
            perm: key.perm,
            a: key.a.clone(),
            b: key.b.clone(),
            traps: registers.iter().map(|&r| key.traps[r]).collect(),
        }
    }
}

impl RtvStatement {
    /// Commitment randomness values plus trap choices per slice. The trap
    /// search factorizes over slices, so the two scans add.
    pub fn candidates(&self) -> u64 {
        (1u64 << self.params.rand_bits) + (N as u64) * 3u64.pow(self.registers.len() as u32)
    }

    fn selected(&self, w: &[u16]) -> Vec<u16> {
        self.registers.iter().map(|&r| w[r]).collect()
    }

    pub fn check(&self, w: &RtvWitness) -> Result<bool> {
        if w.a.len() != self.num_registers || w.b.len() != self.num_registers || w.traps.len() != self.registers.len() {
            return Ok(false);
        }
        let value = committed_value(&w.perm, &w.a, &w.b);
        if commit(&self.params, &value, w.s).ok().as_ref() != Some(&self.commitment) {
            return Ok(false);
        }
        let u = unpad_outcome(&self.u, &self.circuit, &self.selected(&w.a), &self.selected(&w.b))?;
        predicate_r(&w.traps, &u, &w.perm, &self.circuit)
    }

    /// Traps making every slice amplitude nonzero for this key, if any.
    pub fn consistent_traps(&self, perm: &[u8; TWO_N], a: &[u16], b: &[u16]) -> Result<Option<Vec<[Trap; N]>>> {
        let u = unpad_outcome(&self.u, &self.circuit, &self.selected(a), &self.selected(b))?;
        let (ys, zs): (Vec<u8>, Vec<u8>) = u.iter().map(|&x| unpermute(x, perm)).unzip();
        if !codeword_condition(&ys) {
            return Ok(None);
        }
        let k = self.registers.len();
        let phys = self.circuit.transversal().unitary();
        let mut traps = vec![[Trap::Zero; N]; k];
        for o in 0..N {
            let z = slice_bits(&zs, o);
            let found = (0..3usize.pow(k as u32)).find_map(|code| {
                let choice: Vec<Trap> = (0..k).map(|i| Trap::ALL[code / 3usize.pow(i as u32) % 3]).collect();
                (trap_amplitude(phys.matrix(), &choice, z).norm() > ZERO_AMPLITUDE).then_some(choice)
            });
            match found {
                Some(choice) => choice.iter().enumerate().for_each(|(i, &t)| traps[i][o] = t),
                None => return Ok(None),
            }
        }
        Ok(Some(traps))
    }

    /// Exhaustive search over the commitment randomness and trap choices.
    pub fn search(&self) -> Result<Option<RtvWitness>> {
        let p = &self.params;
        if self.commitment.width() != p.out_bits() {
            return Ok(None);
        }
        let target = self.commitment.sigma_part(p);
        for s in 0..=p.rand_mask() {
            if p.sigma(s) != target {
                continue;
            }
            let value: Vec<bool> = self.commitment.bits[p.rand_bits..].iter().zip(p.mask(s)).map(|(&c, m)| c ^ m).collect();
            let Some((perm, a, b)) = parse_committed(&value, self.num_registers) else { continue };
            if let Some(traps) = self.consistent_traps(&perm, &a, &b)? {
                return Ok(Some(RtvWitness { s, perm, a, b, traps }));
            }
        }
        Ok(None)
    }
}

/// Builds the statement for the verifier's reported outcome.
#[allow(clippy::too_many_arguments)]
pub fn reduce_rtv_statement(
    params: &CommitParams,
    commitment: &Commitment,
    num_registers: usize,
    registers: &[usize],
    u: &[u16],
    circuit: &CliffordCircuit,
    t: usize,
    v: usize,
) -> Result<NpStatement> {
    if registers.len() > MAX_STATEMENT_REGISTERS || params.rand_bits > MAX_STATEMENT_RAND_BITS {
        return Err(EncodeError::Oversized(format!("{} registers, {}-bit randomness", registers.len(), params.rand_bits)));
    }
    if u.len() != registers.len() || circuit.arity != registers.len() {
        return Err(EncodeError::Width { expected: registers.len(), got: u.len() });
    }
    if registers.iter().any(|&r| r >= num_registers) || params.value_bits != EncodingKey::committed_width(num_registers) {
        return Err(EncodeError::Key("statement registers do not match the committed key".into()));
    }
    Ok(NpStatement::Rtv(Box::new(RtvStatement {
        params: *params,
        commitment: commitment.clone(),
        num_registers,
        registers: registers.to_vec(),
        u: u.to_vec(),
        circuit: circuit.clone(),
        t,
        v,
    })))
}

pub fn rtv_witness(key: &EncodingKey, registers: &[usize]) -> NpWitness {
    NpWitness::Rtv(Box::new(RtvWitness::from_key(key, registers)))
}
