//! Sampling the transversal Clifford measurement of encoded registers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::qsim::{self, c, CMat, PureState, C64};

use super::clifford::{CliffordCircuit, Pauli, TermDecomposition};
use super::key::{apply_pad, EncodingKey, TWO_N};
use super::steane::{coset, encode_blocks, N};
use super::{EncodeError, Result};

/// Largest number of jointly simulated code blocks (`7k` dense qubits).
pub const MAX_JOINT_BLOCKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PauliKind {
    X,
    Y,
    Z,
}

impl PauliKind {
    fn masks(self) -> (bool, bool) {
        match self {
            PauliKind::X => (true, false),
            PauliKind::Y => (true, true),
            PauliKind::Z => (false, true),
        }
    }
}

/// Single-qubit Pauli on physical position `position` of the `slot`-th
/// measured register, applied after encoding and before the measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysicalError {
    pub slot: usize,
    pub position: usize,
    pub pauli: PauliKind,
}

pub fn sample_index(amps: &[C64], rng: &mut impl Rng) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, a) in amps.iter().enumerate() {
        acc += a.norm_sqr();
        if r < acc {
            return i;
        }
    }
    amps.iter().rposition(|a| a.norm_sqr() > 0.0).unwrap_or(0)
}

/// Computational measurement of `qubits`: outcome (bit `j` for
/// `qubits[j]`) and the collapsed state.
pub fn sample_collapse(psi: &PureState, qubits: &[usize], rng: &mut impl Rng) -> Result<(usize, PureState)> {
    let i = sample_index(psi.amplitudes(), rng);
    let key = |x: usize| qubits.iter().enumerate().fold(0, |acc, (j, &q)| acc | (x >> q & 1) << j);
    let out = key(i);
    let amps: Vec<C64> = psi.amplitudes().iter().enumerate().map(|(x, &a)| if key(x) == out { a } else { c(0.0, 0.0) }).collect();
    Ok((out, PureState::normalized(psi.num_qubits(), amps)?))
}

/// Reduced density matrix on `keep` (`keep[j]` becomes qubit `j`).
pub fn reduced_density(psi: &PureState, keep: &[usize]) -> CMat {
    let n = psi.num_qubits();
    let rest: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
    let spread = |x: usize, qs: &[usize]| qs.iter().enumerate().fold(0usize, |acc, (j, &q)| acc | (x >> j & 1) << q);
    let d = 1usize << keep.len();
    let amps = psi.amplitudes();
    let mut rho = CMat::zeros(d, d);
    for r in 0..1usize << rest.len() {
        let base = spread(r, &rest);
        let col: Vec<C64> = (0..d).map(|i| amps[base | spread(i, keep)]).collect();
        for i in 0..d {
            if col[i].norm_sqr() == 0.0 {
                continue;
            }
            for j in 0..d {
                rho[(i, j)] += col[i] * col[j].conj();
            }
        }
    }
    rho
}

fn check_measurement(
    logical: &PureState,
    key: &EncodingKey,
    registers: &[usize],
    circuit: &CliffordCircuit,
    errors: &[PhysicalError],
) -> Result<()> {
    key.check()?;
    let k = registers.len();
    if circuit.arity != k || logical.num_qubits() != k {
        return Err(EncodeError::Width { expected: k, got: circuit.arity.max(logical.num_qubits()) });
    }
    if k == 0 || k > MAX_JOINT_BLOCKS {
        return Err(EncodeError::Malformed(format!("{k} registers in one transversal measurement")));
    }
    if let Some(&r) = registers.iter().find(|&&r| r >= key.registers()) {
        return Err(EncodeError::Key(format!("register {r} of {}", key.registers())));
    }
    if errors.iter().any(|e| e.slot >= k || e.position >= TWO_N) {
        return Err(EncodeError::Malformed("error outside the measured registers".into()));
    }
    Ok(())
}

/// Pad bits of physical position `j` of slot `i`, with the errors folded in.
fn pad_bits(key: &EncodingKey, registers: &[usize], errors: &[PhysicalError], i: usize, j: usize) -> (bool, bool) {
    let (mut x, mut z) = (key.a[registers[i]] >> j & 1 == 1, key.b[registers[i]] >> j & 1 == 1);
    for e in errors.iter().filter(|e| e.slot == i && e.position == j) {
        let (ex, ez) = e.pauli.masks();
        // Pauli products up to phase: exponents add mod 2.
        x ^= ex;
        z ^= ez;
    }
    (x, z)
}

/// Dense cumulative outcome distribution of the code positions of all blocks
/// (qubit `7i + o` is original position `o` of block `i`).
pub(super) fn code_distribution(
    logical: &PureState,
    key: &EncodingKey,
    registers: &[usize],
    phys: &CliffordCircuit,
    errors: &[PhysicalError],
) -> Result<Vec<f64>> {
    let k = registers.len();
    let mut code = encode_blocks(logical)?.into_amplitudes();
    let (mut xm, mut zm) = (0usize, 0usize);
    for i in 0..k {
        for o in 0..N {
            let (x, z) = pad_bits(key, registers, errors, i, key.perm[o] as usize);
            xm |= usize::from(x) << (N * i + o);
            zm |= usize::from(z) << (N * i + o);
        }
    }
    apply_pad(&mut code, xm, zm);
    let mut state = PureState::new(N * k, code)?;
    for o in 0..N {
        let slice: Vec<usize> = (0..k).map(|i| N * i + o).collect();
        state = phys.apply(&state, &slice)?;
    }
    let mut acc = 0.0;
    Ok(state
        .amplitudes()
        .iter()
        .map(|a| {
            acc += a.norm_sqr();
            acc
        })
        .collect())
}

/// Exact law of the code outcome as a sparse list of `(outcome, probability)`.
///
/// The pads and errors form a Pauli on the code positions that the
/// transversal circuit carries to another Pauli, so the outcome is a
/// logical value drawn from `C|ψ⟩`, a uniform codeword of the matching coset
/// in each block, and the conjugated X bits on top.
pub fn code_outcome_law(
    logical: &PureState,
    key: &EncodingKey,
    registers: &[usize],
    circuit: &CliffordCircuit,
    errors: &[PhysicalError],
) -> Result<Vec<(usize, f64)>> {
    check_measurement(logical, key, registers, circuit, errors)?;
    let k = registers.len();
    let phys = circuit.transversal();
    let mut flip = 0usize;
    for o in 0..N {
        let (mut x, mut z) = (0u32, 0u32);
        for i in 0..k {
            let (px, pz) = pad_bits(key, registers, errors, i, key.perm[o] as usize);
            x |= u32::from(px) << i;
            z |= u32::from(pz) << i;
        }
        let image = phys.conjugate(Pauli::new(x, z));
        for i in 0..k {
            flip |= ((image.x >> i & 1) as usize) << (N * i + o);
        }
    }
    let all: Vec<usize> = (0..k).collect();
    let out = circuit.apply(logical, &all)?;
    let cosets = [coset(false), coset(true)];
    let weight = 8f64.powi(k as i32).recip();
    let mut law = Vec::new();
    for (x, a) in out.amplitudes().iter().enumerate() {
        let p = a.norm_sqr();
        if p == 0.0 {
            continue;
        }
        for pick in 0..1usize << (3 * k) {
            let y = (0..k).fold(0usize, |acc, i| acc | (cosets[x >> i & 1][pick >> (3 * i) & 7] as usize) << (N * i));
            law.push((y ^ flip, p * weight));
        }
    }
    Ok(law)
}

fn draw_cumulative(cumulative: &[f64], rng: &mut impl Rng) -> usize {
    let r: f64 = rng.gen::<f64>() * cumulative.last().copied().unwrap_or(1.0);
    cumulative.partition_point(|&c| c <= r).min(cumulative.len() - 1)
}

/// Lays out the code outcome by physical position and samples the traps.
fn finish_outcome(
    outcome: usize,
    key: &EncodingKey,
    registers: &[usize],
    phys: &CliffordCircuit,
    errors: &[PhysicalError],
    rng: &mut impl Rng,
) -> Result<Vec<u16>> {
    let k = registers.len();
    let mut u = vec![0u16; k];
    for (i, w) in u.iter_mut().enumerate() {
        for o in 0..N {
            *w |= ((outcome >> (N * i + o) & 1) as u16) << key.perm[o];
        }
    }
    // Trap positions, one slice at a time.
    let all: Vec<usize> = (0..k).collect();
    for o in N..TWO_N {
        let j = key.perm[o] as usize;
        let mut s = key.traps[registers[0]][o - N].state();
        for &r in &registers[1..] {
            s = s.tensor(&key.traps[r][o - N].state())?;
        }
        let mut amps = s.into_amplitudes();
        let (mut xm, mut zm) = (0usize, 0usize);
        for i in 0..k {
            let (x, z) = pad_bits(key, registers, errors, i, j);
            xm |= usize::from(x) << i;
            zm |= usize::from(z) << i;
        }
        apply_pad(&mut amps, xm, zm);
        let s = phys.apply(&PureState::new(k, amps)?, &all)?;
        let out = sample_index(s.amplitudes(), rng);
        for (i, w) in u.iter_mut().enumerate() {
            *w |= ((out >> i & 1) as u16) << j;
        }
    }
    Ok(u)
}

/// Encodes the `k`-register logical state with `key`, applies the circuit to
/// every transversal slice, and samples all `2kN` physical qubits by dense
/// simulation. Block `i`
/// of the outcome holds the bits of register `registers[i]` by physical
/// position.
pub fn transversal_clifford_measure(
    logical: &PureState,
    key: &EncodingKey,
    registers: &[usize],
    circuit: &CliffordCircuit,
    errors: &[PhysicalError],
    rng: &mut impl Rng,
) -> Result<Vec<u16>> {
    check_measurement(logical, key, registers, circuit, errors)?;
    let phys = circuit.transversal();
    let cumulative = code_distribution(logical, key, registers, &phys, errors)?;
    let outcome = draw_cumulative(&cumulative, rng);
    finish_outcome(outcome, key, registers, &phys, errors, rng)
}

/// Measures term `dec` with choice `v` on the logical state `psi`.
///
/// Guard registers are checked in the computational basis, so their logical
/// value is sampled first and each guard block is simulated on its own;
/// the remaining core registers are simulated jointly from a sampled
/// eigenvector of their reduced state. Both steps reproduce the joint
/// outcome distribution exactly. `reg_of[q]` is the key index of logical
/// qubit `q`. Outcome blocks follow `dec.registers`.
pub fn measure_term(
    psi: &PureState,
    key: &EncodingKey,
    reg_of: &[Option<usize>],
    dec: &TermDecomposition,
    v: usize,
    errors: &[PhysicalError],
    rng: &mut impl Rng,
) -> Result<Vec<u16>> {
    Ok(measure_term_shots(psi, key, reg_of, dec, v, errors, 1, rng)?.remove(0))
}

/// `shots` independent runs of [`measure_term`]. Code outcomes come from
/// [`code_outcome_law`], cached per guard outcome and eigenvector.
#[allow(clippy::too_many_arguments)]
pub fn measure_term_shots(
    psi: &PureState,
    key: &EncodingKey,
    reg_of: &[Option<usize>],
    dec: &TermDecomposition,
    v: usize,
    errors: &[PhysicalError],
    shots: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<u16>>> {
    use std::collections::HashMap;
    let key_index = |q: usize| reg_of.get(q).copied().flatten().ok_or_else(|| EncodeError::Key(format!("qubit {q} is not encoded")));
    let core = &dec.registers[..dec.core_len];
    let guards = &dec.registers[dec.core_len..];
    let core_keys = core.iter().map(|&q| key_index(q)).collect::<Result<Vec<_>>>()?;
    let guard_keys = guards.iter().map(|&q| key_index(q)).collect::<Result<Vec<_>>>()?;
    let mut circ = dec.preps[v % dec.preps.len()].adjoint();
    circ.arity = core.len();
    let phys = circ.transversal();
    let core_err: Vec<PhysicalError> = errors.iter().filter(|e| e.slot < core.len()).copied().collect();

    let mut spectra: HashMap<usize, (Vec<f64>, Vec<PureState>)> = HashMap::new();
    let mut laws: HashMap<(usize, usize), (Vec<usize>, Vec<f64>)> = HashMap::new();
    let mut out = Vec::with_capacity(shots);
    for _ in 0..shots {
        let (gbits, post) = if guards.is_empty() { (0, psi.clone()) } else { sample_collapse(psi, guards, rng)? };
        if let std::collections::hash_map::Entry::Vacant(e) = spectra.entry(gbits) {
            let (vals, vecs) = qsim::hermitian_eigen(&reduced_density(&post, core));
            let states = (0..vals.len())
                .map(|i| PureState::normalized(core.len(), vecs.column(i).iter().copied().collect()))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            e.insert((vals, states));
        }
        let (vals, states) = &spectra[&gbits];
        let r: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = vals.len() - 1;
        for (i, &l) in vals.iter().enumerate() {
            acc += l.max(0.0);
            if r < acc {
                pick = i;
                break;
            }
        }
        let comp = &states[pick];
        if let std::collections::hash_map::Entry::Vacant(e) = laws.entry((gbits, pick)) {
            let law = code_outcome_law(comp, key, &core_keys, &circ, &core_err)?;
            let mut acc = 0.0;
            let cumulative = law
                .iter()
                .map(|&(_, p)| {
                    acc += p;
                    acc
                })
                .collect();
            e.insert((law.into_iter().map(|(y, _)| y).collect(), cumulative));
        }
        let (outcomes, cumulative) = &laws[&(gbits, pick)];
        let mut u = finish_outcome(outcomes[draw_cumulative(cumulative, rng)], key, &core_keys, &phys, &core_err, rng)?;

        for (g, &kq) in guard_keys.iter().enumerate() {
            let bit = gbits >> g & 1;
            let mut one = CliffordCircuit::identity(1);
            if dec.guard_bits[g] {
                one.gates.push(super::clifford::CliffordGate::X(0));
            }
            let slot = core.len() + g;
            let err: Vec<PhysicalError> =
                errors.iter().filter(|e| e.slot == slot).map(|e| PhysicalError { slot: 0, ..*e }).collect();
            u.extend(transversal_clifford_measure(&PureState::basis(1, bit)?, key, &[kq], &one, &err, rng)?);
        }
        out.push(u);
    }
    Ok(out)
}
