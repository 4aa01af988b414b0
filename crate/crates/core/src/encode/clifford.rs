//! Clifford circuits, Pauli tableaux with phases, and stabilizer-basis
//! decompositions of Hamiltonian terms.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::lhi::{HamTerm, LhiInstance, TermKind};
use crate::qsim::{self, c, CMat, PureState, UnitaryGate, C64};

use super::{EncodeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CliffordGate {
    H(usize),
    S(usize),
    Sdg(usize),
    X(usize),
    Z(usize),
    /// `(control, target)`.
    Cnot(usize, usize),
}

impl CliffordGate {
    fn qubits(&self) -> Vec<usize> {
        match *self {
            CliffordGate::H(q) | CliffordGate::S(q) | CliffordGate::Sdg(q) | CliffordGate::X(q) | CliffordGate::Z(q) => vec![q],
            CliffordGate::Cnot(a, b) => vec![a, b],
        }
    }

    fn inverse(self) -> Self {
        match self {
            CliffordGate::S(q) => CliffordGate::Sdg(q),
            CliffordGate::Sdg(q) => CliffordGate::S(q),
            g => g,
        }
    }

    fn unitary(&self) -> UnitaryGate {
        match self {
            CliffordGate::H(_) => UnitaryGate::h(),
            CliffordGate::S(_) => UnitaryGate::s(),
            CliffordGate::Sdg(_) => UnitaryGate::s().adjoint(),
            CliffordGate::X(_) => UnitaryGate::x(),
            CliffordGate::Z(_) => UnitaryGate::z(),
            CliffordGate::Cnot(..) => UnitaryGate::cnot(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CliffordCircuit {
    pub arity: usize,
    /// Applied first to last.
    pub gates: Vec<CliffordGate>,
}

impl CliffordCircuit {
    pub fn new(arity: usize, gates: Vec<CliffordGate>) -> Result<Self> {
        for g in &gates {
            let qs = g.qubits();
            if qs.iter().any(|&q| q >= arity) || (qs.len() == 2 && qs[0] == qs[1]) {
                return Err(EncodeError::Malformed(format!("{g:?} on {arity} qubits")));
            }
        }
        Ok(CliffordCircuit { arity, gates })
    }

    pub fn identity(arity: usize) -> Self {
        CliffordCircuit { arity, gates: vec![] }
    }

    pub fn adjoint(&self) -> Self {
        CliffordCircuit { arity: self.arity, gates: self.gates.iter().rev().map(|g| g.inverse()).collect() }
    }

    /// Physical circuit whose transversal application implements this one on
    /// Steane blocks: transversal `S` acts as logical `S†`, so the two swap.
    pub fn transversal(&self) -> Self {
        CliffordCircuit { arity: self.arity, gates: self.gates.iter().map(|g| g.inverse()).collect() }
    }

    pub fn then(&self, next: &CliffordCircuit) -> Self {
        let mut gates = self.gates.clone();
        gates.extend_from_slice(&next.gates);
        CliffordCircuit { arity: self.arity.max(next.arity), gates }
    }

    pub fn unitary(&self) -> UnitaryGate {
        let factors: Vec<(UnitaryGate, Vec<usize>)> = self.gates.iter().map(|g| (g.unitary(), g.qubits())).collect();
        let refs: Vec<(&UnitaryGate, Vec<usize>)> = factors.iter().map(|(u, q)| (u, q.clone())).collect();
        UnitaryGate::compose(self.arity, &refs).expect("gate indices checked at construction")
    }

    /// Applies the circuit to `qubits` of `state`.
    pub fn apply(&self, state: &PureState, qubits: &[usize]) -> Result<PureState> {
        if qubits.len() != self.arity {
            return Err(EncodeError::Width { expected: self.arity, got: qubits.len() });
        }
        let mut s = state.clone();
        for g in &self.gates {
            let t: Vec<usize> = g.qubits().iter().map(|&q| qubits[q]).collect();
            s = s.apply(&g.unitary(), &t)?;
        }
        Ok(s)
    }

    /// `C P C†` by tableau rules.
    pub fn conjugate(&self, p: Pauli) -> Pauli {
        let mut p = p;
        for g in &self.gates {
            let bit = |v: u32, q: usize| v >> q & 1;
            match *g {
                CliffordGate::H(q) => {
                    let (x, z) = (bit(p.x, q), bit(p.z, q));
                    p.phase += 2 * (x & z) as u8;
                    p.x = p.x & !(1 << q) | z << q;
                    p.z = p.z & !(1 << q) | x << q;
                }
                CliffordGate::S(q) => {
                    let x = bit(p.x, q);
                    p.phase += x as u8;
                    p.z ^= x << q;
                }
                CliffordGate::Sdg(q) => {
                    let x = bit(p.x, q);
                    p.phase += 3 * x as u8;
                    p.z ^= x << q;
                }
                CliffordGate::X(q) => p.phase += 2 * bit(p.z, q) as u8,
                CliffordGate::Z(q) => p.phase += 2 * bit(p.x, q) as u8,
                CliffordGate::Cnot(ctl, tgt) => {
                    p.x ^= bit(p.x, ctl) << tgt;
                    p.z ^= bit(p.z, tgt) << ctl;
                }
            }
            p.phase %= 4;
        }
        p
    }
}

/// `i^phase · X^x · Z^z`, with `X^x Z^z = ⊗_q X^{x_q} Z^{z_q}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pauli {
    pub x: u32,
    pub z: u32,
    pub phase: u8,
}

impl Pauli {
    pub fn new(x: u32, z: u32) -> Self {
        Pauli { x, z, phase: 0 }
    }

    pub fn matrix(&self, arity: usize) -> CMat {
        let mut m = qsim::identity(1);
        for q in 0..arity {
            let mut one = qsim::identity(2);
            if self.x >> q & 1 == 1 {
                one = qsim::pauli_x() * one;
            }
            if self.z >> q & 1 == 1 {
                one *= qsim::pauli_z();
            }
            m = qsim::tensor_le(&m, &one);
        }
        m * phase_value(self.phase)
    }
}

pub fn phase_value(e: u8) -> C64 {
    [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)][(e % 4) as usize]
}

/// Matches `m` against `i^e X^x Z^z`. Column 0 fixes `x` and the phase,
/// columns `2^q` fix `z`, then every entry is checked against
/// `X^x Z^z |j⟩ = (−1)^{z·j} |j ⊕ x⟩`.
pub fn identify_pauli(m: &CMat, arity: usize) -> Option<Pauli> {
    let dim = 1usize << arity;
    if m.nrows() != dim || m.ncols() != dim {
        return None;
    }
    let x = (0..dim).find(|&r| m[(r, 0)].norm() > 0.5)?;
    let lead = m[(x, 0)];
    let phase = (0..4u8).find(|&e| (lead - phase_value(e)).norm() < 1e-9)?;
    let mut z = 0u32;
    for q in 0..arity {
        if (m[(x ^ 1 << q, 1 << q)] + lead).norm() < 1e-9 {
            z |= 1 << q;
        }
    }
    for j in 0..dim {
        let sign = if (z as usize & j).count_ones() % 2 == 1 { -lead } else { lead };
        for r in 0..dim {
            let want = if r == j ^ x { sign } else { c(0.0, 0.0) };
            if (m[(r, j)] - want).norm() > 1e-9 {
                return None;
            }
        }
    }
    Some(Pauli { x: x as u32, z, phase })
}

/// `(α, c, d)` with `C^{⊗2N} X^a Z^b = α X^c Z^d C^{⊗2N}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliConjugation {
    /// `α = i^alpha`.
    pub alpha: u8,
    pub c: Vec<u16>,
    pub d: Vec<u16>,
}

fn slice_pauli(a: &[u16], b: &[u16], j: usize) -> Pauli {
    let gather = |v: &[u16]| v.iter().enumerate().fold(0u32, |acc, (i, &w)| acc | u32::from(w >> j & 1) << i);
    Pauli::new(gather(a), gather(b))
}

fn assemble(k: usize, slices: usize, images: impl Fn(usize) -> Result<Pauli>) -> Result<PauliConjugation> {
    let mut out = PauliConjugation { alpha: 0, c: vec![0; k], d: vec![0; k] };
    for j in 0..slices {
        let p = images(j)?;
        out.alpha = (out.alpha + p.phase) % 4;
        for i in 0..k {
            out.c[i] |= ((p.x >> i & 1) as u16) << j;
            out.d[i] |= ((p.z >> i & 1) as u16) << j;
        }
    }
    Ok(out)
}

fn check_pads(k: usize, a: &[u16], b: &[u16]) -> Result<()> {
    if a.len() != k || b.len() != k {
        return Err(EncodeError::Width { expected: k, got: a.len().min(b.len()) });
    }
    Ok(())
}

/// Slice-wise tableau conjugation of the pads `a`, `b` (one 2N-bit word per
/// register) through the transversal circuit.
pub fn pauli_conjugate(circuit: &CliffordCircuit, a: &[u16], b: &[u16]) -> Result<PauliConjugation> {
    check_pads(circuit.arity, a, b)?;
    assemble(circuit.arity, 2 * super::N, |j| Ok(circuit.conjugate(slice_pauli(a, b, j))))
}

/// Same as [`pauli_conjugate`] for a gate given as a matrix; fails if the
/// gate maps some Pauli outside the Pauli group.
pub fn pauli_conjugate_unitary(gate: &UnitaryGate, a: &[u16], b: &[u16]) -> Result<PauliConjugation> {
    let k = gate.arity();
    check_pads(k, a, b)?;
    assemble(k, 2 * super::N, |j| {
        let p = slice_pauli(a, b, j);
        let img = gate.matrix() * p.matrix(k) * gate.matrix().adjoint();
        identify_pauli(&img, k).ok_or_else(|| EncodeError::NonClifford(format!("image of X^{:b} Z^{:b} is not a Pauli", p.x, p.z)))
    })
}

/// Dense check of `C^{⊗2N} X^a Z^b = α X^c Z^d C^{⊗2N}`. The identity is a
/// tensor product over slices, so each slice is checked as a `k`-qubit
/// matrix equation up to its own phase, the phases must multiply to `α`,
/// and the first two slices are also checked jointly when `2k ≤ 8`.
/// Returns the largest entry deviation.
pub fn conjugation_residual(gate: &UnitaryGate, a: &[u16], b: &[u16], conj: &PauliConjugation) -> f64 {
    let k = gate.arity();
    let u = gate.matrix();
    let slice = |j: usize| (slice_pauli(a, b, j).matrix(k), slice_pauli(&conj.c, &conj.d, j).matrix(k));
    let dev = |l: &CMat, r: &CMat| l.iter().zip(r.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    let mut phases = Vec::with_capacity(2 * super::N);
    for j in 0..2 * super::N {
        let (p, q) = slice(j);
        let lhs = u * p;
        let qu = q * u;
        let (e, d) = (0..4u8).map(|e| (e, dev(&lhs, &(&qu * phase_value(e))))).min_by(|x, y| x.1.total_cmp(&y.1)).expect("four phases");
        worst = worst.max(d);
        phases.push(e);
    }
    if phases.iter().fold(0u8, |acc, &e| (acc + e) % 4) != conj.alpha {
        return f64::INFINITY;
    }
    if 2 * k <= 8 {
        let ((p0, q0), (p1, q1)) = (slice(0), slice(1));
        let uu = qsim::tensor_le(u, u);
        let lhs = &uu * qsim::tensor_le(&p0, &p1);
        let rhs = qsim::tensor_le(&q0, &q1) * &uu * phase_value(phases[0] + phases[1]);
        worst = worst.max(dev(&lhs, &rhs));
    }
    worst
}

/// A stabilizer state with a preparation circuit from `|0…0⟩`.
#[derive(Debug, Clone)]
pub struct StabilizerState {
    pub amps: Vec<C64>,
    pub prep: CliffordCircuit,
}

fn canonical_key(amps: &[C64]) -> Vec<(i64, i64)> {
    let lead = amps.iter().find(|a| a.norm() > 1e-9).copied().unwrap_or(c(1.0, 0.0));
    let ph = lead / lead.norm();
    amps.iter().map(|a| a / ph).map(|a| ((a.re * 1e6).round() as i64, (a.im * 1e6).round() as i64)).collect()
}

/// Every stabilizer state on `k ≤ 3` qubits, by breadth-first search from
/// `|0…0⟩` over `H`, `S`, `X` and `CNOT`.
pub fn stabilizer_states(k: usize) -> Result<Vec<StabilizerState>> {
    if k == 0 || k > 3 {
        return Err(EncodeError::Malformed(format!("stabilizer search on {k} qubits")));
    }
    let mut moves = Vec::new();
    for q in 0..k {
        moves.extend([CliffordGate::H(q), CliffordGate::S(q), CliffordGate::X(q)]);
        for t in 0..k {
            if t != q {
                moves.push(CliffordGate::Cnot(q, t));
            }
        }
    }
    let qubits: Vec<usize> = (0..k).collect();
    let start = PureState::zero(k)?;
    let mut seen = HashMap::new();
    let mut out = vec![StabilizerState { amps: start.amplitudes().to_vec(), prep: CliffordCircuit::identity(k) }];
    seen.insert(canonical_key(start.amplitudes()), 0usize);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        for &g in &moves {
            let one = CliffordCircuit { arity: k, gates: vec![g] };
            let s = PureState::new(k, out[i].amps.clone())?;
            let next = one.apply(&s, &qubits)?;
            let key = canonical_key(next.amplitudes());
            if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(key) {
                e.insert(out.len());
                let mut prep = out[i].prep.clone();
                prep.gates.push(g);
                out.push(StabilizerState { amps: next.into_amplitudes(), prep });
                queue.push_back(out.len() - 1);
            }
        }
    }
    Ok(out)
}

/// Orthonormal stabilizer basis of the range of projector `p`.
pub fn stabilizer_basis(p: &CMat) -> Result<Vec<StabilizerState>> {
    let dim = p.nrows();
    let k = dim.trailing_zeros() as usize;
    let rank = p.trace().re.round() as usize;
    let inside: Vec<StabilizerState> = stabilizer_states(k)?
        .into_iter()
        .filter(|s| {
            let v = nalgebra::DVector::from_vec(s.amps.clone());
            ((v.adjoint() * p * &v)[(0, 0)].re - 1.0).abs() < 1e-9
        })
        .collect();
    let inner = |x: &StabilizerState, y: &StabilizerState| -> f64 { x.amps.iter().zip(&y.amps).map(|(a, b)| a.conj() * b).sum::<C64>().norm() };

    fn search(cands: &[StabilizerState], chosen: &mut Vec<usize>, rank: usize, from: usize, inner: &dyn Fn(&StabilizerState, &StabilizerState) -> f64) -> bool {
        if chosen.len() == rank {
            return true;
        }
        for i in from..cands.len() {
            if chosen.iter().all(|&j| inner(&cands[i], &cands[j]) < 1e-9) {
                chosen.push(i);
                if search(cands, chosen, rank, i + 1, inner) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }
    let mut chosen = Vec::new();
    if rank == 0 || !search(&inside, &mut chosen, rank, 0, &inner) {
        return Err(EncodeError::NonClifford(format!("no stabilizer basis for a rank-{rank} projector")));
    }
    Ok(chosen.into_iter().map(|i| inside[i].clone()).collect())
}

/// A term's rejection projector as a sum of Clifford-rotated basis
/// projections: `Σ_v C_v† |0…0⟩⟨0…0| C_v`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermDecomposition {
    pub t: usize,
    pub kind: TermKind,
    /// Logical qubits measured: core qubits then clock guards.
    pub registers: Vec<usize>,
    pub core_len: usize,
    /// Expected value of each guard qubit on the rejected subspace.
    pub guard_bits: Vec<bool>,
    /// Preparation circuits of the core's stabilizer basis.
    pub preps: Vec<CliffordCircuit>,
}

pub const QUERY_CHOICES: usize = 4;

impl TermDecomposition {
    /// `C_{t,v}` on `registers`; `v` beyond the basis size repeats entries.
    pub fn clifford(&self, v: usize) -> CliffordCircuit {
        let mut c = self.preps[v % self.preps.len()].adjoint();
        c.arity = self.registers.len();
        for (i, &bit) in self.guard_bits.iter().enumerate() {
            if bit {
                c.gates.push(CliffordGate::X(self.core_len + i));
            }
        }
        c
    }

    /// `Σ_v C_v† |0⟩⟨0| C_v` over the distinct basis vectors.
    pub fn projector_sum(&self) -> CMat {
        let dim = 1usize << self.registers.len();
        let mut sum = CMat::zeros(dim, dim);
        for v in 0..self.preps.len() {
            let u = self.clifford(v).unitary();
            let col = u.matrix().adjoint().column(0).into_owned();
            sum += &col * col.adjoint();
        }
        sum
    }
}

/// Splits a term into clock guards and a core of at most three qubits and
/// finds a stabilizer basis of the core's rejected subspace.
pub fn decompose_term(inst: &LhiInstance, term: &HamTerm) -> Result<TermDecomposition> {
    let steps = inst.params.steps;
    let guards = match term.kind {
        TermKind::A | TermKind::B | TermKind::BPrime | TermKind::C => usize::from(term.t > 1) + usize::from(term.t < steps),
        TermKind::D | TermKind::E | TermKind::F => 0,
    };
    let core_len = term.targets.len() - guards;
    if core_len == 0 || core_len > 3 {
        return Err(EncodeError::Malformed(format!("term {} has a core of {core_len} qubits", term.t)));
    }
    let guard_bits: Vec<bool> = term.targets[core_len..].iter().map(|&q| term.t > 1 && q == inst.clock(term.t - 1)).collect();
    let full = term.rejection_projector();
    // Core projector: the block of `full` with every guard at its bit.
    let gmask = guard_bits.iter().enumerate().fold(0usize, |m, (i, &b)| m | usize::from(b) << (core_len + i));
    let cd = 1usize << core_len;
    let core = CMat::from_fn(cd, cd, |i, j| full[(i | gmask, j | gmask)]);
    let mut guard_proj = qsim::identity(1);
    for &b in &guard_bits {
        let mut g = CMat::zeros(2, 2);
        g[(usize::from(b), usize::from(b))] = c(1.0, 0.0);
        guard_proj = qsim::tensor_le(&guard_proj, &g);
    }
    if qsim::max_abs(&(qsim::tensor_le(&core, &guard_proj) - &full)) > 1e-12 {
        return Err(EncodeError::Malformed(format!("term {} does not split into core and guards", term.t)));
    }
    let preps = stabilizer_basis(&core)?.into_iter().map(|s| s.prep).collect();
    Ok(TermDecomposition { t: term.t, kind: term.kind, registers: term.targets.clone(), core_len, guard_bits, preps })
}
