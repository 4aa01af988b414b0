//! Clock-register Hamiltonian checks for three-turn protocols: term
//! construction, honest history states, exact evaluation and strategy
//! extraction. The GHZ-augmented variant lives in [`plus`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{
    Acceptance, Holder, ProtocolError, ProverMove, ProverStrategy, ProverTurn, RegKind, RegisterLayout, Step,
    VGate, VerifierProgram,
};
use crate::qsim::{self, c, CMat, Projector, PureState, QsimError, RejectionOperator, UnitaryGate, C64};
use crate::zk::{ThreeTurnProtocol, ZkError};

pub mod clifford;
pub mod plus;
mod toys;

pub use toys::{lhi_plus_toy, lhi_toy};

#[derive(Debug, Error)]
pub enum LhiError {
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Zk(#[from] ZkError),
    #[error("V has {n} qubits but the circuit has only {steps} steps")]
    TooManyVQubits { n: usize, steps: usize },
    #[error("prover {0}'s third-turn unitary is not an involution with a balanced ±1 spectrum")]
    NotInvolution(usize),
    #[error("honest history needs one-qubit messages, got {0}")]
    MessageLength(usize),
    #[error("response of prover {prover} at query {t}: {reason}")]
    Locality { prover: usize, t: usize, reason: String },
    #[error("degenerate state: projected norm {proj_norm}, bad-time norm {bot_norm}")]
    Degenerate { proj_norm: f64, bot_norm: f64 },
    #[error("{0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, LhiError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TermKind {
    /// Verifier gate step.
    A,
    /// Message qubit moved into `Me_k`.
    B,
    /// Prover step.
    C,
    /// Message qubit moved back.
    BPrime,
    /// Final measurement.
    D,
    /// Clock consistency.
    E,
    /// V initialization.
    F,
}

impl fmt::Display for TermKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TermKind::A => "a",
            TermKind::B => "b",
            TermKind::C => "c",
            TermKind::BPrime => "b'",
            TermKind::D => "d",
            TermKind::E => "e",
            TermKind::F => "f",
        };
        f.write_str(s)
    }
}

/// Shape of an instance. `steps` is the total step count T.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LhiParams {
    pub steps: usize,
    pub t0: usize,
    pub provers: usize,
    pub msg_len: usize,
    pub n: usize,
    /// GHZ width: `2^u ≥ 2T + n`.
    pub u: usize,
}

impl LhiParams {
    pub fn num_terms(&self) -> usize {
        2 * self.steps + self.n
    }

    pub fn padded_terms(&self) -> usize {
        1 << self.u
    }

    fn pl(&self) -> usize {
        self.provers * self.msg_len
    }

    /// Kind of query `t ∈ [1, 2T+n]`.
    pub fn kind(&self, t: usize) -> Option<TermKind> {
        let (tt, t0, pl, p) = (self.steps, self.t0, self.pl(), self.provers);
        Some(match t {
            _ if t == 0 || t > self.num_terms() => return None,
            _ if t <= t0 => TermKind::A,
            _ if t <= t0 + pl => TermKind::B,
            _ if t <= t0 + pl + p => TermKind::C,
            _ if t <= t0 + 2 * pl + p => TermKind::BPrime,
            _ if t <= tt => TermKind::A,
            _ if t == tt + 1 => TermKind::D,
            _ if t <= 2 * tt => TermKind::E,
            _ => TermKind::F,
        })
    }

    /// `(k, j)` of a communication step, 1-based.
    pub fn comm_index(&self, t: usize) -> Option<(usize, usize)> {
        let base = match self.kind(t)? {
            TermKind::B => self.t0,
            TermKind::BPrime => self.t0 + self.pl() + self.provers,
            _ => return None,
        };
        let i = t - base - 1;
        Some((i / self.msg_len + 1, i % self.msg_len + 1))
    }

    /// Prover of a prover step.
    pub fn prover_step(&self, t: usize) -> Option<usize> {
        (self.kind(t)? == TermKind::C).then(|| t - self.t0 - self.pl())
    }

    /// Query index of prover `k`'s step.
    pub fn prover_step_index(&self, k: usize) -> usize {
        self.t0 + self.pl() + k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamTerm {
    pub t: usize,
    pub kind: TermKind,
    pub op: RejectionOperator,
    pub targets: Vec<usize>,
    pub label: String,
}

impl HamTerm {
    /// `‖K ψ‖²`.
    pub fn rejection(&self, psi: &[C64]) -> f64 {
        qsim::applied_norm_sqr(psi, self.op.matrix(), &self.targets)
    }

    /// The POVM element `K†K`.
    pub fn rejection_projector(&self) -> CMat {
        self.op.matrix().adjoint() * self.op.matrix()
    }
}

#[derive(Debug, Clone)]
pub struct LhiInstance {
    pub params: LhiParams,
    /// V, M_k, C_1..C_T, Me_k, P_k in that order.
    pub layout: RegisterLayout,
    /// Verifier gate of each step, `None` off the gate steps. Index `t-1`.
    pub verifier_gates: Vec<Option<VGate>>,
    pub accept: Acceptance,
    /// Term `t` at index `t-1`.
    pub terms: Vec<HamTerm>,
}

fn proj1(b: usize) -> CMat {
    Projector::basis_state(1, b).matrix().clone()
}

fn ket_bra(r: usize, col: usize) -> CMat {
    let mut m = CMat::zeros(2, 2);
    m[(r, col)] = c(1.0, 0.0);
    m
}

/// `½(I − |1⟩⟨0|⊗U − |0⟩⟨1|⊗U†)` with the clock qubit lowest.
pub fn middle_operator(u: &CMat) -> CMat {
    let d = 2 * u.nrows();
    let off = qsim::tensor_le(&ket_bra(1, 0), u) + qsim::tensor_le(&ket_bra(0, 1), &u.adjoint());
    (qsim::identity(d) - off).scale(0.5)
}

fn ceil_log2(x: usize) -> usize {
    let mut u = 0;
    while (1usize << u) < x {
        u += 1;
    }
    u.max(1)
}

fn map_acceptance(acc: &Acceptance, map: &dyn Fn(usize) -> usize) -> Acceptance {
    match acc {
        Acceptance::Always => Acceptance::Always,
        Acceptance::Never => Acceptance::Never,
        Acceptance::QubitIs { qubit, value } => Acceptance::QubitIs { qubit: map(*qubit), value: *value },
        Acceptance::AllZero(qs) => Acceptance::AllZero(qs.iter().map(|&q| map(q)).collect()),
        Acceptance::Project { projector, targets } => {
            Acceptance::Project { projector: projector.clone(), targets: targets.iter().map(|&q| map(q)).collect() }
        }
    }
}

fn map_gate(g: &VGate, map: &dyn Fn(usize) -> usize) -> VGate {
    VGate { kind: g.kind.clone(), targets: g.targets.iter().map(|&q| map(q)).collect() }
}

/// Serializable summary of one term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub t: usize,
    pub kind: TermKind,
    pub label: String,
    pub targets: Vec<usize>,
}

impl LhiInstance {
    pub fn term_table(&self) -> Vec<TermRecord> {
        self.terms
            .iter()
            .map(|h| TermRecord { t: h.t, kind: h.kind, label: h.label.clone(), targets: h.targets.clone() })
            .collect()
    }

    pub fn num_qubits(&self) -> usize {
        self.layout.num_qubits()
    }

    pub fn term(&self, t: usize) -> &HamTerm {
        &self.terms[t - 1]
    }

    /// Qubit of clock register `C_i`, `i ∈ [1, T]`.
    pub fn clock(&self, i: usize) -> usize {
        self.layout.get(RegKind::C(i)).expect("clock register").offset
    }

    pub fn clock_qubits(&self) -> Vec<usize> {
        (1..=self.params.steps).map(|i| self.clock(i)).collect()
    }

    /// Basis-index bits of the clock state `|t⟩ = 1^t 0^{T−t}`.
    pub fn clock_bits(&self, t: usize) -> usize {
        (1..=t).fold(0, |m, i| m | (1 << self.clock(i)))
    }

    pub fn clock_mask(&self) -> usize {
        self.clock_bits(self.params.steps)
    }

    /// Clock time of a basis index, `None` for a bad-time pattern.
    pub fn time_of(&self, index: usize) -> Option<usize> {
        let mut t = 0;
        while t < self.params.steps && index & (1 << self.clock(t + 1)) != 0 {
            t += 1;
        }
        (index & self.clock_mask() == self.clock_bits(t)).then_some(t)
    }

    pub fn v_qubits(&self) -> Vec<usize> {
        self.layout.qubits(RegKind::V).expect("V")
    }

    pub fn m_qubit(&self, k: usize, j: usize) -> usize {
        self.layout.get(RegKind::M(k)).expect("M").qubit(j - 1)
    }

    pub fn me(&self, k: usize) -> usize {
        self.layout.get(RegKind::Me(k)).expect("Me").offset
    }

    /// Qubits prover `k` answers with: `Me_k` then `P_k`.
    pub fn prover_qubits(&self, k: usize) -> Vec<usize> {
        let mut q = vec![self.me(k)];
        q.extend(self.layout.qubits(RegKind::P(k)).expect("P"));
        q
    }

    /// Same instance with every `P_k` widened by `extra` qubits on top.
    pub fn with_private_extra(&self, extra: usize) -> Result<LhiInstance> {
        let mut b = RegisterLayout::builder();
        for r in self.layout.registers() {
            let len = if matches!(r.kind, RegKind::P(_)) { r.len + extra } else { r.len };
            b = b.reg(r.kind, len).held_by(r.kind, r.holder);
        }
        let layout = b.build(self.layout.output_in_v())?;
        Ok(LhiInstance { layout, ..self.clone() })
    }

    /// Guard `|1⟩⟨1|_{C_{t−1}} ⊗ |0⟩⟨0|_{C_{t+1}}`, dropping absent ends.
    fn guard(&self, t: usize) -> (CMat, Vec<usize>) {
        let mut m = qsim::identity(1);
        let mut ts = Vec::new();
        if t > 1 {
            m = qsim::tensor_le(&m, &proj1(1));
            ts.push(self.clock(t - 1));
        }
        if t < self.params.steps {
            m = qsim::tensor_le(&m, &proj1(0));
            ts.push(self.clock(t + 1));
        }
        (m, ts)
    }

    fn step_term(&self, t: usize, kind: TermKind, u: &CMat, gate_targets: &[usize], label: String) -> Result<HamTerm> {
        let (g, gt) = self.guard(t);
        let op = qsim::tensor_le(&middle_operator(u), &g);
        let mut targets = vec![self.clock(t)];
        targets.extend_from_slice(gate_targets);
        targets.extend(gt);
        Ok(HamTerm { t, kind, op: RejectionOperator::new(op)?, targets, label })
    }

    fn build_term(&self, t: usize) -> Result<HamTerm> {
        let prm = self.params;
        let kind = prm.kind(t).expect("t in range");
        match kind {
            TermKind::A => {
                let g = self.verifier_gates[t - 1].as_ref().expect("gate step");
                self.step_term(t, kind, g.unitary().matrix(), &g.targets, format!("{}{:?}", g.name(), g.targets))
            }
            TermKind::B | TermKind::BPrime => {
                let (k, j) = prm.comm_index(t).expect("communication step");
                let label = format!("SWAP(M{k}[{j}],Me{k})");
                self.step_term(t, kind, UnitaryGate::swap().matrix(), &[self.m_qubit(k, j), self.me(k)], label)
            }
            TermKind::C => {
                let k = prm.prover_step(t).expect("prover step");
                let minus = Projector::onto_span(2, &[PureState::minus().into_amplitudes()])?;
                let mid = qsim::tensor_le(minus.matrix(), &qsim::identity(2)) * UnitaryGate::cnot().matrix();
                let (g, gt) = self.guard(t);
                let mut targets = vec![self.clock(t), self.me(k)];
                targets.extend(gt);
                let op = RejectionOperator::new(qsim::tensor_le(&mid, &g))?;
                Ok(HamTerm { t, kind, op, targets, label: format!("|-><-|CNOT(C{t},Me{k})") })
            }
            TermKind::D => {
                let ct = self.clock(prm.steps);
                let (rej, ts) = match (&self.accept, self.accept.projector()) {
                    (_, Some((m, ts))) => (qsim::identity(m.nrows()) - m, ts),
                    (Acceptance::Never, None) => (qsim::identity(1), vec![]),
                    _ => (CMat::zeros(1, 1), vec![]),
                };
                let mut targets = vec![ct];
                targets.extend(ts);
                let op = RejectionOperator::new(qsim::tensor_le(&proj1(1), &rej))?;
                Ok(HamTerm { t, kind, op, targets, label: format!("|1><1|C{} (I-Pacc)", prm.steps) })
            }
            TermKind::E => {
                let i = t - prm.steps - 1;
                let op = RejectionOperator::new(Projector::basis_state(2, 0b10).matrix().clone())?;
                Ok(HamTerm { t, kind, op, targets: vec![self.clock(i), self.clock(i + 1)], label: format!("|01><01|C{i}C{}", i + 1) })
            }
            TermKind::F => {
                let i = t - 2 * prm.steps;
                let op = RejectionOperator::new(qsim::tensor_le(&proj1(0), &proj1(1)))?;
                let v = self.v_qubits()[i - 1];
                Ok(HamTerm { t, kind, op, targets: vec![self.clock(1), v], label: format!("|0><0|C1 |1><1|V{i}") })
            }
        }
    }
}

/// Builds every term for the protocol's circuits `V_0 = v1`, `V_1 = v2`.
pub fn build_lhi(p3: &ThreeTurnProtocol) -> Result<LhiInstance> {
    p3.check()?;
    let p = p3.provers;
    let l = p3.layout.get(RegKind::M(1))?.len;
    for k in 1..=p {
        if p3.layout.get(RegKind::M(k))?.len != l {
            return Err(LhiError::Malformed("message registers differ in length".into()));
        }
    }
    let n = p3.layout.get(RegKind::V)?.len;
    let t0 = p3.v1.len();
    let steps = t0 + 2 * p * l + p + p3.v2.len();
    if n > steps {
        return Err(LhiError::TooManyVQubits { n, steps });
    }

    let mut b = RegisterLayout::builder().reg(RegKind::V, n).held_by(RegKind::V, Holder::Prover(0));
    for k in 1..=p {
        b = b.reg(RegKind::M(k), l).held_by(RegKind::M(k), Holder::Prover(0));
    }
    for i in 1..=steps {
        b = b.reg(RegKind::C(i), 1);
    }
    for k in 1..=p {
        b = b.reg(RegKind::Me(k), 1);
    }
    for k in 1..=p {
        b = b.reg(RegKind::P(k), p3.layout.get(RegKind::P(k))?.len);
    }
    let layout = b.build(p3.layout.output_in_v())?;

    let map = p3_qubit_map(p3, &layout)?;
    let m = |q: usize| map[q];
    let mut verifier_gates = vec![None; steps];
    for (i, g) in p3.v1.iter().enumerate() {
        verifier_gates[i] = Some(map_gate(g, &m));
    }
    let v2_start = t0 + 2 * p * l + p;
    for (i, g) in p3.v2.iter().enumerate() {
        verifier_gates[v2_start + i] = Some(map_gate(g, &m));
    }
    let params = LhiParams { steps, t0, provers: p, msg_len: l, n, u: ceil_log2(2 * steps + n) };
    let mut inst =
        LhiInstance { params, layout, verifier_gates, accept: map_acceptance(&p3.accept, &m), terms: Vec::new() };
    inst.terms = (1..=params.num_terms()).map(|t| inst.build_term(t)).collect::<Result<_>>()?;
    Ok(inst)
}

/// Position in the LHI layout of every qubit of the three-turn layout.
fn p3_qubit_map(p3: &ThreeTurnProtocol, layout: &RegisterLayout) -> Result<Vec<usize>> {
    let mut map = vec![usize::MAX; p3.layout.num_qubits()];
    for r in p3.layout.registers() {
        if !matches!(r.kind, RegKind::V | RegKind::M(_) | RegKind::P(_)) {
            return Err(LhiError::Malformed(format!("unexpected register {} in three-turn layout", r.kind)));
        }
        for (a, b) in r.qubits().into_iter().zip(layout.qubits(r.kind)?) {
            map[a] = b;
        }
    }
    Ok(map)
}

/// Prover responses per query: unitary on `(Me_k, P_k)`, identity if absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResponseTable {
    pub entries: BTreeMap<(usize, usize), UnitaryGate>,
}

impl ResponseTable {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn set(&mut self, prover: usize, t: usize, gate: UnitaryGate) {
        self.entries.insert((prover, t), gate);
    }

    pub fn get(&self, prover: usize, t: usize) -> Option<&UnitaryGate> {
        self.entries.get(&(prover, t))
    }

    pub fn check(&self, inst: &LhiInstance) -> Result<()> {
        let padded = inst.params.padded_terms().max(inst.params.num_terms());
        for (&(k, t), g) in &self.entries {
            if k == 0 || k > inst.params.provers || t == 0 || t > padded {
                return Err(LhiError::Locality { prover: k, t, reason: "no such prover or query".into() });
            }
            let want = inst.prover_qubits(k).len();
            if g.arity() != want {
                return Err(LhiError::Locality {
                    prover: k,
                    t,
                    reason: format!("acts on {} qubits, prover holds {want}", g.arity()),
                });
            }
        }
        Ok(())
    }

    fn apply(&self, inst: &LhiInstance, t: usize, amps: &mut [C64]) {
        for k in 1..=inst.params.provers {
            if let Some(g) = self.get(k, t) {
                qsim::apply_in_place(amps, g.matrix(), &inst.prover_qubits(k));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LhiRun {
    /// Average over the `2T+n` queries.
    pub p_rej: f64,
    /// Rejection given query `t`, at index `t-1`.
    pub per_term: Vec<f64>,
}

/// Exact rejection of the protocol: query `t` uniform, provers answer,
/// the verifier measures term `t`.
pub fn run_lhi(inst: &LhiInstance, phi: &PureState, responses: &ResponseTable) -> Result<LhiRun> {
    if phi.num_qubits() != inst.num_qubits() {
        return Err(QsimError::Dimension { expected: inst.num_qubits(), got: phi.num_qubits() }.into());
    }
    responses.check(inst)?;
    let mut per_term = Vec::with_capacity(inst.terms.len());
    for term in &inst.terms {
        let r = if responses.entries.keys().any(|&(_, t)| t == term.t) {
            let mut v = phi.amplitudes().to_vec();
            responses.apply(inst, term.t, &mut v);
            term.rejection(&v)
        } else {
            term.rejection(phi.amplitudes())
        };
        per_term.push(r);
    }
    let p_rej = per_term.iter().sum::<f64>() / per_term.len() as f64;
    Ok(LhiRun { p_rej, per_term })
}

/// The same protocol for the generic engine: one coin label per query.
pub fn lhi_program(inst: &LhiInstance) -> Result<VerifierProgram> {
    let branches = inst
        .terms
        .iter()
        .map(|term| {
            let acc = Projector::new(qsim::identity(term.op.matrix().nrows()) - term.rejection_projector())?;
            Ok(vec![Step::Provers(0), Step::Decide(Acceptance::Project { projector: acc, targets: term.targets.clone() })])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VerifierProgram::uniform(branches))
}

/// Engine strategy answering label `t-1` with the table's responses.
pub fn lhi_engine_strategy(inst: &LhiInstance, phi: &PureState, responses: &ResponseTable) -> ProverStrategy {
    let by_label = (1..=inst.params.num_terms())
        .map(|t| {
            (1..=inst.params.provers)
                .filter_map(|k| {
                    responses.get(k, t).map(|g| ProverMove { prover: k, gate: g.clone(), targets: inst.prover_qubits(k) })
                })
                .collect()
        })
        .collect();
    ProverStrategy { initial: phi.clone(), turns: vec![ProverTurn { by_label }] }
}

/// `E` with `E† (X ⊗ I) E = B`, `X` on the lowest qubit. Exists iff `B` is
/// Hermitian and unitary with as many `+1` as `-1` eigenvalues.
pub fn involution_encoder(b: &UnitaryGate) -> Option<UnitaryGate> {
    let m = b.matrix();
    if qsim::max_abs(&(m - m.adjoint())) > 1e-10 {
        return None;
    }
    let (vals, vecs) = qsim::hermitian_eigen(m);
    let d = vals.len();
    let half = d / 2;
    if d % 2 != 0
        || vals[..half].iter().any(|v| (v + 1.0).abs() > 1e-8)
        || vals[half..].iter().any(|v| (v - 1.0).abs() > 1e-8)
    {
        return None;
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut e = CMat::zeros(d, d);
    for j in 0..half {
        let w = vecs.column(j);
        let v = vecs.column(half + j);
        for col in 0..d {
            let (pv, pw) = (v[col].conj() * s, w[col].conj() * s);
            e[(2 * j, col)] += pv + pw;
            e[(2 * j + 1, col)] += pv - pw;
        }
    }
    UnitaryGate::new(e).ok()
}

/// Step unitaries `U_1..U_T` on the full layout, with communication and
/// prover steps conjugated by the provers' responses.
pub fn step_unitaries(inst: &LhiInstance, responses: &ResponseTable) -> Result<Vec<(UnitaryGate, Vec<usize>)>> {
    let prm = inst.params;
    let mut out = Vec::with_capacity(prm.steps);
    for t in 1..=prm.steps {
        let kind = prm.kind(t).expect("t in range");
        let step = match kind {
            TermKind::A => {
                let g = inst.verifier_gates[t - 1].as_ref().expect("gate step");
                (g.unitary(), g.targets.clone())
            }
            TermKind::B | TermKind::BPrime => {
                let (k, j) = prm.comm_index(t).expect("communication step");
                let own = inst.prover_qubits(k);
                let np = own.len();
                let d = responses.get(k, t).cloned().unwrap_or_else(|| UnitaryGate::identity(np));
                let pos: Vec<usize> = (1..=np).collect();
                let gate = UnitaryGate::compose(
                    np + 1,
                    &[(&d, pos.clone()), (&UnitaryGate::swap(), vec![0, 1]), (&d.adjoint(), pos)],
                )?;
                let mut targets = vec![inst.m_qubit(k, j)];
                targets.extend(own);
                (gate, targets)
            }
            TermKind::C => {
                let k = prm.prover_step(t).expect("prover step");
                let own = inst.prover_qubits(k);
                let np = own.len();
                let e = responses.get(k, t).cloned().unwrap_or_else(|| UnitaryGate::identity(np));
                let all: Vec<usize> = (0..np).collect();
                let gate =
                    UnitaryGate::compose(np, &[(&e, all.clone()), (&UnitaryGate::x(), vec![0]), (&e.adjoint(), all)])?;
                (gate, own)
            }
            _ => unreachable!("steps are gate, communication or prover steps"),
        };
        out.push(step);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct HonestHistory {
    /// `Σ_t |t⟩|ψ_t⟩ / √(T+1)`.
    pub state: PureState,
    pub responses: ResponseTable,
    /// `ψ_t` with the clock register cleared, `t = 0..=T`.
    pub snapshots: Vec<PureState>,
}

/// Honest history state and responses: identity except `E_k` at prover
/// `k`'s step, where `E_k† X E_k` is the honest third-turn unitary.
pub fn honest_history_state(inst: &LhiInstance, p3: &ThreeTurnProtocol) -> Result<HonestHistory> {
    let prm = inst.params;
    if prm.msg_len != 1 {
        return Err(LhiError::MessageLength(prm.msg_len));
    }
    let mut start = p3.honest.initial.clone();
    for m in p3.honest.turns[0].moves(0) {
        start = start.apply(&m.gate, &m.targets)?;
    }
    let v = p3.v_qubits();
    if Acceptance::AllZero(v).probability(&start)? < 1.0 - 1e-12 {
        return Err(LhiError::Malformed("honest initial state has V away from |0^n⟩".into()));
    }
    let map = p3_qubit_map(p3, &inst.layout)?;
    let psi0 = qsim::product_on(inst.num_qubits(), &[(&start, &map)])?;

    let mut responses = ResponseTable::identity();
    for k in 1..=prm.provers {
        let own = p3.layout.prover_qubits(k);
        let want = p3.layout.qubits_of(&[RegKind::M(k), RegKind::P(k)])?;
        if own != want {
            return Err(LhiError::Malformed(format!("prover {k} holds registers beyond M{k}, P{k}")));
        }
        let b = p3.third_turn_unitary(k)?;
        let e = involution_encoder(&b).ok_or(LhiError::NotInvolution(k))?;
        responses.set(k, prm.prover_step_index(k), e);
    }

    let steps = step_unitaries(inst, &responses)?;
    let mut snapshots = vec![psi0];
    for (g, ts) in &steps {
        let next = snapshots.last().expect("nonempty").apply(g, ts)?;
        snapshots.push(next);
    }
    let norm = 1.0 / ((prm.steps + 1) as f64).sqrt();
    let mut amps = vec![c(0.0, 0.0); 1 << inst.num_qubits()];
    for (t, s) in snapshots.iter().enumerate() {
        let bits = inst.clock_bits(t);
        for (i, a) in s.amplitudes().iter().enumerate() {
            if *a != c(0.0, 0.0) {
                amps[i | bits] += a * norm;
            }
        }
    }
    Ok(HonestHistory { state: PureState::new(inst.num_qubits(), amps)?, responses, snapshots })
}

/// Bound check for one step: `‖ψ_t − U_t ψ_{t−1}‖ ≤ √2 ‖H_t R_t φ‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBound {
    pub t: usize,
    pub kind: TermKind,
    pub link: f64,
    pub bound: f64,
}

/// Every quantity of the extraction argument, each side computed on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LhiDiagnostics {
    /// `‖Π_{0^n} W φ‖`.
    pub proj_norm: f64,
    /// Lower bound on `proj_norm` from the exact links.
    pub proj_norm_lower: f64,
    /// Same bound with each link replaced by its term-level bound.
    pub proj_norm_lower_terms: f64,
    /// `‖|⊥⟩‖`, the bad-time mass.
    pub bot_norm: f64,
    /// `Σ_e ‖H_e φ‖`.
    pub bot_bound: f64,
    /// `‖(I − Π_{0^n}) ψ_0‖` and `Σ_f ‖H_f φ‖`.
    pub init_residual: f64,
    pub init_bound: f64,
    /// `‖Π_rej ψ_T‖` and `‖H_d φ‖`.
    pub accept_residual: f64,
    pub accept_bound: f64,
    pub links: Vec<LinkBound>,
    /// `√p_rej` of the extracted strategy.
    pub sqrt_p_rej: f64,
    /// `(‖Π_rej U W φ‖ + ‖(I − Π) W φ‖) / proj_norm`.
    pub sqrt_p_rej_mid: f64,
    /// Telescoped bound from the links.
    pub sqrt_p_rej_bound: f64,
}

impl LhiDiagnostics {
    pub fn holds(&self, tol: f64) -> bool {
        self.proj_norm >= self.proj_norm_lower - tol
            && self.proj_norm_lower >= self.proj_norm_lower_terms - tol
            && self.bot_norm <= self.bot_bound + tol
            && self.init_residual <= self.init_bound + tol
            && self.accept_residual <= self.accept_bound + tol
            && self.links.iter().all(|l| l.link <= l.bound + tol)
            && self.sqrt_p_rej <= self.sqrt_p_rej_mid + tol
            && self.sqrt_p_rej_mid <= self.sqrt_p_rej_bound + tol
    }
}

#[derive(Debug, Clone)]
pub struct LhiExtraction {
    /// Shared initial state, on the LHI layout (V in |0^n⟩).
    pub state: PureState,
    /// `P_k = A'_k B_k A_k` on `(M_k, Me_k, P_k)`.
    pub prover_unitaries: Vec<UnitaryGate>,
    /// Rejection of the recovered three-turn strategy.
    pub p_rej: f64,
    pub diagnostics: LhiDiagnostics,
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn diff_norm(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn apply_steps(v: &mut [C64], steps: &[(UnitaryGate, Vec<usize>)]) {
    for (g, ts) in steps {
        qsim::apply_in_place(v, g.matrix(), ts);
    }
}

fn apply_steps_adjoint(v: &mut [C64], steps: &[(UnitaryGate, Vec<usize>)]) {
    for (g, ts) in steps.iter().rev() {
        qsim::apply_in_place(v, &g.matrix().adjoint(), ts);
    }
}

/// Rejection mass `‖Π_rej v‖²` of the final measurement.
fn final_rejection(inst: &LhiInstance, v: &[C64]) -> f64 {
    match inst.accept.projector() {
        Some((m, ts)) => qsim::applied_norm_sqr(v, &(qsim::identity(m.nrows()) - m), &ts),
        None if matches!(inst.accept, Acceptance::Never) => v.iter().map(|z| z.norm_sqr()).sum(),
        None => 0.0,
    }
}

/// Recovers a three-turn strategy from a state and responses, and checks
/// every inequality of the argument on it.
pub fn extract_strategy(inst: &LhiInstance, phi: &PureState, responses: &ResponseTable) -> Result<LhiExtraction> {
    let prm = inst.params;
    let big_t = prm.steps;
    let dim = 1usize << inst.num_qubits();
    if phi.num_qubits() != inst.num_qubits() {
        return Err(QsimError::Dimension { expected: inst.num_qubits(), got: phi.num_qubits() }.into());
    }
    responses.check(inst)?;
    let steps = step_unitaries(inst, responses)?;
    let cmask = inst.clock_mask();

    // ψ_t with clock bits cleared, and the bad-time remainder.
    let mut psi = vec![vec![c(0.0, 0.0); dim]; big_t + 1];
    let mut bot = vec![c(0.0, 0.0); dim];
    for (i, a) in phi.amplitudes().iter().enumerate() {
        match inst.time_of(i) {
            Some(t) => psi[t][i & !cmask] = *a,
            None => bot[i] = *a,
        }
    }
    let bot_norm = norm(&bot);

    // W φ, then Π_{0^n}.
    let mut w = bot.clone();
    for (t, p) in psi.iter().enumerate() {
        let mut v = p.clone();
        apply_steps_adjoint(&mut v, &steps[..t]);
        let bits = inst.clock_bits(t);
        for (i, a) in v.iter().enumerate() {
            if *a != c(0.0, 0.0) {
                w[i | bits] += a;
            }
        }
    }
    let vmask = qsim::target_mask(&inst.v_qubits());
    let mut proj = w.clone();
    let mut off = vec![c(0.0, 0.0); dim];
    for (i, a) in proj.iter_mut().enumerate() {
        if i & vmask != 0 {
            off[i] = *a;
            *a = c(0.0, 0.0);
        }
    }
    let proj_norm = norm(&proj);
    let valid_mass = (phi.norm_sqr() - bot_norm * bot_norm).max(0.0);
    if proj_norm <= 1e-12 || valid_mass <= 1e-24 {
        return Err(LhiError::Degenerate { proj_norm, bot_norm });
    }
    let off_norm = norm(&off);
    let state = PureState::normalized(inst.num_qubits(), proj.clone())?;

    // P_k on (M_k, Me_k, P_k), steps in time order.
    let mut prover_unitaries = Vec::new();
    for k in 1..=prm.provers {
        let mut own: Vec<usize> = (1..=prm.msg_len).map(|j| inst.m_qubit(k, j)).collect();
        own.extend(inst.prover_qubits(k));
        let mut factors = Vec::new();
        for (t, (g, ts)) in steps.iter().enumerate() {
            let t = t + 1;
            let mine = match prm.kind(t) {
                Some(TermKind::B | TermKind::BPrime) => prm.comm_index(t).map(|x| x.0) == Some(k),
                Some(TermKind::C) => prm.prover_step(t) == Some(k),
                _ => false,
            };
            if mine {
                let pos = ts.iter().map(|q| own.iter().position(|o| o == q).expect("prover qubit")).collect();
                factors.push((g, pos));
            }
        }
        prover_unitaries.push(UnitaryGate::compose(own.len(), &factors)?);
    }

    let mut fin = state.amplitudes().to_vec();
    apply_steps(&mut fin, &steps);
    let p_rej = final_rejection(inst, &fin);

    // Term-level quantities.
    let term_norm = |t: usize| -> f64 {
        let term = inst.term(t);
        let mut v = phi.amplitudes().to_vec();
        responses.apply(inst, t, &mut v);
        term.rejection(&v).sqrt()
    };
    let bot_bound: f64 = (big_t + 2..=2 * big_t).map(term_norm).sum();
    let init_residual = norm(&psi[0].iter().enumerate().map(|(i, a)| if i & vmask != 0 { *a } else { c(0.0, 0.0) }).collect::<Vec<_>>());
    let init_bound: f64 = (2 * big_t + 1..=2 * big_t + prm.n).map(term_norm).sum();
    let accept_residual = final_rejection(inst, &psi[big_t]).sqrt();
    let accept_bound = term_norm(big_t + 1);
    let mut links = Vec::new();
    for t in 1..=big_t {
        let mut prev = psi[t - 1].clone();
        apply_steps(&mut prev, &steps[t - 1..t]);
        links.push(LinkBound {
            t,
            kind: prm.kind(t).expect("step"),
            link: diff_norm(&psi[t], &prev),
            bound: std::f64::consts::SQRT_2 * term_norm(t),
        });
    }
    let lower = |init: f64, link: &dyn Fn(usize) -> f64, bot: f64| -> f64 {
        let total: f64 = (0..=big_t).map(|t| init + (1..=t).map(link).sum::<f64>()).sum();
        1.0 - total - bot
    };
    let proj_norm_lower = lower(init_residual, &|t| links[t - 1].link, bot_norm);
    let proj_norm_lower_terms = lower(init_bound, &|t| links[t - 1].bound, bot_bound);

    let mut uw = w;
    apply_steps(&mut uw, &steps);
    let sqrt_p_rej_mid = (final_rejection(inst, &uw).sqrt() + off_norm) / proj_norm;
    let tele: f64 = (0..=big_t).map(|t| accept_residual + (t + 1..=big_t).map(|s| links[s - 1].link).sum::<f64>()).sum();
    let sqrt_p_rej_bound = (tele + bot_norm + off_norm) / proj_norm;

    let diagnostics = LhiDiagnostics {
        proj_norm,
        proj_norm_lower,
        proj_norm_lower_terms,
        bot_norm,
        bot_bound,
        init_residual,
        init_bound,
        accept_residual,
        accept_bound,
        links,
        sqrt_p_rej: p_rej.sqrt(),
        sqrt_p_rej_mid,
        sqrt_p_rej_bound,
    };
    Ok(LhiExtraction { state, prover_unitaries, p_rej, diagnostics })
}

/// The recovered strategy as a three-turn protocol run by the engine:
/// prover `k` keeps `Me_k` and `P_k` private, prover 1 also keeps the clock.
pub fn extracted_three_turn(inst: &LhiInstance, ex: &LhiExtraction) -> Result<ThreeTurnProtocol> {
    let prm = inst.params;
    let mut b = RegisterLayout::builder().reg(RegKind::V, prm.n);
    for k in 1..=prm.provers {
        let extra = if k == 1 { prm.steps } else { 0 };
        b = b.reg(RegKind::M(k), prm.msg_len).reg(RegKind::P(k), inst.prover_qubits(k).len() + extra);
    }
    let layout = b.build(inst.layout.output_in_v())?;
    let mut map = vec![usize::MAX; inst.num_qubits()];
    for (a, q) in inst.v_qubits().into_iter().zip(layout.qubits(RegKind::V)?) {
        map[a] = q;
    }
    for k in 1..=prm.provers {
        for (a, q) in inst.layout.qubits(RegKind::M(k))?.into_iter().zip(layout.qubits(RegKind::M(k))?) {
            map[a] = q;
        }
        let mut private = inst.prover_qubits(k);
        if k == 1 {
            private.extend(inst.clock_qubits());
        }
        for (a, q) in private.into_iter().zip(layout.qubits(RegKind::P(k))?) {
            map[a] = q;
        }
    }
    let m = |q: usize| map[q];
    let initial = qsim::product_on(layout.num_qubits(), &[(&ex.state, &map)])?;
    let v2_start = prm.t0 + 2 * prm.pl() + prm.provers;
    let gates = |range: std::ops::Range<usize>| -> Vec<VGate> {
        range.map(|i| map_gate(inst.verifier_gates[i].as_ref().expect("gate step"), &m)).collect()
    };
    let mut third = Vec::new();
    for (k, u) in ex.prover_unitaries.iter().enumerate() {
        let k = k + 1;
        let mut own: Vec<usize> = (1..=prm.msg_len).map(|j| map[inst.m_qubit(k, j)]).collect();
        own.extend(inst.prover_qubits(k).into_iter().map(m));
        third.push(ProverMove { prover: k, gate: u.clone(), targets: own });
    }
    let p3 = ThreeTurnProtocol {
        v1: gates(0..prm.t0),
        v2: gates(v2_start..prm.steps),
        accept: map_acceptance(&inst.accept, &m),
        provers: prm.provers,
        honest: ProverStrategy { initial, turns: vec![ProverTurn::idle(), ProverTurn::same(third)] },
        layout,
    };
    p3.check()?;
    Ok(p3)
}

/// One point of the perturbation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub lhi_rej: f64,
    pub extracted_rej: f64,
    /// `(T⁵ ε)^{1/4}`.
    pub trend: f64,
    pub diagnostics_hold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSweep {
    pub points: Vec<SweepPoint>,
    /// Smallest `C` with `√extracted_rej ≤ C (T⁵ ε)^{1/4}` on every point.
    pub fitted_c: f64,
    /// Least-squares slope of `ln √extracted_rej` against `ln ε`.
    pub exponent_amplitude: f64,
    /// Same for `ln extracted_rej`.
    pub exponent_rejection: f64,
}

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `φ_δ = normalize(history + δ·garbage)` with honest responses.
pub fn perturbation_sweep(
    inst: &LhiInstance,
    honest: &HonestHistory,
    deltas: &[f64],
    seed: u64,
) -> Result<PerturbationSweep> {
    let mut rng = crate::seed::stream(seed, 0);
    let garbage = PureState::random(inst.num_qubits(), &mut rng)?;
    let t5 = (inst.params.steps as f64).powi(5);
    let mut points = Vec::new();
    for &delta in deltas {
        let amps: Vec<C64> =
            honest.state.amplitudes().iter().zip(garbage.amplitudes()).map(|(h, g)| h + g * delta).collect();
        let phi = PureState::normalized(inst.num_qubits(), amps)?;
        let lhi_rej = run_lhi(inst, &phi, &honest.responses)?.p_rej;
        let ex = extract_strategy(inst, &phi, &honest.responses)?;
        points.push(SweepPoint {
            delta,
            lhi_rej,
            extracted_rej: ex.p_rej,
            trend: (t5 * lhi_rej).powf(0.25),
            diagnostics_hold: ex.diagnostics.holds(1e-9),
        });
    }
    let fitted_c =
        points.iter().filter(|p| p.trend > 0.0).map(|p| p.extracted_rej.sqrt() / p.trend).fold(0.0, f64::max);
    let eps: Vec<f64> = points.iter().map(|p| p.lhi_rej).collect();
    let rej: Vec<f64> = points.iter().map(|p| p.extracted_rej).collect();
    let amp: Vec<f64> = rej.iter().map(|r| r.sqrt()).collect();
    Ok(PerturbationSweep {
        points,
        fitted_c,
        exponent_amplitude: log_slope(&eps, &amp),
        exponent_rejection: log_slope(&eps, &rej),
    })
}
