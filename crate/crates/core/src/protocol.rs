//! Multi-prover interaction model: register layouts, verifier programs made
//! of `{H⊗H, Λ(P)}` gates, prover strategies and exact or sampled runs.
//!
//! A program is a weighted list of coin branches. The coin value is the
//! classical label every prover receives, and each branch is a script of
//! prover turns, verifier turns, mid-run measurements and a final decision.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qsim::{self, computational_measure, PureState, Projector, QsimError, UnitaryGate, C64};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error("layout: {0}")]
    Layout(String),
    #[error("no register {0} in layout")]
    UnknownRegister(String),
    #[error("program or strategy invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("branch {0} ends without a decision")]
    MissingDecision(usize),
    #[error("strategy has no prover turn {0}")]
    MissingTurn(usize),
    #[error("repetition needs 1 <= k and theta <= k, got k={k} theta={theta}")]
    BadRepetition { k: usize, theta: usize },
    #[error("coin weights must be nonnegative and sum to 1")]
    BadCoin,
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegKind {
    V,
    M(usize),
    P(usize),
    G(usize),
    C(usize),
    Me(usize),
}

impl fmt::Display for RegKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegKind::V => write!(f, "V"),
            RegKind::M(i) => write!(f, "M{i}"),
            RegKind::P(i) => write!(f, "P{i}"),
            RegKind::G(i) => write!(f, "G{i}"),
            RegKind::C(t) => write!(f, "C{t}"),
            RegKind::Me(i) => write!(f, "Me{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Holder {
    Verifier,
    Prover(usize),
}

impl RegKind {
    fn default_holder(self) -> Holder {
        match self {
            RegKind::V => Holder::Verifier,
            RegKind::M(i) | RegKind::P(i) | RegKind::G(i) | RegKind::Me(i) => Holder::Prover(i),
            RegKind::C(_) => Holder::Prover(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Register {
    pub kind: RegKind,
    pub offset: usize,
    pub len: usize,
    pub holder: Holder,
}

impl Register {
    pub fn qubits(&self) -> Vec<usize> {
        (self.offset..self.offset + self.len).collect()
    }

    pub fn qubit(&self, j: usize) -> usize {
        assert!(j < self.len, "qubit {j} outside register {}", self.kind);
        self.offset + j
    }

    pub fn contains(&self, q: usize) -> bool {
        (self.offset..self.offset + self.len).contains(&q)
    }
}

/// Registers laid out contiguously in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterLayout {
    regs: Vec<Register>,
    output: usize,
    num_qubits: usize,
}

#[derive(Debug, Default, Clone)]
pub struct LayoutBuilder {
    regs: Vec<Register>,
    next: usize,
}

impl LayoutBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reg(mut self, kind: RegKind, len: usize) -> Self {
        self.regs.push(Register { kind, offset: self.next, len, holder: kind.default_holder() });
        self.next += len;
        self
    }

    pub fn held_by(mut self, kind: RegKind, holder: Holder) -> Self {
        if let Some(r) = self.regs.iter_mut().find(|r| r.kind == kind) {
            r.holder = holder;
        }
        self
    }

    /// `output` is the index of the output qubit inside V.
    pub fn build(self, output: usize) -> Result<RegisterLayout> {
        for (i, r) in self.regs.iter().enumerate() {
            if r.len == 0 {
                return Err(ProtocolError::Layout(format!("register {} is empty", r.kind)));
            }
            if self.regs[..i].iter().any(|o| o.kind == r.kind) {
                return Err(ProtocolError::Layout(format!("register {} declared twice", r.kind)));
            }
        }
        qsim::check_qubits(self.next)?;
        let v = self
            .regs
            .iter()
            .find(|r| r.kind == RegKind::V)
            .ok_or_else(|| ProtocolError::Layout("no verifier register V".into()))?;
        if output >= v.len {
            return Err(ProtocolError::Layout(format!("output qubit {output} outside V")));
        }
        let output = v.offset + output;
        Ok(RegisterLayout { regs: self.regs, output, num_qubits: self.next })
    }
}

impl RegisterLayout {
    pub fn builder() -> LayoutBuilder {
        LayoutBuilder::new()
    }

    /// Builder holding the current registers, for extending a layout.
    pub fn to_builder(&self) -> LayoutBuilder {
        LayoutBuilder { regs: self.regs.clone(), next: self.num_qubits }
    }

    /// Output qubit position inside V.
    pub fn output_in_v(&self) -> usize {
        let v = self.regs.iter().find(|r| r.kind == RegKind::V).expect("layout has V");
        self.output - v.offset
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn output(&self) -> usize {
        self.output
    }

    pub fn registers(&self) -> &[Register] {
        &self.regs
    }

    pub fn get(&self, kind: RegKind) -> Result<&Register> {
        self.regs.iter().find(|r| r.kind == kind).ok_or_else(|| ProtocolError::UnknownRegister(kind.to_string()))
    }

    pub fn qubits(&self, kind: RegKind) -> Result<Vec<usize>> {
        Ok(self.get(kind)?.qubits())
    }

    pub fn qubits_of(&self, kinds: &[RegKind]) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for &k in kinds {
            out.extend(self.qubits(k)?);
        }
        Ok(out)
    }

    pub fn owner(&self, q: usize) -> Option<&Register> {
        self.regs.iter().find(|r| r.contains(q))
    }

    pub fn held_by(&self, holder: Holder) -> Vec<usize> {
        self.regs.iter().filter(|r| r.holder == holder).flat_map(|r| r.qubits()).collect()
    }

    pub fn prover_qubits(&self, i: usize) -> Vec<usize> {
        self.held_by(Holder::Prover(i))
    }

    /// Indices of provers that hold at least one register.
    pub fn provers(&self) -> Vec<usize> {
        let mut ps: Vec<usize> = self
            .regs
            .iter()
            .filter_map(|r| match r.holder {
                Holder::Prover(i) => Some(i),
                Holder::Verifier => None,
            })
            .collect();
        ps.sort_unstable();
        ps.dedup();
        ps
    }

    /// Qubits held by any prover, ascending.
    pub fn all_prover_qubits(&self) -> Vec<usize> {
        let mut qs: Vec<usize> =
            self.regs.iter().filter(|r| r.holder != Holder::Verifier).flat_map(|r| r.qubits()).collect();
        qs.sort_unstable();
        qs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VGateKind {
    Hh,
    LambdaP,
    /// Anything outside the gate set; always reported by `validate`.
    Raw { name: String, gate: UnitaryGate },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VGate {
    pub kind: VGateKind,
    pub targets: Vec<usize>,
}

impl VGate {
    pub fn hh(a: usize, b: usize) -> Self {
        Self { kind: VGateKind::Hh, targets: vec![a, b] }
    }

    pub fn lambda_p(control: usize, target: usize) -> Self {
        Self { kind: VGateKind::LambdaP, targets: vec![control, target] }
    }

    pub fn raw(name: &str, gate: UnitaryGate, targets: Vec<usize>) -> Self {
        Self { kind: VGateKind::Raw { name: name.into(), gate }, targets }
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            VGateKind::Hh => "HH",
            VGateKind::LambdaP => "LambdaP",
            VGateKind::Raw { name, .. } => name,
        }
    }

    pub fn unitary(&self) -> UnitaryGate {
        match &self.kind {
            VGateKind::Hh => UnitaryGate::hh(),
            VGateKind::LambdaP => UnitaryGate::lambda_p(),
            VGateKind::Raw { gate, .. } => gate.clone(),
        }
    }
}

/// Gate-set circuits for common verifier operations.
pub mod circuits {
    use super::VGate;

    /// Inverse circuit; `Λ(P)†` is written as `Λ(P)³`.
    pub fn adjoint(gates: &[VGate]) -> Vec<VGate> {
        let mut out = Vec::new();
        for g in gates.iter().rev() {
            match g.kind {
                super::VGateKind::LambdaP => out.extend(std::iter::repeat_n(g.clone(), 3)),
                _ => out.push(g.clone()),
            }
        }
        out
    }

    /// Controlled-Z as `Λ(P)²`.
    pub fn cz(a: usize, b: usize) -> Vec<VGate> {
        vec![VGate::lambda_p(a, b), VGate::lambda_p(a, b)]
    }

    /// CNOT from `control` to `target`; `spare` receives H twice and is
    /// left unchanged.
    pub fn cnot(control: usize, target: usize, spare: usize) -> Vec<VGate> {
        let mut g = vec![VGate::hh(target, spare)];
        g.extend(cz(control, target));
        g.push(VGate::hh(target, spare));
        g
    }

    /// X on `target` using a spare qubit known to be in |1⟩.
    pub fn x_with_one(target: usize, one: usize, spare: usize) -> Vec<VGate> {
        cnot(one, target, spare)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Acceptance {
    Always,
    Never,
    QubitIs { qubit: usize, value: bool },
    AllZero(Vec<usize>),
    Project { projector: Projector, targets: Vec<usize> },
}

impl Acceptance {
    /// Accepting projector and its targets; `None` for `Always`/`Never`.
    pub fn projector(&self) -> Option<(qsim::CMat, Vec<usize>)> {
        match self {
            Acceptance::Always | Acceptance::Never => None,
            Acceptance::QubitIs { qubit, value } => {
                Some((Projector::basis_state(1, usize::from(*value)).matrix().clone(), vec![*qubit]))
            }
            Acceptance::AllZero(qs) => Some((Projector::basis_state(qs.len(), 0).matrix().clone(), qs.clone())),
            Acceptance::Project { projector, targets } => Some((projector.matrix().clone(), targets.clone())),
        }
    }

    /// Acceptance probability of a (possibly subnormalized) mixed state.
    pub fn probability_mixed(&self, rho: &qsim::DensityOperator) -> Result<f64> {
        Ok(match self {
            Acceptance::Always => rho.trace(),
            Acceptance::Never => 0.0,
            _ => {
                let (m, t) = self.projector().expect("projective kinds");
                rho.expectation(&m, &t)?
            }
        })
    }

    pub fn probability(&self, state: &PureState) -> Result<f64> {
        Ok(match self {
            Acceptance::Always => 1.0,
            Acceptance::Never => 0.0,
            Acceptance::QubitIs { qubit, value } => computational_measure(state, &[*qubit])?
                .iter()
                .filter(|b| (b.outcome == 1) == *value)
                .map(|b| b.probability)
                .sum(),
            Acceptance::AllZero(qs) => {
                let mask = qsim::target_mask(qs);
                state.amplitudes().iter().enumerate().filter(|(i, _)| i & mask == 0).map(|(_, a)| a.norm_sqr()).sum()
            }
            Acceptance::Project { projector, targets } => {
                qsim::projective_measure(state, projector, targets)?.p_yes
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    /// Every prover applies its moves for this turn index.
    Provers(usize),
    Verifier(Vec<VGate>),
    /// Computational measurement of one qubit; the run continues with the
    /// script for the observed bit. Must be the last step of its script.
    Branch { qubit: usize, on: Box<[Vec<Step>; 2]> },
    Decide(Acceptance),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifierProgram {
    /// Coin distribution; branch `b` sends label `b` to the provers.
    pub coin: Vec<f64>,
    pub branches: Vec<Vec<Step>>,
}

impl VerifierProgram {
    pub fn deterministic(script: Vec<Step>) -> Self {
        Self { coin: vec![1.0], branches: vec![script] }
    }

    pub fn uniform(branches: Vec<Vec<Step>>) -> Self {
        let w = 1.0 / branches.len() as f64;
        Self { coin: vec![w; branches.len()], branches }
    }

    fn gates(&self) -> Vec<(usize, &VGate)> {
        fn walk<'a>(b: usize, steps: &'a [Step], out: &mut Vec<(usize, &'a VGate)>) {
            for s in steps {
                match s {
                    Step::Verifier(gs) => out.extend(gs.iter().map(|g| (b, g))),
                    Step::Branch { on, .. } => {
                        walk(b, &on[0], out);
                        walk(b, &on[1], out);
                    }
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        for (b, s) in self.branches.iter().enumerate() {
            walk(b, s, &mut out);
        }
        out
    }

    /// Largest prover turn index referenced, plus one.
    pub fn prover_turns(&self) -> usize {
        fn walk(steps: &[Step]) -> usize {
            steps
                .iter()
                .map(|s| match s {
                    Step::Provers(j) => j + 1,
                    Step::Branch { on, .. } => walk(&on[0]).max(walk(&on[1])),
                    _ => 0,
                })
                .max()
                .unwrap_or(0)
        }
        self.branches.iter().map(|b| walk(b)).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Coin branch, or prover turn for strategy violations.
    pub at: usize,
    pub gate: String,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.gate, self.at, self.reason)
    }
}

/// Gate-set and locality violations of a verifier program.
pub fn validate(layout: &RegisterLayout, program: &VerifierProgram) -> Vec<Violation> {
    let mut out = Vec::new();
    for (b, g) in program.gates() {
        let v = |reason: String| Violation { at: b, gate: g.name().to_string(), reason };
        if let VGateKind::Raw { .. } = g.kind {
            out.push(v("gate outside {H⊗H, Λ(P)}".into()));
            continue;
        }
        if g.targets.len() != 2 {
            out.push(v(format!("expects 2 targets, got {}", g.targets.len())));
            continue;
        }
        for &t in &g.targets {
            match layout.owner(t) {
                None => out.push(v(format!("qubit {t} outside layout"))),
                Some(r) if matches!(r.kind, RegKind::P(_)) => {
                    out.push(v(format!("touches private prover register {}", r.kind)))
                }
                _ => {}
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProverMove {
    pub prover: usize,
    pub gate: UnitaryGate,
    pub targets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProverTurn {
    /// Moves per received label; a single entry applies to every label.
    pub by_label: Vec<Vec<ProverMove>>,
}

impl ProverTurn {
    pub fn same(moves: Vec<ProverMove>) -> Self {
        Self { by_label: vec![moves] }
    }

    pub fn idle() -> Self {
        Self { by_label: vec![vec![]] }
    }

    pub fn moves(&self, label: usize) -> &[ProverMove] {
        if self.by_label.len() == 1 {
            &self.by_label[0]
        } else {
            self.by_label.get(label).map(|v| v.as_slice()).unwrap_or(&[])
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProverStrategy {
    /// Full-system initial state; verifier-held qubits start in |0⟩.
    pub initial: PureState,
    pub turns: Vec<ProverTurn>,
}

impl ProverStrategy {
    /// Embeds `shared`, given on the prover-held qubits in ascending order.
    pub fn from_shared(layout: &RegisterLayout, shared: &PureState, turns: Vec<ProverTurn>) -> Result<Self> {
        let qs = layout.all_prover_qubits();
        if shared.num_qubits() != qs.len() {
            return Err(QsimError::Dimension { expected: qs.len(), got: shared.num_qubits() }.into());
        }
        let offs = qsim::target_offsets(&qs);
        let mut amps = vec![C64::new(0.0, 0.0); 1 << layout.num_qubits()];
        for (s, a) in shared.amplitudes().iter().enumerate() {
            amps[offs[s]] = *a;
        }
        Ok(Self { initial: PureState::new(layout.num_qubits(), amps)?, turns })
    }

    /// Product of per-register states, with verifier registers in |0⟩.
    pub fn from_registers(
        layout: &RegisterLayout,
        states: &[(RegKind, PureState)],
        turns: Vec<ProverTurn>,
    ) -> Result<Self> {
        let mut amps = vec![C64::new(0.0, 0.0); 1 << layout.num_qubits()];
        let mut qubits = Vec::new();
        let mut joint: Option<PureState> = None;
        for (k, s) in states {
            let qs = layout.qubits(*k)?;
            if qs.len() != s.num_qubits() {
                return Err(QsimError::Dimension { expected: qs.len(), got: s.num_qubits() }.into());
            }
            qubits.extend(qs);
            joint = Some(match joint {
                None => s.clone(),
                Some(j) => j.tensor(s)?,
            });
        }
        match joint {
            None => amps[0] = C64::new(1.0, 0.0),
            Some(j) => {
                let offs = qsim::target_offsets(&qubits);
                for (s, a) in j.amplitudes().iter().enumerate() {
                    amps[offs[s]] = *a;
                }
            }
        }
        Ok(Self { initial: PureState::new(layout.num_qubits(), amps)?, turns })
    }

    /// Moves that touch qubits their prover does not hold.
    pub fn check_locality(&self, layout: &RegisterLayout) -> Vec<Violation> {
        let mut out = Vec::new();
        for (j, turn) in self.turns.iter().enumerate() {
            for moves in &turn.by_label {
                for m in moves {
                    let own = layout.prover_qubits(m.prover);
                    for &t in &m.targets {
                        if !own.contains(&t) {
                            let reg = layout.owner(t).map(|r| r.kind.to_string()).unwrap_or_else(|| "?".into());
                            out.push(Violation {
                                at: j,
                                gate: format!("prover {}", m.prover),
                                reason: format!("acts on qubit {t} of {reg}, which it does not hold"),
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub label: usize,
    pub weight: f64,
    pub p_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub p_acc: f64,
    pub branches: Vec<BranchReport>,
}

#[derive(Debug, Clone)]
pub struct Protocol {
    pub layout: RegisterLayout,
    pub program: VerifierProgram,
}

fn check_ready(layout: &RegisterLayout, program: &VerifierProgram, strategy: &ProverStrategy) -> Result<()> {
    let w: f64 = program.coin.iter().sum();
    if program.coin.len() != program.branches.len() || program.coin.iter().any(|&x| x < 0.0) || (w - 1.0).abs() > 1e-12 {
        return Err(ProtocolError::BadCoin);
    }
    let mut v = validate(layout, program);
    v.extend(strategy.check_locality(layout));
    if !v.is_empty() {
        return Err(ProtocolError::Invalid(v));
    }
    if strategy.initial.num_qubits() != layout.num_qubits() {
        return Err(QsimError::Dimension { expected: layout.num_qubits(), got: strategy.initial.num_qubits() }.into());
    }
    let need = program.prover_turns();
    if strategy.turns.len() < need {
        return Err(ProtocolError::MissingTurn(strategy.turns.len()));
    }
    Ok(())
}

fn apply_provers(state: PureState, turn: &ProverTurn, label: usize) -> Result<PureState> {
    let mut s = state;
    for m in turn.moves(label) {
        s = s.apply(&m.gate, &m.targets)?;
    }
    Ok(s)
}

fn apply_verifier(state: PureState, gates: &[VGate]) -> Result<PureState> {
    let mut s = state;
    for g in gates {
        s = s.apply(&g.unitary(), &g.targets)?;
    }
    Ok(s)
}

fn exact_script(state: PureState, steps: &[Step], strategy: &ProverStrategy, label: usize, branch: usize) -> Result<f64> {
    let mut s = state;
    for step in steps {
        match step {
            Step::Provers(j) => s = apply_provers(s, &strategy.turns[*j], label)?,
            Step::Verifier(gs) => s = apply_verifier(s, gs)?,
            Step::Branch { qubit, on } => {
                let mut p = 0.0;
                for b in computational_measure(&s, &[*qubit])? {
                    p += b.probability * exact_script(b.post, &on[b.outcome], strategy, label, branch)?;
                }
                return Ok(p);
            }
            Step::Decide(acc) => return acc.probability(&s),
        }
    }
    Err(ProtocolError::MissingDecision(branch))
}

/// Exact acceptance probability, enumerating every coin and measurement branch.
pub fn run_exact(layout: &RegisterLayout, program: &VerifierProgram, strategy: &ProverStrategy) -> Result<AcceptanceReport> {
    check_ready(layout, program, strategy)?;
    let mut branches = Vec::new();
    let mut p_acc = 0.0;
    for (b, (w, script)) in program.coin.iter().zip(&program.branches).enumerate() {
        let p = exact_script(strategy.initial.clone(), script, strategy, b, b)?;
        p_acc += w * p;
        branches.push(BranchReport { label: b, weight: *w, p_acc: p });
    }
    Ok(AcceptanceReport { p_acc, branches })
}

/// Exact acceptance for a mixed initial state, by spectral decomposition.
pub fn run_exact_mixed(
    layout: &RegisterLayout,
    program: &VerifierProgram,
    rho: &qsim::DensityOperator,
    turns: &[ProverTurn],
) -> Result<AcceptanceReport> {
    let (vals, vecs) = qsim::hermitian_eigen(rho.matrix());
    let mut total: Option<AcceptanceReport> = None;
    for (k, &lam) in vals.iter().enumerate() {
        if lam <= 1e-15 {
            continue;
        }
        let psi = PureState::normalized(layout.num_qubits(), vecs.column(k).iter().copied().collect())?;
        let r = run_exact(layout, program, &ProverStrategy { initial: psi, turns: turns.to_vec() })?;
        total = Some(match total {
            None => AcceptanceReport {
                p_acc: lam * r.p_acc,
                branches: r.branches.iter().map(|b| BranchReport { p_acc: lam * b.p_acc, ..b.clone() }).collect(),
            },
            Some(mut t) => {
                t.p_acc += lam * r.p_acc;
                for (tb, rb) in t.branches.iter_mut().zip(&r.branches) {
                    tb.p_acc += lam * rb.p_acc;
                }
                t
            }
        });
    }
    total.ok_or(ProtocolError::Qsim(QsimError::ZeroProbability))
}

impl Protocol {
    pub fn validate(&self) -> Vec<Violation> {
        validate(&self.layout, &self.program)
    }

    pub fn run_exact(&self, strategy: &ProverStrategy) -> Result<AcceptanceReport> {
        run_exact(&self.layout, &self.program, strategy)
    }

    pub fn sample_run(&self, strategy: &ProverStrategy, seed: u64) -> Result<Transcript> {
        sample_run(&self.layout, &self.program, strategy, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Actor {
    Verifier,
    Provers,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Coin { label: usize },
    ProverTurn { turn: usize, moves: usize },
    VerifierGates { count: usize },
    Measured { qubit: usize, outcome: u8 },
    Decision { accepted: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub step: usize,
    pub actor: Actor,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub seed: u64,
    pub events: Vec<Event>,
    pub accepted: bool,
}

fn pick(weights: &[f64], rng: &mut impl Rng) -> usize {
    let mut x: f64 = rng.gen();
    for (i, &w) in weights.iter().enumerate() {
        if x < w {
            return i;
        }
        x -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// One sampled path through the protocol.
pub fn sample_run(layout: &RegisterLayout, program: &VerifierProgram, strategy: &ProverStrategy, seed: u64) -> Result<Transcript> {
    check_ready(layout, program, strategy)?;
    let mut rng = seed::stream(seed, 0);
    let mut events = Vec::new();
    let label = pick(&program.coin, &mut rng);
    events.push(Event { step: 0, actor: Actor::Verifier, kind: EventKind::Coin { label } });
    let mut s = strategy.initial.clone();
    let mut script: &[Step] = &program.branches[label];
    let mut i = 0;
    loop {
        let Some(step) = script.get(i) else {
            return Err(ProtocolError::MissingDecision(label));
        };
        let at = events.len();
        match step {
            Step::Provers(j) => {
                let turn = &strategy.turns[*j];
                s = apply_provers(s, turn, label)?;
                events.push(Event {
                    step: at,
                    actor: Actor::Provers,
                    kind: EventKind::ProverTurn { turn: *j, moves: turn.moves(label).len() },
                });
            }
            Step::Verifier(gs) => {
                s = apply_verifier(s, gs)?;
                events.push(Event { step: at, actor: Actor::Verifier, kind: EventKind::VerifierGates { count: gs.len() } });
            }
            Step::Branch { qubit, on } => {
                let bs = computational_measure(&s, &[*qubit])?;
                let k = pick(&bs.iter().map(|b| b.probability).collect::<Vec<_>>(), &mut rng);
                let b = bs.into_iter().nth(k).expect("measurement has a branch");
                events.push(Event {
                    step: at,
                    actor: Actor::Verifier,
                    kind: EventKind::Measured { qubit: *qubit, outcome: b.outcome as u8 },
                });
                s = b.post;
                script = &on[b.outcome];
                i = 0;
                continue;
            }
            Step::Decide(acc) => {
                let p = acc.probability(&s)?;
                let accepted = rng.gen::<f64>() < p;
                events.push(Event { step: at, actor: Actor::Verifier, kind: EventKind::Decision { accepted } });
                return Ok(Transcript { seed, events, accepted });
            }
        }
        i += 1;
    }
}

/// `k` sequential runs, accepted when at least `theta` of them accept.
#[derive(Debug, Clone)]
pub struct RepeatedProtocol {
    pub base: Protocol,
    pub k: usize,
    pub theta: usize,
}

pub fn sequential_repetition(base: Protocol, k: usize, theta: usize) -> Result<RepeatedProtocol> {
    if k == 0 || theta > k {
        return Err(ProtocolError::BadRepetition { k, theta });
    }
    Ok(RepeatedProtocol { base, k, theta })
}

/// P[at least `theta` successes] for independent rounds with the given rates.
pub fn threshold_tail(per_round: &[f64], theta: usize) -> f64 {
    let mut dist = vec![1.0];
    for &p in per_round {
        let mut next = vec![0.0; dist.len() + 1];
        for (c, &q) in dist.iter().enumerate() {
            next[c] += q * (1.0 - p);
            next[c + 1] += q * p;
        }
        dist = next;
    }
    dist.iter().skip(theta).sum()
}

impl RepeatedProtocol {
    /// Exact acceptance when round `r` is played with `strategies[r]`
    /// (or the single strategy for every round) on fresh registers.
    pub fn run_exact(&self, strategies: &[ProverStrategy]) -> Result<f64> {
        if strategies.is_empty() {
            return Err(ProtocolError::MissingTurn(0));
        }
        let mut per_round = Vec::with_capacity(self.k);
        for r in 0..self.k {
            let s = if strategies.len() == 1 { &strategies[0] } else { &strategies[r.min(strategies.len() - 1)] };
            per_round.push(self.base.run_exact(s)?.p_acc);
        }
        Ok(threshold_tail(&per_round, self.theta))
    }

    pub fn sample_run(&self, strategy: &ProverStrategy, seed: u64) -> Result<(usize, bool)> {
        let mut hits = 0;
        for r in 0..self.k {
            if self.base.sample_run(strategy, seed::child(seed, r as u64))?.accepted {
                hits += 1;
            }
        }
        Ok((hits, hits >= self.theta))
    }
}

/// Haar-random strategy: a Haar state on all prover-held qubits and an
/// independent Haar unitary per prover, turn and label.
pub fn haar_random_strategy(layout: &RegisterLayout, turns: usize, labels: usize, seed: u64) -> Result<ProverStrategy> {
    let mut rng = seed::stream(seed, 0);
    let shared = PureState::random(layout.all_prover_qubits().len(), &mut rng)?;
    let mut ts = Vec::with_capacity(turns);
    for _ in 0..turns {
        let mut by_label = Vec::with_capacity(labels.max(1));
        for _ in 0..labels.max(1) {
            let mut moves = Vec::new();
            for p in layout.provers() {
                let qs = layout.prover_qubits(p);
                moves.push(ProverMove { prover: p, gate: qsim::haar_unitary(qs.len(), &mut rng), targets: qs });
            }
            by_label.push(moves);
        }
        ts.push(ProverTurn { by_label });
    }
    ProverStrategy::from_shared(layout, &shared, ts)
}
