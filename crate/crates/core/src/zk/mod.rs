//! Turning an honest-verifier three-turn protocol into forms that stay
//! zero-knowledge against malicious verifiers: the two-turn coin test, the
//! GHZ-augmented protocol, the public-coin form and its GHZ variant, the
//! soundness extraction from a GHZ strategy, and the rewinding simulator.

pub mod rewind;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{
    circuits, run_exact, validate, Acceptance, AcceptanceReport, Holder, ProtocolError, ProverMove, ProverStrategy,
    ProverTurn, RegKind, RegisterLayout, Step, VGate, VerifierProgram,
};
use crate::qsim::{self, DensityOperator, Projector, PureState, QsimError, UnitaryGate};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZkError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error("malformed protocol: {0}")]
    Malformed(String),
    #[error("max_rounds={0} exhausted before the simulator succeeded")]
    RoundsExhausted(usize),
}

pub type Result<T> = std::result::Result<T, ZkError>;

/// Verifier with circuits `v1` (after the first message) and `v2` (after
/// the third), plus an honest two-turn prover strategy.
#[derive(Debug, Clone)]
pub struct ThreeTurnProtocol {
    pub layout: RegisterLayout,
    pub provers: usize,
    pub v1: Vec<VGate>,
    pub v2: Vec<VGate>,
    pub accept: Acceptance,
    pub honest: ProverStrategy,
}

impl ThreeTurnProtocol {
    pub fn program(&self) -> VerifierProgram {
        VerifierProgram::deterministic(vec![
            Step::Provers(0),
            Step::Verifier(self.v1.clone()),
            Step::Provers(1),
            Step::Verifier(self.v2.clone()),
            Step::Decide(self.accept.clone()),
        ])
    }

    pub fn check(&self) -> Result<()> {
        for i in 1..=self.provers {
            self.layout.get(RegKind::M(i))?;
            self.layout.get(RegKind::P(i))?;
        }
        if self.layout.registers().iter().any(|r| matches!(r.kind, RegKind::G(_))) {
            return Err(ZkError::Malformed("three-turn layout already has G registers".into()));
        }
        if self.honest.turns.len() != 2 {
            return Err(ZkError::Malformed(format!("honest strategy has {} turns, expected 2", self.honest.turns.len())));
        }
        let mut v = validate(&self.layout, &self.program());
        v.extend(self.honest.check_locality(&self.layout));
        if !v.is_empty() {
            return Err(ProtocolError::Invalid(v).into());
        }
        Ok(())
    }

    pub fn run_exact(&self, strategy: &ProverStrategy) -> Result<AcceptanceReport> {
        Ok(run_exact(&self.layout, &self.program(), strategy)?)
    }

    pub fn v_qubits(&self) -> Vec<usize> {
        self.layout.qubits(RegKind::V).expect("checked layout has V")
    }

    fn forward(&self) -> Vec<Step> {
        vec![Step::Verifier(self.v2.clone()), Step::Decide(self.accept.clone())]
    }

    fn backward(&self) -> Vec<Step> {
        vec![Step::Verifier(circuits::adjoint(&self.v1)), Step::Decide(Acceptance::AllZero(self.v_qubits()))]
    }

    /// Honest state right after the verifier's first circuit.
    fn state_after_v1(&self) -> Result<PureState> {
        let mut s = self.honest.initial.clone();
        for m in self.honest.turns[0].moves(0) {
            s = s.apply(&m.gate, &m.targets)?;
        }
        for g in &self.v1 {
            s = s.apply(&g.unitary(), &g.targets)?;
        }
        Ok(s)
    }

    /// Honest third-turn action of prover `i` as one unitary on its qubits.
    pub fn third_turn_unitary(&self, i: usize) -> Result<UnitaryGate> {
        let own = self.layout.prover_qubits(i);
        local_unitary(&own, self.honest.turns[1].moves(0).iter().filter(|m| m.prover == i))
    }
}

/// Composes the given moves into one unitary on `own` (in that order).
pub fn local_unitary<'a>(own: &[usize], moves: impl Iterator<Item = &'a ProverMove>) -> Result<UnitaryGate> {
    let mut factors = Vec::new();
    for m in moves {
        let pos = m
            .targets
            .iter()
            .map(|t| own.iter().position(|o| o == t).ok_or_else(|| ZkError::Malformed(format!("qubit {t} not held"))))
            .collect::<Result<Vec<_>>>()?;
        factors.push((&m.gate, pos));
    }
    Ok(UnitaryGate::compose(own.len(), &factors)?)
}

/// Bundled toy: V = (output, spare), prover `i` holds an EPR pair on
/// `(M_i, P_i)`. The verifier applies `H⊗H` to `(M_i, v_1)` and later
/// accepts iff the parity of the returned `M` registers is 1. Prover 1's
/// final flip is a rotation that succeeds with probability `1 − eps`.
pub fn toy_three_turn(provers: usize, eps: f64) -> Result<ThreeTurnProtocol> {
    if provers == 0 || !(0.0..=1.0).contains(&eps) {
        return Err(ZkError::Malformed(format!("toy needs provers >= 1 and eps in [0,1], got {provers}, {eps}")));
    }
    let mut b = RegisterLayout::builder().reg(RegKind::V, 2);
    for i in 1..=provers {
        b = b.reg(RegKind::M(i), 1).reg(RegKind::P(i), 1);
    }
    let layout = b.build(0)?;
    let (v0, v1) = (0, 1);
    let m = |i: usize| layout.get(RegKind::M(i)).unwrap().offset;
    let p = |i: usize| layout.get(RegKind::P(i)).unwrap().offset;
    let first: Vec<VGate> = (1..=provers).map(|i| VGate::hh(m(i), v1)).collect();
    let second: Vec<VGate> = (1..=provers).flat_map(|i| circuits::cnot(m(i), v0, v1)).collect();

    let mut shared = PureState::ghz(2)?;
    for _ in 1..provers {
        shared = shared.tensor(&PureState::ghz(2)?)?;
    }
    let theta = 2.0 * (1.0 - eps).sqrt().asin();
    let mut third = Vec::new();
    for i in 1..=provers {
        third.push(ProverMove { prover: i, gate: UnitaryGate::h(), targets: vec![m(i)] });
        third.push(ProverMove { prover: i, gate: UnitaryGate::cnot(), targets: vec![p(i), m(i)] });
        if i == 1 {
            third.push(ProverMove { prover: 1, gate: UnitaryGate::ry(theta), targets: vec![m(1)] });
        }
    }
    let honest = ProverStrategy::from_shared(&layout, &shared, vec![ProverTurn::idle(), ProverTurn::same(third)])?;
    let accept = Acceptance::QubitIs { qubit: layout.output(), value: true };
    let p3 = ThreeTurnProtocol { layout, provers, v1: first, v2: second, accept, honest };
    p3.check()?;
    Ok(p3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoinForm {
    /// Prover 0 holds V and receives nothing.
    TwoTurn,
    /// Prover 1 hands over V before the coin is broadcast.
    PublicCoin,
}

/// Forward/backward coin test built from a three-turn protocol.
#[derive(Debug, Clone)]
pub struct CoinTestProtocol {
    pub form: CoinForm,
    pub base: ThreeTurnProtocol,
    pub layout: RegisterLayout,
    pub program: VerifierProgram,
    pub honest: ProverStrategy,
}

impl CoinTestProtocol {
    pub fn run_exact(&self, strategy: &ProverStrategy) -> Result<AcceptanceReport> {
        Ok(run_exact(&self.layout, &self.program, strategy)?)
    }
}

fn coin_test(p3: &ThreeTurnProtocol, form: CoinForm) -> Result<CoinTestProtocol> {
    p3.check()?;
    let layout = match form {
        CoinForm::TwoTurn => p3.layout.to_builder().held_by(RegKind::V, Holder::Prover(0)).build(p3.layout.output_in_v())?,
        CoinForm::PublicCoin => p3.layout.clone(),
    };
    let program = VerifierProgram::uniform(vec![
        [vec![Step::Provers(0)], p3.forward()].concat(),
        [vec![Step::Provers(0)], p3.backward()].concat(),
    ]);
    let third: Vec<ProverMove> = p3.honest.turns[1].moves(0).to_vec();
    // V is already in the verifier's hands (or prover 0's) when play starts.
    let honest = ProverStrategy { initial: p3.state_after_v1()?, turns: vec![ProverTurn { by_label: vec![third, vec![]] }] };
    Ok(CoinTestProtocol { form, base: p3.clone(), layout, program, honest })
}

/// Coin `b`: forward test on 0, backward test on 1; prover 0 holds V.
pub fn to_two_turn(p3: &ThreeTurnProtocol) -> Result<CoinTestProtocol> {
    coin_test(p3, CoinForm::TwoTurn)
}

/// Same tests with V handed over by prover 1 before the public coin.
pub fn to_public_coin_form(p3: &ThreeTurnProtocol) -> Result<CoinTestProtocol> {
    coin_test(p3, CoinForm::PublicCoin)
}

/// Coin `b'`: GHZ test on 0, history test on 1.
#[derive(Debug, Clone)]
pub struct GhzProtocol {
    pub form: CoinForm,
    pub base: ThreeTurnProtocol,
    pub layout: RegisterLayout,
    pub program: VerifierProgram,
    pub honest: ProverStrategy,
}

impl GhzProtocol {
    pub fn run_exact(&self, strategy: &ProverStrategy) -> Result<AcceptanceReport> {
        Ok(run_exact(&self.layout, &self.program, strategy)?)
    }

    /// G_0, G_1, ..., G_p.
    pub fn g_qubits(&self) -> Vec<usize> {
        (0..=self.base.provers).map(|i| self.layout.get(RegKind::G(i)).unwrap().offset).collect()
    }

    pub fn provers(&self) -> usize {
        self.base.provers
    }

    /// Qubits outside every G register, ascending.
    pub fn non_g_qubits(&self) -> Vec<usize> {
        let g = self.g_qubits();
        (0..self.layout.num_qubits()).filter(|q| !g.contains(q)).collect()
    }
}

fn ghz_wrap(two: &CoinTestProtocol) -> Result<GhzProtocol> {
    let p3 = &two.base;
    let p = p3.provers;
    let g0_holder = match two.form {
        CoinForm::TwoTurn => Holder::Prover(0),
        CoinForm::PublicCoin => Holder::Verifier,
    };
    let mut b = two.layout.to_builder().reg(RegKind::G(0), 1).held_by(RegKind::G(0), g0_holder);
    for i in 1..=p {
        b = b.reg(RegKind::G(i), 1);
    }
    let layout = b.build(p3.layout.output_in_v())?;
    let g: Vec<usize> = (0..=p).map(|i| layout.get(RegKind::G(i)).unwrap().offset).collect();
    let program = VerifierProgram::uniform(vec![
        vec![Step::Provers(0), Step::Decide(Acceptance::Project { projector: Projector::ghz(p + 1), targets: g.clone() })],
        vec![Step::Provers(0), Step::Branch { qubit: g[0], on: Box::new([p3.forward(), p3.backward()]) }],
    ]);
    // On b' = 1 prover i reads b from G_i and plays its coin-test move for b.
    let mut history = Vec::new();
    for i in 1..=p {
        let own = p3.layout.prover_qubits(i);
        let u = p3.third_turn_unitary(i)?;
        let gate = UnitaryGate::select(&u, &UnitaryGate::identity(own.len()));
        history.push(ProverMove { prover: i, gate, targets: [vec![g[i]], own].concat() });
    }
    let initial = two.honest.initial.tensor(&PureState::ghz(p + 1)?)?;
    let honest = ProverStrategy { initial, turns: vec![ProverTurn { by_label: vec![vec![], history] }] };
    Ok(GhzProtocol { form: two.form, base: p3.clone(), layout, program, honest })
}

pub fn add_ghz(two: &CoinTestProtocol) -> Result<GhzProtocol> {
    if two.form != CoinForm::TwoTurn {
        return Err(ZkError::Malformed("add_ghz expects a two-turn protocol".into()));
    }
    ghz_wrap(two)
}

/// GHZ variant of the public-coin form; the verifier holds G_0 itself.
pub fn ghz_public_coin(pc: &CoinTestProtocol) -> Result<GhzProtocol> {
    if pc.form != CoinForm::PublicCoin {
        return Err(ZkError::Malformed("ghz_public_coin expects a public-coin protocol".into()));
    }
    ghz_wrap(pc)
}

/// Malicious GHZ-protocol strategy: initial `rho` on the whole layout and
/// per-prover unitaries for the GHZ test (`u_g`) and the history test
/// (`u_h`). Entry `k` belongs to prover `k + 1`; prover 0 is idle.
#[derive(Debug, Clone)]
pub struct GhzAdversary {
    pub rho: DensityOperator,
    pub u_g: Vec<UnitaryGate>,
    pub u_h: Vec<UnitaryGate>,
}

impl GhzAdversary {
    pub fn honest(ghz: &GhzProtocol) -> Result<Self> {
        let mut u_h = Vec::new();
        for i in 1..=ghz.provers() {
            let own = ghz.layout.prover_qubits(i);
            u_h.push(local_unitary(&own, ghz.honest.turns[0].moves(1).iter().filter(|m| m.prover == i))?);
        }
        let u_g = u_h.iter().map(|u| UnitaryGate::identity(u.arity())).collect();
        Ok(Self { rho: ghz.honest.initial.to_density(), u_g, u_h })
    }

    pub fn haar(ghz: &GhzProtocol, seed: u64) -> Result<Self> {
        let mut rng = seed::stream(seed, 0);
        let psi = PureState::random(ghz.layout.num_qubits(), &mut rng)?;
        let mut u_g = Vec::new();
        let mut u_h = Vec::new();
        for i in 1..=ghz.provers() {
            let k = ghz.layout.prover_qubits(i).len();
            u_g.push(qsim::haar_unitary(k, &mut rng));
            u_h.push(qsim::haar_unitary(k, &mut rng));
        }
        Ok(Self { rho: psi.to_density(), u_g, u_h })
    }

    /// Same adversary as an engine strategy, when `rho` is pure.
    pub fn as_strategy(&self, ghz: &GhzProtocol) -> Result<ProverStrategy> {
        let (vals, vecs) = qsim::hermitian_eigen(self.rho.matrix());
        let top = vals.len() - 1;
        if (vals[top] - 1.0).abs() > 1e-9 {
            return Err(ZkError::Malformed("adversary state is not pure".into()));
        }
        let initial = PureState::normalized(ghz.layout.num_qubits(), vecs.column(top).iter().copied().collect())?;
        let moves = |us: &[UnitaryGate]| -> Vec<ProverMove> {
            us.iter()
                .enumerate()
                .map(|(k, u)| ProverMove { prover: k + 1, gate: u.clone(), targets: ghz.layout.prover_qubits(k + 1) })
                .collect()
        };
        Ok(ProverStrategy { initial, turns: vec![ProverTurn { by_label: vec![moves(&self.u_g), moves(&self.u_h)] }] })
    }

    fn apply_all(&self, ghz: &GhzProtocol, rho: &DensityOperator, us: &[UnitaryGate]) -> Result<DensityOperator> {
        let mut r = rho.clone();
        for (k, u) in us.iter().enumerate() {
            r = r.apply(u, &ghz.layout.prover_qubits(k + 1))?;
        }
        Ok(r)
    }
}

/// Quantities of the soundness chain for one adversary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub seed: Option<u64>,
    pub eps1: f64,
    pub eps2: f64,
    pub p_rej: f64,
    /// `None` when the GHZ test always rejects and `ρ'` is undefined.
    pub p_rej_hv: Option<f64>,
    /// `p_rej_hv` evaluated on the conditioned GHZ-protocol state instead.
    pub p_rej_hv_conditioned: Option<f64>,
    /// `√ε₁ + ε₂ − p_rej_hv`
    pub slack_gentle: Option<f64>,
    /// `√ε₁ + √ε₂ − (√ε₁ + ε₂)`
    pub slack_sqrt: f64,
    /// `2√(2 p_rej) − (√ε₁ + √ε₂)`
    pub slack_final: f64,
}

impl ExtractionReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.slack_gentle.is_none_or(|s| s >= -tol) && self.slack_sqrt >= -tol && self.slack_final >= -tol
    }
}

/// Strategy for the two-turn protocol recovered from a GHZ adversary.
#[derive(Debug, Clone)]
pub struct ExtractedStrategy {
    /// Initial state on the non-G qubits.
    pub rho_prime: DensityOperator,
    /// `U_h U_g†` per prover, applied after setting `|b⟩` in `G_i`.
    pub responses: Vec<UnitaryGate>,
}

fn run_gates(rho: &DensityOperator, gates: &[VGate]) -> Result<DensityOperator> {
    let mut r = rho.clone();
    for g in gates {
        r = r.apply(&g.unitary(), &g.targets)?;
    }
    Ok(r)
}

/// Rejection of coin-test branch `b` on `rho` (any trace).
fn branch_rejection(p3: &ThreeTurnProtocol, b: usize, rho: &DensityOperator) -> Result<f64> {
    if b == 0 {
        let r = run_gates(rho, &p3.v2)?;
        Ok(r.trace() - p3.accept.probability_mixed(&r)?)
    } else {
        let r = run_gates(rho, &circuits::adjoint(&p3.v1))?;
        let v = p3.v_qubits();
        let zero = r.expectation(Projector::basis_state(v.len(), 0).matrix(), &v)?;
        Ok(r.trace() - zero)
    }
}

/// History-test rejection: measure G_0, then run the matching branch.
fn history_rejection(ghz: &GhzProtocol, rho: &DensityOperator) -> Result<f64> {
    let g0 = ghz.g_qubits()[0];
    let mut total = 0.0;
    for b in 0..2 {
        let rb = rho.conjugate(Projector::basis_state(1, b).matrix(), &[g0])?;
        total += branch_rejection(&ghz.base, b, &rb)?;
    }
    Ok(total)
}

/// Builds `ρ'` and the response unitaries, and evaluates every link of the
/// soundness chain exactly.
pub fn extract_from_ghz(ghz: &GhzProtocol, adv: &GhzAdversary) -> Result<(Option<ExtractedStrategy>, ExtractionReport)> {
    let p = ghz.provers();
    let g = ghz.g_qubits();
    let ghz_proj = Projector::ghz(p + 1);
    let rho_g = adv.apply_all(ghz, &adv.rho, &adv.u_g)?;
    let rho_h = adv.apply_all(ghz, &adv.rho, &adv.u_h)?;
    let pass = rho_g.expectation(ghz_proj.matrix(), &g)?;
    let eps1 = (1.0 - pass).clamp(0.0, 1.0);
    let eps2 = history_rejection(ghz, &rho_h)?.clamp(0.0, 1.0);
    let p_rej = 0.5 * (eps1 + eps2);
    let slack_sqrt = eps2.sqrt() - eps2;
    let slack_final = 2.0 * (2.0 * p_rej).sqrt() - (eps1.sqrt() + eps2.sqrt());

    if pass <= 1e-12 {
        let report = ExtractionReport {
            seed: None,
            eps1,
            eps2,
            p_rej,
            p_rej_hv: None,
            p_rej_hv_conditioned: None,
            slack_gentle: None,
            slack_sqrt,
            slack_final,
        };
        return Ok((None, report));
    }

    let projected = rho_g.conjugate(ghz_proj.matrix(), &g)?;
    let rho2 = projected.partial_trace(&ghz.non_g_qubits())?;
    let rho_prime = rho2.scaled(1.0 / pass);
    let responses: Vec<UnitaryGate> = adv.u_h.iter().zip(&adv.u_g).map(|(h, g)| g.adjoint().then(h)).collect();

    let mut p_rej_hv = 0.0;
    for b in 0..2 {
        // G qubits are the top p+1 qubits: G_0 = |0⟩, G_1..G_p = |b⟩.
        let g_index = if b == 0 { 0 } else { ((1usize << (p + 1)) - 1) & !1 };
        let gstate = PureState::basis(p + 1, g_index)?.to_density();
        let mut sigma = rho_prime.tensor(&gstate)?;
        for (k, u) in responses.iter().enumerate() {
            sigma = sigma.apply(u, &ghz.layout.prover_qubits(k + 1))?;
        }
        p_rej_hv += 0.5 * branch_rejection(&ghz.base, b, &sigma)?;
    }

    let mut cond = projected.scaled(1.0 / pass);
    for (k, u) in responses.iter().enumerate() {
        cond = cond.apply(u, &ghz.layout.prover_qubits(k + 1))?;
    }
    let p_rej_hv_conditioned = history_rejection(ghz, &cond)?;

    let report = ExtractionReport {
        seed: None,
        eps1,
        eps2,
        p_rej,
        p_rej_hv: Some(p_rej_hv),
        p_rej_hv_conditioned: Some(p_rej_hv_conditioned),
        slack_gentle: Some(eps1.sqrt() + eps2 - p_rej_hv),
        slack_sqrt,
        slack_final,
    };
    Ok((Some(ExtractedStrategy { rho_prime, responses }), report))
}

/// Extraction over `count` Haar adversaries drawn from `master`.
pub fn extraction_sweep(ghz: &GhzProtocol, master: u64, count: usize) -> Result<Vec<ExtractionReport>> {
    (0..count as u64)
        .map(|k| {
            let s = seed::child(master, k);
            let (_, mut r) = extract_from_ghz(ghz, &GhzAdversary::haar(ghz, s)?)?;
            r.seed = Some(s);
            Ok(r)
        })
        .collect()
}

/// Honest provers answering `labels[i-1]` with exact measurement of G_i on
/// label 1; returns the state on the registers the verifier receives.
fn honest_received(ghz: &GhzProtocol, labels: &[usize], keep_m: &[bool]) -> Result<DensityOperator> {
    let g = ghz.g_qubits();
    let mut rho = ghz.honest.initial.to_density();
    for i in 1..=ghz.provers() {
        if labels[i - 1] == 1 {
            rho = rho.dephase(g[i])?;
            for m in ghz.honest.turns[0].moves(1).iter().filter(|m| m.prover == i) {
                rho = rho.apply(&m.gate, &m.targets)?;
            }
        }
    }
    let mut keep = ghz.layout.qubits(RegKind::V)?;
    keep.extend(g.iter().copied());
    for i in 1..=ghz.provers() {
        if keep_m[i - 1] {
            keep.extend(ghz.layout.qubits(RegKind::M(i))?);
        }
    }
    Ok(rho.partial_trace(&keep)?)
}

/// Distance between the verifier's received state when provers in
/// `zero_to` get `b' = 0` (the rest `b' = 1`), and the simulation from the
/// all-`b' = 1` run with those `M_i` discarded. When every prover gets 0
/// the simulation keeps only V and prepares a fresh GHZ state.
pub fn same_bit_reduction_gap(ghz: &GhzProtocol, zero_to: &[usize]) -> Result<f64> {
    let p = ghz.provers();
    let labels: Vec<usize> = (1..=p).map(|i| usize::from(!zero_to.contains(&i))).collect();
    let keep_m: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
    let real = honest_received(ghz, &labels, &keep_m)?;
    let sim = if labels.iter().all(|&l| l == 0) {
        let v = ghz.layout.qubits(RegKind::V)?;
        let ones = honest_received(ghz, &vec![1; p], &vec![false; p])?;
        let vpart = ones.partial_trace(&(0..v.len()).collect::<Vec<_>>())?;
        vpart.tensor(&PureState::ghz(p + 1)?.to_density())?
    } else {
        honest_received(ghz, &vec![1; p], &keep_m)?
    };
    Ok(qsim::trace_distance(&real, &sim)?)
}

#[cfg(test)]
mod tests;
