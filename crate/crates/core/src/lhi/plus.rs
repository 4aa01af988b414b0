//! GHZ-augmented LHI protocol: a coin chooses between a GHZ test on the
//! shared `G` registers and the Hamiltonian check with the query read off
//! `G_0`.

use super::{run_lhi, HonestHistory, LhiError, LhiInstance, ResponseTable, Result};
use crate::protocol::{
    self, Acceptance, AcceptanceReport, ProverMove, ProverStrategy, ProverTurn, RegKind, RegisterLayout, Step,
    VerifierProgram,
};
use crate::qsim::{self, c, Projector, PureState, UnitaryGate, C64};
use crate::seed;
use crate::zk::ExtractionReport;

#[derive(Debug, Clone)]
pub struct LhiPlus {
    pub base: LhiInstance,
    /// Base layout, then `G_1..G_p`, then `G_0`, each `u` qubits.
    pub layout: RegisterLayout,
    pub program: VerifierProgram,
    pub honest: ProverStrategy,
}

impl LhiPlus {
    pub fn u(&self) -> usize {
        self.base.params.u
    }

    pub fn g(&self, k: usize) -> Vec<usize> {
        self.layout.qubits(RegKind::G(k)).expect("G register")
    }

    /// `[G_0[j], G_1[j], .., G_p[j]]` for each copy `j`.
    pub fn ghz_targets(&self) -> Vec<usize> {
        let gs: Vec<Vec<usize>> = (0..=self.base.params.provers).map(|k| self.g(k)).collect();
        (0..self.u()).flat_map(|j| gs.iter().map(move |g| g[j])).collect()
    }

    /// `GHZ_{p+1}^{⊗u}` as one state on `ghz_targets`.
    pub fn ghz_copies(&self) -> Result<PureState> {
        let one = PureState::ghz(self.base.params.provers + 1)?;
        let mut s = one.clone();
        for _ in 1..self.u() {
            s = s.tensor(&one)?;
        }
        Ok(s)
    }

    /// Prover `k`'s qubits: `Me_k`, `P_k`, `G_k`.
    pub fn prover_qubits(&self, k: usize) -> Vec<usize> {
        self.layout.prover_qubits(k)
    }

    pub fn run_exact(&self, strategy: &ProverStrategy) -> Result<AcceptanceReport> {
        Ok(protocol::run_exact(&self.layout, &self.program, strategy)?)
    }
}

/// Coherent "apply `R(s+1)` if `G_k = s`" on `Me_k ++ P_k ++ G_k`.
fn select_responses(inst: &LhiInstance, k: usize, responses: &ResponseTable) -> UnitaryGate {
    let np = inst.prover_qubits(k).len();
    let blocks: Vec<_> = (0..inst.params.padded_terms())
        .map(|s| match responses.get(k, s + 1) {
            Some(g) if s < inst.params.num_terms() => g.matrix().clone(),
            _ => qsim::identity(1 << np),
        })
        .collect();
    UnitaryGate::new(qsim::block_diag(&blocks)).expect("block-diagonal of unitaries")
}

fn leaf_tree(inst: &LhiInstance, g0: &[usize], bit: usize, s: usize) -> Result<Vec<Step>> {
    if bit == g0.len() {
        let decide = match inst.terms.get(s) {
            Some(term) => {
                let acc = Projector::new(qsim::identity(term.op.matrix().nrows()) - term.rejection_projector())?;
                Acceptance::Project { projector: acc, targets: term.targets.clone() }
            }
            None => Acceptance::Always,
        };
        return Ok(vec![Step::Decide(decide)]);
    }
    let on0 = leaf_tree(inst, g0, bit + 1, s)?;
    let on1 = leaf_tree(inst, g0, bit + 1, s | (1 << bit))?;
    Ok(vec![Step::Branch { qubit: g0[bit], on: Box::new([on0, on1]) }])
}

/// Adds `G_0..G_p` and the coin, with honest provers sharing `u` GHZ copies
/// and answering the query held in `G_k` coherently.
pub fn build_lhi_plus(inst: &LhiInstance, honest: &HonestHistory) -> Result<LhiPlus> {
    let prm = inst.params;
    if prm.padded_terms() < prm.num_terms() {
        return Err(LhiError::Malformed(format!("2^{} < {} queries", prm.u, prm.num_terms())));
    }
    let mut b = inst.layout.to_builder();
    for k in 1..=prm.provers {
        b = b.reg(RegKind::G(k), prm.u);
    }
    b = b.reg(RegKind::G(0), prm.u);
    let layout = b.build(inst.layout.output_in_v())?;
    let nb = inst.num_qubits();
    let mut plus = LhiPlus {
        base: inst.clone(),
        layout,
        program: VerifierProgram::uniform(vec![]),
        honest: ProverStrategy { initial: PureState::zero(1)?, turns: vec![] },
    };

    let ghz = plus.ghz_targets();
    let ghz_proj = (1..prm.u).fold(Projector::ghz(prm.provers + 1).matrix().clone(), |m, _| {
        qsim::tensor_le(&m, Projector::ghz(prm.provers + 1).matrix())
    });
    let test = vec![Step::Provers(0), Step::Decide(Acceptance::Project { projector: Projector::new(ghz_proj)?, targets: ghz.clone() })];
    let mut check = vec![Step::Provers(0)];
    check.extend(leaf_tree(inst, &plus.g(0), 0, 0)?);
    plus.program = VerifierProgram::uniform(vec![test, check]);

    let base: Vec<usize> = (0..nb).collect();
    let copies = plus.ghz_copies()?;
    let initial = qsim::product_on(plus.layout.num_qubits(), &[(&honest.state, &base), (&copies, &ghz)])?;
    let moves = (1..=prm.provers)
        .map(|k| ProverMove { prover: k, gate: select_responses(inst, k, &honest.responses), targets: plus.prover_qubits(k) })
        .collect();
    plus.honest = ProverStrategy { initial, turns: vec![ProverTurn { by_label: vec![vec![], moves] }] };
    Ok(plus)
}

/// Pure-state adversary: `u_g[k-1]` answers the GHZ test, `u_h[k-1]` the
/// Hamiltonian check, both on prover `k`'s qubits.
#[derive(Debug, Clone)]
pub struct LhiPlusAdversary {
    pub state: PureState,
    pub u_g: Vec<UnitaryGate>,
    pub u_h: Vec<UnitaryGate>,
}

impl LhiPlusAdversary {
    pub fn honest(plus: &LhiPlus) -> Self {
        let u_h: Vec<UnitaryGate> = plus.honest.turns[0].moves(1).iter().map(|m| m.gate.clone()).collect();
        let u_g = u_h.iter().map(|u| UnitaryGate::identity(u.arity())).collect();
        Self { state: plus.honest.initial.clone(), u_g, u_h }
    }

    pub fn haar(plus: &LhiPlus, seed: u64) -> Result<Self> {
        let mut rng = seed::stream(seed, 0);
        let state = PureState::random(plus.layout.num_qubits(), &mut rng)?;
        let mut u_g = Vec::new();
        let mut u_h = Vec::new();
        for k in 1..=plus.base.params.provers {
            let a = plus.prover_qubits(k).len();
            u_g.push(qsim::haar_unitary(a, &mut rng));
            u_h.push(qsim::haar_unitary(a, &mut rng));
        }
        Ok(Self { state, u_g, u_h })
    }

    pub fn as_strategy(&self, plus: &LhiPlus) -> ProverStrategy {
        let moves = |us: &[UnitaryGate]| -> Vec<ProverMove> {
            us.iter()
                .enumerate()
                .map(|(k, u)| ProverMove { prover: k + 1, gate: u.clone(), targets: plus.prover_qubits(k + 1) })
                .collect()
        };
        ProverStrategy { initial: self.state.clone(), turns: vec![ProverTurn { by_label: vec![moves(&self.u_g), moves(&self.u_h)] }] }
    }

    fn apply(&self, plus: &LhiPlus, v: &mut [C64], us: &[UnitaryGate]) {
        for (k, u) in us.iter().enumerate() {
            qsim::apply_in_place(v, u.matrix(), &plus.prover_qubits(k + 1));
        }
    }
}

/// Rejection of the Hamiltonian-check branch on `v`: `G_0` read as `s`,
/// term `s + 1` measured, padding queries accept.
pub fn check_branch_rejection(plus: &LhiPlus, v: &[C64]) -> f64 {
    let g0 = plus.g(0);
    let mask = qsim::target_mask(&g0);
    let offs = qsim::target_offsets(&g0);
    let mut total = 0.0;
    for (s, term) in plus.base.terms.iter().enumerate() {
        let want = offs[s];
        let part: Vec<C64> = v.iter().enumerate().map(|(i, a)| if i & mask == want { *a } else { c(0.0, 0.0) }).collect();
        total += term.rejection(&part);
    }
    total
}

/// Strategy for the LHI protocol recovered from an LHI+ adversary.
#[derive(Debug, Clone)]
pub struct LhiPlusExtraction {
    /// Base instance with `G_k` appended to each private register.
    pub instance: LhiInstance,
    /// `Π_GHZ U_g φ`, GHZ part removed and `G_k` reset to `|0⟩`.
    pub state: PureState,
    /// `U_h U_g† X^{bits(t-1)}` on prover `k`'s qubits at query `t`.
    pub responses: ResponseTable,
}

/// Extraction and every quantity of the soundness chain, computed exactly.
pub fn extract_from_lhi_plus(
    plus: &LhiPlus,
    adv: &LhiPlusAdversary,
) -> Result<(Option<LhiPlusExtraction>, ExtractionReport)> {
    let prm = plus.base.params;
    let n_all = plus.layout.num_qubits();
    let mut psi_g = adv.state.amplitudes().to_vec();
    adv.apply(plus, &mut psi_g, &adv.u_g);
    let mut psi_h = adv.state.amplitudes().to_vec();
    adv.apply(plus, &mut psi_h, &adv.u_h);

    let ghz = plus.ghz_targets();
    let chi = qsim::partial_inner(&PureState::normalized(n_all, psi_g)?, &plus.ghz_copies()?, &ghz)?;
    let pass: f64 = chi.iter().map(|z| z.norm_sqr()).sum();
    let eps1 = (1.0 - pass).clamp(0.0, 1.0);
    let eps2 = check_branch_rejection(plus, &psi_h).clamp(0.0, 1.0);
    let p_rej = 0.5 * (eps1 + eps2);
    let mut report = ExtractionReport {
        seed: None,
        eps1,
        eps2,
        p_rej,
        p_rej_hv: None,
        p_rej_hv_conditioned: None,
        slack_gentle: None,
        slack_sqrt: eps2.sqrt() - eps2,
        slack_final: 2.0 * (2.0 * p_rej).sqrt() - (eps1.sqrt() + eps2.sqrt()),
    };
    if pass <= 1e-12 {
        return Ok((None, report));
    }

    // χ lives on the non-G qubits, which are exactly the base layout.
    let nb = plus.base.num_qubits();
    let chi = PureState::normalized(nb, chi)?;
    let instance = plus.base.with_private_extra(prm.u)?;
    let mut map = vec![usize::MAX; nb];
    for r in plus.base.layout.registers() {
        for (a, q) in r.qubits().into_iter().zip(instance.layout.qubits(r.kind)?) {
            map[a] = q;
        }
    }
    let state = qsim::product_on(instance.num_qubits(), &[(&chi, &map)])?;

    let mut responses = ResponseTable::identity();
    for k in 1..=prm.provers {
        let np = plus.base.prover_qubits(k).len();
        let g_pos: Vec<usize> = (np..np + prm.u).collect();
        let hg = UnitaryGate::compose(np + prm.u, &[(&adv.u_g[k - 1].adjoint(), (0..np + prm.u).collect()), (&adv.u_h[k - 1], (0..np + prm.u).collect())])?;
        for t in 1..=prm.num_terms() {
            let bits = t - 1;
            let mut factors: Vec<(&UnitaryGate, Vec<usize>)> = Vec::new();
            let x = UnitaryGate::x();
            for (j, &q) in g_pos.iter().enumerate() {
                if bits >> j & 1 == 1 {
                    factors.push((&x, vec![q]));
                }
            }
            factors.push((&hg, (0..np + prm.u).collect()));
            responses.set(k, t, UnitaryGate::compose(np + prm.u, &factors)?);
        }
    }
    let run = run_lhi(&instance, &state, &responses)?;
    let p_rej_hv = run.p_rej * prm.num_terms() as f64 / prm.padded_terms() as f64;

    // Same quantity straight on the LHI+ layout: U_h U_g† Π_GHZ U_g φ.
    let projected = qsim::product_on(n_all, &[(&chi, &(0..nb).collect::<Vec<_>>()), (&plus.ghz_copies()?, &ghz)])?;
    let mut cond = projected.into_amplitudes();
    let back: Vec<UnitaryGate> = adv.u_g.iter().map(|u| u.adjoint()).collect();
    adv.apply(plus, &mut cond, &back);
    adv.apply(plus, &mut cond, &adv.u_h);
    let p_rej_hv_conditioned = check_branch_rejection(plus, &cond);

    report.p_rej_hv = Some(p_rej_hv);
    report.p_rej_hv_conditioned = Some(p_rej_hv_conditioned);
    report.slack_gentle = Some(eps1.sqrt() + eps2 - p_rej_hv);
    Ok((Some(LhiPlusExtraction { instance, state, responses }), report))
}

/// Extraction over `count` Haar adversaries drawn from `master`.
pub fn lhi_plus_extraction_sweep(plus: &LhiPlus, master: u64, count: usize) -> Result<Vec<ExtractionReport>> {
    (0..count as u64)
        .map(|i| {
            let s = seed::child(master, i);
            let (_, mut r) = extract_from_lhi_plus(plus, &LhiPlusAdversary::haar(plus, s)?)?;
            r.seed = Some(s);
            Ok(r)
        })
        .collect()
}

/// The GHZ-augmented instance of the T = 5 toy with its honest history.
pub fn lhi_plus_toy_instance(eps: f64) -> Result<(LhiInstance, HonestHistory, LhiPlus)> {
    let p3 = super::lhi_plus_toy(eps)?;
    let inst = super::build_lhi(&p3)?;
    let h = super::honest_history_state(&inst, &p3)?;
    let plus = build_lhi_plus(&inst, &h)?;
    Ok((inst, h, plus))
}
