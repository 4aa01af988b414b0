//! Rewinding simulator for a malicious verifier whose only message is one
//! public coin, and exact view-versus-simulation distances.
//!
//! Simulator qubits are laid out as `I, A', C', V, M, A, C, D`, so the
//! output registers `(I, A', C', V, M)` are the low qubits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Result, ZkError};
use crate::qsim::{self, c, CMat, DensityOperator, Projector, PureState, UnitaryGate, C64};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RewindRegisters {
    pub i: usize,
    pub a_prime: usize,
    pub v: usize,
    pub m: usize,
    pub a: usize,
}

fn span(start: usize, len: usize) -> Vec<usize> {
    (start..start + len).collect()
}

impl RewindRegisters {
    pub fn total(&self) -> usize {
        self.output_qubits() + self.a + 2
    }

    pub fn output_qubits(&self) -> usize {
        self.i + self.a_prime + 1 + self.v + self.m
    }

    pub fn i_q(&self) -> Vec<usize> {
        span(0, self.i)
    }

    pub fn a_prime_q(&self) -> Vec<usize> {
        span(self.i, self.a_prime)
    }

    pub fn c_prime(&self) -> usize {
        self.i + self.a_prime
    }

    pub fn v_q(&self) -> Vec<usize> {
        span(self.c_prime() + 1, self.v)
    }

    pub fn m_q(&self) -> Vec<usize> {
        span(self.c_prime() + 1 + self.v, self.m)
    }

    pub fn a_q(&self) -> Vec<usize> {
        span(self.output_qubits(), self.a)
    }

    pub fn c(&self) -> usize {
        self.output_qubits() + self.a
    }

    pub fn d(&self) -> usize {
        self.c() + 1
    }

    /// Targets of `S_V`: `(V, M, C, A)`.
    pub fn s_v_targets(&self) -> Vec<usize> {
        [self.v_q(), self.m_q(), vec![self.c()], self.a_q()].concat()
    }

    /// Targets of `V'_1`: `(I, A', V, C')`.
    pub fn v1_targets(&self) -> Vec<usize> {
        [self.i_q(), self.a_prime_q(), self.v_q(), vec![self.c_prime()]].concat()
    }
}

/// Honest prover of a one-coin protocol: `first` prepares `(V, P)` from
/// zeros, `respond[c]` answers coin `c` on `(M, P)`.
#[derive(Debug, Clone)]
pub struct CoinProver {
    pub v: usize,
    pub m: usize,
    pub p: usize,
    pub first: UnitaryGate,
    pub respond: [UnitaryGate; 2],
}

impl CoinProver {
    /// V is half of an EPR pair with P; coin 0 copies P into M in the Z
    /// basis, coin 1 in the X basis.
    pub fn toy() -> Self {
        let h = UnitaryGate::h();
        let cnot = UnitaryGate::cnot();
        // (V, P) and (M, P): P is position 1 in both.
        let first = UnitaryGate::compose(2, &[(&h, vec![1]), (&cnot, vec![1, 0])]).expect("static sizes");
        let r0 = UnitaryGate::compose(2, &[(&cnot, vec![1, 0])]).expect("static sizes");
        let r1 = UnitaryGate::compose(2, &[(&h, vec![1]), (&cnot, vec![1, 0])]).expect("static sizes");
        Self { v: 1, m: 1, p: 1, first, respond: [r0, r1] }
    }

    pub fn registers(&self, i: usize, a_prime: usize) -> RewindRegisters {
        RewindRegisters { i, a_prime, v: self.v, m: self.m, a: self.p }
    }

    fn simulator(&self, coin_h: bool, swap: bool) -> UnitaryGate {
        let (v, m, p) = (self.v, self.m, self.p);
        let cq = v + m;
        let vs = span(0, v);
        let ms = span(v, m);
        let a = span(cq + 1, p);
        let (r0, r1) = if swap { (&self.respond[1], &self.respond[0]) } else { (&self.respond[0], &self.respond[1]) };
        let sel = UnitaryGate::select(r0, r1);
        let h = UnitaryGate::h();
        let mut f: Vec<(&UnitaryGate, Vec<usize>)> = Vec::new();
        if coin_h {
            f.push((&h, vec![cq]));
        }
        f.push((&self.first, [vs, a.clone()].concat()));
        f.push((&sel, [vec![cq], ms, a].concat()));
        UnitaryGate::compose(v + m + 1 + p, &f).expect("sizes fixed by the prover")
    }

    /// `S_V` on `(V, M, C, A)`: uniform coin in C, the prover played with A
    /// standing in for P.
    pub fn honest_view_simulator(&self) -> UnitaryGate {
        self.simulator(true, false)
    }

    /// Answers coin `c` with the response for `1 − c`.
    pub fn flipped_coin_simulator(&self) -> UnitaryGate {
        self.simulator(true, true)
    }

    /// Coin register left at |0⟩.
    pub fn fixed_coin_simulator(&self) -> UnitaryGate {
        self.simulator(false, false)
    }
}

/// A channel from `I` to the verifier's view, given by its Kraus branches.
pub trait ViewChannel {
    fn input_qubits(&self) -> usize;
    fn output_qubits(&self) -> usize;
    /// Branch vectors for input vector `psi`; the low `output_qubits` are
    /// the output and the rest is traced out. Linear in `psi`.
    fn branches(&self, psi: &[C64]) -> Result<Vec<Vec<C64>>>;
}

fn basis_vec(dim: usize, k: usize) -> Vec<C64> {
    let mut v = vec![c(0.0, 0.0); dim];
    v[k] = c(1.0, 0.0);
    v
}

/// `Φ(|a⟩⟨b|)`.
pub fn channel_on_pair(ch: &dyn ViewChannel, a: &[C64], b: &[C64]) -> Result<CMat> {
    let dout = 1usize << ch.output_qubits();
    let ba = ch.branches(a)?;
    let bb = ch.branches(b)?;
    let mut out = CMat::zeros(dout, dout);
    for (va, vb) in ba.iter().zip(&bb) {
        let rest = va.len() / dout;
        for e in 0..rest {
            for x in 0..dout {
                let ax = va[x + e * dout];
                if ax == c(0.0, 0.0) {
                    continue;
                }
                for y in 0..dout {
                    out[(x, y)] += ax * vb[y + e * dout].conj();
                }
            }
        }
    }
    Ok(out)
}

pub fn apply_channel(ch: &dyn ViewChannel, rho: &DensityOperator) -> Result<DensityOperator> {
    let (vals, vecs) = qsim::hermitian_eigen(rho.matrix());
    let dout = 1usize << ch.output_qubits();
    let mut out = CMat::zeros(dout, dout);
    for (k, &lam) in vals.iter().enumerate() {
        if lam <= 1e-15 {
            continue;
        }
        let v: Vec<C64> = vecs.column(k).iter().copied().collect();
        out += channel_on_pair(ch, &v, &v)?.scale(lam);
    }
    Ok(DensityOperator::from_trusted(ch.output_qubits(), out))
}

/// Normalized Choi state, output on the low qubits and reference above.
pub fn choi(ch: &dyn ViewChannel) -> Result<CMat> {
    let din = 1usize << ch.input_qubits();
    let dout = 1usize << ch.output_qubits();
    let mut j = CMat::zeros(din * dout, din * dout);
    for a in 0..din {
        for b in 0..din {
            let block = channel_on_pair(ch, &basis_vec(din, a), &basis_vec(din, b))?;
            for x in 0..dout {
                for y in 0..dout {
                    j[(x + a * dout, y + b * dout)] = block[(x, y)] / din as f64;
                }
            }
        }
    }
    Ok(j)
}

fn apply(v: &mut [C64], g: &UnitaryGate, targets: &[usize]) {
    qsim::apply_in_place(v, g.matrix(), targets);
}

/// The real interaction: the prover prepares `(V, P)`, the verifier runs
/// `V'_1` on `(I, A', V, C')` and sends the classical bit C', the prover
/// answers on `(M, P)`. Extra qubits above the output are `P` then a copy
/// `B` of the coin the prover received.
pub struct RealView<'a> {
    pub regs: RewindRegisters,
    pub prover: &'a CoinProver,
    pub v1: &'a UnitaryGate,
}

impl ViewChannel for RealView<'_> {
    fn input_qubits(&self) -> usize {
        self.regs.i
    }

    fn output_qubits(&self) -> usize {
        self.regs.output_qubits()
    }

    fn branches(&self, psi: &[C64]) -> Result<Vec<Vec<C64>>> {
        let r = &self.regs;
        let out = r.output_qubits();
        let p = span(out, self.prover.p);
        let b = out + self.prover.p;
        let mut v = vec![c(0.0, 0.0); 1 << (b + 1)];
        v[..psi.len()].copy_from_slice(psi);
        apply(&mut v, &self.prover.first, &[r.v_q(), p.clone()].concat());
        apply(&mut v, self.v1, &r.v1_targets());
        apply(&mut v, &UnitaryGate::cnot(), &[r.c_prime(), b]);
        let sel = UnitaryGate::select(&self.prover.respond[0], &self.prover.respond[1]);
        apply(&mut v, &sel, &[vec![b], r.m_q(), p].concat());
        Ok(vec![v])
    }
}

/// The simulator: rounds of `Q = copy ∘ V'_1 ∘ S_V` with a D measurement,
/// undoing `Q` and reflecting about the all-zero ancilla state on failure.
pub struct RewindView<'a> {
    pub regs: RewindRegisters,
    pub s_v: &'a UnitaryGate,
    pub v1: &'a UnitaryGate,
    pub max_rounds: usize,
}

/// Per-input statistics of one simulator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    /// Probability of terminating in each round, unconditional.
    pub round_probs: Vec<f64>,
    /// Probability mass never reaching D = 0.
    pub residual: f64,
}

impl RewindView<'_> {
    fn q(&self, v: &mut [C64]) {
        let r = &self.regs;
        apply(v, self.s_v, &r.s_v_targets());
        apply(v, self.v1, &r.v1_targets());
        apply(v, &UnitaryGate::cnot(), &[r.c(), r.d()]);
        apply(v, &UnitaryGate::cnot(), &[r.c_prime(), r.d()]);
    }

    fn q_dag(&self, v: &mut [C64]) {
        let r = &self.regs;
        apply(v, &UnitaryGate::cnot(), &[r.c_prime(), r.d()]);
        apply(v, &UnitaryGate::cnot(), &[r.c(), r.d()]);
        apply(v, &self.v1.adjoint(), &r.v1_targets());
        apply(v, &self.s_v.adjoint(), &r.s_v_targets());
    }

    /// Good branches per round plus the trace of probabilities.
    pub fn run(&self, psi: &[C64]) -> (Vec<Vec<C64>>, RoundTrace) {
        let r = &self.regs;
        let n = r.total();
        let d_bit = 1usize << r.d();
        let ancilla_mask = ((1usize << n) - 1) & !((1usize << r.i) - 1);
        let mut s = vec![c(0.0, 0.0); 1 << n];
        s[..psi.len()].copy_from_slice(psi);
        self.q(&mut s);
        let mut good_branches = Vec::new();
        let mut round_probs = Vec::new();
        let mut residual = 0.0;
        for round in 0..self.max_rounds {
            let mut good = s.clone();
            let mut bad = s;
            for (k, (g, b)) in good.iter_mut().zip(bad.iter_mut()).enumerate() {
                if k & d_bit == 0 {
                    *b = c(0.0, 0.0);
                } else {
                    *g = c(0.0, 0.0);
                }
            }
            round_probs.push(good.iter().map(|z| z.norm_sqr()).sum());
            good_branches.push(good);
            residual = bad.iter().map(|z| z.norm_sqr()).sum();
            if residual <= 1e-30 || round + 1 == self.max_rounds {
                break;
            }
            self.q_dag(&mut bad);
            for (k, z) in bad.iter_mut().enumerate() {
                if k & ancilla_mask == 0 {
                    *z = -*z;
                }
            }
            self.q(&mut bad);
            s = bad;
        }
        (good_branches, RoundTrace { round_probs, residual })
    }
}

impl ViewChannel for RewindView<'_> {
    fn input_qubits(&self) -> usize {
        self.regs.i
    }

    fn output_qubits(&self) -> usize {
        self.regs.output_qubits()
    }

    fn branches(&self, psi: &[C64]) -> Result<Vec<Vec<C64>>> {
        let (b, trace) = self.run(psi);
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if trace.residual > 1e-12 * norm.max(1e-300) {
            return Err(ZkError::RoundsExhausted(self.max_rounds));
        }
        // Pad so every input yields the same branch count.
        let mut b = b;
        let len = b[0].len();
        b.resize(self.max_rounds, vec![c(0.0, 0.0); len]);
        Ok(b)
    }
}

pub const DEFAULT_MAX_ROUNDS: usize = 64;

#[derive(Debug, Clone)]
pub struct RewindOutcome {
    pub output: DensityOperator,
    /// Probability that the first D measurement gives 0.
    pub d0_first: f64,
    pub round_probs: Vec<f64>,
    /// Last round with non-negligible termination probability.
    pub rounds: usize,
}

/// Runs the simulator on `input` (a state of `I`) exactly.
pub fn rewind_simulator(
    regs: RewindRegisters,
    v1: &UnitaryGate,
    s_v: &UnitaryGate,
    input: &DensityOperator,
    max_rounds: usize,
) -> Result<RewindOutcome> {
    check_arity(&regs, v1, s_v)?;
    let view = RewindView { regs, s_v, v1, max_rounds };
    let output = apply_channel(&view, input)?;
    let (vals, vecs) = qsim::hermitian_eigen(input.matrix());
    let mut round_probs = vec![0.0; max_rounds];
    for (k, &lam) in vals.iter().enumerate() {
        if lam <= 1e-15 {
            continue;
        }
        let v: Vec<C64> = vecs.column(k).iter().copied().collect();
        let (_, t) = view.run(&v);
        for (r, p) in t.round_probs.iter().enumerate() {
            round_probs[r] += lam * p;
        }
    }
    let rounds = round_probs.iter().rposition(|&p| p > 1e-12).map_or(0, |r| r + 1);
    round_probs.truncate(rounds.max(1));
    Ok(RewindOutcome { output, d0_first: round_probs[0], round_probs, rounds })
}

fn check_arity(regs: &RewindRegisters, v1: &UnitaryGate, s_v: &UnitaryGate) -> Result<()> {
    if v1.arity() != regs.v1_targets().len() || s_v.arity() != regs.s_v_targets().len() {
        return Err(ZkError::Malformed(format!(
            "V'_1 acts on {} qubits and S_V on {}, registers need {} and {}",
            v1.arity(),
            s_v.arity(),
            regs.v1_targets().len(),
            regs.s_v_targets().len()
        )));
    }
    qsim::check_qubits(regs.total())?;
    Ok(())
}

/// Number of rounds used by one sampled run of the simulator.
pub fn sample_rounds(
    regs: RewindRegisters,
    v1: &UnitaryGate,
    s_v: &UnitaryGate,
    input: &PureState,
    max_rounds: usize,
    seed: u64,
) -> Result<usize> {
    check_arity(&regs, v1, s_v)?;
    let view = RewindView { regs, s_v, v1, max_rounds };
    let (_, t) = view.run(input.amplitudes());
    let mut rng = seed::stream(seed, 0);
    let mut left = 1.0;
    for (r, p) in t.round_probs.iter().enumerate() {
        if rng.gen::<f64>() * left < *p {
            return Ok(r + 1);
        }
        left -= p;
    }
    Err(ZkError::RoundsExhausted(max_rounds))
}

/// Whether the coin of `S_V` is uniform and independent of V.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinCheck {
    pub p_coin1: f64,
    /// Trace distance between the V marginals given C = 0 and C = 1.
    pub v_marginal_gap: f64,
    pub independent: bool,
}

pub fn coin_independence(regs: &RewindRegisters, s_v: &UnitaryGate) -> Result<CoinCheck> {
    let k = s_v.arity();
    let out = PureState::zero(k)?.apply(s_v, &(0..k).collect::<Vec<_>>())?.to_density();
    let cq = regs.v + regs.m;
    let vs = span(0, regs.v);
    let mut marg = Vec::new();
    let mut probs = Vec::new();
    for b in 0..2 {
        let part = out.conjugate(Projector::basis_state(1, b).matrix(), &[cq])?;
        let p = part.trace();
        probs.push(p);
        let m = part.partial_trace(&vs)?;
        marg.push(if p > 1e-15 { m.scaled(1.0 / p) } else { m });
    }
    let gap = if probs.iter().all(|&p| p > 1e-15) { qsim::trace_distance(&marg[0], &marg[1])? } else { 1.0 };
    let independent = (probs[1] - 0.5).abs() <= 1e-9 && gap <= 1e-9;
    Ok(CoinCheck { p_coin1: probs[1], v_marginal_gap: gap, independent })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub max_input_distance: f64,
    pub choi_distance: f64,
    /// Best bias over the fixed distinguisher suite and test inputs.
    pub best_distinguisher: f64,
    pub suite_size: usize,
}

/// All 1- and 2-qubit Pauli observables plus `haar` random binary tests.
pub fn distinguisher_suite(qubits: usize, haar: usize, seed: u64) -> Vec<CMat> {
    let paulis = [qsim::pauli_x(), qsim::pauli_y(), qsim::pauli_z()];
    let mut out = Vec::new();
    for q in 0..qubits {
        for p in &paulis {
            out.push(qsim::embed(p, &[q], qubits).expect("in range"));
        }
    }
    for q in 0..qubits {
        for r in q + 1..qubits {
            for p in &paulis {
                for s in &paulis {
                    out.push(qsim::embed(&qsim::tensor_le(p, s), &[q, r], qubits).expect("in range"));
                }
            }
        }
    }
    let mut rng = seed::stream(seed, 0);
    let d = 1usize << qubits;
    for _ in 0..haar {
        let u = qsim::haar_unitary(qubits, &mut rng);
        let half = CMat::from_fn(d, d, |i, j| if i == j && i < d / 2 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let proj = u.matrix() * half * u.matrix().adjoint();
        // Binary test as a ±1 observable.
        out.push(proj.scale(2.0) - qsim::identity(d));
    }
    out
}

/// Exact distance between two view channels on `inputs` and on the Choi
/// state, plus the best bias of the fixed distinguisher suite.
pub fn view_vs_sim_distance(
    real: &dyn ViewChannel,
    sim: &dyn ViewChannel,
    inputs: &[PureState],
    seed: u64,
) -> Result<DistanceReport> {
    if real.input_qubits() != sim.input_qubits() || real.output_qubits() != sim.output_qubits() {
        return Err(ZkError::Malformed("channels act on different registers".into()));
    }
    let suite = distinguisher_suite(real.output_qubits(), 50, seed);
    let mut max_input_distance: f64 = 0.0;
    let mut best: f64 = 0.0;
    for psi in inputs {
        let a = channel_on_pair(real, psi.amplitudes(), psi.amplitudes())?;
        let b = channel_on_pair(sim, psi.amplitudes(), psi.amplitudes())?;
        max_input_distance = max_input_distance.max(qsim::trace_distance_mat(&a, &b));
        let diff = &a - &b;
        for o in &suite {
            best = best.max(0.5 * (o * &diff).trace().re.abs());
        }
    }
    let choi_distance = qsim::trace_distance_mat(&choi(real)?, &choi(sim)?);
    Ok(DistanceReport { max_input_distance, choi_distance, best_distinguisher: best, suite_size: suite.len() })
}

/// A fixed malicious first circuit on `(I, V, C')`: the coin depends on
/// both the auxiliary input and the received V.
pub fn toy_malicious_first() -> UnitaryGate {
    let ry = UnitaryGate::ry(1.1);
    let cnot = UnitaryGate::cnot();
    let h = UnitaryGate::h();
    UnitaryGate::compose(3, &[(&ry, vec![2]), (&cnot, vec![0, 2]), (&cnot, vec![1, 2]), (&h, vec![0])]).expect("static sizes")
}

/// Standard test inputs on one qubit: |0⟩, |1⟩, |+⟩, |+i⟩.
pub fn test_inputs() -> Vec<PureState> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        PureState::zero(1).expect("one qubit"),
        PureState::basis(1, 1).expect("one qubit"),
        PureState::plus(),
        PureState::new(1, vec![c(s, 0.0), c(0.0, s)]).expect("normalized"),
    ]
}
