//! One runner per scenario kind. Trials run in order, each on its own
//! seed stream `child(child(master, tag), index)`, so adding trials never
//! changes earlier ones.

use std::collections::HashSet;
use std::fmt::Display;

use rand::seq::SliceRandom;
use rand::Rng;

use qmzk_core::crypto::{
    self, binding_scan, blum_coin_flip, chi_square_uniform, coloring_cheat_enumeration, hiding_report, zk_np_prove,
    zk_np_verify, CoinVerifier, CommitParams, Graph, NpStatement, NpWitness,
};
use qmzk_core::encode::clifford::QUERY_CHOICES;
use qmzk_core::encode::measure::reduced_density;
use qmzk_core::encode::steane::{encode_blocks, is_codeword, logical_value};
use qmzk_core::encode::{
    conjugation_residual, decode_register, decode_soundness_echo, encode_register, measure_term_shots, pad_twirl,
    pauli_conjugate, predicate_r, run_final_protocol, steane_decode, steane_encode, unpad_outcome, Branch,
    CliffordCircuit, CliffordGate, Corruption, EncodingKey, FinalProtocol, PauliKind, PhysicalError, SessionConfig,
    Trap, N, TWO_N,
};
use qmzk_core::lhi::clifford::{decompose_clifford_term, decomposition_residual};
use qmzk_core::lhi::plus::{lhi_plus_extraction_sweep, lhi_plus_toy_instance};
use qmzk_core::lhi::{build_lhi, extract_strategy, honest_history_state, lhi_toy, perturbation_sweep, run_lhi, TermKind};
use qmzk_core::protocol::{self, haar_random_strategy, AcceptanceReport, ProverStrategy, RegisterLayout};
use qmzk_core::qsim::{self, c, CMat, Projector, PureState, UnitaryGate};
use qmzk_core::seed::{child, stream};
use qmzk_core::zk::rewind::{
    coin_independence, rewind_simulator, test_inputs, toy_malicious_first, view_vs_sim_distance, CoinProver, RealView,
    RewindView, DEFAULT_MAX_ROUNDS,
};
use qmzk_core::zk::{add_ghz, extraction_sweep, same_bit_reduction_gap, to_two_turn, toy_three_turn};

use crate::catalogue::uncovered_invariants;
use crate::report::Check;
use crate::scenario::{Kind, Scenario};

/// A subprotocol failed; the message is reported and the run stops.
#[derive(Debug, Clone, PartialEq)]
pub struct Abort(pub String);

impl<E: std::error::Error> From<E> for Abort {
    fn from(e: E) -> Self {
        Abort(e.to_string())
    }
}

fn abort(msg: impl Display) -> Abort {
    Abort(msg.to_string())
}

type Step = Result<(), Abort>;

/// Random (ρ, M) pairs checked for the gentle-measurement bound.
pub const GENTLE_PAIRS: usize = 1000;
const STRUCTURAL_TRIALS: usize = 200;
const TWIRL_KEYS: usize = 200;
const ECHO_ERRORS: usize = 8;
const CORRUPTION_CASES: usize = 2;

/// Runs every check of the scenario's kind, appending to `out` as it goes.
pub fn run(sc: &Scenario, out: &mut Vec<Check>) -> Step {
    match sc.kind {
        Kind::QmipRun => qmip_run(sc, out),
        Kind::Theorem4Sweep => theorem4_sweep(sc, out),
        Kind::LhiCheck => lhi_check(sc, out),
        Kind::LhiPlusSweep => lhi_plus_sweep(sc, out),
        Kind::FinalZkSession => final_zk_session(sc, out),
        Kind::RewindCheck => rewind_check(sc, out),
        Kind::CryptoSuite => crypto_suite(sc, out),
    }
}

fn worst(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn max_abs_dev(a: &[qsim::C64], b: &[qsim::C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn branch_gap(r: &AcceptanceReport) -> f64 {
    (r.branches.iter().map(|b| b.weight * b.p_acc).sum::<f64>() - r.p_acc).abs()
}

fn qmip_run(sc: &Scenario, out: &mut Vec<Check>) -> Step {
    let (p, eps, n, tol) = (sc.provers(), sc.eps(), sc.samples(), sc.tolerance());

    let gates = [
        UnitaryGate::h(),
        UnitaryGate::x(),
        UnitaryGate::y(),
        UnitaryGate::z(),
        UnitaryGate::s(),
        UnitaryGate::s().adjoint(),
        UnitaryGate::ry(0.7),
        UnitaryGate::hh(),
        UnitaryGate::lambda_p(),
        UnitaryGate::cnot(),
        UnitaryGate::swap(),
        UnitaryGate::toffoli(),
    ];
    out.push(Check::at_most("gate unitarity", worst(gates.iter().map(|g| qsim::unitarity_residual(g.matrix()))), 0.0, 1e-12));

    let mut rng = stream(child(sc.seed, 1), 0);
    let mut drift = 0.0f64;
    for _ in 0..STRUCTURAL_TRIALS {
        let nq = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=nq.min(2));
        let psi = PureState::random(nq, &mut rng)?;
        let mut qs: Vec<usize> = (0..nq).collect();
        qs.shuffle(&mut rng);
        let u = qsim::haar_unitary(k, &mut rng);
        drift = drift.max((psi.apply(&u, &qs[..k])?.norm_sqr() - 1.0).abs());
    }
    out.push(Check::at_most("norm preservation", drift, 0.0, 1e-12));

    let mut rng = stream(child(sc.seed, 2), 0);
    let mut gentle = f64::NEG_INFINITY;
    for _ in 0..GENTLE_PAIRS {
        let nq = rng.gen_range(1..=3);
        let rank = rng.gen_range(1..=1usize << nq);
        let rho = qsim::random_density(nq, rank, &mut rng)?;
        let m = qsim::random_effect(nq, &mut rng);
        let r = qsim::gentle_measurement_residual(&rho, &m)?;
        gentle = gentle.max(r.distance - r.epsilon.max(0.0).sqrt());
    }
    out.push(Check::at_most("gentle measurement", gentle, 0.0, 1e-10));

    let mut rng = stream(child(sc.seed, 3), 0);
    let mut loss = 0.0f64;
    for _ in 0..STRUCTURAL_TRIALS {
        let nq = rng.gen_range(1..=4);
        let psi = PureState::random(nq, &mut rng)?;
        let mut qs: Vec<usize> = (0..nq).collect();
        qs.shuffle(&mut rng);
        let k = rng.gen_range(1..=nq);
        let total: f64 = qsim::computational_measure(&psi, &qs[..k])?.iter().map(|b| b.probability).sum();
        let proj = qsim::projective_measure(&psi, &Projector::basis_state(1, rng.gen_range(0..2)), &qs[..1])?;
        loss = loss.max((total - 1.0).abs()).max((proj.p_yes + proj.p_no - 1.0).abs());
    }
    out.push(Check::at_most("measurement completeness", loss, 0.0, 1e-12));

    let mut rng = stream(child(sc.seed, 4), 0);
    let mut pt = 0.0f64;
    for _ in 0..STRUCTURAL_TRIALS {
        let rho = qsim::random_density(3, rng.gen_range(1..=8), &mut rng)?;
        let keep: Vec<usize> = (0..3).filter(|_| rng.gen_bool(0.5)).collect();
        if keep.is_empty() {
            continue;
        }
        let red = rho.partial_trace(&keep)?;
        let min_eig = qsim::hermitian_eigenvalues(red.matrix())[0];
        pt = pt.max((red.trace() - 1.0).abs()).max(-min_eig);
    }
    out.push(Check::at_most("partial trace positivity", pt, 0.0, 1e-12));

    let p3 = toy_three_turn(p, eps)?;
    let two = to_two_turn(&p3)?;
    let haar = haar_random_strategy(&two.layout, two.program.prover_turns(), 2, child(sc.seed, 5))?;
    let locality = |layout: &RegisterLayout, s: &ProverStrategy| s.check_locality(layout).len();
    let violations = protocol::validate(&p3.layout, &p3.program()).len()
        + protocol::validate(&two.layout, &two.program).len()
        + locality(&p3.layout, &p3.honest)
        + locality(&two.layout, &two.honest)
        + locality(&two.layout, &haar);
    out.push(Check::at_most("prover locality", violations as f64, 0.0, 0.0));

    let honest3 = p3.run_exact(&p3.honest)?;
    let honest2 = two.run_exact(&two.honest)?;
    let haar2 = two.run_exact(&haar)?;
    out.push(Check::at_most("branch consistency", worst([&honest3, &honest2, &haar2].map(branch_gap)), 0.0, 1e-12));

    let sample_seeds = child(sc.seed, 6);
    let transcripts = (0..n as u64)
        .map(|i| protocol::sample_run(&two.layout, &two.program, &haar, child(sample_seeds, i)))
        .collect::<Result<Vec<_>, _>>()?;
    let exact = haar2.p_acc;
    let empirical = transcripts.iter().filter(|t| t.accepted).count() as f64 / n as f64;
    let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
    out.push(Check::at_most("sampling consistency", (empirical - exact).abs(), 5.0 * sigma, 1e-12));

    out.push(Check::at_least("honest completeness", honest3.p_acc, 1.0 - eps, tol));

    let mut mismatches = 0;
    for (i, t) in transcripts.iter().enumerate().take(100) {
        if protocol::sample_run(&two.layout, &two.program, &haar, child(sample_seeds, i as u64))? != *t {
            mismatches += 1;
        }
    }
    out.push(Check::at_most("determinism", mismatches as f64, 0.0, 0.0));
    out.push(Check::at_most("catalogue coverage", uncovered_invariants().len() as f64, 0.0, 0.0));
    Ok(())
}

fn theorem4_sweep(sc: &Scenario, out: &mut Vec<Check>) -> Step {
    let (p, eps, n, tol) = (sc.provers(), sc.eps(), sc.samples(), sc.tolerance());
    let ghz = add_ghz(&to_two_turn(&toy_three_turn(p, eps)?)?)?;
    let honest = ghz.run_exact(&ghz.honest)?;
    out.push(Check::at_least("completeness preservation", honest.p_acc, 1.0 - eps / 2.0, tol));

    let reports = extraction_sweep(&ghz, child(sc.seed, 1), n)?;
    let gentle = worst(reports.iter().filter_map(|r| r.slack_gentle).map(|s| -s));
    out.push(Check::at_most("soundness chain gentle link", gentle, 0.0, tol));
    out.push(Check::at_most("soundness chain square-root link", worst(reports.iter().map(|r| -r.slack_sqrt)), 0.0, tol));
    out.push(Check::at_most("soundness chain final link", worst(reports.iter().map(|r| -r.slack_final)), 0.0, tol));
    let agree = reports.iter().filter_map(|r| Some((r.p_rej_hv? - r.p_rej_hv_conditioned?).abs()));
    out.push(Check::at_most("conditioned extraction agreement", worst(agree).max(0.0), 0.0, tol));

    // Marginal of GHZ_{p+1} on every p-subset.
    let g = PureState::ghz(p + 1)?.to_density();
    let d = 1usize << p;
    let mut target = CMat::zeros(d, d);
    target[(0, 0)] = c(0.5, 0.0);
    target[(d - 1, d - 1)] = c(0.5, 0.0);
    let mut marginal = 0.0f64;
    for drop in 0..=p {
        let keep: Vec<usize> = (0..=p).filter(|&q| q != drop).collect();
        marginal = marginal.max(qsim::max_abs(&(g.partial_trace(&keep)?.matrix() - &target)));
    }
    out.push(Check::at_most("ghz marginal identity", marginal, 0.0, 1e-15));

    let mut gap = 0.0f64;
    for mask in 1..1usize << p {
        let zero_to: Vec<usize> = (1..=p).filter(|&i| mask >> (i - 1) & 1 == 1).collect();
        gap = gap.max(same_bit_reduction_gap(&ghz, &zero_to)?);
    }
    out.push(Check::at_most("same-bit reduction", gap, 0.0, 1e-12));
    Ok(())
}

fn rewind_check(sc: &Scenario, out: &mut Vec<Check>) -> Step {
    let prover = CoinProver::toy();
    let regs = prover.registers(1, 0);
    let s_v = prover.honest_view_simulator();
    let mut rng = stream(child(sc.seed, 1), 0);
    let mut verifiers = vec![toy_malicious_first()];
    verifiers.extend((0..sc.samples()).map(|_| qsim::haar_unitary(regs.v1_targets().len(), &mut rng)));
    let mut inputs = test_inputs();
    for _ in 0..2 {
        inputs.push(PureState::random(regs.i, &mut rng)?);
    }

    let mut rate = 0.0f64;
    let mut law = 0.0f64;
    let mut distance = 0.0f64;
    for (j, v1) in verifiers.iter().enumerate() {
        for psi in &inputs {
            let r = rewind_simulator(regs, v1, &s_v, &psi.to_density(), DEFAULT_MAX_ROUNDS)?;
            rate = rate.max((r.d0_first - 0.5).abs());
            // After a failed round the reflection succeeds with q = 4p(1 − p).
            let p = r.d0_first;
            let q = 4.0 * p * (1.0 - p);
            let mut left = 1.0 - p;
            for (k, &pr) in r.round_probs.iter().enumerate() {
                let want = if k == 0 { p } else { left * q };
                if k > 0 {
                    left *= 1.0 - q;
                }
                law = law.max((pr - want).abs());
            }
        }
        let real = RealView { regs, prover: &prover, v1 };
        let sim = RewindView { regs, s_v: &s_v, v1, max_rounds: DEFAULT_MAX_ROUNDS };
        let d = view_vs_sim_distance(&real, &sim, &inputs, child(sc.seed, 2 + j as u64))?;
        distance = distance.max(d.max_input_distance).max(d.choi_distance);
    }
    out.push(Check::at_most("rewind d0 rate", rate, 0.0, 1e-9));
    out.push(Check::at_most("rewind round law", law, 0.0, 1e-9));
    out.push(Check::at_most("rewind view distance", distance, 0.0, 1e-6));

    let coin = coin_independence(&regs, &s_v)?;
    out.push(Check::at_most("coin independence", (coin.p_coin1 - 0.5).abs().max(coin.v_marginal_gap), 0.0, 1e-9));

    let wrong = prover.flipped_coin_simulator();
    let real = RealView { regs, prover: &prover, v1: &verifiers[0] };
    let sim = RewindView { regs, s_v: &wrong, v1: &verifiers[0], max_rounds: DEFAULT_MAX_ROUNDS };
    let d = view_vs_sim_distance(&real, &sim, &inputs, child(sc.seed, 1))?;
    out.push(Check::at_least("flipped simulator detected", d.max_input_distance, 0.4, 0.0));
    Ok(())
}

fn lhi_check(sc: &Scenario, out: &mut Vec<Check>) -> Step {
    let tol = sc.tolerance();
    let p3 = lhi_toy(sc.eps())?;
    let inst = build_lhi(&p3)?;
    let h = honest_history_state(&inst, &p3)?;

    let mut spectra = 0.0f64;
    for term in &inst.terms {
        let m = term.op.matrix();
        let r = if term.kind == TermKind::C {
            qsim::operator_norm(m) - 1.0
        } else {
            qsim::max_abs(&(m * m - m)).max(qsim::max_abs(&(m - m.adjoint())))
        };
        spectra = spectra.max(r);
    }
    out.push(Check::at_most("term spectra", spectra, 0.0, 1e-10));

    let run = run_lhi(&inst, &h.state, &h.responses)?;
    out.push(Check::at_most("zero-energy completeness", worst(run.per_term.iter().copied()), 0.0, tol));

    let mask = inst.clock_mask();
    let valid: HashSet<usize> = (0..=inst.params.steps).map(|t| inst.clock_bits(t)).collect();
    let bad: f64 = h.state.amplitudes().iter().enumerate().filter(|(i, _)| !valid.contains(&(i & mask))).map(|(_, a)| a.norm_sqr()).sum();
    out.push(Check::at_most("unary clock closure", bad, 0.0, 1e-12));

    let mut dec = 0.0f64;
    for g in [UnitaryGate::swap(), UnitaryGate::cnot()] {
        dec = dec.max(decomposition_residual(&g, &decompose_clifford_term(&g)?));
    }
    out.push(Check::at_most("decomposition identity", dec, 0.0, 1e-12));

    let mut rng = stream(child(sc.seed, 1), 0);
    let mut states = vec![h.state.clone()];
    for _ in 0..sc.samples() {
        states.push(PureState::random(inst.num_qubits(), &mut rng)?);
    }
    let mut bot = f64::NEG_INFINITY;
    for phi in &states {
        let d = extract_strategy(&inst, phi, &h.responses)?.diagnostics;
        bot = bot.max(d.bot_norm - d.bot_bound);
    }
    out.push(Check::at_most("bad-time mass bound", bot, 0.0, tol));

    let sweep = perturbation_sweep(&inst, &h, &sc.deltas(), child(sc.seed, 2))?;
    let mut pts = sweep.points.clone();
    pts.sort_by(|a, b| a.lhi_rej.total_cmp(&b.lhi_rej));
    let rise = worst(pts.windows(2).map(|w| w[0].extracted_rej - w[1].extracted_rej)).max(0.0);
    out.push(Check::at_most("extraction trend monotone", rise, 0.0, 1e-12));
    let smallest = sweep.points.iter().min_by(|a, b| a.delta.total_cmp(&b.delta)).ok_or_else(|| abort("empty sweep"))?;
    out.push(Check::at_most("extraction limit", smallest.extracted_rej, 1e-4, 0.0));
    out.push(Check::near("extraction exponent", sweep.exponent_amplitude, 0.4, 0.2));
    out.push(Check::reported("extraction rejection exponent", sweep.exponent_rejection));
    out.push(Check::reported("extraction constant", sweep.fitted_c));
    let failing = sweep.points.iter().filter(|p| !p.diagnostics_hold).count();
    out.push(Check::at_most("extraction diagnostics", failing as f64, 0.0, 0.0));
    Ok(())
}

fn lhi_plus_sweep(sc: &Scenario, out: &mut Vec<Check>) -> Step {
    let (eps, tol) = (sc.eps(), sc.tolerance());
    let (_, _, plus) = lhi_plus_toy_instance(eps)?;
    let honest = plus.run_exact(&plus.honest)?;
    out.push(Check::at_least("lhi-plus completeness", honest.p_acc, 1.0 - eps / 2.0, tol));
    out.push(Check::near("lhi-plus ghz branch", honest.branches[0].p_acc, 1.0, tol));

    let reports = lhi_plus_extraction_sweep(&plus, child(sc.seed, 1), sc.samples())?;
    let chain = worst(reports.iter().map(|r| {
        let gentle = r.slack_gentle.map_or(f64::NEG_INFINITY, |s| -s);
        gentle.max(-r.slack_sqrt).max(-r.slack_final)
    }));
    out.push(Check::at_most("lhi-plus soundness chain", chain, 0.0, tol));
    let agree = reports.iter().filter_map(|r| Some((r.p_rej_hv? - r.p_rej_hv_conditioned?).abs()));
    out.push(Check::at_most("lhi-plus conditioned agreement", worst(agree).max(0.0), 0.0, tol));
    Ok(())
}

/// Transversal `circ` on encoded blocks against the encoding of the logical result.
fn transversal_deviation(circ: &CliffordCircuit, logical: &PureState) -> Result<f64, Abort> {
    let k = circ.arity;
    let mut phys = encode_blocks(logical)?;
    for o in 0..N {
        let slice: Vec<usize> = (0..k).map(|i| N * i + o).collect();
        phys = circ.transversal().apply(&phys, &slice)?;
    }
    let want = encode_blocks(&circ.apply(logical, &(0..k).collect::<Vec<_>>())?)?;
    Ok(max_abs_dev(phys.amplitudes(), want.amplitudes()))
}

fn final_zk_session(sc: &Scenario, out: &mut Vec<Check>) -> Step {
    let tol = sc.tolerance();
    let n = sc.samples();

    let words = (0..128u8).filter(|&w| is_codeword(w)).count();
    let odd = (0..128u8).filter(|&w| is_codeword(w) && logical_value(w) == Some(true)).count();
    out.push(Check::at_most("steane code sizes", (words.abs_diff(16) + odd.abs_diff(8)) as f64, 0.0, 0.0));

    let mut rng = stream(child(sc.seed, 1), 0);
    let mut inv = 0.0f64;
    for t in 0..n {
        let key = EncodingKey::random(3, 16, &mut rng);
        let x = PureState::random(1, &mut rng)?;
        let back = decode_register(&encode_register(&x, &key, t % 3)?, &key, t % 3)?;
        let plain = steane_decode(&steane_encode(&x)?)?;
        inv = inv.max(1.0 - back.inner(&x).norm()).max(1.0 - plain.inner(&x).norm());
    }
    out.push(Check::at_most("encoding invertibility", inv, 0.0, 1e-12));

    // Reduced code: two-qubit repetition code plus a |+⟩ and a |↻⟩ trap, permuted.
    let x = PureState::random(1, &mut rng)?;
    let a = x.amplitudes();
    let rep = PureState::new(2, vec![a[0], c(0.0, 0.0), c(0.0, 0.0), a[1]])?;
    let full = rep.tensor(&Trap::Plus.state())?.tensor(&Trap::Circ.state())?;
    let perm = [2usize, 0, 3, 1];
    let mut amps = vec![c(0.0, 0.0); 16];
    for (i, &v) in full.amplitudes().iter().enumerate() {
        amps[(0..4).fold(0, |acc, o| acc | (i >> o & 1) << perm[o])] = v;
    }
    let rho = pad_twirl(&PureState::new(4, amps)?)?;
    out.push(Check::at_most("pad twirl exact", qsim::max_abs(&(rho - qsim::identity(16) / c(16.0, 0.0))), 0.0, 1e-12));

    let keys: Vec<EncodingKey> = (0..TWIRL_KEYS).map(|_| EncodingKey::random(1, 16, &mut rng)).collect();
    let encoded = keys.iter().map(|k| encode_register(&x, k, 0)).collect::<Result<Vec<_>, _>>()?;
    let mut marg = 0.0f64;
    for q in 0..TWO_N {
        let mut rho = CMat::zeros(2, 2);
        for e in &encoded {
            rho += reduced_density(e, &[q]) / c(TWIRL_KEYS as f64, 0.0);
        }
        marg = marg.max(qsim::trace_distance_mat(&rho, &(qsim::identity(2) / c(2.0, 0.0))));
    }
    out.push(Check::at_most("pad twirl sampled", marg, 0.05, 0.0));

    let cnot = CliffordCircuit::new(2, vec![CliffordGate::Cnot(0, 1)])?;
    let mut tv = 0.0f64;
    for b in 0..4 {
        tv = tv.max(transversal_deviation(&cnot, &PureState::basis(2, b)?)?);
    }
    out.push(Check::at_most("transversality", tv, 0.0, 1e-12));

    let (_, _, plus) = lhi_plus_toy_instance(sc.eps())?;
    let fp = FinalProtocol::new(&plus)?;
    let key = fp.random_key(child(sc.seed, 2));
    let mut conj = 0.0f64;
    for d in &fp.decompositions {
        let regs = fp.key_registers(d);
        let a: Vec<u16> = regs.iter().map(|&r| key.a[r]).collect();
        let b: Vec<u16> = regs.iter().map(|&r| key.b[r]).collect();
        for v in 0..QUERY_CHOICES {
            let phys = d.clifford(v).transversal();
            let pc = pauli_conjugate(&phys, &a, &b)?;
            conj = conj.max(conjugation_residual(&phys.unitary(), &a, &b, &pc));
        }
    }
    out.push(Check::at_most("conjugation identity", conj, 0.0, 1e-10));

    let shots_seed = child(sc.seed, 3);
    let mut failed = 0;
    for (q, d) in fp.decompositions.iter().enumerate() {
        let key = fp.random_key(child(shots_seed, q as u64));
        let regs = fp.key_registers(d);
        let a: Vec<u16> = regs.iter().map(|&r| key.a[r]).collect();
        let b: Vec<u16> = regs.iter().map(|&r| key.b[r]).collect();
        let traps: Vec<_> = regs.iter().map(|&r| key.traps[r]).collect();
        let psi = fp.state_for_query(q)?;
        for v in 0..QUERY_CHOICES {
            let mut srng = stream(child(shots_seed, q as u64), 1 + v as u64);
            let circ = d.clifford(v);
            for u in measure_term_shots(&psi, &key, &fp.reg_of, d, v, &[], 2, &mut srng)? {
                if !predicate_r(&traps, &unpad_outcome(&u, &circ, &a, &b)?, &key.perm, &circ)? {
                    failed += 1;
                }
            }
        }
    }
    out.push(Check::at_most("predicate completeness", failed as f64, 0.0, 0.0));

    let mut rng = stream(child(sc.seed, 4), 0);
    let mut echo = 0.0f64;
    for e in 0..ECHO_ERRORS {
        let q = rng.gen_range(0..fp.decompositions.len());
        let error = PhysicalError {
            slot: rng.gen_range(0..fp.decompositions[q].registers.len()),
            position: rng.gen_range(0..TWO_N),
            pauli: [PauliKind::X, PauliKind::Y, PauliKind::Z][rng.gen_range(0..3)],
        };
        let r = decode_soundness_echo(&fp, &key, q, e % QUERY_CHOICES, error, 40, child(sc.seed, 5 + e as u64))?;
        echo = echo.max(r.slack);
    }
    out.push(Check::reported("decode-soundness echo", echo));

    let cfg = SessionConfig { session_seed: child(sc.seed, 6), branch: Some(Branch::Ghz), corruption: None };
    let rec = run_final_protocol(&fp, &fp.random_key(child(sc.seed, 7)), &cfg)?;
    let ghz = if rec.accepted { fp.ghz_probability } else { 0.0 };
    out.push(Check::near("ghz branch acceptance", ghz, 1.0, tol));

    let (sessions, keys_seed) = (child(sc.seed, 8), child(sc.seed, 9));
    let mut rejected = 0;
    for i in 0..n as u64 {
        let cfg = SessionConfig { session_seed: child(sessions, i), branch: Some(Branch::History), corruption: None };
        if !run_final_protocol(&fp, &fp.random_key(child(keys_seed, i)), &cfg)?.accepted {
            rejected += 1;
        }
    }
    out.push(Check::at_most("history branch acceptance", rejected as f64, 0.0, 0.0));

    let corrupt = child(sc.seed, 10);
    let mut missed = 0;
    for (ci, corruption) in Corruption::ALL.into_iter().enumerate() {
        let base = child(corrupt, ci as u64);
        let mut checked = 0;
        for s in 0..40u64 {
            let cfg = SessionConfig { session_seed: child(base, s), branch: Some(Branch::History), corruption: Some(corruption) };
            let rec = run_final_protocol(&fp, &fp.random_key(child(base, 1000 + s)), &cfg)?;
            // Padded queries skip the measurement, so only some corruptions can apply.
            if rec.padded_query && corruption != Corruption::WrongQuery {
                continue;
            }
            if rec.accepted {
                missed += 1;
            }
            checked += 1;
            if checked == CORRUPTION_CASES {
                break;
            }
        }
        missed += CORRUPTION_CASES - checked;
    }
    out.push(Check::at_most("corruption detection", missed as f64, 0.0, 0.0));
    Ok(())
}

fn crypto_suite(sc: &Scenario, out: &mut Vec<Check>) -> Step {
    let (n, rounds, tol) = (sc.samples(), sc.rounds(), sc.tolerance());
    let key = child(sc.seed, 1);
    let params = CommitParams::for_alphabet(4, 10, key)?;
    let scan = binding_scan(&params, 4)?;
    let broken = scan.cross_value_collisions + usize::from(!scan.sigma_bijective);
    out.push(Check::at_most("binding exhaustive scan", broken as f64, 0.0, 0.0));

    let flip = blum_coin_flip(
        &CommitParams::new(1, 16, key)?,
        child(sc.seed, 2),
        child(sc.seed, 3),
        n,
        crypto::CoinProver::Honest,
        CoinVerifier::Honest,
    );
    if flip.aborted() {
        return Err(abort(format!("honest coin flip aborted at round {:?}", flip.aborted_at)));
    }
    let (_, p_value) = chi_square_uniform(&flip.bits);
    out.push(Check::at_least("coin uniformity", p_value, 0.01, 0.0));
    let mean = flip.bits.iter().filter(|&&b| b).count() as f64 / flip.bits.len() as f64;
    out.push(Check::at_most("coin bias", (mean - 0.5).abs(), 0.02, 0.0));

    let yes = [
        (Graph::complete(3), vec![0u8, 1, 2]),
        (Graph { vertices: 5, edges: vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)] }, vec![0, 1, 0, 1, 2]),
    ];
    let proofs = child(sc.seed, 4);
    let mut rejected = 0;
    for (gi, (g, colors)) in yes.iter().enumerate() {
        for s in 0..4u64 {
            let st = NpStatement::ThreeColoring(g.clone());
            let tr = zk_np_prove(&st, &NpWitness::Coloring(colors.clone()), rounds, child(proofs, 4 * gi as u64 + s))?;
            if !zk_np_verify(&st, &tr)? {
                rejected += 1;
            }
        }
    }
    out.push(Check::at_most("zk-np completeness", rejected as f64, 0.0, 0.0));

    let cheat = coloring_cheat_enumeration(&Graph::complete(4), &params, rounds)?;
    out.push(Check::at_most("zk-np soundness", cheat.best_total, (5.0f64 / 6.0).powi(rounds as i32), tol));
    out.push(Check::at_most("zk-np equivocations", cheat.equivocations as f64, 0.0, 0.0));
    out.push(Check::reported("commitment hiding", hiding_report(&params, 0, 3)?.statistical_distance));
    Ok(())
}
