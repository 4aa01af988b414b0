//! Acceptance gate: one PASS/FAIL line per criterion, each with its runtime
//! budget. Values are recomputed through a second route where one exists.

use std::collections::{BTreeMap, HashSet};
use std::error::Error;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;

use qmzk_core::crypto::{
    binding_scan, blum_coin_flip, coloring_cheat_enumeration, commit_symbol, to_bits, verify_open, CoinProver, CoinVerifier,
    CommitParams, Graph,
};
use qmzk_core::encode::clifford::QUERY_CHOICES;
use qmzk_core::encode::steane::{encode_blocks, is_codeword, logical_value};
use qmzk_core::encode::{
    conjugation_residual, pauli_conjugate, pauli_conjugate_unitary, run_final_protocol, steane_decode, steane_encode,
    Branch, CliffordCircuit, CliffordGate, Corruption, FinalProtocol, SessionConfig, N,
};
use qmzk_core::lhi::clifford::{decompose_clifford_term, decomposition_residual};
use qmzk_core::lhi::plus::{lhi_plus_extraction_sweep, lhi_plus_toy_instance};
use qmzk_core::lhi::{build_lhi, honest_history_state, lhi_toy, perturbation_sweep, run_lhi};
use qmzk_core::qsim::{self, c, CMat, PureState, UnitaryGate};
use qmzk_core::seed::{child, stream};
use qmzk_core::zk::rewind::{
    rewind_simulator, test_inputs, toy_malicious_first, view_vs_sim_distance, CoinProver as RewindProver, RealView,
    RewindView, DEFAULT_MAX_ROUNDS,
};
use qmzk_core::zk::{add_ghz, extraction_sweep, to_two_turn, toy_three_turn, ExtractionReport};

const SEED: u64 = 20_240_611;

type Res = Result<(bool, String), Box<dyn Error>>;

struct Line {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn criterion(out: &mut Vec<Line>, name: &'static str, budget_s: f64, f: impl FnOnce() -> Res) {
    let start = Instant::now();
    let r = f();
    let secs = start.elapsed().as_secs_f64();
    let (pass, detail) = match r {
        Ok((ok, d)) => (ok && secs < budget_s, format!("{d}; {secs:.2} s of {budget_s} s")),
        Err(e) => (false, format!("error: {e}")),
    };
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    out.push(Line { name, pass, detail });
}

fn hermitian(m: CMat) -> CMat {
    (&m + m.adjoint()).scale(0.5)
}

/// ½‖A‖₁ through singular values, independent of the eigen route.
fn half_trace_norm(m: &CMat) -> f64 {
    0.5 * m.clone().svd(false, false).singular_values.sum()
}

fn gentle_measurement() -> Res {
    let mut rng = stream(child(SEED, 1), 0);
    let (mut violations, mut disagreement, mut worst) = (0, 0.0f64, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let nq = rng.gen_range(1..=3);
        let d = 1usize << nq;
        let rho = qsim::random_density(nq, rng.gen_range(1..=d), &mut rng)?;
        let u = qsim::haar_unitary(nq, &mut rng);
        let lam: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        let conj = |f: &dyn Fn(f64) -> f64| {
            let diag = CMat::from_diagonal(&DVector::from_iterator(d, lam.iter().map(|&l| c(f(l), 0.0))));
            hermitian(u.matrix() * diag * u.matrix().adjoint())
        };
        let m = conj(&|l| l);
        let root = conj(&|l| (1.0 - l).sqrt());
        let eps = (&m * rho.matrix()).trace().re;
        let post = &root * rho.matrix() * &root;
        let rho0 = post.scale(1.0 / post.trace().re);
        let oracle = half_trace_norm(&(rho.matrix() - &rho0));

        let lib = qsim::gentle_measurement_residual(&rho, &m)?;
        disagreement = disagreement.max((lib.distance - oracle).abs()).max((lib.epsilon - eps).abs());
        worst = worst.max(oracle - eps.sqrt());
        if oracle > eps.sqrt() + 1e-10 || lib.distance > lib.epsilon.sqrt() + 1e-10 {
            violations += 1;
        }
    }
    Ok((
        violations == 0 && disagreement <= 1e-9,
        format!("1000 pairs, {violations} violations, worst D − √ε = {worst:.3e}, routes differ by {disagreement:.1e}"),
    ))
}

fn ghz_completeness() -> Res {
    let p3 = toy_three_turn(1, 0.0)?;
    let base = p3.run_exact(&p3.honest)?.p_acc;
    let ghz = add_ghz(&to_two_turn(&p3)?)?;
    let p = ghz.run_exact(&ghz.honest)?.p_acc;
    Ok(((base - 1.0).abs() <= 1e-9 && (p - 1.0).abs() <= 1e-9, format!("base p_acc = {base:.12}, GHZ protocol p_acc = {p:.12}")))
}

/// Violations of `p_hv ≤ √ε₁ + ε₂ ≤ √ε₁ + √ε₂ ≤ 2√(2 p_rej)`, recomputed
/// from the raw quantities, and the largest gap to the library's slacks.
fn chain_violations(reports: &[ExtractionReport], tol: f64) -> (usize, f64, f64) {
    let (mut bad, mut gap, mut worst) = (0, 0.0f64, f64::NEG_INFINITY);
    for r in reports {
        let (s1, s2) = (r.eps1.sqrt(), r.eps2.sqrt());
        let gentle = r.p_rej_hv.map(|h| h - (s1 + r.eps2));
        let sqrt = (s1 + r.eps2) - (s1 + s2);
        let fin = (s1 + s2) - 2.0 * (2.0 * r.p_rej).sqrt();
        for v in [gentle.unwrap_or(f64::NEG_INFINITY), sqrt, fin] {
            worst = worst.max(v);
            if v > tol {
                bad += 1;
            }
        }
        gap = gap.max((sqrt + r.slack_sqrt).abs()).max((fin + r.slack_final).abs());
        if let (Some(g), Some(s)) = (gentle, r.slack_gentle) {
            gap = gap.max((g + s).abs());
        }
    }
    (bad, gap, worst)
}

fn soundness_chain() -> Res {
    let ghz = add_ghz(&to_two_turn(&toy_three_turn(1, 0.0)?)?)?;
    let reports = extraction_sweep(&ghz, child(SEED, 3), 200)?;
    let (bad, gap, worst) = chain_violations(&reports, 1e-9);
    let defined = reports.iter().filter(|r| r.p_rej_hv.is_some()).count();
    Ok((
        reports.len() == 200 && bad == 0 && gap <= 1e-12,
        format!("200 Haar adversaries ({defined} with a defined extraction), {bad} violations, worst link excess {worst:.3e}"),
    ))
}

fn lhi_zero_energy() -> Res {
    let p3 = lhi_toy(0.0)?;
    let base = p3.run_exact(&p3.honest)?.p_acc;
    let inst = build_lhi(&p3)?;
    let h = honest_history_state(&inst, &p3)?;
    let run = run_lhi(&inst, &h.state, &h.responses)?;
    let prm = inst.params;
    let worst = run.per_term.iter().copied().fold(0.0, f64::max);
    Ok((
        (base - 1.0).abs() <= 1e-12 && prm.steps <= 10 && run.per_term.len() == 2 * prm.steps + prm.n && worst <= 1e-9,
        format!("T = {}, {} queries, worst per-query rejection {worst:.3e}", prm.steps, run.per_term.len()),
    ))
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn extraction_trend() -> Res {
    let p3 = lhi_toy(0.0)?;
    let inst = build_lhi(&p3)?;
    let h = honest_history_state(&inst, &p3)?;
    let sweep = perturbation_sweep(&inst, &h, &[0.3, 0.1, 0.03, 0.01], child(SEED, 5))?;
    let mut pts = sweep.points.clone();
    pts.sort_by(|a, b| a.lhi_rej.total_cmp(&b.lhi_rej));
    let monotone = pts.windows(2).all(|w| w[0].extracted_rej <= w[1].extracted_rej);
    let smallest = sweep.points.iter().min_by(|a, b| a.delta.total_cmp(&b.delta)).ok_or("empty sweep")?;
    let logs = |f: fn(f64) -> f64| -> Vec<(f64, f64)> { pts.iter().map(|p| (p.lhi_rej.ln(), f(p.extracted_rej).ln())).collect() };
    let amp = least_squares_slope(&logs(f64::sqrt));
    let rej = least_squares_slope(&logs(|x| x));
    let agree = (amp - sweep.exponent_amplitude).abs() <= 1e-9;
    Ok((
        monotone && smallest.extracted_rej <= 1e-4 && (0.2..=0.6).contains(&amp) && agree,
        format!(
            "monotone = {monotone}, extracted rejection {:.3e} at δ = {}, exponent of √p_rej {amp:.3} (of p_rej {rej:.3})",
            smallest.extracted_rej, smallest.delta
        ),
    ))
}

/// `½ (I − X ⊗ U)` with the control as the low qubit, built entry by entry.
fn dense_middle(u: &CMat) -> CMat {
    let d = u.nrows();
    let mut m = CMat::identity(2 * d, 2 * d).scale(0.5);
    for r in 0..d {
        for s in 0..d {
            m[(2 * r + 1, 2 * s)] -= u[(r, s)] * 0.5;
            m[(2 * r, 2 * s + 1)] -= u[(s, r)].conj() * 0.5;
        }
    }
    m
}

fn decomposition_identity() -> Res {
    let mut worst = 0.0f64;
    let mut sizes = Vec::new();
    for g in [UnitaryGate::swap(), UnitaryGate::cnot()] {
        let d = decompose_clifford_term(&g)?;
        sizes.push(d.vectors.len());
        worst = worst.max(qsim::max_abs(&(d.projector_sum() - dense_middle(g.matrix())))).max(decomposition_residual(&g, &d));
    }
    Ok((sizes == [4, 4] && worst <= 1e-12, format!("SWAP and CNOT, 4 projectors each, max deviation {worst:.1e}")))
}

fn lhi_plus() -> Res {
    let mut worst_gap = f64::NEG_INFINITY;
    for eps in [0.0, 0.2] {
        let (_, _, plus) = lhi_plus_toy_instance(eps)?;
        worst_gap = worst_gap.max((1.0 - eps / 2.0) - plus.run_exact(&plus.honest)?.p_acc);
    }
    let (_, _, plus) = lhi_plus_toy_instance(0.0)?;
    let reports = lhi_plus_extraction_sweep(&plus, child(SEED, 7), 100)?;
    let (bad, gap, worst) = chain_violations(&reports, 1e-9);
    Ok((
        worst_gap <= 1e-9 && reports.len() == 100 && bad == 0 && gap <= 1e-12,
        format!("completeness shortfall {worst_gap:.1e} at ε ∈ {{0, 0.2}}; 100 adversaries, {bad} violations, worst link excess {worst:.3e}"),
    ))
}

fn steane_layer() -> Res {
    let words: Vec<u8> = (0..128u8).filter(|&w| is_codeword(w)).collect();
    let odd = words.iter().filter(|&&w| logical_value(w) == Some(true)).count();
    // Structure a distance-3 [7,4] code must have, independent of the parity matrix.
    let set: HashSet<u8> = words.iter().copied().collect();
    let linear = words.iter().all(|a| words.iter().all(|b| set.contains(&(a ^ b))));
    let min_weight = words.iter().filter(|&&w| w != 0).map(|w| w.count_ones()).min().unwrap_or(0);
    let odd_by_weight = words.iter().filter(|w| w.count_ones() % 2 == 1).count();

    // Encoded |0⟩ is the uniform superposition of the even codewords.
    let zero = steane_encode(&PureState::basis(1, 0)?)?;
    let amps = zero.amplitudes();
    let phase = amps.iter().find(|a| a.norm() > 1e-6).copied().ok_or("empty encoding")? / amps.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let want = 1.0 / 8f64.sqrt();
    let mut enc_dev = 0.0f64;
    for (i, a) in amps.iter().enumerate() {
        let target = if set.contains(&(i as u8)) && (i as u8).count_ones().is_multiple_of(2) { phase * want } else { c(0.0, 0.0) };
        enc_dev = enc_dev.max((a - target).norm());
    }

    let mut rng = stream(child(SEED, 8), 0);
    let mut roundtrip = 0.0f64;
    for _ in 0..100 {
        let x = PureState::random(1, &mut rng)?;
        roundtrip = roundtrip.max(1.0 - steane_decode(&steane_encode(&x)?)?.inner(&x).norm());
    }

    let cnot = CliffordCircuit::new(2, vec![CliffordGate::Cnot(0, 1)])?;
    let mut transversal = 0.0f64;
    for b in 0..4 {
        let logical = PureState::basis(2, b)?;
        let mut phys = encode_blocks(&logical)?;
        for o in 0..N {
            phys = cnot.transversal().apply(&phys, &[o, N + o])?;
        }
        // Logical CNOT with control qubit 0 flips qubit 1 when bit 0 is set.
        let want = encode_blocks(&PureState::basis(2, if b & 1 == 1 { b ^ 2 } else { b })?)?;
        let dev = phys.amplitudes().iter().zip(want.amplitudes()).map(|(p, w)| (p - w).norm()).fold(0.0, f64::max);
        transversal = transversal.max(dev);
    }
    Ok((
        words.len() == 16 && odd == 8 && odd_by_weight == 8 && linear && min_weight == 3 && enc_dev <= 1e-12 && roundtrip <= 1e-12 && transversal <= 1e-12,
        format!(
            "|D_7| = {}, odd = {odd}, min weight {min_weight}, encoding dev {enc_dev:.1e}, decode∘encode dev {roundtrip:.1e}, transversal CNOT dev {transversal:.1e}",
            words.len()
        ),
    ))
}

fn conjugation_identity() -> Res {
    let (_, _, plus) = lhi_plus_toy_instance(0.0)?;
    let fp = FinalProtocol::new(&plus)?;
    let mut circuits: Vec<CliffordCircuit> = vec![CliffordCircuit::new(2, vec![CliffordGate::Cnot(0, 1)])?];
    for d in &fp.decompositions {
        circuits.extend((0..QUERY_CHOICES).map(|v| d.clifford(v)));
    }
    let (mut worst, mut mismatched, mut checked) = (0.0f64, 0, 0);
    for k in 0..4 {
        let key = fp.random_key(child(SEED, 9 + k));
        for circ in &circuits {
            let phys = circ.transversal();
            let arity = phys.arity;
            let a: Vec<u16> = key.a[..arity].to_vec();
            let b: Vec<u16> = key.b[..arity].to_vec();
            let tableau = pauli_conjugate(&phys, &a, &b)?;
            let dense = pauli_conjugate_unitary(&phys.unitary(), &a, &b)?;
            if tableau != dense {
                mismatched += 1;
            }
            worst = worst.max(conjugation_residual(&phys.unitary(), &a, &b, &tableau));
            checked += 1;
        }
    }
    Ok((
        worst <= 1e-10 && mismatched == 0,
        format!("{checked} (circuit, pad) pairs, max deviation {worst:.1e}, tableau/dense disagreements {mismatched}"),
    ))
}

fn crypto_suite() -> Res {
    let params = CommitParams::for_alphabet(4, 10, child(SEED, 10))?;
    let scan = binding_scan(&params, 4)?;
    // Second route: sort every commitment and compare neighbours.
    let mut all = Vec::new();
    for a in 0..4u64 {
        for r in 0..1u64 << 10 {
            all.push((commit_symbol(&params, a, r)?.to_hex(), a, r));
        }
    }
    all.sort();
    let oracle_collisions = all.windows(2).filter(|w| w[0].0 == w[1].0 && w[0].1 != w[1].1).count();
    let cross_opens = all
        .iter()
        .step_by(97)
        .filter(|(_, a, r)| {
            let cm = commit_symbol(&params, *a, *r).expect("valid symbol");
            (0..4u64).filter(|b| b != a).any(|b| (0..1u64 << 10).any(|s| verify_open(&params, &cm, &to_bits(b, params.value_bits), s)))
        })
        .count();
    let binding_ok = scan.cross_value_collisions == 0 && scan.sigma_bijective && scan.commitments == 4096 && oracle_collisions == 0 && cross_opens == 0;

    let flip = blum_coin_flip(&CommitParams::new(1, 16, child(SEED, 11))?, child(SEED, 12), child(SEED, 13), 10_000, CoinProver::Honest, CoinVerifier::Honest);
    let ones = flip.bits.iter().filter(|&&b| b).count();
    let bias = (ones as f64 / flip.bits.len() as f64 - 0.5).abs();
    let coin_ok = !flip.aborted() && flip.bits.len() == 10_000 && bias <= 0.02;

    let k4 = Graph::complete(4);
    let cheat = coloring_cheat_enumeration(&k4, &params, 50)?;
    let mut best_edges = 0;
    for code in 0..81usize {
        let col: Vec<usize> = (0..4).map(|v| code / 3usize.pow(v) % 3).collect();
        best_edges = best_edges.max(k4.edges.iter().filter(|&&(u, v)| col[u] != col[v]).count());
    }
    let oracle_round = best_edges as f64 / 6.0;
    let bound = (5.0f64 / 6.0).powi(50);
    let sound_ok = cheat.best_total <= bound + 1e-9 && (cheat.best_per_round - oracle_round).abs() <= 1e-12 && best_edges == 5;
    Ok((
        binding_ok && coin_ok && sound_ok,
        format!(
            "binding: {} collisions over 4·2^10 commitments; coin bias {bias:.4} over 10^4 flips; K4 cheating {:.3e} vs (5/6)^50 = {bound:.3e}",
            scan.cross_value_collisions, cheat.best_total
        ),
    ))
}

fn rewinding() -> Res {
    let prover = RewindProver::toy();
    let regs = prover.registers(1, 0);
    let s_v = prover.honest_view_simulator();
    let mut rng = stream(child(SEED, 14), 0);
    let mut verifiers = vec![toy_malicious_first()];
    verifiers.extend((0..4).map(|_| qsim::haar_unitary(regs.v1_targets().len(), &mut rng)));
    let mut inputs = test_inputs();
    inputs.push(PureState::random(regs.i, &mut rng)?);

    let (mut rate, mut law, mut distance) = (0.0f64, 0.0f64, 0.0f64);
    for (j, v1) in verifiers.iter().enumerate() {
        for psi in &inputs {
            let r = rewind_simulator(regs, v1, &s_v, &psi.to_density(), DEFAULT_MAX_ROUNDS)?;
            rate = rate.max((r.d0_first - 0.5).abs());
            // Round one succeeds with 1/2; the reflected retry then succeeds with 4·½·½ = 1.
            for (k, &pr) in r.round_probs.iter().enumerate() {
                let want = if k < 2 { 0.5 } else { 0.0 };
                law = law.max((pr - want).abs());
            }
        }
        let real = RealView { regs, prover: &prover, v1 };
        let sim = RewindView { regs, s_v: &s_v, v1, max_rounds: DEFAULT_MAX_ROUNDS };
        let d = view_vs_sim_distance(&real, &sim, &inputs, child(SEED, 15 + j as u64))?;
        distance = distance.max(d.max_input_distance).max(d.choi_distance);
    }
    Ok((
        distance <= 1e-6 && rate <= 1e-9 && law <= 1e-9,
        format!(
            "S_V on {} qubits, view distance {distance:.1e}, |Pr[D=0] − 1/2| {rate:.1e}, round law deviation {law:.1e}",
            s_v.arity()
        ),
    ))
}

fn end_to_end() -> Res {
    let (_, _, plus) = lhi_plus_toy_instance(0.0)?;
    let fp = FinalProtocol::new(&plus)?;
    let cfg = SessionConfig { session_seed: child(SEED, 20), branch: Some(Branch::Ghz), corruption: None };
    let rec = run_final_protocol(&fp, &fp.random_key(child(SEED, 21)), &cfg)?;
    let ghz_p = rec.ghz_accept_probability.unwrap_or(0.0);
    let ghz_ok = rec.accepted && (ghz_p - 1.0).abs() <= 1e-9;

    let (mut completed, mut wrongly_rejected) = (0, 0);
    for i in 0..24u64 {
        let cfg = SessionConfig { session_seed: child(child(SEED, 22), i), branch: Some(Branch::History), corruption: None };
        let rec = run_final_protocol(&fp, &fp.random_key(child(child(SEED, 23), i)), &cfg)?;
        let subproof_done = rec.padded_query || rec.np_verified == Some(true);
        if subproof_done {
            completed += 1;
            if !rec.accepted {
                wrongly_rejected += 1;
            }
        }
    }

    let mut caught = BTreeMap::new();
    for (ci, corruption) in Corruption::ALL.into_iter().enumerate() {
        let base = child(child(SEED, 24), ci as u64);
        let mut applicable = 0;
        let mut missed = 0;
        for s in 0..60u64 {
            let cfg = SessionConfig { session_seed: child(base, s), branch: Some(Branch::History), corruption: Some(corruption) };
            let rec = run_final_protocol(&fp, &fp.random_key(child(base, 1000 + s)), &cfg)?;
            // A padded query skips the measurement stages, so only a wrong query applies there.
            if rec.padded_query && corruption != Corruption::WrongQuery {
                continue;
            }
            applicable += 1;
            if rec.accepted {
                missed += 1;
            }
            if applicable == 3 {
                break;
            }
        }
        caught.insert(format!("{corruption:?}"), (applicable, missed));
    }
    let corr_ok = caught.values().all(|&(a, m)| a > 0 && m == 0);
    let missed: usize = caught.values().map(|v| v.1).sum();
    Ok((
        ghz_ok && completed > 0 && wrongly_rejected == 0 && corr_ok,
        format!(
            "GHZ branch p_acc {ghz_p:.12}; {completed}/24 history sessions completed, {wrongly_rejected} rejected; {} corruption kinds, {missed} missed",
            caught.len()
        ),
    ))
}

fn main() -> ExitCode {
    let mut lines = Vec::new();
    criterion(&mut lines, "gentle measurement", 10.0, gentle_measurement);
    criterion(&mut lines, "GHZ transform completeness", 5.0, ghz_completeness);
    criterion(&mut lines, "soundness chain", 60.0, soundness_chain);
    criterion(&mut lines, "LHI zero-energy completeness", 30.0, lhi_zero_energy);
    criterion(&mut lines, "LHI extraction trend", 120.0, extraction_trend);
    criterion(&mut lines, "SWAP/CNOT decomposition identity", 1.0, decomposition_identity);
    criterion(&mut lines, "LHI+ completeness and extraction", 120.0, lhi_plus);
    criterion(&mut lines, "Steane layer", 5.0, steane_layer);
    criterion(&mut lines, "Pauli conjugation identity", 5.0, conjugation_identity);
    criterion(&mut lines, "classical crypto suite", 60.0, crypto_suite);
    criterion(&mut lines, "rewinding simulator", 30.0, rewinding);
    criterion(&mut lines, "end-to-end honest session", 300.0, end_to_end);
    let failed: Vec<&Line> = lines.iter().filter(|l| !l.pass).collect();
    println!("acceptance: {} of {} criteria passed", lines.len() - failed.len(), lines.len());
    for l in &failed {
        eprintln!("failed: {} ({})", l.name, l.detail);
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
