use std::sync::OnceLock;

use proptest::prelude::*;
use rand::Rng;

use super::key::{identity_perm, permute_amplitudes};
use super::measure::{reduced_density, sample_collapse};
use super::steane::{is_codeword, logical_value};
use super::*;
use crate::crypto::{commit, zk_np_prove, zk_np_verify, NpStatement};
use crate::lhi::plus::lhi_plus_toy_instance;
use crate::qsim::{self, c, CMat, PureState, UnitaryGate};
use crate::seed;

fn fp() -> &'static FinalProtocol {
    static FP: OnceLock<FinalProtocol> = OnceLock::new();
    FP.get_or_init(|| {
        let (_, _, plus) = lhi_plus_toy_instance(0.0).unwrap();
        FinalProtocol::new(&plus).unwrap()
    })
}

/// Hamming code as the span of four generator rows.
fn generated_code() -> Vec<u8> {
    let gens = [0b000_0111u8, 0b001_1001, 0b010_1010, 0b100_1011];
    let mut out: Vec<u8> = (0..16u8).map(|m| (0..4).filter(|i| m >> i & 1 == 1).fold(0, |acc, i| acc ^ gens[i])).collect();
    out.sort_unstable();
    out
}

#[test]
fn code_sizes_match_generator_span() {
    assert_eq!(codewords(), generated_code());
    assert_eq!(codewords().len(), 16);
    assert_eq!(coset(true).len(), 8);
    assert_eq!((0..128u8).filter(|&w| is_codeword(w)).count(), 16);
    assert!(coset(true).iter().all(|&w| logical_value(w) == Some(true)));
}

#[test]
fn encode_zero_is_uniform_over_even_coset() {
    let e = steane_encode(&PureState::zero(1).unwrap()).unwrap();
    let amp = 8f64.sqrt().recip();
    for (i, a) in e.amplitudes().iter().enumerate() {
        let want = if coset(false).contains(&(i as u8)) { amp } else { 0.0 };
        assert!((a - c(want, 0.0)).norm() < 1e-15);
    }
}

#[test]
fn decode_inverts_encode_on_plus() {
    let d = steane_decode(&steane_encode(&PureState::plus()).unwrap()).unwrap();
    assert!((d.inner(&PureState::plus()).norm() - 1.0).abs() < 1e-12);
    let off = PureState::basis(7, 1).unwrap();
    assert!(matches!(steane_decode(&off), Err(EncodeError::OffCode { .. })));
}

fn logical_gates() -> Vec<(CliffordCircuit, usize)> {
    use CliffordGate::*;
    vec![
        (CliffordCircuit::new(1, vec![H(0)]).unwrap(), 1),
        (CliffordCircuit::new(1, vec![S(0)]).unwrap(), 1),
        (CliffordCircuit::new(1, vec![Sdg(0)]).unwrap(), 1),
        (CliffordCircuit::new(1, vec![X(0)]).unwrap(), 1),
        (CliffordCircuit::new(1, vec![Z(0)]).unwrap(), 1),
        (CliffordCircuit::new(2, vec![Cnot(0, 1)]).unwrap(), 2),
        (CliffordCircuit::new(2, vec![Cnot(1, 0)]).unwrap(), 2),
    ]
}

/// Transversal physical circuit on encoded blocks vs the encoded logical
/// result, exactly including phase.
fn transversal_deviation(circ: &CliffordCircuit, logical: &PureState) -> f64 {
    let k = circ.arity;
    let mut phys = steane::encode_blocks(logical).unwrap();
    for o in 0..N {
        let slice: Vec<usize> = (0..k).map(|i| N * i + o).collect();
        phys = circ.transversal().apply(&phys, &slice).unwrap();
    }
    let want = steane::encode_blocks(&circ.apply(logical, &(0..k).collect::<Vec<_>>()).unwrap()).unwrap();
    phys.amplitudes().iter().zip(want.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

#[test]
fn transversal_gates_act_logically() {
    let mut rng = seed::stream(5, 0);
    for (circ, k) in logical_gates() {
        for b in 0..1usize << k {
            assert!(transversal_deviation(&circ, &PureState::basis(k, b).unwrap()) < 1e-12, "{circ:?} on {b}");
        }
        let r = PureState::random(k, &mut rng).unwrap();
        assert!(transversal_deviation(&circ, &r) < 1e-12, "{circ:?} on random");
    }
}

#[test]
fn trivial_key_appends_zero_traps() {
    let key = EncodingKey::trivial(1);
    let x = PureState::plus();
    let got = encode_register(&x, &key, 0).unwrap();
    let want = steane_encode(&x).unwrap().tensor(&PureState::zero(7).unwrap()).unwrap();
    assert!((got.inner(&want).norm() - 1.0).abs() < 1e-12);
}

#[test]
fn random_keys_roundtrip() {
    let mut rng = seed::stream(6, 0);
    for _ in 0..20 {
        let key = EncodingKey::random(3, 16, &mut rng);
        let x = PureState::random(1, &mut rng).unwrap();
        let i = rng.gen_range(0..3);
        let back = decode_register(&encode_register(&x, &key, i).unwrap(), &key, i).unwrap();
        assert!((back.inner(&x).norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn wrong_key_fails_trap_check() {
    let mut rng = seed::stream(7, 0);
    let key = EncodingKey::random(1, 16, &mut rng);
    let enc = encode_register(&PureState::zero(1).unwrap(), &key, 0).unwrap();
    let mut other = key.clone();
    other.a[0] ^= 1 << key.perm[7];
    other.b[0] ^= 1 << key.perm[7];
    assert!(decode_register(&enc, &other, 0).is_err());
    let mut bad = key.clone();
    bad.perm[0] = bad.perm[1];
    assert!(matches!(encode_register(&PureState::zero(1).unwrap(), &bad, 0), Err(EncodeError::Key(_))));
}

#[test]
fn exact_twirl_on_reduced_code_is_maximally_mixed() {
    // Two-qubit repetition code plus two traps, permuted.
    let x = PureState::random(1, &mut seed::stream(8, 0)).unwrap();
    let a = x.amplitudes();
    let rep = PureState::new(2, vec![a[0], c(0.0, 0.0), c(0.0, 0.0), a[1]]).unwrap();
    let full = rep.tensor(&Trap::Plus.state()).unwrap().tensor(&Trap::Circ.state()).unwrap();
    let perm = [2usize, 0, 3, 1];
    let mut amps = vec![c(0.0, 0.0); 16];
    for (i, &v) in full.amplitudes().iter().enumerate() {
        amps[(0..4).fold(0, |acc, o| acc | (i >> o & 1) << perm[o])] = v;
    }
    let rho = pad_twirl(&PureState::new(4, amps).unwrap()).unwrap();
    let target = qsim::identity(16) / c(16.0, 0.0);
    assert!(qsim::max_abs(&(rho - target)) < 1e-12);
}

#[test]
fn sampled_twirl_marginals_are_nearly_mixed() {
    let x = PureState::random(1, &mut seed::stream(9, 0)).unwrap();
    let mut rng = seed::stream(9, 1);
    let keys: Vec<EncodingKey> = (0..200).map(|_| EncodingKey::random(1, 16, &mut rng)).collect();
    let mut worst = 0.0f64;
    for q in 0..TWO_N {
        let mut rho = CMat::zeros(2, 2);
        for key in &keys {
            rho += reduced_density(&encode_register(&x, key, 0).unwrap(), &[q]) / c(200.0, 0.0);
        }
        worst = worst.max(qsim::trace_distance_mat(&rho, &(qsim::identity(2) / c(2.0, 0.0))));
    }
    assert!(worst <= 0.05, "worst one-qubit marginal distance {worst}");
}

#[test]
fn identity_measurement_of_zero() {
    let key = EncodingKey::trivial(1);
    let mut rng = seed::stream(10, 0);
    let id = CliffordCircuit::identity(1);
    for _ in 0..100 {
        let u = transversal_clifford_measure(&PureState::zero(1).unwrap(), &key, &[0], &id, &[], &mut rng).unwrap();
        assert_eq!(u.len(), 1);
        let (y, z) = (u[0] & 0x7f, u[0] >> 7);
        assert_eq!(logical_value(y as u8), Some(false));
        assert_eq!(z, 0);
    }
}

#[test]
fn transversal_cnot_measurement_decodes_logically() {
    let cnot = CliffordCircuit::new(2, vec![CliffordGate::Cnot(0, 1)]).unwrap();
    let mut rng = seed::stream(11, 0);
    for (trivial, input) in [(true, 0b01), (false, 0b01), (false, 0b11), (false, 0b00), (false, 0b10)] {
        let key = if trivial { EncodingKey::trivial(2) } else { EncodingKey::random(2, 16, &mut rng) };
        let want = [input & 1, (input & 1) ^ (input >> 1 & 1)];
        for _ in 0..20 {
            let u = transversal_clifford_measure(&PureState::basis(2, input).unwrap(), &key, &[0, 1], &cnot, &[], &mut rng).unwrap();
            assert_eq!(u.len(), 2);
            let u = unpad_outcome(&u, &cnot, &key.a, &key.b).unwrap();
            for i in 0..2 {
                let (y, _) = predicate::unpermute(u[i], &key.perm);
                assert_eq!(logical_value(y), Some(want[i] == 1));
            }
        }
    }
}

#[test]
fn measure_rejects_arity_mismatch() {
    let key = EncodingKey::trivial(2);
    let cnot = CliffordCircuit::new(2, vec![CliffordGate::Cnot(0, 1)]).unwrap();
    let r = transversal_clifford_measure(&PureState::zero(1).unwrap(), &key, &[0], &cnot, &[], &mut seed::stream(1, 0));
    assert!(matches!(r, Err(EncodeError::Width { .. })));
}

#[test]
fn hadamard_conjugation_example() {
    let h = CliffordCircuit::new(1, vec![CliffordGate::H(0)]).unwrap();
    let conj = pauli_conjugate(&h, &[1], &[0]).unwrap();
    assert_eq!((conj.alpha, conj.c[0], conj.d[0]), (0, 0, 1));
    let zero = pauli_conjugate(&h, &[0], &[0]).unwrap();
    assert_eq!((zero.alpha, zero.c[0], zero.d[0]), (0, 0, 0));
    // 2x2 oracle.
    let hm = UnitaryGate::h();
    let img = hm.matrix() * qsim::pauli_x() * hm.matrix().adjoint();
    assert!(qsim::max_abs(&(img - qsim::pauli_z())) < 1e-15);
}

#[test]
fn controlled_phase_is_refused_with_dense_evidence() {
    let lp = UnitaryGate::lambda_p();
    let r = pauli_conjugate_unitary(&lp, &[1, 0], &[0, 0]);
    assert!(matches!(r, Err(EncodeError::NonClifford(_))));
    // X on the control maps to X ⊗ S-type operator, which no Pauli matches.
    let x0 = Pauli::new(1, 0).matrix(2);
    let img = lp.matrix() * x0 * lp.matrix().adjoint();
    assert!(identify_pauli(&img, 2).is_none());
}

fn arb_circuit(k: usize) -> impl Strategy<Value = CliffordCircuit> {
    let gate = (0..6usize, 0..k, 0..k).prop_filter_map("distinct cnot qubits", move |(g, a, b)| {
        use CliffordGate::*;
        Some(match g {
            0 => H(a),
            1 => S(a),
            2 => Sdg(a),
            3 => X(a),
            4 => Z(a),
            _ if a != b => Cnot(a, b),
            _ => return None,
        })
    });
    proptest::collection::vec(gate, 0..12).prop_map(move |gates| CliffordCircuit::new(k, gates).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn tableau_matches_dense_conjugation(
        (circ, a, b) in (1usize..=3).prop_flat_map(|k| (
            arb_circuit(k),
            proptest::collection::vec(0u16..1 << 14, k),
            proptest::collection::vec(0u16..1 << 14, k),
        ))
    ) {
        let tab = pauli_conjugate(&circ, &a, &b).unwrap();
        let dense = pauli_conjugate_unitary(&circ.unitary(), &a, &b).unwrap();
        prop_assert_eq!(&tab, &dense);
        prop_assert!(conjugation_residual(&circ.unitary(), &a, &b, &tab) <= 1e-10);
    }

    #[test]
    fn decode_encode_identity(re in proptest::collection::vec(-1.0f64..1.0, 4)) {
        let x = PureState::normalized(1, vec![c(re[0], re[1]), c(re[2], re[3])]);
        prop_assume!(x.is_ok());
        let x = x.unwrap();
        let back = steane_decode(&steane_encode(&x).unwrap()).unwrap();
        let dev = back.amplitudes().iter().zip(x.amplitudes()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        prop_assert!(dev < 1e-12);
    }
}

#[test]
fn stabilizer_state_counts() {
    assert_eq!(stabilizer_states(1).unwrap().len(), 6);
    assert_eq!(stabilizer_states(2).unwrap().len(), 60);
    assert_eq!(stabilizer_states(3).unwrap().len(), 1080);
}

#[test]
fn controlled_phase_term_has_a_stabilizer_basis() {
    let mid = crate::lhi::middle_operator(UnitaryGate::lambda_p().matrix());
    let basis = stabilizer_basis(&mid).unwrap();
    assert_eq!(basis.len(), 4);
    let sum = basis.iter().fold(CMat::zeros(8, 8), |m, s| {
        let v = nalgebra::DVector::from_vec(s.amps.clone());
        m + &v * v.adjoint()
    });
    assert!(qsim::max_abs(&(sum - mid)) < 1e-12);
}

#[test]
fn every_toy_term_decomposes() {
    let fp = fp();
    assert_eq!(fp.decompositions.len(), fp.plus.base.terms.len());
    for (d, t) in fp.decompositions.iter().zip(&fp.plus.base.terms) {
        assert!(d.preps.len() <= 4 && !d.preps.is_empty());
        assert!(d.core_len <= 3);
        let dev = qsim::max_abs(&(d.projector_sum() - t.rejection_projector()));
        assert!(dev < 1e-12, "term {} deviates by {dev}", t.t);
    }
}

#[test]
fn conjugation_identity_for_every_session_clifford() {
    let fp = fp();
    let key = fp.random_key(12);
    for d in &fp.decompositions {
        let regs: Vec<usize> = d.registers.iter().map(|&q| fp.reg_of[q].unwrap()).collect();
        let a: Vec<u16> = regs.iter().map(|&r| key.a[r]).collect();
        let b: Vec<u16> = regs.iter().map(|&r| key.b[r]).collect();
        for v in 0..4 {
            let phys = d.clifford(v).transversal();
            let conj = pauli_conjugate(&phys, &a, &b).unwrap();
            assert!(conjugation_residual(&phys.unitary(), &a, &b, &conj) <= 1e-10);
        }
    }
}

#[test]
fn predicate_examples() {
    let key = EncodingKey::trivial(1);
    let id = CliffordCircuit::identity(1);
    let one = coset(true)[3] as u16;
    assert!(predicate_r(&key.traps, &[one], &identity_perm(), &id).unwrap());
    // Logical zero everywhere: rejected outcome.
    assert!(!predicate_r(&key.traps, &[coset(false)[2] as u16], &identity_perm(), &id).unwrap());
    // Non-codeword.
    assert!(!predicate_r(&key.traps, &[one ^ 1], &identity_perm(), &id).unwrap());
    // |0⟩ trap read as 1.
    assert!(!predicate_r(&key.traps, &[one | 1 << 9], &identity_perm(), &id).unwrap());
    assert!(matches!(predicate_r(&key.traps, &[one, one], &identity_perm(), &id), Err(EncodeError::Width { .. })));
}

/// Honest history-branch measurement of `query` with choice `v`.
fn honest_outcome(fp: &FinalProtocol, key: &EncodingKey, query: usize, v: usize, s: u64) -> Vec<u16> {
    let psi = fp.state_for_query(query).unwrap();
    measure_term(&psi, key, &fp.reg_of, &fp.decompositions[query], v, &[], &mut seed::stream(s, 0)).unwrap()
}

#[test]
fn honest_outcomes_pass_the_predicate() {
    let fp = fp();
    for q in 0..fp.decompositions.len() {
        let key = fp.random_key(100 + q as u64);
        let d = &fp.decompositions[q];
        let regs: Vec<usize> = d.registers.iter().map(|&x| fp.reg_of[x].unwrap()).collect();
        let psi = fp.state_for_query(q).unwrap();
        for v in 0..4 {
            for u in measure_term_shots(&psi, &key, &fp.reg_of, d, v, &[], 3, &mut seed::stream(q as u64, v as u64)).unwrap() {
                let circ = d.clifford(v);
                let a: Vec<u16> = regs.iter().map(|&r| key.a[r]).collect();
                let b: Vec<u16> = regs.iter().map(|&r| key.b[r]).collect();
                let traps: Vec<_> = regs.iter().map(|&r| key.traps[r]).collect();
                let shifted = unpad_outcome(&u, &circ, &a, &b).unwrap();
                assert!(predicate_r(&traps, &shifted, &key.perm, &circ).unwrap(), "query {q} choice {v}");
            }
        }
    }
}

#[test]
fn key_statement_oracles() {
    let fp = fp();
    let key = fp.random_key(13);
    let q = 0;
    let d = &fp.decompositions[q];
    let regs: Vec<usize> = d.registers.iter().map(|&x| fp.reg_of[x].unwrap()).collect();
    let u = honest_outcome(fp, &key, q, 1, 3);
    let z = commit(&fp.commit_params, &key.committed_value(), key.s).unwrap();
    let circ = d.clifford(1);
    let n = fp.encoded.len();
    let st = reduce_rtv_statement(&fp.commit_params, &z, n, &regs, &u, &circ, q + 1, 1).unwrap();
    let NpStatement::Rtv(inner) = &st else { panic!("key statement") };
    assert!(inner.check(&RtvWitness::from_key(&key, &regs)).unwrap());
    let found = inner.search().unwrap().expect("satisfiable");
    assert_eq!((found.s, found.perm, &found.a, &found.b), (key.s, key.perm, &key.a, &key.b));
    let tr = zk_np_prove(&st, &rtv_witness(&key, &regs), 1, 0).unwrap();
    assert!(zk_np_verify(&st, &tr).unwrap());

    let mut bad_u = u.clone();
    bad_u[0] ^= 1 << key.perm[2];
    let bad = reduce_rtv_statement(&fp.commit_params, &z, n, &regs, &bad_u, &circ, q + 1, 1).unwrap();
    let NpStatement::Rtv(bad) = bad else { panic!() };
    assert!(bad.search().unwrap().is_none());

    let mut other = key.clone();
    other.b[regs[0]] ^= 1 << 3;
    other.a[regs[0]] ^= 1 << key.perm[0];
    let z2 = commit(&fp.commit_params, &other.committed_value(), other.s).unwrap();
    let swapped = reduce_rtv_statement(&fp.commit_params, &z2, n, &regs, &u, &circ, q + 1, 1).unwrap();
    let NpStatement::Rtv(swapped) = swapped else { panic!() };
    assert!(swapped.search().unwrap().is_none());
    assert!(!swapped.check(&RtvWitness::from_key(&key, &regs)).unwrap());

    let big = crate::crypto::CommitParams::new(fp.commit_params.value_bits, 24, 1).unwrap();
    assert!(matches!(reduce_rtv_statement(&big, &z, n, &regs, &u, &circ, 1, 1), Err(EncodeError::Oversized(_))));
}

#[test]
fn ghz_branch_accepts_with_certainty() {
    let fp = fp();
    assert!((fp.ghz_probability - 1.0).abs() < 1e-9);
    let cfg = SessionConfig { session_seed: 1, branch: Some(Branch::Ghz), corruption: None };
    let rec = run_final_protocol(fp, &fp.random_key(1), &cfg).unwrap();
    assert!(rec.accepted);
}

#[test]
fn honest_history_sessions_accept() {
    let fp = fp();
    let mut unpadded = 0;
    for s in 0..24 {
        let cfg = SessionConfig { session_seed: 500 + s, branch: Some(Branch::History), corruption: None };
        let rec = run_final_protocol(fp, &fp.random_key(s), &cfg).unwrap();
        assert!(rec.accepted, "session {s}: {:?}", rec.abort);
        if !rec.padded_query {
            unpadded += 1;
            assert_eq!(rec.predicate, Some(true));
            assert_eq!(rec.np_verified, Some(true));
        }
    }
    assert!(unpadded > 10);
}

#[test]
fn every_corruption_is_caught() {
    let fp = fp();
    for c in Corruption::ALL {
        let mut checked = 0;
        for s in 0..40 {
            let cfg = SessionConfig { session_seed: 900 + s, branch: Some(Branch::History), corruption: Some(c) };
            let rec = run_final_protocol(fp, &fp.random_key(s), &cfg).unwrap();
            if rec.padded_query && c != Corruption::WrongQuery {
                continue;
            }
            assert!(!rec.accepted, "{c:?} slipped through in session {s}");
            let stage = rec.abort.as_ref().unwrap().stage;
            let want = match c {
                Corruption::WrongQuery => Stage::Query,
                Corruption::CoinOpening | Corruption::WrongChoice => Stage::CoinFlip,
                Corruption::FabricatedOutcome | Corruption::ShortOutcome => Stage::ProverCheck,
                Corruption::ReplacedCommitment | Corruption::ForgedProof => Stage::NpProof,
            };
            assert_eq!(stage, want, "{c:?}");
            checked += 1;
            if checked == 4 {
                break;
            }
        }
        assert_eq!(checked, 4, "{c:?}");
    }
}

#[test]
fn session_records_serialize() {
    let fp = fp();
    let cfg = SessionConfig { session_seed: 3, branch: Some(Branch::History), corruption: None };
    let rec = run_final_protocol(fp, &fp.random_key(3), &cfg).unwrap();
    let json = serde_json::to_string(&rec).unwrap();
    let back: SessionRecord = serde_json::from_str(&json).unwrap();
    assert_eq!(back, rec);
}

#[test]
fn decode_echo_never_undercounts() {
    let fp = fp();
    let key = fp.random_key(21);
    let mut rng = seed::stream(21, 1);
    for trial in 0..12 {
        let q = rng.gen_range(0..fp.decompositions.len());
        let slots = fp.decompositions[q].registers.len();
        let err = PhysicalError {
            slot: rng.gen_range(0..slots),
            position: rng.gen_range(0..TWO_N),
            pauli: [PauliKind::X, PauliKind::Y, PauliKind::Z][rng.gen_range(0..3)],
        };
        let rep = decode_soundness_echo(fp, &key, q, trial % 4, err, 40, trial as u64).unwrap();
        assert!(rep.encoded_rejection <= rep.decoded_rejection + 1e-12, "{rep:?}");
        if (key.inverse_perm()[err.position] as usize) < N {
            assert!((rep.decoded_rejection - 1.0).abs() < 1e-12, "code errors are discarded by the decoder");
        }
    }
}

#[test]
fn reduced_density_matches_dense_partial_trace() {
    let psi = PureState::random(4, &mut seed::stream(30, 0)).unwrap();
    let fast = reduced_density(&psi, &[2, 0]);
    let slow = qsim::partial_trace(&psi.to_density(), &[2, 0]).unwrap();
    assert!(qsim::max_abs(&(fast - slow.matrix())) < 1e-12);
    let (_, post) = sample_collapse(&psi, &[1], &mut seed::stream(30, 1)).unwrap();
    assert!((post.norm_sqr() - 1.0).abs() < 1e-12);
    let p = permute_amplitudes(&PureState::basis(14, 1).unwrap().into_amplitudes(), &std::array::from_fn(|o| ((o + 1) % 14) as u8));
    assert!((p[2] - c(1.0, 0.0)).norm() < 1e-15);
}


#[test]
fn batched_shots_match_single_shot_statistics() {
    // Outcome frequencies of a logical bit through two independent routes.
    let fp = fp();
    let key = fp.random_key(40);
    let q = (0..fp.decompositions.len()).min_by_key(|&q| fp.decompositions[q].core_len).unwrap();
    let d = &fp.decompositions[q];
    let psi = fp.state_for_query(q).unwrap();
    let regs: Vec<usize> = d.registers.iter().map(|&x| fp.reg_of[x].unwrap()).collect();
    let circ = d.clifford(0);
    let a: Vec<u16> = regs.iter().map(|&r| key.a[r]).collect();
    let b: Vec<u16> = regs.iter().map(|&r| key.b[r]).collect();
    let first = |u: &[u16]| {
        let u = unpad_outcome(u, &circ, &a, &b).unwrap();
        logical_value(predicate::unpermute(u[0], &key.perm).0) == Some(true)
    };
    let shots = 400;
    let batched = measure_term_shots(&psi, &key, &fp.reg_of, d, 0, &[], shots, &mut seed::stream(41, 0)).unwrap();
    let single: Vec<Vec<u16>> =
        (0..shots).map(|s| measure_term(&psi, &key, &fp.reg_of, d, 0, &[], &mut seed::stream(42, s as u64)).unwrap()).collect();
    let f = |xs: &[Vec<u16>]| xs.iter().filter(|u| first(u)).count() as f64 / shots as f64;
    // Two binomial estimates of one probability: 5 sigma at p = 1/2 is 0.18.
    assert!((f(&batched) - f(&single)).abs() < 0.18, "{} vs {}", f(&batched), f(&single));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn outcome_law_matches_dense_simulation(
        (circ, seed_, err) in (1usize..=2).prop_flat_map(|k| (
            arb_circuit(k),
            any::<u64>(),
            proptest::option::of((0..k, 0..TWO_N, 0..3usize)),
        ))
    ) {
        let k = circ.arity;
        let mut rng = seed::stream(seed_, 0);
        let key = EncodingKey::random(k + 1, 16, &mut rng);
        let regs: Vec<usize> = (1..=k).rev().collect();
        let psi = PureState::random(k, &mut rng).unwrap();
        let errors: Vec<PhysicalError> = err
            .map(|(slot, position, p)| PhysicalError { slot, position, pauli: [PauliKind::X, PauliKind::Y, PauliKind::Z][p] })
            .into_iter()
            .collect();
        let cumulative = measure::code_distribution(&psi, &key, &regs, &circ.transversal(), &errors).unwrap();
        let mut dense: Vec<f64> = cumulative.iter().scan(0.0, |prev, &c| { let p = c - *prev; *prev = c; Some(p) }).collect();
        for (y, p) in code_outcome_law(&psi, &key, &regs, &circ, &errors).unwrap() {
            dense[y] -= p;
        }
        let worst = dense.iter().map(|d| d.abs()).fold(0.0, f64::max);
        prop_assert!(worst < 1e-12, "law deviates by {}", worst);
    }
}
