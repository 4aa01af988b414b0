use std::collections::HashSet;

use proptest::prelude::*;

use super::*;

fn toy() -> CommitParams {
    CommitParams::for_alphabet(4, 10, 7).unwrap()
}

#[test]
fn commitment_is_deterministic() {
    let p = toy();
    assert_eq!(commit_symbol(&p, 2, 513).unwrap(), commit_symbol(&p, 2, 513).unwrap());
    assert_eq!(commit_symbol(&p, 2, 513).unwrap().width(), p.out_bits());
}

#[test]
fn width_errors() {
    let p = toy();
    assert_eq!(commit(&p, &[true], 0), Err(CryptoError::ValueWidth { expected: 2, got: 1 }));
    assert_eq!(commit(&p, &[true, false], 1 << 10), Err(CryptoError::Randomness(1 << 10)));
    assert_eq!(CommitParams::new(2, 7, 0), Err(CryptoError::RandWidth(7)));
    assert!(commit_symbol(&p, 4, 0).is_err());
}

#[test]
fn sigma_is_a_bijection_for_every_width() {
    for bits in 8..=16 {
        let p = CommitParams::new(1, bits, 99).unwrap();
        let images: HashSet<u64> = (0..=p.rand_mask()).map(|r| p.sigma(r)).collect();
        assert_eq!(images.len() as u64, p.rand_mask() + 1, "width {bits}");
    }
}

#[test]
fn exhaustive_binding_scan() {
    let p = toy();
    let scan = binding_scan(&p, 4).unwrap();
    assert_eq!(scan.commitments, 4 * 1024);
    assert_eq!(scan.distinct, 4 * 1024);
    assert_eq!(scan.cross_value_collisions, 0);
    assert!(scan.sigma_bijective);
}

#[test]
fn openings() {
    let p = toy();
    let c = commit_symbol(&p, 1, 77).unwrap();
    assert!(verify_open(&p, &c, &[true, false], 77));
    assert!(!verify_open(&p, &c, &[false, false], 77));
    let other_r = (0..=p.rand_mask()).filter(|&r| r != 77 && verify_open(&p, &c, &[true, false], r)).count();
    assert_eq!(other_r, 0);
    assert_eq!(brute_force_open(&p, &c), Some((vec![true, false], 77)));
}

#[test]
fn hiding_is_reported_not_perfect() {
    let rep = hiding_report(&toy(), 0, 3).unwrap();
    // σ(r) reveals r to an unbounded observer, so the supports are disjoint.
    assert!((rep.statistical_distance - 1.0).abs() < 1e-12);
    let invert = rep.advantages.iter().find(|(n, _)| n == "invert sigma and unmask").unwrap();
    assert!((invert.1 - 1.0).abs() < 1e-12);
    assert!(rep.advantages.iter().all(|(_, a)| (0.0..=1.0).contains(a)));
}

#[test]
fn commitment_serializes_as_hex() {
    let c = commit_symbol(&toy(), 3, 5).unwrap();
    let json = serde_json::to_string(&c).unwrap();
    assert!(json.contains("\"hex\""));
    assert_eq!(serde_json::from_str::<Commitment>(&json).unwrap(), c);
    assert!(serde_json::from_str::<Commitment>(r#"{"width":12,"hex":"ff"}"#).is_err());
}

fn coin_params() -> CommitParams {
    CommitParams::new(1, 16, 11).unwrap()
}

#[test]
fn honest_coin_is_unbiased() {
    let flip = blum_coin_flip(&coin_params(), 1, 2, 10_000, CoinProver::Honest, CoinVerifier::Honest);
    assert!(!flip.aborted());
    assert_eq!(flip.bits.len(), 10_000);
    let ones = flip.bits.iter().filter(|&&b| b).count() as f64;
    assert!((ones / 1e4 - 0.5).abs() <= 0.02);
    let (_, pval) = chi_square_uniform(&flip.bits);
    assert!(pval > 0.01, "p-value {pval}");
    assert!(flip.rounds.iter().all(|r| r.verified && r.commitment.len() == 17usize.div_ceil(8) * 2));
}

#[test]
fn equivocating_prover_aborts() {
    let flip = blum_coin_flip(&coin_params(), 1, 2, 20, CoinProver::OpenOther { round: 5 }, CoinVerifier::Honest);
    assert_eq!(flip.aborted_at, Some(5));
    assert_eq!(flip.bits.len(), 5);
    assert!(!flip.rounds[5].verified);
}

#[test]
fn fixed_verifier_leaves_output_equal_to_prover_bits() {
    let flip = blum_coin_flip(&coin_params(), 3, 4, 4000, CoinProver::Honest, CoinVerifier::Fixed(false));
    assert!(flip.rounds.iter().zip(&flip.bits).all(|(r, &b)| r.opened == b));
    let ones = flip.bits.iter().filter(|&&b| b).count() as f64;
    assert!((ones / 4000.0 - 0.5).abs() <= 0.03);
}

#[test]
fn three_coloring_completeness_and_shape() {
    let st = NpStatement::ThreeColoring(Graph::complete(3));
    let w = NpWitness::Coloring(vec![0, 1, 2]);
    let tr = zk_np_prove(&st, &w, 50, 9).unwrap();
    assert!(zk_np_verify(&st, &tr).unwrap());
    let NpProof::Coloring { rounds, .. } = &tr.proof else { panic!("coloring proof") };
    assert_eq!(rounds.len(), 50);
    for r in rounds {
        let (u, v) = Graph::complete(3).edges[r.challenge];
        assert_eq!([r.openings[0].vertex, r.openings[1].vertex], [u, v]);
        assert_ne!(r.openings[0].color, r.openings[1].color);
        assert!(r.verdict);
    }
}

#[test]
fn invalid_witness_is_refused() {
    let st = NpStatement::ThreeColoring(Graph::complete(3));
    assert_eq!(zk_np_prove(&st, &NpWitness::Coloring(vec![0, 0, 1]), 5, 1), Err(CryptoError::BadWitness));
    let k4 = NpStatement::ThreeColoring(Graph::complete(4));
    assert_eq!(zk_np_prove(&k4, &NpWitness::Coloring(vec![0, 1, 2, 0]), 5, 1), Err(CryptoError::BadWitness));
}

#[test]
fn corrupted_or_replayed_transcripts_fail() {
    let st = NpStatement::ThreeColoring(Graph::complete(3));
    let tr = zk_np_prove(&st, &NpWitness::Coloring(vec![2, 0, 1]), 20, 4).unwrap();
    let mut bad = tr.clone();
    if let NpProof::Coloring { rounds, .. } = &mut bad.proof {
        rounds[7].openings[1].randomness ^= 1;
    }
    assert!(!zk_np_verify(&st, &bad).unwrap());
    let mut recolored = tr.clone();
    if let NpProof::Coloring { rounds, .. } = &mut recolored.proof {
        let o = &mut rounds[3].openings[0];
        o.color = (o.color + 1) % 3;
    }
    assert!(!zk_np_verify(&st, &recolored).unwrap());
    let other = NpStatement::ThreeColoring(Graph { vertices: 3, edges: vec![(0, 1), (1, 2)] });
    assert!(!zk_np_verify(&other, &tr).unwrap());
}

#[test]
fn k4_cheaters_are_caught() {
    let rounds = 50;
    let en = coloring_cheat_enumeration(&Graph::complete(4), &toy(), rounds).unwrap();
    assert_eq!(en.strategies, 256);
    // Independent count: some edge of K4 is monochromatic under any map to
    // three colors, and a proper 3-coloring of K4 minus one edge exists.
    assert!((en.best_per_round - 5.0 / 6.0).abs() < 1e-12);
    assert!(en.best_total <= en.bound + 1e-9);
    assert_eq!(en.equivocations, 0);

    let g = Graph::complete(4);
    let runs: Vec<Vec<ColoringRound>> = (0..200).map(|s| coloring_rounds(&g, &toy(), &[0, 1, 2, 0], rounds, s)).collect();
    let accepted: Vec<&Vec<ColoringRound>> = runs.iter().filter(|rs| rs.iter().all(|r| r.verdict)).collect();
    // Expected 200 * (5/6)^50 ~ 0.02 acceptances; three or more has
    // probability below 2e-6.
    assert!(accepted.len() <= 2, "{} cheating runs accepted", accepted.len());
    // Edge (0, 3) is the monochromatic one: an accepted run never drew it.
    assert!(accepted.iter().all(|rs| rs.iter().all(|r| r.challenge != 2)));
    assert!(runs.iter().flatten().filter(|r| r.challenge == 2).all(|r| !r.verdict));
    let one_round = (0..6000).filter(|&s| coloring_rounds(&g, &toy(), &[0, 1, 2, 0], 1, s)[0].verdict).count();
    assert!((one_round as f64 / 6000.0 - 5.0 / 6.0).abs() < 0.02);
}

proptest! {
    #[test]
    fn open_roundtrip(value in proptest::collection::vec(any::<bool>(), 1..40), r in 0u64..(1 << 12), key in any::<u64>()) {
        let p = CommitParams::new(value.len(), 12, key).unwrap();
        let c = commit(&p, &value, r).unwrap();
        prop_assert!(verify_open(&p, &c, &value, r));
        let mut flipped = value.clone();
        flipped[0] = !flipped[0];
        prop_assert!(!verify_open(&p, &c, &flipped, r));
    }
}
