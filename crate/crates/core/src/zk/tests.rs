use super::*;
use crate::protocol::run_exact_mixed;
use crate::qsim::{max_abs, C64};

const TOL: f64 = 1e-9;

#[test]
fn toy_completeness_matches_rotation() {
    for &eps in &[0.0, 0.1, 0.37] {
        let p3 = toy_three_turn(2, eps).unwrap();
        let r = p3.run_exact(&p3.honest).unwrap();
        assert!((r.p_acc - (1.0 - eps)).abs() < 1e-12, "eps {eps}: {}", r.p_acc);
    }
    assert!(toy_three_turn(0, 0.0).is_err());
}

#[test]
fn two_turn_honest_branches() {
    let two = to_two_turn(&toy_three_turn(1, 0.0).unwrap()).unwrap();
    let r = two.run_exact(&two.honest).unwrap();
    assert!((r.branches[0].p_acc - 1.0).abs() < TOL);
    assert!((r.branches[1].p_acc - 1.0).abs() < TOL);
    let eps = 0.2;
    let two = to_two_turn(&toy_three_turn(1, eps).unwrap()).unwrap();
    let r = two.run_exact(&two.honest).unwrap();
    assert!((r.branches[0].p_acc - (1.0 - eps)).abs() < TOL);
    assert!((r.branches[1].p_acc - 1.0).abs() < TOL);
}

#[test]
fn backward_rejects_orthogonal_v() {
    let two = to_two_turn(&toy_three_turn(1, 0.0).unwrap()).unwrap();
    let mut bad = two.honest.clone();
    bad.initial = bad.initial.apply(&UnitaryGate::x(), &[0]).unwrap();
    let r = two.run_exact(&bad).unwrap();
    assert!(r.branches[1].p_acc.abs() < TOL);
}

#[test]
fn ghz_honest_completeness() {
    for &(p, eps) in &[(1, 0.0), (1, 0.3), (2, 0.1)] {
        let ghz = add_ghz(&to_two_turn(&toy_three_turn(p, eps).unwrap()).unwrap()).unwrap();
        let r = ghz.run_exact(&ghz.honest).unwrap();
        assert!((r.branches[0].p_acc - 1.0).abs() < TOL);
        assert!(r.p_acc >= 1.0 - eps / 2.0 - TOL);
        // Forward test fails with eps on half of the history branch.
        assert!((r.p_acc - (1.0 - eps / 4.0)).abs() < TOL);
    }
}

#[test]
fn ghz_test_on_all_zero_g() {
    let p = 2;
    let ghz = add_ghz(&to_two_turn(&toy_three_turn(p, 0.0).unwrap()).unwrap()).unwrap();
    let two = to_two_turn(&ghz.base).unwrap();
    let mut st = ghz.honest.clone();
    st.initial = two.honest.initial.tensor(&PureState::zero(p + 1).unwrap()).unwrap();
    // Oracle: |<GHZ|0^{p+1}>|^2 from the explicit vectors.
    let overlap = PureState::ghz(p + 1).unwrap().inner(&PureState::zero(p + 1).unwrap()).norm_sqr();
    assert!((overlap - 0.5).abs() < 1e-15);
    let r = ghz.run_exact(&st).unwrap();
    assert!((r.branches[0].p_acc - overlap).abs() < TOL);
}

#[test]
fn add_ghz_rejects_public_coin_input() {
    let pc = to_public_coin_form(&toy_three_turn(1, 0.0).unwrap()).unwrap();
    assert!(add_ghz(&pc).is_err());
    let two = to_two_turn(&toy_three_turn(1, 0.0).unwrap()).unwrap();
    assert!(ghz_public_coin(&two).is_err());
}

#[test]
fn extraction_from_honest_strategy() {
    let eps = 0.2;
    let ghz = add_ghz(&to_two_turn(&toy_three_turn(1, eps).unwrap()).unwrap()).unwrap();
    let two = to_two_turn(&ghz.base).unwrap();
    let (ex, r) = extract_from_ghz(&ghz, &GhzAdversary::honest(&ghz).unwrap()).unwrap();
    let ex = ex.unwrap();
    assert!(r.eps1.abs() < TOL);
    let two_rej = 1.0 - two.run_exact(&two.honest).unwrap().p_acc;
    assert!((r.p_rej_hv.unwrap() - two_rej).abs() < TOL);
    let want = two.honest.initial.to_density();
    assert!(max_abs(&(ex.rho_prime.matrix() - want.matrix())) < TOL);
    assert!(r.holds(TOL));
}

#[test]
fn extraction_chain_on_haar_adversaries() {
    let ghz = add_ghz(&to_two_turn(&toy_three_turn(2, 0.0).unwrap()).unwrap()).unwrap();
    for r in extraction_sweep(&ghz, 11, 20).unwrap() {
        assert!(r.holds(TOL), "{r:?}");
        let hv = r.p_rej_hv.unwrap();
        assert!((hv - r.p_rej_hv_conditioned.unwrap()).abs() < 1e-10);
    }
}

#[test]
fn extraction_rejection_matches_engine() {
    let ghz = add_ghz(&to_two_turn(&toy_three_turn(1, 0.0).unwrap()).unwrap()).unwrap();
    for s in 0..10 {
        let adv = GhzAdversary::haar(&ghz, s).unwrap();
        let (_, r) = extract_from_ghz(&ghz, &adv).unwrap();
        let engine = ghz.run_exact(&adv.as_strategy(&ghz).unwrap()).unwrap();
        assert!((1.0 - engine.p_acc - r.p_rej).abs() < 1e-12);
        assert!((1.0 - engine.branches[0].p_acc - r.eps1).abs() < 1e-12);
    }
}

#[test]
fn equal_test_unitaries_give_direct_history_rejection() {
    let ghz = add_ghz(&to_two_turn(&toy_three_turn(1, 0.0).unwrap()).unwrap()).unwrap();
    let mut adv = GhzAdversary::haar(&ghz, 4).unwrap();
    adv.u_g = adv.u_h.clone();
    let (ex, r) = extract_from_ghz(&ghz, &adv).unwrap();
    for u in ex.unwrap().responses {
        assert!(max_abs(&(u.matrix() - qsim::identity(u.matrix().nrows()))) < 1e-12);
    }
    let engine = ghz.run_exact(&adv.as_strategy(&ghz).unwrap()).unwrap();
    assert!((r.eps2 - (1.0 - engine.branches[1].p_acc)).abs() < TOL);
}

#[test]
fn extraction_undefined_when_ghz_always_fails() {
    let ghz = add_ghz(&to_two_turn(&toy_three_turn(1, 0.0).unwrap()).unwrap()).unwrap();
    let two = to_two_turn(&ghz.base).unwrap();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let anti = PureState::new(2, vec![C64::new(s, 0.), C64::new(0., 0.), C64::new(0., 0.), C64::new(-s, 0.)]).unwrap();
    let mut adv = GhzAdversary::honest(&ghz).unwrap();
    adv.rho = two.honest.initial.tensor(&anti).unwrap().to_density();
    let (ex, r) = extract_from_ghz(&ghz, &adv).unwrap();
    assert!(ex.is_none() && r.p_rej_hv.is_none());
    assert!((r.eps1 - 1.0).abs() < TOL);
    assert!(r.holds(TOL));
}

#[test]
fn public_coin_form() {
    let pc = to_public_coin_form(&toy_three_turn(1, 0.0).unwrap()).unwrap();
    let r = pc.run_exact(&pc.honest).unwrap();
    assert!((r.p_acc - 1.0).abs() < TOL);
    assert!(r.branches.iter().all(|b| b.weight == 0.5));

    // V maximally mixed and independent of the rest.
    let nv = 2;
    let rest = pc.honest.initial.to_density().partial_trace(&(nv..pc.layout.num_qubits()).collect::<Vec<_>>()).unwrap();
    let rho = DensityOperator::maximally_mixed(nv).unwrap().tensor(&rest).unwrap();
    let r = run_exact_mixed(&pc.layout, &pc.program, &rho, &pc.honest.turns).unwrap();
    assert!((r.branches[1].p_acc - 0.25).abs() < TOL);
}

#[test]
fn ghz_public_coin_completeness_and_sweep() {
    let eps = 0.1;
    let pc = to_public_coin_form(&toy_three_turn(2, eps).unwrap()).unwrap();
    let g = ghz_public_coin(&pc).unwrap();
    assert_eq!(g.layout.get(RegKind::G(0)).unwrap().holder, Holder::Verifier);
    let r = g.run_exact(&g.honest).unwrap();
    assert!((r.branches[0].p_acc - 1.0).abs() < TOL);
    assert!(r.p_acc >= 1.0 - eps / 2.0 - TOL);
    for r in extraction_sweep(&g, 5, 10).unwrap() {
        assert!(r.holds(TOL), "{r:?}");
    }
}

#[test]
fn mixed_bits_reduce_to_same_bit() {
    let ghz = add_ghz(&to_two_turn(&toy_three_turn(2, 0.0).unwrap()).unwrap()).unwrap();
    for zero_to in [vec![1], vec![2], vec![1, 2]] {
        let gap = same_bit_reduction_gap(&ghz, &zero_to).unwrap();
        assert!(gap < 1e-12, "{zero_to:?}: {gap}");
    }
}
