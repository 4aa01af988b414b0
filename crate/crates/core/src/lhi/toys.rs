use crate::protocol::{Acceptance, ProverMove, ProverStrategy, ProverTurn, RegKind, RegisterLayout, VGate};
use crate::qsim::{PureState, UnitaryGate};
use crate::zk::{ThreeTurnProtocol, ZkError};

use super::{LhiError, Result};

/// `cos θ · A + sin θ · B` for anticommuting Hermitian involutions.
fn rotated(a: &UnitaryGate, b: &UnitaryGate, theta: f64) -> Result<UnitaryGate> {
    let m = a.matrix().scale(theta.cos()) + b.matrix().scale(theta.sin());
    Ok(UnitaryGate::new(m)?)
}

fn one_prover_layout(n: usize) -> Result<(RegisterLayout, usize, usize)> {
    let layout = RegisterLayout::builder().reg(RegKind::V, n).reg(RegKind::M(1), 1).reg(RegKind::P(1), 1).build(0)?;
    let m = layout.get(RegKind::M(1))?.offset;
    let p = layout.get(RegKind::P(1))?.offset;
    Ok((layout, m, p))
}

fn finish(layout: RegisterLayout, v1: Vec<VGate>, v2: Vec<VGate>, accept: Acceptance, initial: usize, b: UnitaryGate, own: Vec<usize>) -> Result<ThreeTurnProtocol> {
    let n = layout.num_qubits();
    let honest = ProverStrategy {
        initial: PureState::basis(n, initial)?,
        turns: vec![ProverTurn::idle(), ProverTurn::same(vec![ProverMove { prover: 1, gate: b, targets: own }])],
    };
    let p3 = ThreeTurnProtocol { layout, provers: 1, v1, v2, accept, honest };
    p3.check()?;
    Ok(p3)
}

/// One prover, V = (output, spare), T = 8. The prover returns M after a
/// reflection that leaves the output wrong with probability `eps ≤ 1/2`.
pub fn lhi_toy(eps: f64) -> Result<ThreeTurnProtocol> {
    if !(0.0..=0.5).contains(&eps) {
        return Err(ZkError::Malformed(format!("toy needs eps in [0, 1/2], got {eps}")).into());
    }
    let (layout, m, p) = one_prover_layout(2)?;
    let (v0, v1) = (0, 1);
    let first = vec![VGate::hh(v0, v1), VGate::lambda_p(m, v0)];
    let second = vec![VGate::lambda_p(m, v0), VGate::hh(v0, v1), VGate::hh(m, v1)];
    let theta = (2.0 * eps).sqrt().asin();
    let b = rotated(&UnitaryGate::z(), &UnitaryGate::x(), theta)?.tensor(&UnitaryGate::identity(1));
    let accept = Acceptance::QubitIs { qubit: layout.output(), value: true };
    finish(layout, first, second, accept, 1 << m, b, vec![m, p])
}

/// Smaller one-prover toy with T = 5 and n = 1, so that its GHZ-augmented
/// version fits the simulator. Accepts iff the returned M is 0.
pub fn lhi_plus_toy(eps: f64) -> Result<ThreeTurnProtocol> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(LhiError::Malformed(format!("toy needs eps in [0, 1], got {eps}")));
    }
    let (layout, m, p) = one_prover_layout(1)?;
    let v0 = 0;
    let theta = eps.sqrt().asin();
    let b = rotated(&UnitaryGate::x(), &UnitaryGate::z(), theta)?.tensor(&UnitaryGate::identity(1));
    let accept = Acceptance::QubitIs { qubit: m, value: false };
    finish(layout, vec![VGate::hh(v0, m)], vec![VGate::hh(v0, m)], accept, 0, b, vec![m, p])
}
