//! Splitting the SWAP and CNOT step terms into rank-one projectors onto
//! stabilizer states.

use serde::{Deserialize, Serialize};

use super::{middle_operator, LhiError, Result};
use crate::qsim::{self, CMat, PureState, UnitaryGate};

/// One-qubit input states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Local {
    Zero,
    One,
    Plus,
    Minus,
}

impl Local {
    pub fn state(self) -> PureState {
        match self {
            Local::Zero => PureState::basis(1, 0).expect("one qubit"),
            Local::One => PureState::basis(1, 1).expect("one qubit"),
            Local::Plus => PureState::plus(),
            Local::Minus => PureState::minus(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CliffordOp {
    Cnot,
    X,
}

/// Input `[C_t, q1, q2]` followed by a Clifford circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliffordVector {
    pub input: [Local; 3],
    pub circuit: Vec<(CliffordOp, Vec<usize>)>,
}

impl CliffordVector {
    fn product(input: [Local; 3]) -> Self {
        Self { input, circuit: Vec::new() }
    }

    pub fn state(&self) -> PureState {
        let [a, b, c] = self.input;
        let mut s = a.state().tensor(&b.state()).and_then(|s| s.tensor(&c.state())).expect("three qubits");
        for (op, ts) in &self.circuit {
            let g = match op {
                CliffordOp::Cnot => UnitaryGate::cnot(),
                CliffordOp::X => UnitaryGate::x(),
            };
            s = s.apply(&g, ts).expect("targets inside three qubits");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliffordDecomposition {
    pub gate: String,
    pub vectors: Vec<CliffordVector>,
}

impl CliffordDecomposition {
    /// `Σ_v |v⟩⟨v|`.
    pub fn projector_sum(&self) -> CMat {
        let mut m = CMat::zeros(8, 8);
        for v in &self.vectors {
            let s = v.state();
            let col = nalgebra::DVector::from_column_slice(s.amplitudes());
            m += &col * col.adjoint();
        }
        m
    }
}

/// Four stabilizer vectors whose projectors sum to the step term's middle
/// operator for `gate`, which must be SWAP or CNOT.
pub fn decompose_clifford_term(gate: &UnitaryGate) -> Result<CliffordDecomposition> {
    use Local::*;
    let same = |g: UnitaryGate| gate.arity() == 2 && qsim::max_abs(&(gate.matrix() - g.matrix())) <= 1e-12;
    let bell = |c: Local| CliffordVector {
        input: [c, Minus, Zero],
        circuit: vec![(CliffordOp::Cnot, vec![1, 2]), (CliffordOp::X, vec![2])],
    };
    if same(UnitaryGate::swap()) {
        Ok(CliffordDecomposition {
            gate: "SWAP".into(),
            vectors: vec![
                bell(Plus),
                CliffordVector::product([Minus, Zero, Zero]),
                CliffordVector::product([Minus, One, One]),
                CliffordVector { input: [Minus, Plus, Zero], ..bell(Minus) },
            ],
        })
    } else if same(UnitaryGate::cnot()) {
        Ok(CliffordDecomposition {
            gate: "CNOT".into(),
            vectors: vec![
                CliffordVector::product([Plus, One, Minus]),
                CliffordVector::product([Minus, One, Plus]),
                CliffordVector::product([Minus, Zero, Plus]),
                CliffordVector::product([Minus, Zero, Minus]),
            ],
        })
    } else {
        Err(LhiError::Malformed("only SWAP and CNOT terms have a Clifford decomposition".into()))
    }
}

/// Largest entry of `Σ_v |v⟩⟨v| − middle_operator(gate)`.
pub fn decomposition_residual(gate: &UnitaryGate, d: &CliffordDecomposition) -> f64 {
    qsim::max_abs(&(d.projector_sum() - middle_operator(gate.matrix())))
}
