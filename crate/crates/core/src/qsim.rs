//! Dense statevector and density-operator simulation.
//!
//! Qubit `q` of an `n`-qubit system is bit `q` of the basis index. A gate
//! applied on `targets` reads bit `j` of its own matrix index from
//! `targets[j]`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const DEFAULT_QUBIT_CAP: usize = 22;
pub const STRUCT_TOL: f64 = 1e-12;
pub const SPECTRAL_TOL: f64 = 1e-10;
/// Branch probabilities below this are treated as impossible outcomes.
pub const NEGLIGIBLE_PROB: f64 = 1e-24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsimError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("duplicate target qubit {0}")]
    DuplicateTarget(usize),
    #[error("qubit {index} out of range for a {n}-qubit system")]
    OutOfRange { index: usize, n: usize },
    #[error("{0} qubits requested, cap is {1}")]
    TooManyQubits(usize, usize),
    #[error("a state needs at least one qubit")]
    NoQubits,
    #[error("state norm is {0}, expected 1")]
    NotNormalized(f64),
    #[error("matrix is not unitary (residual {0:e})")]
    NotUnitary(f64),
    #[error("matrix is not a Hermitian idempotent (residual {0:e})")]
    NotProjector(f64),
    #[error("operator norm {0} exceeds 1")]
    NotContraction(f64),
    #[error("operator is not between 0 and Id (eigenvalue {0})")]
    NotEffect(f64),
    #[error("matrix is not Hermitian (residual {0:e})")]
    NotHermitian(f64),
    #[error("matrix has negative eigenvalue {0}")]
    NotPositive(f64),
    #[error("trace {0} outside [0, 1]")]
    BadTrace(f64),
    #[error("conditioning on an outcome of probability zero")]
    ZeroProbability,
}

pub type Result<T> = std::result::Result<T, QsimError>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub(crate) fn check_qubits(n: usize) -> Result<()> {
    if n == 0 {
        return Err(QsimError::NoQubits);
    }
    if n > DEFAULT_QUBIT_CAP {
        return Err(QsimError::TooManyQubits(n, DEFAULT_QUBIT_CAP));
    }
    Ok(())
}

fn check_targets(n: usize, targets: &[usize]) -> Result<()> {
    for (i, &t) in targets.iter().enumerate() {
        if t >= n {
            return Err(QsimError::OutOfRange { index: t, n });
        }
        if targets[..i].contains(&t) {
            return Err(QsimError::DuplicateTarget(t));
        }
    }
    Ok(())
}

/// Basis-index offsets of every assignment to `targets`.
pub(crate) fn target_offsets(targets: &[usize]) -> Vec<usize> {
    let k = targets.len();
    (0..1usize << k)
        .map(|s| {
            targets
                .iter()
                .enumerate()
                .fold(0, |acc, (j, &t)| acc | (((s >> j) & 1) << t))
        })
        .collect()
}

pub(crate) fn target_mask(targets: &[usize]) -> usize {
    targets.iter().fold(0, |m, &t| m | (1 << t))
}

/// Multiplies `m` into `amps` on `targets`, identity elsewhere.
pub(crate) fn apply_in_place(amps: &mut [C64], m: &CMat, targets: &[usize]) {
    let offs = target_offsets(targets);
    let mask = target_mask(targets);
    let d = offs.len();
    let mut buf = vec![C64::new(0.0, 0.0); d];
    for base in 0..amps.len() {
        if base & mask != 0 {
            continue;
        }
        for (s, &o) in offs.iter().enumerate() {
            buf[s] = amps[base | o];
        }
        for (r, &o) in offs.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for s in 0..d {
                acc += m[(r, s)] * buf[s];
            }
            amps[base | o] = acc;
        }
    }
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Matrix of `low` on the lower-indexed qubits and `high` above them.
pub fn tensor_le(low: &CMat, high: &CMat) -> CMat {
    high.kronecker(low)
}

pub fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn unitarity_residual(m: &CMat) -> f64 {
    let d = m.nrows();
    max_abs(&(m.adjoint() * m - identity(d)))
}

fn hermitian_residual(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

fn to_faer(m: &CMat) -> faer::Mat<faer::complex_native::c64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |r, col| {
        let z = m[(r, col)];
        faer::complex_native::c64::new(z.re, z.im)
    })
}

/// Eigenvalues (ascending) and eigenvectors of the Hermitian part of `m`.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let h = to_faer(&(m + m.adjoint()).scale(0.5));
    let eig = h.selfadjoint_eigendecomposition(faer::Side::Lower);
    let (s, u) = (eig.s().column_vector(), eig.u());
    let vals = (0..s.nrows()).map(|i| s.read(i).re).collect();
    let vecs = CMat::from_fn(u.nrows(), u.ncols(), |r, col| {
        let z = u.read(r, col);
        c(z.re, z.im)
    });
    (vals, vecs)
}

pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let h = to_faer(&(m + m.adjoint()).scale(0.5));
    let mut v: Vec<f64> = h.selfadjoint_eigenvalues(faer::Side::Lower).into_iter().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn hermitian_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = hermitian_eigen(m);
    let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&x| c(f(x), 0.0)),
    ));
    &vecs * d * vecs.adjoint()
}

pub fn operator_norm(m: &CMat) -> f64 {
    let g = m.adjoint() * m;
    hermitian_eigenvalues(&g).last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryGate {
    arity: usize,
    matrix: CMat,
}

impl UnitaryGate {
    pub fn new(matrix: CMat) -> Result<Self> {
        let arity = arity_of(&matrix)?;
        let r = unitarity_residual(&matrix);
        if r > STRUCT_TOL {
            return Err(QsimError::NotUnitary(r));
        }
        Ok(Self { arity, matrix })
    }

    /// Skips the unitarity check for matrices unitary by construction.
    pub(crate) fn from_trusted(matrix: CMat) -> Self {
        let arity = matrix.nrows().trailing_zeros() as usize;
        Self { arity, matrix }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self::from_trusted(self.matrix.adjoint())
    }

    /// `self` on the lower-indexed targets, `high` on the rest.
    pub fn tensor(&self, high: &UnitaryGate) -> Self {
        Self::from_trusted(tensor_le(&self.matrix, &high.matrix))
    }

    pub fn then(&self, next: &UnitaryGate) -> Self {
        Self::from_trusted(&next.matrix * &self.matrix)
    }

    /// Controlled version with the control on target 0 and `self` shifted up.
    pub fn controlled(&self) -> Self {
        let d = self.matrix.nrows();
        let mut m = CMat::zeros(2 * d, 2 * d);
        for r in 0..d {
            for s in 0..d {
                m[(2 * r + 1, 2 * s + 1)] = self.matrix[(r, s)];
            }
            m[(2 * r, 2 * r)] = c(1.0, 0.0);
        }
        Self::from_trusted(m)
    }

    pub fn identity(arity: usize) -> Self {
        Self::from_trusted(identity(1 << arity))
    }

    pub fn h() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_trusted(CMat::from_row_slice(2, 2, &[c(s, 0.), c(s, 0.), c(s, 0.), c(-s, 0.)]))
    }

    pub fn x() -> Self {
        Self::from_trusted(pauli_x())
    }

    pub fn y() -> Self {
        Self::from_trusted(pauli_y())
    }

    pub fn z() -> Self {
        Self::from_trusted(pauli_z())
    }

    pub fn s() -> Self {
        Self::from_trusted(CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., 1.)]))
    }

    /// Rotation `exp(-iθY/2)`.
    pub fn ry(theta: f64) -> Self {
        let (co, si) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        Self::from_trusted(CMat::from_row_slice(2, 2, &[c(co, 0.), c(-si, 0.), c(si, 0.), c(co, 0.)]))
    }

    /// `|0⟩⟨0| ⊗ on0 + |1⟩⟨1| ⊗ on1` with the control on target 0.
    pub fn select(on0: &UnitaryGate, on1: &UnitaryGate) -> Self {
        let d = on0.matrix.nrows();
        let mut m = CMat::zeros(2 * d, 2 * d);
        for r in 0..d {
            for s in 0..d {
                m[(2 * r, 2 * s)] = on0.matrix[(r, s)];
                m[(2 * r + 1, 2 * s + 1)] = on1.matrix[(r, s)];
            }
        }
        Self::from_trusted(m)
    }

    /// Product of `(gate, positions)` factors on `arity` qubits, first factor first.
    pub fn compose(arity: usize, factors: &[(&UnitaryGate, Vec<usize>)]) -> Result<Self> {
        let mut m = identity(1 << arity);
        for (g, pos) in factors {
            m = embed(g.matrix(), pos, arity)? * m;
        }
        Ok(Self::from_trusted(m))
    }

    /// H on both qubits.
    pub fn hh() -> Self {
        Self::h().tensor(&Self::h())
    }

    /// Controlled phase gate with phase `i`, i.e. controlled-S.
    pub fn lambda_p() -> Self {
        let mut m = identity(4);
        m[(3, 3)] = c(0.0, 1.0);
        Self::from_trusted(m)
    }

    /// Control on target 0, NOT on target 1.
    pub fn cnot() -> Self {
        Self::x().controlled()
    }

    pub fn swap() -> Self {
        let mut m = CMat::zeros(4, 4);
        m[(0, 0)] = c(1., 0.);
        m[(1, 2)] = c(1., 0.);
        m[(2, 1)] = c(1., 0.);
        m[(3, 3)] = c(1., 0.);
        Self::from_trusted(m)
    }

    /// Controls on targets 0 and 1, NOT on target 2.
    pub fn toffoli() -> Self {
        Self::cnot().controlled()
    }
}

fn arity_of(m: &CMat) -> Result<usize> {
    let d = m.nrows();
    if d != m.ncols() || d < 2 || !d.is_power_of_two() {
        return Err(QsimError::Dimension { expected: d.next_power_of_two().max(2), got: m.ncols() });
    }
    Ok(d.trailing_zeros() as usize)
}

pub fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

pub fn pauli_y() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

pub fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

/// Hermitian idempotent acting on `arity` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    arity: usize,
    matrix: CMat,
}

impl Projector {
    pub fn new(matrix: CMat) -> Result<Self> {
        let arity = arity_of(&matrix)?;
        let r = max_abs(&(&matrix * &matrix - &matrix)).max(hermitian_residual(&matrix));
        if r > SPECTRAL_TOL {
            return Err(QsimError::NotProjector(r));
        }
        Ok(Self { arity, matrix })
    }

    /// Projector onto the span of the given vectors.
    pub fn onto_span(dim: usize, vectors: &[Vec<C64>]) -> Result<Self> {
        let mut basis: Vec<nalgebra::DVector<C64>> = Vec::new();
        for v in vectors {
            if v.len() != dim {
                return Err(QsimError::Dimension { expected: dim, got: v.len() });
            }
            let mut w = nalgebra::DVector::from_column_slice(v);
            for b in &basis {
                let ov = b.dotc(&w);
                w -= b * ov;
            }
            let nrm = w.norm();
            if nrm > 1e-9 {
                basis.push(w / c(nrm, 0.0));
            }
        }
        let mut m = CMat::zeros(dim, dim);
        for b in &basis {
            m += b * b.adjoint();
        }
        Self::new(m)
    }

    pub fn basis_state(arity: usize, index: usize) -> Self {
        let d = 1 << arity;
        let mut m = CMat::zeros(d, d);
        m[(index, index)] = c(1.0, 0.0);
        Self { arity, matrix: m }
    }

    /// Projector onto (|0..0⟩ + |1..1⟩)/√2.
    pub fn ghz(arity: usize) -> Self {
        let d = 1 << arity;
        let mut m = CMat::zeros(d, d);
        for &a in &[0, d - 1] {
            for &b in &[0, d - 1] {
                m[(a, b)] = c(0.5, 0.0);
            }
        }
        Self { arity, matrix: m }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn complement(&self) -> Self {
        Self { arity: self.arity, matrix: identity(1 << self.arity) - &self.matrix }
    }
}

/// A contraction `K`; measuring it rejects with probability `‖Kψ‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionOperator {
    arity: usize,
    matrix: CMat,
}

impl RejectionOperator {
    pub fn new(matrix: CMat) -> Result<Self> {
        let arity = arity_of(&matrix)?;
        let nrm = operator_norm(&matrix);
        if nrm > 1.0 + SPECTRAL_TOL {
            return Err(QsimError::NotContraction(nrm));
        }
        Ok(Self { arity, matrix })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    num_qubits: usize,
    amps: Vec<C64>,
}

impl PureState {
    pub fn new(num_qubits: usize, amps: Vec<C64>) -> Result<Self> {
        check_qubits(num_qubits)?;
        if amps.len() != 1 << num_qubits {
            return Err(QsimError::Dimension { expected: 1 << num_qubits, got: amps.len() });
        }
        let nrm: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if (nrm - 1.0).abs() > STRUCT_TOL {
            return Err(QsimError::NotNormalized(nrm));
        }
        Ok(Self { num_qubits, amps })
    }

    /// Normalizes `amps`; fails on the zero vector.
    pub fn normalized(num_qubits: usize, mut amps: Vec<C64>) -> Result<Self> {
        let nrm: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm < 1e-150 {
            return Err(QsimError::ZeroProbability);
        }
        for a in amps.iter_mut() {
            *a /= nrm;
        }
        Self::new(num_qubits, amps)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        check_qubits(num_qubits)?;
        let mut amps = vec![c(0.0, 0.0); 1 << num_qubits];
        if index >= amps.len() {
            return Err(QsimError::OutOfRange { index, n: amps.len() });
        }
        amps[index] = c(1.0, 0.0);
        Ok(Self { num_qubits, amps })
    }

    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::basis(num_qubits, 0)
    }

    pub fn plus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self { num_qubits: 1, amps: vec![c(s, 0.), c(s, 0.)] }
    }

    pub fn minus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self { num_qubits: 1, amps: vec![c(s, 0.), c(-s, 0.)] }
    }

    /// (|0..0⟩ + |1..1⟩)/√2 on `k` qubits.
    pub fn ghz(k: usize) -> Result<Self> {
        check_qubits(k)?;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = vec![c(0.0, 0.0); 1 << k];
        amps[0] = c(s, 0.0);
        amps[(1 << k) - 1] = c(s, 0.0);
        Ok(Self { num_qubits: k, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    /// `self` on the low qubits, `high` above.
    pub fn tensor(&self, high: &PureState) -> Result<Self> {
        let n = self.num_qubits + high.num_qubits;
        check_qubits(n)?;
        let mut amps = Vec::with_capacity(1 << n);
        for h in &high.amps {
            for l in &self.amps {
                amps.push(h * l);
            }
        }
        Ok(Self { num_qubits: n, amps })
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn apply(&self, gate: &UnitaryGate, targets: &[usize]) -> Result<Self> {
        apply_unitary(self, gate, targets)
    }

    /// `M ψ` for an arbitrary matrix, unnormalized.
    pub fn apply_matrix_raw(&self, m: &CMat, targets: &[usize]) -> Result<Vec<C64>> {
        check_targets(self.num_qubits, targets)?;
        if m.nrows() != 1 << targets.len() || m.ncols() != m.nrows() {
            return Err(QsimError::Dimension { expected: 1 << targets.len(), got: m.nrows() });
        }
        let mut out = self.amps.clone();
        apply_in_place(&mut out, m, targets);
        Ok(out)
    }

    pub fn to_density(&self) -> DensityOperator {
        let v = nalgebra::DVector::from_column_slice(&self.amps);
        DensityOperator { num_qubits: self.num_qubits, matrix: &v * v.adjoint() }
    }

    pub fn random(num_qubits: usize, rng: &mut impl Rng) -> Result<Self> {
        check_qubits(num_qubits)?;
        let amps = (0..1usize << num_qubits).map(|_| gaussian_c64(rng)).collect();
        Self::normalized(num_qubits, amps)
    }
}

pub fn gaussian_c64(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im)
}

pub fn apply_unitary(state: &PureState, gate: &UnitaryGate, targets: &[usize]) -> Result<PureState> {
    if targets.len() != gate.arity {
        return Err(QsimError::Dimension { expected: gate.arity, got: targets.len() });
    }
    let amps = state.apply_matrix_raw(&gate.matrix, targets)?;
    Ok(PureState { num_qubits: state.num_qubits, amps })
}

#[derive(Debug, Clone)]
pub struct ProjectiveOutcome {
    pub p_yes: f64,
    pub post_yes: Option<PureState>,
    pub p_no: f64,
    pub post_no: Option<PureState>,
}

pub fn projective_measure(state: &PureState, projector: &Projector, targets: &[usize]) -> Result<ProjectiveOutcome> {
    if targets.len() != projector.arity {
        return Err(QsimError::Dimension { expected: projector.arity, got: targets.len() });
    }
    let yes = state.apply_matrix_raw(&projector.matrix, targets)?;
    let no: Vec<C64> = state.amps.iter().zip(&yes).map(|(a, b)| a - b).collect();
    let p_yes: f64 = yes.iter().map(|z| z.norm_sqr()).sum();
    let p_no: f64 = no.iter().map(|z| z.norm_sqr()).sum();
    let n = state.num_qubits;
    let post = |p: f64, v: Vec<C64>| if p > NEGLIGIBLE_PROB { PureState::normalized(n, v).ok() } else { None };
    Ok(ProjectiveOutcome { p_yes, post_yes: post(p_yes, yes), p_no, post_no: post(p_no, no) })
}

#[derive(Debug, Clone)]
pub struct MeasureBranch {
    /// Bit `j` is the outcome on `targets[j]`.
    pub outcome: usize,
    pub probability: f64,
    pub post: PureState,
}

impl MeasureBranch {
    /// Outcome bits in target order.
    pub fn bitstring(&self, width: usize) -> String {
        (0..width).map(|j| if self.outcome >> j & 1 == 1 { '1' } else { '0' }).collect()
    }
}

/// Nonzero-probability branches of a computational-basis measurement.
pub fn computational_measure(state: &PureState, targets: &[usize]) -> Result<Vec<MeasureBranch>> {
    check_targets(state.num_qubits, targets)?;
    let k = targets.len();
    let mut probs = vec![0.0; 1 << k];
    let key = |i: usize| targets.iter().enumerate().fold(0, |acc, (j, &t)| acc | ((i >> t & 1) << j));
    for (i, a) in state.amps.iter().enumerate() {
        probs[key(i)] += a.norm_sqr();
    }
    let mut out = Vec::new();
    for (o, &p) in probs.iter().enumerate() {
        if p <= NEGLIGIBLE_PROB {
            continue;
        }
        let s = p.sqrt();
        let amps = state
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| if key(i) == o { a / s } else { c(0.0, 0.0) })
            .collect();
        out.push(MeasureBranch { outcome: o, probability: p, post: PureState::normalized(state.num_qubits, amps)? });
    }
    Ok(out)
}

pub fn rejection_probability(state: &PureState, k: &RejectionOperator, targets: &[usize]) -> Result<f64> {
    if targets.len() != k.arity {
        return Err(QsimError::Dimension { expected: k.arity, got: targets.len() });
    }
    let v = state.apply_matrix_raw(&k.matrix, targets)?;
    Ok(v.iter().map(|z| z.norm_sqr()).sum())
}

/// Possibly subnormalized density operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    num_qubits: usize,
    matrix: CMat,
}

impl DensityOperator {
    pub fn new(num_qubits: usize, matrix: CMat) -> Result<Self> {
        check_qubits(num_qubits)?;
        let d = 1 << num_qubits;
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(QsimError::Dimension { expected: d, got: matrix.nrows() });
        }
        let h = hermitian_residual(&matrix);
        if h > STRUCT_TOL {
            return Err(QsimError::NotHermitian(h));
        }
        let min = hermitian_eigenvalues(&matrix)[0];
        if min < -SPECTRAL_TOL {
            return Err(QsimError::NotPositive(min));
        }
        let tr = matrix.trace().re;
        if !(-STRUCT_TOL..=1.0 + STRUCT_TOL).contains(&tr) {
            return Err(QsimError::BadTrace(tr));
        }
        Ok(Self { num_qubits, matrix })
    }

    pub(crate) fn from_trusted(num_qubits: usize, matrix: CMat) -> Self {
        Self { num_qubits, matrix }
    }

    pub fn maximally_mixed(num_qubits: usize) -> Result<Self> {
        check_qubits(num_qubits)?;
        let d = 1 << num_qubits;
        Ok(Self { num_qubits, matrix: identity(d).scale(1.0 / d as f64) })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn is_subnormalized(&self) -> bool {
        self.trace() < 1.0 - STRUCT_TOL
    }

    pub fn scaled(&self, f: f64) -> Self {
        Self { num_qubits: self.num_qubits, matrix: self.matrix.scale(f) }
    }

    pub fn tensor(&self, high: &DensityOperator) -> Result<Self> {
        let n = self.num_qubits + high.num_qubits;
        check_qubits(n)?;
        Ok(Self { num_qubits: n, matrix: tensor_le(&self.matrix, &high.matrix) })
    }

    /// `K ρ K†` for `K` given on `targets`.
    pub fn conjugate(&self, k: &CMat, targets: &[usize]) -> Result<Self> {
        check_targets(self.num_qubits, targets)?;
        if k.nrows() != 1 << targets.len() {
            return Err(QsimError::Dimension { expected: 1 << targets.len(), got: k.nrows() });
        }
        let mut a = self.matrix.clone();
        let d = a.nrows();
        for col in a.as_mut_slice().chunks_mut(d) {
            apply_in_place(col, k, targets);
        }
        let mut b = a.adjoint();
        for col in b.as_mut_slice().chunks_mut(d) {
            apply_in_place(col, k, targets);
        }
        Ok(Self { num_qubits: self.num_qubits, matrix: b.adjoint() })
    }

    pub fn apply(&self, gate: &UnitaryGate, targets: &[usize]) -> Result<Self> {
        if targets.len() != gate.arity {
            return Err(QsimError::Dimension { expected: gate.arity, got: targets.len() });
        }
        self.conjugate(&gate.matrix, targets)
    }

    /// Computational-basis dephasing of qubit `q`.
    pub fn dephase(&self, q: usize) -> Result<Self> {
        let a = self.conjugate(Projector::basis_state(1, 0).matrix(), &[q])?;
        let b = self.conjugate(Projector::basis_state(1, 1).matrix(), &[q])?;
        Ok(Self { num_qubits: self.num_qubits, matrix: a.matrix + b.matrix })
    }

    pub fn add(&self, other: &DensityOperator) -> Result<Self> {
        if self.num_qubits != other.num_qubits {
            return Err(QsimError::Dimension { expected: self.num_qubits, got: other.num_qubits });
        }
        Ok(Self { num_qubits: self.num_qubits, matrix: &self.matrix + &other.matrix })
    }

    /// `Tr(Π ρ)` for a projector or effect given on `targets`.
    pub fn expectation(&self, m: &CMat, targets: &[usize]) -> Result<f64> {
        let full = embed(m, targets, self.num_qubits)?;
        Ok((full * &self.matrix).trace().re)
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        partial_trace(self, keep)
    }
}

/// Lifts `m` on `targets` to the full `n`-qubit space.
pub fn embed(m: &CMat, targets: &[usize], n: usize) -> Result<CMat> {
    check_targets(n, targets)?;
    let d = 1usize << n;
    if m.nrows() != 1 << targets.len() {
        return Err(QsimError::Dimension { expected: 1 << targets.len(), got: m.nrows() });
    }
    let mut out = identity(d);
    for col in out.as_mut_slice().chunks_mut(d) {
        apply_in_place(col, m, targets);
    }
    Ok(out)
}

pub fn trace_distance(a: &DensityOperator, b: &DensityOperator) -> Result<f64> {
    if a.num_qubits != b.num_qubits {
        return Err(QsimError::Dimension { expected: a.num_qubits, got: b.num_qubits });
    }
    Ok(trace_distance_mat(&a.matrix, &b.matrix))
}

pub fn trace_distance_mat(a: &CMat, b: &CMat) -> f64 {
    0.5 * hermitian_eigenvalues(&(a - b)).iter().map(|x| x.abs()).sum::<f64>()
}

/// Traces out every qubit not in `keep`; `keep[j]` becomes qubit `j`.
pub fn partial_trace(a: &DensityOperator, keep: &[usize]) -> Result<DensityOperator> {
    check_targets(a.num_qubits, keep)?;
    if keep.is_empty() {
        return Err(QsimError::NoQubits);
    }
    let rest: Vec<usize> = (0..a.num_qubits).filter(|q| !keep.contains(q)).collect();
    let ko = target_offsets(keep);
    let ro = target_offsets(&rest);
    let mut m = CMat::zeros(ko.len(), ko.len());
    for (i, &ki) in ko.iter().enumerate() {
        for (j, &kj) in ko.iter().enumerate() {
            m[(i, j)] = ro.iter().map(|&r| a.matrix[(ki | r, kj | r)]).sum();
        }
    }
    Ok(DensityOperator { num_qubits: keep.len(), matrix: m })
}

#[derive(Debug, Clone)]
pub struct GentleResidual {
    pub epsilon: f64,
    pub rho0: DensityOperator,
    pub distance: f64,
}

/// Disturbance caused by the outcome-0 branch of the POVM `{Id − M, M}`.
pub fn gentle_measurement_residual(rho: &DensityOperator, m: &CMat) -> Result<GentleResidual> {
    let d = rho.matrix.nrows();
    if m.nrows() != d || m.ncols() != d {
        return Err(QsimError::Dimension { expected: d, got: m.nrows() });
    }
    let h = hermitian_residual(m);
    if h > SPECTRAL_TOL {
        return Err(QsimError::NotHermitian(h));
    }
    let eig = hermitian_eigenvalues(m);
    if eig[0] < -SPECTRAL_TOL {
        return Err(QsimError::NotEffect(eig[0]));
    }
    if eig[d - 1] > 1.0 + SPECTRAL_TOL {
        return Err(QsimError::NotEffect(eig[d - 1]));
    }
    let epsilon = (m * &rho.matrix).trace().re;
    let root = hermitian_fn(&(identity(d) - m), |x| x.max(0.0).sqrt());
    let post = &root * &rho.matrix * &root;
    let p0 = post.trace().re;
    if p0 <= NEGLIGIBLE_PROB {
        return Err(QsimError::ZeroProbability);
    }
    let rho0 = DensityOperator { num_qubits: rho.num_qubits, matrix: post.scale(rho.trace() / p0) };
    let distance = trace_distance_mat(&rho.matrix, &rho0.matrix);
    Ok(GentleResidual { epsilon, rho0, distance })
}

/// Haar-distributed unitary on `arity` qubits.
pub fn haar_unitary(arity: usize, rng: &mut impl Rng) -> UnitaryGate {
    let d = 1 << arity;
    let g = CMat::from_fn(d, d, |_, _| gaussian_c64(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        d,
        (0..d).map(|i| {
            let z = r[(i, i)];
            if z.norm() > 0.0 { z / z.norm() } else { c(1.0, 0.0) }
        }),
    ));
    UnitaryGate::from_trusted(q * phases)
}

/// Random mixed state of the given rank, from a Haar-random purification.
pub fn random_density(num_qubits: usize, rank: usize, rng: &mut impl Rng) -> Result<DensityOperator> {
    check_qubits(num_qubits)?;
    let d = 1 << num_qubits;
    let g = CMat::from_fn(d, rank.max(1), |_, _| gaussian_c64(rng));
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    Ok(DensityOperator { num_qubits, matrix: m.scale(1.0 / tr) })
}

/// Random effect `0 ≤ M ≤ Id` with uniform spectrum in `[0, 1]`.
pub fn random_effect(num_qubits: usize, rng: &mut impl Rng) -> CMat {
    let d = 1 << num_qubits;
    let u = haar_unitary(num_qubits, rng);
    let diag = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        d,
        (0..d).map(|_| c(rng.gen::<f64>(), 0.0)),
    ));
    let m = u.matrix() * diag * u.matrix().adjoint();
    (&m + m.adjoint()).scale(0.5)
}

/// Product state on `n` qubits: each part sits on its listed qubits (its
/// qubit `j` on `targets[j]`), every other qubit is |0⟩.
pub fn product_on(n: usize, parts: &[(&PureState, &[usize])]) -> Result<PureState> {
    check_qubits(n)?;
    let mut all = Vec::new();
    let mut joint: Option<PureState> = None;
    for (st, ts) in parts {
        if st.num_qubits() != ts.len() {
            return Err(QsimError::Dimension { expected: ts.len(), got: st.num_qubits() });
        }
        all.extend_from_slice(ts);
        joint = Some(match joint {
            None => (*st).clone(),
            Some(j) => j.tensor(st)?,
        });
    }
    check_targets(n, &all)?;
    let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
    match joint {
        None => amps[0] = C64::new(1.0, 0.0),
        Some(j) => {
            for (o, a) in target_offsets(&all).into_iter().zip(j.amplitudes()) {
                amps[o] = *a;
            }
        }
    }
    PureState::new(n, amps)
}

/// `⟨bra|_targets ψ`: unnormalized vector on the remaining qubits, in
/// ascending order.
pub fn partial_inner(psi: &PureState, bra: &PureState, targets: &[usize]) -> Result<Vec<C64>> {
    let n = psi.num_qubits();
    check_targets(n, targets)?;
    if bra.num_qubits() != targets.len() {
        return Err(QsimError::Dimension { expected: targets.len(), got: bra.num_qubits() });
    }
    let rest: Vec<usize> = (0..n).filter(|q| !targets.contains(q)).collect();
    let offs = target_offsets(targets);
    let amps = psi.amplitudes();
    Ok(target_offsets(&rest)
        .into_iter()
        .map(|base| offs.iter().zip(bra.amplitudes()).map(|(&o, b)| b.conj() * amps[base | o]).sum())
        .collect())
}

/// Block-diagonal matrix, blocks in order along the diagonal.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let d: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut m = CMat::zeros(d, d);
    let mut at = 0;
    for b in blocks {
        m.view_mut((at, at), (b.nrows(), b.ncols())).copy_from(b);
        at += b.nrows();
    }
    m
}

/// `‖M ψ‖²` with `M` on `targets`, without materializing `M ψ`.
pub fn applied_norm_sqr(amps: &[C64], m: &CMat, targets: &[usize]) -> f64 {
    let offs = target_offsets(targets);
    let mask = target_mask(targets);
    let d = offs.len();
    let mut buf = vec![C64::new(0.0, 0.0); d];
    let mut total = 0.0;
    for base in 0..amps.len() {
        if base & mask != 0 {
            continue;
        }
        let mut any = false;
        for (s, &o) in offs.iter().enumerate() {
            buf[s] = amps[base | o];
            any |= buf[s] != C64::new(0.0, 0.0);
        }
        if !any {
            continue;
        }
        for r in 0..d {
            let mut acc = C64::new(0.0, 0.0);
            for s in 0..d {
                acc += m[(r, s)] * buf[s];
            }
            total += acc.norm_sqr();
        }
    }
    total
}
