//! One session of the encoded protocol: GHZ test or encoded Hamiltonian
//! check with a committed key, a flipped coin, a transversal measurement,
//! the prover's consistency check, and the NP proof.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::{
    blum_coin_flip, commit, zk_np_prove, zk_np_verify, CoinFlip, CoinProver, CoinVerifier, CommitParams, Commitment,
    CryptoError, NpStatement, NpTranscript,
};
use crate::lhi::plus::LhiPlus;
use crate::protocol::RegKind;
use crate::qsim::{self, PureState};
use crate::seed;

use super::clifford::{decompose_term, TermDecomposition, QUERY_CHOICES};
use super::key::{decode_weight, encode_register, EncodingKey};
use super::measure::{measure_term, measure_term_shots, sample_collapse, PhysicalError};
use super::predicate::{predicate_r, reduce_rtv_statement, rtv_witness, unpad_outcome, RtvStatement};
use super::{EncodeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Ghz,
    History,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    GhzTest,
    Commit,
    Query,
    CoinFlip,
    Measurement,
    ProverCheck,
    NpProof,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::GhzTest => "ghz-test",
            Stage::Commit => "commit",
            Stage::Query => "query",
            Stage::CoinFlip => "coin-flip",
            Stage::Measurement => "measurement",
            Stage::ProverCheck => "prover-check",
            Stage::NpProof => "np-proof",
        };
        f.write_str(s)
    }
}

/// Deviations injected into an otherwise honest session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Corruption {
    /// The verifier announces a query other than the one it measured.
    WrongQuery,
    /// Prover 1 opens the other bit in the first coin round.
    CoinOpening,
    /// The verifier announces a choice other than the flipped one.
    WrongChoice,
    /// The verifier flips one code bit of the first reported block.
    FabricatedOutcome,
    /// The verifier drops the last reported block.
    ShortOutcome,
    /// The commitment the verifier holds differs from the one sent.
    ReplacedCommitment,
    /// Prover 1 proves a statement about a different outcome.
    ForgedProof,
}

impl Corruption {
    pub const ALL: [Corruption; 7] = [
        Corruption::WrongQuery,
        Corruption::CoinOpening,
        Corruption::WrongChoice,
        Corruption::FabricatedOutcome,
        Corruption::ShortOutcome,
        Corruption::ReplacedCommitment,
        Corruption::ForgedProof,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abort {
    pub stage: Stage,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_seed: u64,
    pub branch: Option<Branch>,
    pub corruption: Option<Corruption>,
}

/// Everything exchanged in one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub branch: Branch,
    /// Exact GHZ-test acceptance of the honest provers.
    pub ghz_accept_probability: Option<f64>,
    pub commitment: Option<Commitment>,
    /// 0-based query read from `G_0`.
    pub query: Option<usize>,
    pub padded_query: bool,
    pub coin: Option<CoinFlip>,
    pub choice: Option<usize>,
    pub registers: Vec<usize>,
    pub outcome: Option<Vec<u16>>,
    pub predicate: Option<bool>,
    pub np: Option<NpTranscript>,
    pub np_verified: Option<bool>,
    pub abort: Option<Abort>,
    pub accepted: bool,
}

impl SessionRecord {
    fn new(branch: Branch) -> Self {
        SessionRecord {
            branch,
            ghz_accept_probability: None,
            commitment: None,
            query: None,
            padded_query: false,
            coin: None,
            choice: None,
            registers: vec![],
            outcome: None,
            predicate: None,
            np: None,
            np_verified: None,
            abort: None,
            accepted: false,
        }
    }

    fn abort(mut self, stage: Stage, reason: impl Into<String>) -> Self {
        self.abort = Some(Abort { stage, reason: reason.into() });
        self.accepted = false;
        self
    }
}

/// Encoded protocol over a GHZ-augmented Hamiltonian instance.
#[derive(Debug, Clone)]
pub struct FinalProtocol {
    pub plus: LhiPlus,
    pub decompositions: Vec<TermDecomposition>,
    /// Logical qubits that are encoded, in key order.
    pub encoded: Vec<usize>,
    /// Key index of each logical qubit, if encoded.
    pub reg_of: Vec<Option<usize>>,
    pub commit_params: CommitParams,
    /// Honest state after every prover answered the check branch.
    pub check_state: PureState,
    pub ghz_probability: f64,
}

/// Public key of the permutation network used for key commitments.
pub const KEY_COMMIT_KEY: u64 = 0x6b65_7973;
pub const KEY_COMMIT_RAND_BITS: usize = 16;

impl FinalProtocol {
    pub fn new(plus: &LhiPlus) -> Result<Self> {
        let base = &plus.base;
        let decompositions = base.terms.iter().map(|t| decompose_term(base, t)).collect::<Result<Vec<_>>>()?;
        let mut encoded = Vec::new();
        for r in plus.layout.registers() {
            if matches!(r.kind, RegKind::V | RegKind::M(_) | RegKind::C(_) | RegKind::Me(_)) {
                encoded.extend(r.qubits());
            }
        }
        let mut reg_of = vec![None; plus.layout.num_qubits()];
        for (i, &q) in encoded.iter().enumerate() {
            reg_of[q] = Some(i);
        }
        let commit_params = CommitParams::new(EncodingKey::committed_width(encoded.len()), KEY_COMMIT_RAND_BITS, KEY_COMMIT_KEY)
            .map_err(|e| EncodeError::Crypto(Box::new(e)))?;

        let mut check_state = plus.honest.initial.clone();
        for turn in &plus.honest.turns {
            for m in turn.by_label.get(1).into_iter().flatten() {
                check_state = check_state.apply(&m.gate, &m.targets)?;
            }
        }
        let report = plus.run_exact(&plus.honest)?;
        let ghz_probability = report.branches[0].p_acc;
        Ok(FinalProtocol { plus: plus.clone(), decompositions, encoded, reg_of, commit_params, check_state, ghz_probability })
    }

    pub fn random_key(&self, seed_: u64) -> EncodingKey {
        EncodingKey::random(self.encoded.len(), KEY_COMMIT_RAND_BITS, &mut seed::stream(seed_, 0))
    }

    /// Key indices of the registers measured by `dec`.
    pub fn key_registers(&self, dec: &TermDecomposition) -> Vec<usize> {
        dec.registers.iter().map(|&q| self.reg_of[q].expect("terms act on encoded qubits")).collect()
    }

    /// Honest check-branch state conditioned on `G_0` holding query `s`.
    pub fn state_for_query(&self, s: usize) -> Result<PureState> {
        let g0 = self.plus.g(0);
        let mask = g0.iter().enumerate().fold(0usize, |m, (j, &q)| m | (s >> j & 1) << q);
        let all = g0.iter().fold(0usize, |m, &q| m | 1 << q);
        let amps = self.check_state.amplitudes().iter().enumerate().map(|(i, &a)| if i & all == mask { a } else { qsim::c(0.0, 0.0) }).collect();
        Ok(PureState::normalized(self.check_state.num_qubits(), amps)?)
    }
}

fn crypto(e: CryptoError) -> EncodeError {
    EncodeError::Crypto(Box::new(e))
}

/// Runs one session. Aborts and rejections are recorded, not returned as
/// errors; errors mean malformed inputs.
pub fn run_final_protocol(fp: &FinalProtocol, key: &EncodingKey, cfg: &SessionConfig) -> Result<SessionRecord> {
    key.check()?;
    if key.registers() != fp.encoded.len() {
        return Err(EncodeError::Key(format!("key covers {} registers, protocol encodes {}", key.registers(), fp.encoded.len())));
    }
    let mut rng = seed::stream(cfg.session_seed, 0);
    let branch = cfg.branch.unwrap_or(if rng.gen::<bool>() { Branch::History } else { Branch::Ghz });
    let mut rec = SessionRecord::new(branch);
    let corrupt = |c: Corruption| cfg.corruption == Some(c);

    if branch == Branch::Ghz {
        rec.ghz_accept_probability = Some(fp.ghz_probability);
        rec.accepted = rng.gen::<f64>() < fp.ghz_probability;
        if !rec.accepted {
            return Ok(rec.abort(Stage::GhzTest, "GHZ projection failed"));
        }
        return Ok(rec);
    }

    let params = fp.commit_params;
    let z = commit(&params, &key.committed_value(), key.s).map_err(crypto)?;
    rec.commitment = Some(z.clone());

    let (s0, post) = sample_collapse(&fp.check_state, &fp.plus.g(0), &mut rng)?;
    let (s1, post) = sample_collapse(&post, &fp.plus.g(1), &mut rng)?;
    let announced = if corrupt(Corruption::WrongQuery) { (s0 + 1) % fp.plus.base.params.padded_terms() } else { s0 };
    rec.query = Some(announced);
    if announced != s1 {
        return Ok(rec.abort(Stage::Query, format!("announced query {announced}, prover 1 holds {s1}")));
    }
    if s0 >= fp.decompositions.len() {
        rec.padded_query = true;
        rec.accepted = true;
        return Ok(rec);
    }
    let dec = &fp.decompositions[s0];
    let registers = fp.key_registers(dec);
    rec.registers = registers.clone();

    let coin_params = CommitParams::new(1, KEY_COMMIT_RAND_BITS, KEY_COMMIT_KEY).map_err(crypto)?;
    let prover = if corrupt(Corruption::CoinOpening) { CoinProver::OpenOther { round: 0 } } else { CoinProver::Honest };
    let flip = blum_coin_flip(&coin_params, seed::child(cfg.session_seed, 1), seed::child(cfg.session_seed, 2), 2, prover, CoinVerifier::Honest);
    rec.coin = Some(flip.clone());
    if let Some(r) = flip.aborted_at {
        return Ok(rec.abort(Stage::CoinFlip, format!("opening failed in round {r}")));
    }
    let v = usize::from(flip.bits[0]) | usize::from(flip.bits[1]) << 1;
    let announced_v = if corrupt(Corruption::WrongChoice) { v ^ 1 } else { v };
    rec.choice = Some(announced_v);
    if announced_v != v || announced_v >= QUERY_CHOICES {
        return Ok(rec.abort(Stage::CoinFlip, format!("announced choice {announced_v}, coin gave {v}")));
    }

    let mut u = measure_term(&post, key, &fp.reg_of, dec, v, &[], &mut rng)?;
    if corrupt(Corruption::FabricatedOutcome) {
        u[0] ^= 1 << key.perm[0];
    }
    if corrupt(Corruption::ShortOutcome) {
        u.pop();
    }
    rec.outcome = Some(u.clone());

    let circuit = dec.clifford(v);
    if u.len() != registers.len() {
        return Ok(rec.abort(Stage::ProverCheck, format!("{} outcome blocks for {} registers", u.len(), registers.len())));
    }
    let sel = |w: &[u16]| registers.iter().map(|&r| w[r]).collect::<Vec<_>>();
    let shifted = unpad_outcome(&u, &circuit, &sel(&key.a), &sel(&key.b))?;
    let traps: Vec<_> = registers.iter().map(|&r| key.traps[r]).collect();
    let ok = predicate_r(&traps, &shifted, &key.perm, &circuit)?;
    rec.predicate = Some(ok);
    if !ok {
        return Ok(rec.abort(Stage::ProverCheck, "outcome inconsistent with the key"));
    }

    let t = s0 + 1;
    let n = fp.encoded.len();
    let prover_u = if corrupt(Corruption::ForgedProof) {
        let mut f = u.clone();
        f[0] ^= 1 << key.perm[0];
        f
    } else {
        u.clone()
    };
    let statement = reduce_rtv_statement(&params, &z, n, &registers, &prover_u, &circuit, t, v)?;
    let held = if corrupt(Corruption::ReplacedCommitment) {
        let mut other = key.clone();
        other.a[registers[0]] ^= 1;
        commit(&params, &other.committed_value(), other.s).map_err(crypto)?
    } else {
        z
    };
    let verifier_statement = reduce_rtv_statement(&params, &held, n, &registers, &u, &circuit, t, v)?;
    let transcript = match zk_np_prove(&statement, &rtv_witness(key, &registers), 1, cfg.session_seed) {
        Ok(tr) => tr,
        Err(CryptoError::BadWitness) => return Ok(rec.abort(Stage::NpProof, "prover holds no witness")),
        Err(e) => return Err(crypto(e)),
    };
    let verified = zk_np_verify(&verifier_statement, &transcript).map_err(crypto)?;
    rec.np = Some(transcript);
    rec.np_verified = Some(verified);
    rec.accepted = verified;
    if !verified {
        return Ok(rec.abort(Stage::NpProof, "proof rejected"));
    }
    Ok(rec)
}

/// Rejection of an encoded state carrying a physical Pauli error, seen by
/// the protocol (sampled) and after decoding (exact).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EchoReport {
    pub query: usize,
    pub choice: usize,
    pub error: PhysicalError,
    pub shots: usize,
    /// Fraction of shots whose outcome admits no consistent key.
    pub encoded_rejection: f64,
    /// Mass the decoder discards plus the term rejection of what it keeps.
    pub decoded_rejection: f64,
    /// `max(0, decoded − encoded)`.
    pub slack: f64,
}

/// Compares the protocol's rejection of an adversarially perturbed encoding
/// with the rejection of the decoded state.
pub fn decode_soundness_echo(
    fp: &FinalProtocol,
    key: &EncodingKey,
    query: usize,
    choice: usize,
    error: PhysicalError,
    shots: usize,
    seed_: u64,
) -> Result<EchoReport> {
    let dec = fp.decompositions.get(query).ok_or_else(|| EncodeError::Malformed(format!("query {query}")))?;
    if error.slot >= dec.registers.len() {
        return Err(EncodeError::Malformed(format!("slot {} of {}", error.slot, dec.registers.len())));
    }
    let psi = fp.state_for_query(query)?;
    let registers = fp.key_registers(dec);
    let circuit = dec.clifford(choice);
    let z = commit(&fp.commit_params, &key.committed_value(), key.s).map_err(crypto)?;
    let mut rng = seed::stream(seed_, 0);
    let mut rejected = 0usize;
    for u in measure_term_shots(&psi, key, &fp.reg_of, dec, choice, &[error], shots, &mut rng)? {
        let st = reduce_rtv_statement(&fp.commit_params, &z, fp.encoded.len(), &registers, &u, &circuit, query + 1, choice)?;
        let NpStatement::Rtv(st) = st else { unreachable!("reduce builds key statements") };
        if !accepts_true_key(&st, key)? {
            rejected += 1;
        }
    }
    let encoded_rejection = rejected as f64 / shots.max(1) as f64;

    // Decoder: a Pauli error leaves the block either intact or orthogonal to
    // the trap and code spaces, independent of the logical state.
    let mut block = encode_register(&PureState::zero(1)?, key, registers[error.slot])?.into_amplitudes();
    let bit = 1usize << error.position;
    let (x, zz) = match error.pauli {
        super::measure::PauliKind::X => (bit, 0),
        super::measure::PauliKind::Y => (bit, bit),
        super::measure::PauliKind::Z => (0, bit),
    };
    super::key::apply_pad(&mut block, x, zz);
    let kept = decode_weight(&PureState::new(super::key::TWO_N, block)?, key, registers[error.slot])?;
    let term = &fp.plus.base.terms[query];
    let logical_rej = term.rejection(psi.amplitudes());
    let decoded_rejection = (1.0 - kept) + kept * logical_rej;
    Ok(EchoReport {
        query,
        choice,
        error,
        shots,
        encoded_rejection,
        decoded_rejection,
        slack: (decoded_rejection - encoded_rejection).max(0.0),
    })
}

/// Binding fixes the key, so a statement is satisfiable iff the committed
/// key explains the outcome with some traps.
fn accepts_true_key(st: &RtvStatement, key: &EncodingKey) -> Result<bool> {
    Ok(st.consistent_traps(&key.perm, &key.a, &key.b)?.is_some())
}
