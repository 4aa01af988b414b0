use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{binding_scan, commit_symbol, to_bits, verify_open, CommitParams, Commitment, CryptoError, Result};
use crate::encode::{RtvStatement, RtvWitness};
use crate::seed;

/// Public key of the permutation network used by coloring proofs.
const COLORING_KEY: u64 = 0x3c01_0a1e;
const COLORING_RAND_BITS: usize = 16;
/// Upper limit on witness candidates for enumeration-checked statements.
pub const MAX_CANDIDATES: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Graph { vertices: n, edges }
    }

    pub fn is_proper(&self, colors: &[u8]) -> bool {
        colors.len() == self.vertices
            && colors.iter().all(|&c| c < 3)
            && self.edges.iter().all(|&(u, v)| colors[u] != colors[v])
    }

    fn check(&self) -> Result<()> {
        if self.edges.is_empty() || self.edges.iter().any(|&(u, v)| u == v || u >= self.vertices || v >= self.vertices) {
            return Err(CryptoError::Malformed("graph needs at least one edge and no loops".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NpStatement {
    ThreeColoring(Graph),
    /// Key consistency of a reported transversal measurement.
    Rtv(Box<RtvStatement>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NpWitness {
    Coloring(Vec<u8>),
    Rtv(Box<RtvWitness>),
}

impl NpStatement {
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("statement serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Brute-force oracle: does `witness` satisfy the statement?
    pub fn is_satisfied_by(&self, witness: &NpWitness) -> Result<bool> {
        match (self, witness) {
            (NpStatement::ThreeColoring(g), NpWitness::Coloring(c)) => Ok(g.is_proper(c)),
            (NpStatement::Rtv(s), NpWitness::Rtv(w)) => Ok(s.check(w).map_err(Box::new)?),
            _ => Err(CryptoError::WitnessKind),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColoringOpening {
    pub vertex: usize,
    pub color: u8,
    pub randomness: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColoringRound {
    pub round: usize,
    pub commitments: Vec<Commitment>,
    /// Index into the graph's edge list.
    pub challenge: usize,
    pub openings: [ColoringOpening; 2],
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NpProof {
    Coloring { params: CommitParams, rounds: Vec<ColoringRound> },
    /// The verifier settles the statement by scanning every candidate.
    Enumeration { candidates: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpTranscript {
    pub statement_digest: String,
    pub proof: NpProof,
}

/// Commit-and-open rounds for an arbitrary committed assignment. Honest
/// provers call this with a proper coloring; tests use it for cheaters.
pub fn coloring_rounds(graph: &Graph, params: &CommitParams, assignment: &[u8], rounds: usize, seed_: u64) -> Vec<ColoringRound> {
    let mut prng = seed::stream(seed_, 0);
    let mut vrng = seed::stream(seed_, 1);
    (0..rounds)
        .map(|round| {
            let mut perm = [0u8, 1, 2];
            perm.shuffle(&mut prng);
            let colors: Vec<u8> = assignment.iter().map(|&c| if c < 3 { perm[c as usize] } else { c }).collect();
            let rand: Vec<u64> = colors.iter().map(|_| params.random_randomness(&mut prng)).collect();
            let commitments = colors
                .iter()
                .zip(&rand)
                .map(|(&c, &r)| commit_symbol(params, u64::from(c), r).expect("color fits the alphabet"))
                .collect();
            let challenge = vrng.gen_range(0..graph.edges.len());
            let (u, v) = graph.edges[challenge];
            let open = |x: usize| ColoringOpening { vertex: x, color: colors[x], randomness: rand[x] };
            let mut r = ColoringRound { round, commitments, challenge, openings: [open(u), open(v)], verdict: false };
            r.verdict = check_round(graph, params, &r);
            r
        })
        .collect()
}

fn check_round(graph: &Graph, params: &CommitParams, r: &ColoringRound) -> bool {
    let Some(&(u, v)) = graph.edges.get(r.challenge) else { return false };
    let [a, b] = r.openings;
    a.vertex == u
        && b.vertex == v
        && a.color < 3
        && b.color < 3
        && a.color != b.color
        && [a, b].iter().all(|o| {
            r.commitments
                .get(o.vertex)
                .is_some_and(|c| verify_open(params, c, &to_bits(u64::from(o.color), params.value_bits), o.randomness))
        })
}

/// Proves `statement` with `witness`; refuses if the witness is invalid.
pub fn zk_np_prove(statement: &NpStatement, witness: &NpWitness, rounds: usize, seed_: u64) -> Result<NpTranscript> {
    if !statement.is_satisfied_by(witness)? {
        return Err(CryptoError::BadWitness);
    }
    let proof = match (statement, witness) {
        (NpStatement::ThreeColoring(g), NpWitness::Coloring(c)) => {
            g.check()?;
            let params = CommitParams::for_alphabet(4, COLORING_RAND_BITS, COLORING_KEY)?;
            NpProof::Coloring { params, rounds: coloring_rounds(g, &params, c, rounds, seed_) }
        }
        (NpStatement::Rtv(s), _) => {
            let candidates = s.candidates();
            if candidates > MAX_CANDIDATES {
                return Err(CryptoError::Oversized(format!("{candidates} candidates")));
            }
            NpProof::Enumeration { candidates }
        }
        _ => return Err(CryptoError::WitnessKind),
    };
    Ok(NpTranscript { statement_digest: statement.digest(), proof })
}

pub fn zk_np_verify(statement: &NpStatement, transcript: &NpTranscript) -> Result<bool> {
    if transcript.statement_digest != statement.digest() {
        return Ok(false);
    }
    match (statement, &transcript.proof) {
        (NpStatement::ThreeColoring(g), NpProof::Coloring { params, rounds }) => {
            g.check()?;
            if params.value_bits < 2 || !(8..=32).contains(&params.rand_bits) {
                return Err(CryptoError::Malformed("commitment parameters".into()));
            }
            if rounds.is_empty() {
                return Ok(false);
            }
            if rounds.iter().any(|r| r.commitments.len() != g.vertices) {
                return Err(CryptoError::Malformed("one commitment per vertex".into()));
            }
            Ok(rounds.iter().all(|r| check_round(g, params, r)))
        }
        (NpStatement::Rtv(s), NpProof::Enumeration { candidates }) => {
            if *candidates != s.candidates() || *candidates > MAX_CANDIDATES {
                return Ok(false);
            }
            Ok(s.search().map_err(Box::new)?.is_some())
        }
        _ => Err(CryptoError::Malformed("proof kind does not match statement".into())),
    }
}

/// Exhaustive analysis of committed-assignment cheaters on a graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheatEnumeration {
    /// Number of committed assignments `Γ^V` considered.
    pub strategies: usize,
    /// Largest single-round acceptance over all assignments.
    pub best_per_round: f64,
    /// Largest acceptance of any multi-round strategy: `best_per_round^rounds`.
    pub best_total: f64,
    /// `(1 − 1/|E|)^rounds`.
    pub bound: f64,
    /// Openings to a second value found by the binding scan.
    pub equivocations: usize,
}

/// Every cheater commits to some assignment per round and, by binding, can
/// only open what it committed. Rounds are independent, so the best
/// multi-round acceptance is the best single-round acceptance raised to
/// the number of rounds.
pub fn coloring_cheat_enumeration(graph: &Graph, params: &CommitParams, rounds: usize) -> Result<CheatEnumeration> {
    graph.check()?;
    let alphabet = 1usize << params.value_bits;
    let strategies = alphabet.checked_pow(graph.vertices as u32).filter(|&s| s as u64 <= MAX_CANDIDATES);
    let strategies = strategies.ok_or_else(|| CryptoError::Oversized(format!("{alphabet}^{} assignments", graph.vertices)))?;
    let mut best = 0.0f64;
    for code in 0..strategies {
        let colors: Vec<u8> = (0..graph.vertices).map(|v| ((code / alphabet.pow(v as u32)) % alphabet) as u8).collect();
        let ok = graph.edges.iter().filter(|&&(u, v)| colors[u] < 3 && colors[v] < 3 && colors[u] != colors[v]).count();
        best = best.max(ok as f64 / graph.edges.len() as f64);
    }
    let scan = binding_scan(params, alphabet)?;
    Ok(CheatEnumeration {
        strategies,
        best_per_round: best,
        best_total: best.powi(rounds as i32),
        bound: (1.0 - 1.0 / graph.edges.len() as f64).powi(rounds as i32),
        equivocations: scan.cross_value_collisions,
    })
}
