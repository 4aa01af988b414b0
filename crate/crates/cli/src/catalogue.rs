//! Static list of the checks each scenario kind emits, and the module
//! invariant each one exercises.

use serde::Serialize;

use crate::scenario::Kind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CatalogueEntry {
    /// Check name as it appears in reports.
    pub check: &'static str,
    pub module: &'static str,
    pub invariant: &'static str,
    pub description: &'static str,
}

const fn e(check: &'static str, module: &'static str, invariant: &'static str, description: &'static str) -> CatalogueEntry {
    CatalogueEntry { check, module, invariant, description }
}

const QMIP_RUN: &[CatalogueEntry] = &[
    e("gate unitarity", "qsim-core", "unitarity", "max |G†G − I| over the built-in gates"),
    e("norm preservation", "qsim-core", "norm preservation", "squared-norm drift of Haar gates on random states"),
    e("gentle measurement", "qsim-core", "gentle measurement", "worst D(ρ, ρ0) − √ε over random (ρ, M) pairs on ≤ 3 qubits"),
    e("measurement completeness", "qsim-core", "measurement completeness", "branch probabilities of projective and computational measurements sum to 1"),
    e("partial trace positivity", "qsim-core", "partial trace", "trace loss and most negative eigenvalue of sampled partial traces"),
    e("prover locality", "protocol-engine", "locality", "locality violations of honest and Haar strategies"),
    e("branch consistency", "protocol-engine", "branch consistency", "|Σ w_b p_b − p_acc| for honest and Haar strategies"),
    e("sampling consistency", "protocol-engine", "sampling consistency", "|empirical − exact| acceptance against a 5σ binomial bound"),
    e("honest completeness", "protocol-engine", "honest completeness", "honest p_acc of the three-turn toy against 1 − ε"),
    e("determinism", "cli", "determinism", "sampled transcripts regenerated from the same seeds"),
    e("catalogue coverage", "cli", "coverage", "module invariants absent from every catalogue"),
];

const THEOREM4_SWEEP: &[CatalogueEntry] = &[
    e("completeness preservation", "zk-transforms", "completeness preservation", "honest GHZ-protocol p_acc against 1 − ε/2"),
    e("soundness chain gentle link", "zk-transforms", "soundness chain", "worst p_rej,hv − (√ε₁ + ε₂) over Haar adversaries"),
    e("soundness chain square-root link", "zk-transforms", "soundness chain", "worst (√ε₁ + ε₂) − (√ε₁ + √ε₂)"),
    e("soundness chain final link", "zk-transforms", "soundness chain", "worst (√ε₁ + √ε₂) − 2√(2 p_rej)"),
    e("conditioned extraction agreement", "zk-transforms", "soundness chain", "extracted rejection computed two ways"),
    e("ghz marginal identity", "zk-transforms", "ghz marginal identity", "GHZ marginals on every p-subset against the classical mixture"),
    e("same-bit reduction", "zk-transforms", "same-bit reduction", "trace distance between mixed-bit views and their same-bit simulation"),
];

const REWIND_CHECK: &[CatalogueEntry] = &[
    e("rewind d0 rate", "zk-transforms", "rewind correctness", "worst |Pr[D = 0] − 1/2| on the first measurement, over verifiers and inputs"),
    e("rewind round law", "zk-transforms", "rewind correctness", "termination probability of every round against p, then (1 − p) q (1 − q)^(r−1), q = 4p(1 − p)"),
    e("rewind view distance", "zk-transforms", "rewind correctness", "trace distance between simulated and real views"),
    e("coin independence", "zk-transforms", "rewind correctness", "bias and V-dependence of the simulator's coin"),
    e("flipped simulator detected", "zk-transforms", "rewind correctness", "view distance of a simulator answering the wrong coin"),
];

const LHI_CHECK: &[CatalogueEntry] = &[
    e("term spectra", "lhi", "term spectra", "projector residual of every term; norm excess of prover-step terms"),
    e("zero-energy completeness", "lhi", "zero-energy completeness", "worst per-query rejection of the honest history state"),
    e("unary clock closure", "lhi", "unary clock closure", "weight of the honest history on invalid clock states"),
    e("decomposition identity", "lhi", "decomposition identity", "SWAP and CNOT projector sums against the middle operator"),
    e("bad-time mass bound", "lhi", "bad-time mass bound", "worst ‖|⊥⟩‖ − Σ‖H_e φ‖ over random and perturbed states"),
    e("extraction trend monotone", "lhi", "extraction soundness", "extracted rejection rises with LHI rejection"),
    e("extraction limit", "lhi", "extraction soundness", "extracted rejection at the smallest perturbation"),
    e("extraction exponent", "lhi", "extraction soundness", "fitted slope of ln √p_rej against ln ε"),
    e("extraction rejection exponent", "lhi", "extraction soundness", "fitted slope of ln p_rej against ln ε"),
    e("extraction constant", "lhi", "extraction soundness", "smallest C with √p_rej ≤ C (T⁵ε)^¼ on the sweep"),
    e("extraction diagnostics", "lhi", "extraction soundness", "sweep points whose term-level bounds fail"),
];

const LHI_PLUS_SWEEP: &[CatalogueEntry] = &[
    e("lhi-plus completeness", "lhi", "extraction soundness", "honest LHI+ p_acc against 1 − ε/2"),
    e("lhi-plus ghz branch", "lhi", "extraction soundness", "honest GHZ-test acceptance"),
    e("lhi-plus soundness chain", "lhi", "extraction soundness", "worst link violation over Haar adversaries"),
    e("lhi-plus conditioned agreement", "lhi", "extraction soundness", "extracted LHI rejection computed two ways"),
];

const FINAL_ZK_SESSION: &[CatalogueEntry] = &[
    e("steane code sizes", "encode-zk", "transversality", "brute-force codeword and odd-coset counts off by"),
    e("encoding invertibility", "encode-zk", "encoding invertibility", "worst 1 − |⟨decode(encode(x))|x⟩| over random keys"),
    e("pad twirl exact", "encode-zk", "pad twirl", "exact pad average on the reduced code against I/16"),
    e("pad twirl sampled", "encode-zk", "pad twirl", "worst one-qubit marginal distance over sampled keys"),
    e("transversality", "encode-zk", "transversality", "transversal CNOT against logical CNOT on the basis states"),
    e("conjugation identity", "encode-zk", "conjugation identity", "worst dense residual of C X^a Z^b C† over session Cliffords"),
    e("predicate completeness", "encode-zk", "predicate completeness", "honest outcomes failing the prover's predicate"),
    e("decode-soundness echo", "encode-zk", "decode-soundness echo", "largest decoded-minus-encoded rejection under single Pauli errors"),
    e("ghz branch acceptance", "encode-zk", "predicate completeness", "honest GHZ-branch acceptance"),
    e("history branch acceptance", "encode-zk", "predicate completeness", "honest history sessions rejected"),
    e("corruption detection", "encode-zk", "predicate completeness", "injected corruptions that were accepted"),
];

const CRYPTO_SUITE: &[CatalogueEntry] = &[
    e("binding exhaustive scan", "crypto-classical", "binding", "cross-value collisions over every (symbol, r)"),
    e("coin uniformity", "crypto-classical", "coin uniformity", "chi-square p-value of honest coin flips"),
    e("coin bias", "crypto-classical", "coin uniformity", "|mean − 1/2| of honest coin flips"),
    e("zk-np completeness", "crypto-classical", "zk-np completeness", "honest 3-coloring proofs rejected"),
    e("zk-np soundness", "crypto-classical", "zk-np soundness", "best cheating acceptance against (5/6)^rounds on K4"),
    e("zk-np equivocations", "crypto-classical", "zk-np soundness", "commitments opened to two values"),
    e("commitment hiding", "crypto-classical", "commitment hiding", "statistical distance between commitments to 0 and 3"),
];

pub fn catalogue(kind: Kind) -> &'static [CatalogueEntry] {
    match kind {
        Kind::QmipRun => QMIP_RUN,
        Kind::Theorem4Sweep => THEOREM4_SWEEP,
        Kind::LhiCheck => LHI_CHECK,
        Kind::LhiPlusSweep => LHI_PLUS_SWEEP,
        Kind::FinalZkSession => FINAL_ZK_SESSION,
        Kind::RewindCheck => REWIND_CHECK,
        Kind::CryptoSuite => CRYPTO_SUITE,
    }
}

/// Every module-level invariant, as `(module, invariant)`.
pub const MODULE_INVARIANTS: &[(&str, &str)] = &[
    ("qsim-core", "unitarity"),
    ("qsim-core", "norm preservation"),
    ("qsim-core", "gentle measurement"),
    ("qsim-core", "measurement completeness"),
    ("qsim-core", "partial trace"),
    ("protocol-engine", "locality"),
    ("protocol-engine", "branch consistency"),
    ("protocol-engine", "sampling consistency"),
    ("protocol-engine", "honest completeness"),
    ("zk-transforms", "completeness preservation"),
    ("zk-transforms", "soundness chain"),
    ("zk-transforms", "ghz marginal identity"),
    ("zk-transforms", "same-bit reduction"),
    ("zk-transforms", "rewind correctness"),
    ("lhi", "term spectra"),
    ("lhi", "zero-energy completeness"),
    ("lhi", "unary clock closure"),
    ("lhi", "extraction soundness"),
    ("lhi", "decomposition identity"),
    ("lhi", "bad-time mass bound"),
    ("crypto-classical", "binding"),
    ("crypto-classical", "coin uniformity"),
    ("crypto-classical", "zk-np completeness"),
    ("crypto-classical", "zk-np soundness"),
    ("crypto-classical", "commitment hiding"),
    ("encode-zk", "encoding invertibility"),
    ("encode-zk", "pad twirl"),
    ("encode-zk", "conjugation identity"),
    ("encode-zk", "transversality"),
    ("encode-zk", "predicate completeness"),
    ("encode-zk", "decode-soundness echo"),
    ("cli", "determinism"),
    ("cli", "coverage"),
];

/// Module invariants no catalogue entry exercises.
pub fn uncovered_invariants() -> Vec<(&'static str, &'static str)> {
    MODULE_INVARIANTS
        .iter()
        .copied()
        .filter(|&(m, i)| !Kind::ALL.iter().any(|&k| catalogue(k).iter().any(|c| c.module == m && c.invariant == i)))
        .collect()
}
