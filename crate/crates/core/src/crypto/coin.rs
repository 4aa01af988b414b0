use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{commit_symbol, verify_open, CommitParams};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoinProver {
    Honest,
    /// Opens the complement of its bit at this round, after seeing `z`.
    OpenOther { round: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoinVerifier {
    Honest,
    Fixed(bool),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoinRound {
    pub round: usize,
    pub commitment: String,
    pub challenge: bool,
    pub opened: bool,
    pub randomness: u64,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoinFlip {
    pub bits: Vec<bool>,
    pub rounds: Vec<CoinRound>,
    /// Round at which an opening failed; no bits are produced past it.
    pub aborted_at: Option<usize>,
}

impl CoinFlip {
    pub fn aborted(&self) -> bool {
        self.aborted_at.is_some()
    }
}

/// Blum coin flipping: per bit the prover commits to `y`, the verifier
/// answers `z`, the prover opens, and the output is `y ⊕ z`.
pub fn blum_coin_flip(
    params: &CommitParams,
    prover_seed: u64,
    verifier_seed: u64,
    count: usize,
    prover: CoinProver,
    verifier: CoinVerifier,
) -> CoinFlip {
    let mut prng = seed::stream(prover_seed, 0);
    let mut vrng = seed::stream(verifier_seed, 1);
    let mut out = CoinFlip { bits: Vec::with_capacity(count), rounds: Vec::with_capacity(count), aborted_at: None };
    for round in 0..count {
        let y: bool = prng.gen();
        let r = params.random_randomness(&mut prng);
        let com = commit_symbol(params, u64::from(y), r).expect("one-bit value and masked randomness");
        let z = match verifier {
            CoinVerifier::Honest => vrng.gen(),
            CoinVerifier::Fixed(b) => b,
        };
        let opened = match prover {
            CoinProver::OpenOther { round: bad } if bad == round => !y,
            _ => y,
        };
        let verified = verify_open(params, &com, &[opened], r);
        out.rounds.push(CoinRound { round, commitment: com.to_hex(), challenge: z, opened, randomness: r, verified });
        if !verified {
            out.aborted_at = Some(round);
            break;
        }
        out.bits.push(opened ^ z);
    }
    out
}

/// `(statistic, p-value)` of the one-degree chi-square test for a fair bit.
pub fn chi_square_uniform(bits: &[bool]) -> (f64, f64) {
    let n = bits.len() as f64;
    let ones = bits.iter().filter(|&&b| b).count() as f64;
    let e = n / 2.0;
    let stat = (ones - e).powi(2) / e + (n - ones - e).powi(2) / e;
    let dist = ChiSquared::new(1.0).expect("one degree of freedom");
    (stat, 1.0 - dist.cdf(stat))
}
