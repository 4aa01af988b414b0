//! Classical commitment, coin flipping and commitment-based proofs for NP
//! statements, at parameters small enough to enumerate.

mod coin;
mod np;
#[cfg(test)]
mod tests;

pub use coin::{blum_coin_flip, chi_square_uniform, CoinFlip, CoinProver, CoinRound, CoinVerifier};
pub use np::{
    MAX_CANDIDATES,
    coloring_cheat_enumeration, coloring_rounds, zk_np_prove, zk_np_verify, CheatEnumeration, ColoringOpening, ColoringRound, Graph,
    NpProof, NpStatement, NpTranscript, NpWitness,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CryptoError {
    #[error("randomness width {0} outside 8..=32")]
    RandWidth(usize),
    #[error("value has {got} bits, params expect {expected}")]
    ValueWidth { expected: usize, got: usize },
    #[error("randomness {0:#x} does not fit the randomness width")]
    Randomness(u64),
    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    Symbol { symbol: usize, alphabet: usize },
    #[error("witness does not satisfy the statement")]
    BadWitness,
    #[error("witness kind does not match the statement kind")]
    WitnessKind,
    #[error("malformed transcript: {0}")]
    Malformed(String),
    #[error("statement too large to check by enumeration: {0}")]
    Oversized(String),
    #[error(transparent)]
    Encode(#[from] Box<crate::encode::EncodeError>),
}

pub type Result<T> = std::result::Result<T, CryptoError>;

const PERM_ROUNDS: usize = 4;

/// Public parameters of `f(a, r) = (σ(r), a ⊕ mask(r))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitParams {
    /// Bits of the committed value.
    pub value_bits: usize,
    /// Bits of randomness, `p`.
    pub rand_bits: usize,
    /// Public key of the permutation network and the mask.
    pub key: u64,
}

impl CommitParams {
    pub fn new(value_bits: usize, rand_bits: usize, key: u64) -> Result<Self> {
        if !(8..=32).contains(&rand_bits) {
            return Err(CryptoError::RandWidth(rand_bits));
        }
        Ok(CommitParams { value_bits, rand_bits, key })
    }

    /// Parameters for symbols of an alphabet of the given size.
    pub fn for_alphabet(alphabet: usize, rand_bits: usize, key: u64) -> Result<Self> {
        Self::new(symbol_bits(alphabet), rand_bits, key)
    }

    /// Output width `q = p + value_bits`.
    pub fn out_bits(&self) -> usize {
        self.rand_bits + self.value_bits
    }

    pub fn rand_mask(&self) -> u64 {
        (1u64 << self.rand_bits) - 1
    }

    pub fn random_randomness(&self, rng: &mut impl Rng) -> u64 {
        rng.gen::<u64>() & self.rand_mask()
    }

    fn round_keys(&self) -> [(u64, u64); PERM_ROUNDS] {
        let mut rng = ChaCha20Rng::seed_from_u64(self.key ^ 0x5a5a_0000 ^ self.rand_bits as u64);
        let mut ks = [(0, 0); PERM_ROUNDS];
        for k in &mut ks {
            *k = (rng.gen::<u64>() & self.rand_mask(), (rng.gen::<u64>() | 1) & self.rand_mask());
        }
        ks
    }

    /// Public bijection σ on `rand_bits`-bit strings: rounds of key xor,
    /// odd multiplication, xorshift and rotation, each invertible mod `2^p`.
    pub fn sigma(&self, r: u64) -> u64 {
        let p = self.rand_bits as u32;
        let m = self.rand_mask();
        let mut x = r & m;
        for (xor, mul) in self.round_keys() {
            x ^= xor;
            x = x.wrapping_mul(mul) & m;
            x ^= x >> (p / 2);
            x = ((x << 3) | (x >> (p - 3))) & m;
        }
        x
    }

    /// Pseudorandom `value_bits`-bit mask extracted from `r`.
    pub fn mask(&self, r: u64) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.value_bits);
        let mut counter = 0u32;
        while out.len() < self.value_bits {
            let mut h = Sha256::new();
            h.update(self.key.to_le_bytes());
            h.update(r.to_le_bytes());
            h.update(counter.to_le_bytes());
            for byte in h.finalize() {
                for j in 0..8 {
                    if out.len() < self.value_bits {
                        out.push(byte >> j & 1 == 1);
                    }
                }
            }
            counter += 1;
        }
        out
    }
}

pub fn symbol_bits(alphabet: usize) -> usize {
    (usize::BITS - alphabet.saturating_sub(1).leading_zeros()).max(1) as usize
}

/// Little-endian bits of `x`.
pub fn to_bits(x: u64, width: usize) -> Vec<bool> {
    (0..width).map(|j| x >> j & 1 == 1).collect()
}

pub fn from_bits(bits: &[bool]) -> u64 {
    bits.iter().enumerate().fold(0, |acc, (j, &b)| acc | (u64::from(b) << j))
}

pub fn bits_to_hex(bits: &[bool]) -> String {
    let bytes: Vec<u8> = bits.chunks(8).map(|ch| ch.iter().enumerate().fold(0u8, |a, (j, &b)| a | (u8::from(b) << j))).collect();
    hex::encode(bytes)
}

/// Width-`q` commitment string: `σ(r)` then the masked value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "HexBits", try_from = "HexBits")]
pub struct Commitment {
    pub bits: Vec<bool>,
}

/// Serialized form of a bitstring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HexBits {
    pub width: usize,
    pub hex: String,
}

impl From<Commitment> for HexBits {
    fn from(c: Commitment) -> Self {
        HexBits { width: c.width(), hex: c.to_hex() }
    }
}

impl TryFrom<HexBits> for Commitment {
    type Error = String;

    fn try_from(h: HexBits) -> std::result::Result<Self, String> {
        let bytes = hex::decode(&h.hex).map_err(|e| e.to_string())?;
        if bytes.len() != h.width.div_ceil(8) {
            return Err(format!("{} hex bytes for width {}", bytes.len(), h.width));
        }
        let bits = (0..h.width).map(|j| bytes[j / 8] >> (j % 8) & 1 == 1).collect();
        Ok(Commitment { bits })
    }
}

impl Commitment {
    pub fn width(&self) -> usize {
        self.bits.len()
    }

    pub fn to_hex(&self) -> String {
        bits_to_hex(&self.bits)
    }

    pub fn sigma_part(&self, params: &CommitParams) -> u64 {
        from_bits(&self.bits[..params.rand_bits.min(self.bits.len())])
    }
}

pub fn commit(params: &CommitParams, value: &[bool], randomness: u64) -> Result<Commitment> {
    if value.len() != params.value_bits {
        return Err(CryptoError::ValueWidth { expected: params.value_bits, got: value.len() });
    }
    if randomness & !params.rand_mask() != 0 {
        return Err(CryptoError::Randomness(randomness));
    }
    let mut bits = to_bits(params.sigma(randomness), params.rand_bits);
    bits.extend(value.iter().zip(params.mask(randomness)).map(|(&v, m)| v ^ m));
    Ok(Commitment { bits })
}

pub fn commit_symbol(params: &CommitParams, symbol: u64, randomness: u64) -> Result<Commitment> {
    if params.value_bits < 64 && symbol >> params.value_bits != 0 {
        return Err(CryptoError::Symbol { symbol: symbol as usize, alphabet: 1 << params.value_bits });
    }
    commit(params, &to_bits(symbol, params.value_bits), randomness)
}

pub fn verify_open(params: &CommitParams, commitment: &Commitment, value: &[bool], randomness: u64) -> bool {
    commit(params, value, randomness).is_ok_and(|c| &c == commitment)
}

/// Recovers the unique opening of `commitment` by scanning all randomness.
pub fn brute_force_open(params: &CommitParams, commitment: &Commitment) -> Option<(Vec<bool>, u64)> {
    if commitment.width() != params.out_bits() {
        return None;
    }
    let target = commitment.sigma_part(params);
    let r = (0..=params.rand_mask()).find(|&r| params.sigma(r) == target)?;
    let value: Vec<bool> = commitment.bits[params.rand_bits..].iter().zip(params.mask(r)).map(|(&c, m)| c ^ m).collect();
    Some((value, r))
}

/// Result of committing to every `(symbol, r)` pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BindingScan {
    pub commitments: usize,
    pub distinct: usize,
    pub cross_value_collisions: usize,
    pub sigma_bijective: bool,
}

pub fn binding_scan(params: &CommitParams, alphabet: usize) -> Result<BindingScan> {
    use std::collections::HashMap;
    if alphabet > 1 << params.value_bits {
        return Err(CryptoError::Symbol { symbol: alphabet - 1, alphabet: 1 << params.value_bits });
    }
    let mut seen: HashMap<Commitment, u64> = HashMap::new();
    let mut collisions = 0;
    let mut total = 0;
    for a in 0..alphabet as u64 {
        for r in 0..=params.rand_mask() {
            total += 1;
            let c = commit_symbol(params, a, r)?;
            if let Some(&prev) = seen.get(&c) {
                if prev != a {
                    collisions += 1;
                }
            } else {
                seen.insert(c, a);
            }
        }
    }
    let mut images: Vec<u64> = (0..=params.rand_mask()).map(|r| params.sigma(r)).collect();
    images.sort_unstable();
    images.dedup();
    Ok(BindingScan {
        commitments: total,
        distinct: seen.len(),
        cross_value_collisions: collisions,
        sigma_bijective: images.len() as u64 == params.rand_mask() + 1,
    })
}

/// Exact distributions of `commit(a0, R)` and `commit(a1, R)` over uniform `R`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HidingReport {
    pub statistical_distance: f64,
    /// `(distinguisher, |Pr[D=1 | a0] − Pr[D=1 | a1]|)`.
    pub advantages: Vec<(String, f64)>,
}

pub fn hiding_report(params: &CommitParams, a0: u64, a1: u64) -> Result<HidingReport> {
    use std::collections::HashMap;
    let n = (params.rand_mask() + 1) as f64;
    let mut dist: HashMap<Commitment, [f64; 2]> = HashMap::new();
    let mut all = [Vec::new(), Vec::new()];
    for (side, a) in [a0, a1].into_iter().enumerate() {
        for r in 0..=params.rand_mask() {
            let c = commit_symbol(params, a, r)?;
            dist.entry(c.clone()).or_insert([0.0; 2])[side] += 1.0 / n;
            all[side].push(c);
        }
    }
    let sd = 0.5 * dist.values().map(|p| (p[0] - p[1]).abs()).sum::<f64>();

    let p = params.rand_bits;
    type Dist = Box<dyn Fn(&Commitment) -> bool>;
    let pk = *params;
    let want = a1;
    let tests: Vec<(&str, Dist)> = vec![
        ("first masked bit", Box::new(move |c: &Commitment| c.bits[p])),
        ("masked parity", Box::new(move |c: &Commitment| c.bits[p..].iter().filter(|&&b| b).count() % 2 == 1)),
        ("sigma low bit xor masked bit", Box::new(move |c: &Commitment| c.bits[0] ^ c.bits[p])),
        ("invert sigma and unmask", Box::new(move |c: &Commitment| brute_force_open(&pk, c).is_some_and(|(v, _)| from_bits(&v) == want))),
    ];
    let advantages = tests
        .into_iter()
        .map(|(name, d)| {
            let rate = |cs: &[Commitment]| cs.iter().filter(|c| d(c)).count() as f64 / n;
            (name.to_string(), (rate(&all[0]) - rate(&all[1])).abs())
        })
        .collect();
    Ok(HidingReport { statistical_distance: sd, advantages })
}
