use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Independent generator for sample `index` under `master`.
///
/// Each index gets its own ChaCha stream, so samples can be drawn in any
/// order or in parallel and still reproduce.
pub fn stream(master: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Derives a child master seed, for nesting sweeps.
pub fn child(master: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(master, index).next_u64()
}
