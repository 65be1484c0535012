//! Seeded random streams.
//!
//! Every Monte-Carlo task draws from its own ChaCha8 stream: the master seed
//! selects the key and the task index selects the stream, so results do not
//! depend on scheduling or worker count.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream `index` under `master_seed`.
pub fn stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Uniform on the open grid `(2k + 1) / 2^53`, which is closed under
/// `u → 1 − u` with exact arithmetic.
pub fn open_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (2 * (rng.next_u64() >> 12) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}
