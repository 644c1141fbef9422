//! Seeded RNG streams with exact save/restore.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Rng = ChaCha8Rng;

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Mixes `tag` into `seed` (splitmix64 finalizer) to derive child seeds.
pub fn derive(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `seed:stream:word_pos` in hex.
pub fn save(rng: &Rng) -> String {
    let seed: String = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
    format!("{seed}:{:x}:{:x}", rng.get_stream(), rng.get_word_pos())
}

pub fn restore(text: &str) -> Result<Rng> {
    let bad = || Error::Checkpoint(format!("bad rng state `{text}`"));
    let mut parts = text.trim().split(':');
    let (seed_hex, stream_hex, pos_hex) = (
        parts.next().ok_or_else(bad)?,
        parts.next().ok_or_else(bad)?,
        parts.next().ok_or_else(bad)?,
    );
    if parts.next().is_some() || seed_hex.len() != 64 || !seed_hex.is_ascii() {
        return Err(bad());
    }
    let mut seed = [0u8; 32];
    for (i, b) in seed.iter_mut().enumerate() {
        *b = u8::from_str_radix(&seed_hex[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(u64::from_str_radix(stream_hex, 16).map_err(|_| bad())?);
    rng.set_word_pos(u128::from_str_radix(pos_hex, 16).map_err(|_| bad())?);
    Ok(rng)
}
