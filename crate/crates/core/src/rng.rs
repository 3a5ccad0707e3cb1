//! Deterministic random substreams keyed by `(seed, run, cpi, channel, purpose)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Trajectory = 1,
    Reflectivity = 2,
    Noise = 3,
    SyncOffset = 4,
    ParticleInit = 5,
    ParticlePredict = 6,
    Resample = 7,
    DirectNoise = 8,
    Misc = 9,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one `(seed, run, cpi, channel, purpose)` key.
pub fn substream(seed: u64, run: u64, cpi: u64, channel: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut h = splitmix(seed);
    for (i, part) in [run, cpi, channel, purpose as u64].into_iter().enumerate() {
        h = splitmix(h ^ splitmix(part.wrapping_add(i as u64 * 0x1000_0000_0000)));
        key[i * 8..(i + 1) * 8].copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
