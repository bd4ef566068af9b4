//! FNV-1a hashing for stable run fingerprints and per-item seed derivation.
//! Stability across platforms and versions matters here (hashes are written
//! into manifests), which rules out `DefaultHasher`.

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

pub fn fnv1a_64(parts: &[&str]) -> u64 {
    let mut h = FNV_OFFSET;
    for part in parts {
        for b in part.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        // Separator byte so ("ab","c") and ("a","bc") differ.
        h ^= 0x1f;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Mix a base seed with string context into a fresh RNG seed.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    fnv1a_64(parts) ^ base.rotate_left(17)
}
