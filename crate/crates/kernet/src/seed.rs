//! Deterministic seed derivation so folds, layers, and feature maps get
//! independent but reproducible RNG streams from one master seed.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable child seed for (master, domain, index).
pub fn derive_seed(master: u64, domain: u64, index: u64) -> u64 {
    splitmix64(master ^ domain.rotate_left(48) ^ splitmix64(index))
}

/// Domain tags for derive_seed.
pub mod domain {
    pub const LAYER_RFF: u64 = 1;
    pub const FOLD: u64 = 2;
}
