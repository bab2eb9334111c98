//! Counter-based seed derivation.
//!
//! Every random stream in a run is keyed by a master seed plus a path of
//! labels (question id, policy, trial index), so results do not depend on
//! scheduling order or thread count.

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a; stable across platforms and compiler versions, unlike `DefaultHasher`.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPath(u64);

impl SeedPath {
    pub fn new(master: u64) -> Self {
        SeedPath(mix64(master))
    }

    pub fn label(self, label: &str) -> Self {
        SeedPath(mix64(self.0 ^ fnv1a(label.as_bytes())))
    }

    pub fn index(self, index: u64) -> Self {
        SeedPath(mix64(
            self.0 ^ mix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)),
        ))
    }

    pub fn value(self) -> u64 {
        self.0
    }
}
