/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate (or chain, or pass) `index` under `base`.
///
/// Each index gets its own stream, so growing a budget from `S` to `S'`
/// leaves the first `S` replicates untouched.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix(mix(base) ^ mix(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Purposes within one replicate, so that subsampling, initialization
/// and shuffling never share a stream.
pub(crate) mod stream {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const SUBSAMPLE: u64 = 3;
    pub const MASK: u64 = 4;
    pub const CHAIN: u64 = 5;
    pub const REPLICATE: u64 = 6;
}
