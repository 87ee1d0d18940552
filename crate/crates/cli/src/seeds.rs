//! Deterministic derivation of per-cell RNG seeds from the base seed, so
//! error columns are bitwise-stable regardless of scheduling.

/// SplitMix64 finalizer; stable across platforms.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Seed for one benchmark cell: `(estimator, grid index, repetition)`.
pub fn cell_seed(base: u64, estimator: u64, grid_idx: usize, rep: usize) -> u64 {
    let mixed = base
        ^ splitmix64(estimator.wrapping_add(0x5151_0001))
        ^ splitmix64((grid_idx as u64).wrapping_add(0xA0A0_0002) << 1)
        ^ splitmix64((rep as u64).wrapping_add(0xC3C3_0003) << 2);
    splitmix64(mixed)
}

/// Seed for auxiliary deterministic draws (dataset materialization).
pub fn aux_seed(base: u64, tag: &str) -> u64 {
    let mut acc = base;
    for b in tag.bytes() {
        acc = splitmix64(acc ^ b as u64);
    }
    acc
}
