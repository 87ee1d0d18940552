//! Shared fixtures for the criterion benches: seeded random clouds and
//! marginals at the sizes the solvers are exercised at.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn uniform_weights(n: usize) -> Array1<f64> {
    Array1::from_elem(n, 1.0 / n as f64)
}

/// Seeded uniform cloud on `[0, 1]^d`.
pub fn cloud(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
    Array2::from_shape_vec((n, d), v).expect("shape matches")
}

/// Two tight Gaussian blobs, the shape where quantization shines.
pub fn peaked_cloud(n: usize, d: usize, offset: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..n * d)
        .map(|_| {
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            offset + 1e-3 * z
        })
        .collect();
    Array2::from_shape_vec((n, d), v).expect("shape matches")
}
