//! Benchmark-only crate; see `benches/prune.rs`. Shared instance builders
//! live here so benches stay declarative.

use dart_core::rng::Xoshiro256PlusPlus;
use dart_core::TokenMatrix;

/// Gaussian token matrix from the crate's documented generator.
pub fn gaussian_tokens(seed: u64, n: usize, d: usize) -> TokenMatrix {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let data: Vec<f32> = (0..n * d).map(|_| rng.gaussian() as f32).collect();
    TokenMatrix::new(n, d, data).unwrap()
}
