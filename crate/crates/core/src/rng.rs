//! Deterministic pseudo-random generation.
//!
//! Every randomized operation in this crate (pivot sampling, baseline
//! retention, synthetic data, Monte-Carlo subsets) draws from the generator
//! defined here so that results are reproducible bit-for-bit across runs,
//! platforms, and reimplementations in other languages. The exact
//! construction is:
//!
//! * **SplitMix64** expands a 64-bit seed into generator state. One step is
//!   `state += 0x9E3779B97F4A7C15`, then `z = state`,
//!   `z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9`,
//!   `z = (z ^ (z >> 27)) * 0x94D049BB133111EB`, output `z ^ (z >> 31)`
//!   (all arithmetic wrapping).
//! * **Xoshiro256++** is seeded with four successive SplitMix64 outputs as
//!   `s[0]..s[3]`. Output is `rotl(s0 + s3, 23) + s0` followed by the
//!   standard state transition.
//! * `index_below(bound)` is `next_u64() % bound` (the modulo bias is
//!   negligible for the token counts involved and keeps the mapping trivial
//!   to replicate).
//! * `uniform_f64()` is `(next_u64() >> 11) as f64 * 2^-53`, in `[0, 1)`.
//! * `gaussian()` is the Box-Muller transform: draw `u1` in `(0, 1]` as
//!   `((next_u64() >> 11) + 1) as f64 * 2^-53`, then `u2 = uniform_f64()`;
//!   the pair is `r*cos(theta), r*sin(theta)` with `r = sqrt(-2 ln u1)` and
//!   `theta = 2*pi*u2`. The cosine branch is returned first, the sine branch
//!   on the following call.
//! * `sample_distinct(n, k)` is a partial Fisher-Yates shuffle of
//!   `0..n`: for `i` in `0..k`, swap position `i` with position
//!   `i + index_below(n - i)`; the first `k` entries, sorted ascending, are
//!   the sample.

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 stream, used for seeding and for deriving per-task seeds.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(SPLITMIX_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// One SplitMix64 output for `seed`; handy for deriving sub-seeds
/// (e.g. per-sample seeds `derive_seed(base + i)`).
pub fn derive_seed(seed: u64) -> u64 {
    SplitMix64::new(seed).next_u64()
}

/// Xoshiro256++ generator, seeded through SplitMix64.
#[derive(Debug, Clone)]
pub struct Xoshiro256PlusPlus {
    s: [u64; 4],
    pending_gaussian: Option<f64>,
}

impl Xoshiro256PlusPlus {
    pub fn seed_from_u64(seed: u64) -> Self {
        let mut mix = SplitMix64::new(seed);
        let s = [
            mix.next_u64(),
            mix.next_u64(),
            mix.next_u64(),
            mix.next_u64(),
        ];
        Self {
            s,
            pending_gaussian: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform index in `[0, bound)`. `bound` must be nonzero.
    pub fn index_below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        (self.next_u64() % bound as u64) as usize
    }

    /// Uniform float in `[0, 1)` with 53 random bits.
    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal deviate via Box-Muller; see module docs for the
    /// exact draw order.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(g) = self.pending_gaussian.take() {
            return g;
        }
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.pending_gaussian = Some(r * theta.sin());
        r * theta.cos()
    }

    /// `k` distinct indices drawn from `0..n` without replacement, sorted
    /// ascending. Partial Fisher-Yates as described in the module docs.
    pub fn sample_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.index_below(n - i);
            pool.swap(i, j);
        }
        let mut picked: Vec<usize> = pool[..k].to_vec();
        picked.sort_unstable();
        picked
    }

    /// Like [`sample_distinct`](Self::sample_distinct) but drawing from an
    /// explicit candidate list instead of `0..n`. Consumes generator output
    /// in the same pattern.
    pub fn sample_distinct_from(&mut self, candidates: &[usize], k: usize) -> Vec<usize> {
        debug_assert!(k <= candidates.len());
        let mut pool: Vec<usize> = candidates.to_vec();
        let n = pool.len();
        for i in 0..k {
            let j = i + self.index_below(n - i);
            pool.swap(i, j);
        }
        let mut picked: Vec<usize> = pool[..k].to_vec();
        picked.sort_unstable();
        picked
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // First three outputs for seed 1234567, cross-checked against the
        // published SplitMix64 reference implementation.
        let mut mix = SplitMix64::new(1234567);
        assert_eq!(mix.next_u64(), 6457827717110365317);
        assert_eq!(mix.next_u64(), 3203168211198807973);
        assert_eq!(mix.next_u64(), 9817491932198370423);
    }

    #[test]
    fn xoshiro_reference_values() {
        // First three outputs for seed 42 under the SplitMix64 seeding
        // scheme above, cross-checked against an independent implementation.
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(42);
        assert_eq!(rng.next_u64(), 15021278609987233951);
        assert_eq!(rng.next_u64(), 5881210131331364753);
        assert_eq!(rng.next_u64(), 18149643915985481100);
    }

    #[test]
    fn streams_are_reproducible() {
        let mut a = Xoshiro256PlusPlus::seed_from_u64(42);
        let mut b = Xoshiro256PlusPlus::seed_from_u64(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_sampling_is_distinct_and_sorted() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
        for _ in 0..100 {
            let s = rng.sample_distinct(20, 5);
            assert_eq!(s.len(), 5);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|&i| i < 20));
        }
    }

    #[test]
    fn sample_all_is_identity() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        assert_eq!(rng.sample_distinct(6, 6), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn gaussian_moments_are_sane() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
        let n = 200_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let g = rng.gaussian();
            sum += g;
            sumsq += g * g;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn uniform_range() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
        for _ in 0..10_000 {
            let u = rng.uniform_f64();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
