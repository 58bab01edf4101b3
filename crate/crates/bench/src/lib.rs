//! Seeded fixtures shared by the benchmarks.

use midlstm_core::rng::SplitMix64;

/// `steps` rows of `dim` uniform values in [0, 1).
pub fn random_sequence(steps: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SplitMix64::new(seed);
    (0..steps).map(|_| (0..dim).map(|_| rng.next_f64()).collect()).collect()
}

/// Positive random-walk price paths, `[asset][day]`.
pub fn price_paths(assets: usize, days: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SplitMix64::new(seed);
    (0..assets)
        .map(|_| {
            let mut p = 100.0;
            (0..days)
                .map(|_| {
                    p *= (rng.normal(0.0005, 0.01)).exp();
                    p
                })
                .collect()
        })
        .collect()
}
