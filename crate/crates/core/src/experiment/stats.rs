use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("no values to resample")]
    Empty,
    #[error("level {0} outside (0, 1)")]
    Level(f64),
    #[error("resample count must be positive")]
    Resamples,
}

/// Mean that is exact when all values are equal.
fn mean(values: impl Iterator<Item = f64> + Clone, first: f64, n: usize) -> f64 {
    first + values.map(|v| v - first).sum::<f64>() / n as f64
}

fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Percentile bootstrap interval of the mean of `deltas`.
pub fn bootstrap_ci(deltas: &[f64], resamples: usize, level: f64, seed: u64) -> Result<(f64, f64), StatsError> {
    if deltas.is_empty() {
        return Err(StatsError::Empty);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::Level(level));
    }
    if resamples == 0 {
        return Err(StatsError::Resamples);
    }
    let n = deltas.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let first = deltas[idx[0]];
            mean(idx.iter().map(|i| deltas[*i]), first, n)
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((nearest_rank(&means, tail), nearest_rank(&means, 1.0 - tail)))
}
