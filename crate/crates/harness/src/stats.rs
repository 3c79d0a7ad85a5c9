use rand::Rng;
use strategist_core::sampling::seeded_rng;

/// Sample mean with a one-sigma band from `n_boot` resamples: `(mean, mean - s, mean + s)`
/// where `s` is the standard deviation of the resampled means.
///
/// # Panics
/// If `samples` is empty.
pub fn bootstrap_ci(samples: &[f64], n_boot: usize, seed: u64) -> (f64, f64, f64) {
    assert!(!samples.is_empty(), "bootstrap needs at least one sample");
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n_boot == 0 {
        return (mean, mean, mean);
    }
    let mut rng = seeded_rng(seed);
    let means: Vec<f64> = (0..n_boot)
        .map(|_| (0..n).map(|_| samples[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let centre = means.iter().sum::<f64>() / n_boot as f64;
    let sd = (means.iter().map(|m| (m - centre).powi(2)).sum::<f64>() / n_boot as f64).sqrt();
    (mean, mean - sd, mean + sd)
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}
