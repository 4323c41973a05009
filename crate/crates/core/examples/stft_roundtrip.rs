//! Analyze and resynthesize ten seconds of white noise. Samples near the
//! ends are covered by fewer frames and are not reconstructed exactly.

use maskbeam::stft::{istft, stft, StftConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> maskbeam::Result<()> {
    let cfg = StftConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..10 * cfg.sample_rate as usize).map(|_| StandardNormal.sample(&mut rng)).collect();
    let spec = stft(&[x.clone()], &cfg)?;
    let y = istft(&spec)?;
    let (m, k, t) = spec.shape();
    let interior = cfg.interior(t);
    let err = interior.clone().map(|i| (x[i] - y[0][i]).abs()).fold(0.0, f64::max);
    println!("{m} channel, {k} bins, {t} frames; max error over samples {interior:?}: {err:.3e}");
    Ok(())
}
