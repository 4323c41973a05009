use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use super::ArrayGeometry;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMat};
use crate::stft::{ComplexSpectrogram, StftConfig};

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Spherically isotropic coherence `Γ_ij = sinc(2π f_k d_ij / c)`.
///
/// The matrix is real; it is returned as a [`CMat`] with zero imaginary
/// parts so it plugs straight into the Hermitian eigen solver.
pub fn spatial_coherence(array: &ArrayGeometry, k: usize, cfg: &StftConfig, speed_of_sound: f64) -> CMat {
    let f = cfg.bin_frequency(k);
    CMat::from_fn(array.num_mics(), |i, j| {
        let x = 2.0 * PI * f * array.mic_distance(i, j) / speed_of_sound;
        Complex64::new(sinc(x), 0.0)
    })
}

/// Spreads a single-channel spectrogram over the array as diffuse noise.
///
/// Per bin, `Γ(k) = E Λ Eᴴ` (negative eigenvalues clipped at zero); every
/// time-frequency point is multiplied by `U = E Λ^½ exp(iφ)` with fresh
/// phases `φ` uniform on `(-π, π]`. Phases are drawn in bin-major order
/// even for zero input, so the stream is reproducible for a given RNG.
pub fn gen_isotropic_noise<R: Rng>(
    mono: &ComplexSpectrogram,
    array: &ArrayGeometry,
    speed_of_sound: f64,
    rng: &mut R,
) -> Result<ComplexSpectrogram> {
    if mono.channels() != 1 {
        return Err(Error::ShapeMismatch(format!("expected 1 channel, got {}", mono.channels())));
    }
    let m = array.num_mics();
    let (_, bins, frames) = mono.shape();
    let mut out = ComplexSpectrogram::zeros(m, bins, frames, mono.config);
    let mut phase = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..bins {
        let gamma = spatial_coherence(array, k, &mono.config, speed_of_sound);
        let (vals, vecs) = hermitian_eigen(&gamma);
        let sqrt_vals: Vec<f64> = vals.iter().map(|&v| v.max(0.0).sqrt()).collect();
        for t in 0..frames {
            for p in phase.iter_mut() {
                // (-π, π]
                let phi = PI - rng.gen::<f64>() * 2.0 * PI;
                *p = Complex64::from_polar(1.0, phi);
            }
            let x = mono.get(0, k, t);
            for i in 0..m {
                let mut u = Complex64::new(0.0, 0.0);
                for j in 0..m {
                    u += vecs[(i, j)] * sqrt_vals[j] * phase[j];
                }
                out.set(i, k, t, u * x);
            }
        }
    }
    Ok(out)
}

/// Estimated coherence `Σ Z_i Z_j* / √(Σ|Z_i|² Σ|Z_j|²)` over all frames of bin `k`.
pub fn empirical_coherence(spec: &ComplexSpectrogram, k: usize) -> CMat {
    let m = spec.channels();
    let power: Vec<f64> = (0..m).map(|i| spec.row(i, k).iter().map(|v| v.norm_sqr()).sum()).collect();
    CMat::from_fn(m, |i, j| {
        let cross: Complex64 = spec.row(i, k).iter().zip(spec.row(j, k)).map(|(a, b)| a * b.conj()).sum();
        let denom = (power[i] * power[j]).sqrt();
        if denom > 0.0 {
            cross / denom
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}
