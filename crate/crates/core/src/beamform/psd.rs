use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::stft::ComplexSpectrogram;

/// Speech and interference PSD matrices for every bin.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdPair {
    pub phi_ss: Vec<CMat>,
    pub phi_nn: Vec<CMat>,
    /// Frame of the most recent update.
    pub frame: usize,
}

impl PsdPair {
    /// Block estimates for all bins centred on frame `t`.
    pub fn block(z: &ComplexSpectrogram, speech: &[f64], interference: &[f64], t: usize, window: usize) -> Result<Self> {
        Ok(Self {
            phi_ss: psd_block(z, speech, t, window)?,
            phi_nn: psd_block(z, interference, t, window)?,
            frame: t,
        })
    }

    /// Recursive update of every bin with frame `t`.
    pub fn update(&mut self, z: &ComplexSpectrogram, speech: &[f64], interference: &[f64], t: usize) {
        for k in 0..self.phi_ss.len() {
            let zt = z.vector(k, t);
            let idx = k * z.frames() + t;
            self.phi_ss[k] = psd_recursive(&self.phi_ss[k], &zt, speech[idx]);
            self.phi_nn[k] = psd_recursive(&self.phi_nn[k], &zt, interference[idx]);
        }
        self.frame = t;
    }
}

pub(crate) fn check_mask(z: &ComplexSpectrogram, mask: &[f64]) -> Result<()> {
    if mask.len() != z.bins() * z.frames() {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} entries, spectrogram has {}x{} bins",
            mask.len(),
            z.bins(),
            z.frames()
        )));
    }
    if let Some(v) = mask.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidConfig(format!("mask value {v} outside [0, 1]")));
    }
    Ok(())
}

/// Frames `t - L/2 ..= t + L/2`, clipped to the utterance.
pub fn block_range(t: usize, window: usize, frames: usize) -> std::ops::Range<usize> {
    let half = window / 2;
    t.saturating_sub(half)..(t + half + 1).min(frames)
}

/// Masked block estimate `(1/L) Σ_l Z(k,l) Z(k,l)ᴴ mask(k,l)` for one bin.
pub fn psd_block_bin(z: &ComplexSpectrogram, mask: &[f64], k: usize, t: usize, window: usize) -> Result<CMat> {
    if window == 0 {
        return Err(Error::InvalidConfig("PSD window length must be at least 1".into()));
    }
    let frames = z.frames();
    let mut phi = CMat::zeros(z.channels());
    let mut zl = vec![Complex64::new(0.0, 0.0); z.channels()];
    for l in block_range(t, window, frames) {
        let p = mask[k * frames + l];
        if p == 0.0 {
            continue;
        }
        for (m, v) in zl.iter_mut().enumerate() {
            *v = z.get(m, k, l);
        }
        phi.add_outer_scaled(&zl, p);
    }
    Ok(phi.scale(1.0 / window as f64))
}

/// Block estimates of every bin at frame `t`. `mask` is `bins × frames` row-major.
pub fn psd_block(z: &ComplexSpectrogram, mask: &[f64], t: usize, window: usize) -> Result<Vec<CMat>> {
    check_mask(z, mask)?;
    (0..z.bins()).map(|k| psd_block_bin(z, mask, k, t, window)).collect()
}

/// Block estimates of one bin for every frame, computed with a sliding sum.
pub fn psd_block_series(z: &ComplexSpectrogram, mask: &[f64], k: usize, window: usize) -> Result<Vec<CMat>> {
    if window == 0 {
        return Err(Error::InvalidConfig("PSD window length must be at least 1".into()));
    }
    let frames = z.frames();
    let m = z.channels();
    let outer = |l: usize| {
        let p = mask[k * frames + l];
        let zl = z.vector(k, l);
        let mut o = CMat::zeros(m);
        o.add_outer_scaled(&zl, p);
        o
    };
    let mut out = Vec::with_capacity(frames);
    let mut sum = CMat::zeros(m);
    let mut range = 0..0;
    for t in 0..frames {
        let next = block_range(t, window, frames);
        while range.end < next.end {
            sum = sum.add(&outer(range.end));
            range.end += 1;
        }
        while range.start < next.start {
            sum = sum.sub(&outer(range.start));
            range.start += 1;
        }
        // Re-accumulate periodically so the sliding sum cannot drift.
        if t % 64 == 63 {
            sum = CMat::zeros(m);
            for l in range.clone() {
                sum = sum.add(&outer(l));
            }
        }
        out.push(sum.scale(1.0 / window as f64));
    }
    Ok(out)
}

/// `Φ ← Φ_prev (1 - p) + z zᴴ p`
pub fn psd_recursive(phi_prev: &CMat, z: &[Complex64], p: f64) -> CMat {
    let mut phi = phi_prev.scale(1.0 - p);
    phi.add_outer_scaled(z, p);
    phi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::StftConfig;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn two_frames() -> ComplexSpectrogram {
        // M = 2, K = 1, T = 2: Z(0) = [1, 0], Z(1) = [0, 1]
        ComplexSpectrogram::from_vec(2, 1, 2, vec![c(1.0), c(0.0), c(0.0), c(1.0)], StftConfig::with_fft_size(16)).unwrap()
    }

    #[test]
    fn two_frame_hand_example() {
        let z = two_frames();
        let phi = psd_block_bin(&z, &[1.0, 1.0], 0, 0, 2).unwrap();
        assert_eq!(phi, CMat::diag(&[0.5, 0.5]));
    }

    #[test]
    fn zero_mask_gives_zero_matrix() {
        let z = two_frames();
        assert_eq!(psd_block_bin(&z, &[0.0, 0.0], 0, 1, 2).unwrap(), CMat::zeros(2));
    }

    #[test]
    fn zero_window_is_an_error() {
        assert!(psd_block_bin(&two_frames(), &[1.0, 1.0], 0, 0, 0).is_err());
    }

    #[test]
    fn mask_out_of_range_is_an_error() {
        assert!(psd_block(&two_frames(), &[1.5, 0.0], 0, 2).is_err());
    }

    #[test]
    fn recursive_hand_example() {
        let phi = psd_recursive(&CMat::identity(2), &[c(1.0), c(0.0)], 0.5);
        assert_eq!(phi, CMat::diag(&[1.0, 0.5]));
        let z = [Complex64::new(1.0, 2.0), c(-1.0)];
        assert_eq!(psd_recursive(&CMat::identity(2), &z, 1.0), CMat::outer(&z));
        assert_eq!(psd_recursive(&CMat::identity(2), &z, 0.0), CMat::identity(2));
    }

    #[test]
    fn sliding_series_matches_direct_blocks() {
        let cfg = StftConfig::with_fft_size(16);
        let data: Vec<Complex64> = (0..3 * 2 * 150).map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let z = ComplexSpectrogram::from_vec(3, 2, 150, data, cfg).unwrap();
        let mask: Vec<f64> = (0..300).map(|i| ((i * 7) % 10) as f64 / 10.0).collect();
        let series = psd_block_series(&z, &mask, 1, 32).unwrap();
        for t in [0, 10, 70, 149] {
            let direct = psd_block_bin(&z, &mask, 1, t, 32).unwrap();
            assert!(series[t].sub(&direct).frobenius() < 1e-12);
        }
    }
}
