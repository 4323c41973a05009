//! Synthetic monaural source signals.
//!
//! No speech corpus ships with the crate, so desired and interfering talkers
//! are voiced harmonic "syllables" with random pitch and formants separated
//! by pauses, and background noise is low-passed Gaussian noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Speech-like signal with syllabic on/off structure, unit peak.
pub fn speech_like<R: Rng>(len: usize, sample_rate: u32, rng: &mut R) -> Vec<f64> {
    let fs = sample_rate as f64;
    let nyquist = fs / 2.0;
    let mut out = vec![0.0; len];
    let mut pos = (rng.gen_range(0.0..0.15) * fs) as usize;
    while pos < len {
        let dur = (rng.gen_range(0.12..0.32) * fs) as usize;
        let end = (pos + dur).min(len);
        let f0_start: f64 = rng.gen_range(95.0..220.0);
        let f0_end = f0_start * rng.gen_range(0.85..1.15);
        let f1: f64 = rng.gen_range(300.0..900.0);
        let f2: f64 = rng.gen_range(900.0..2600.0);
        let voiced = rng.gen_bool(0.85);
        let level = rng.gen_range(0.4..1.0);
        let mut phase = 0.0;
        for n in pos..end {
            let a = (n - pos) as f64 / (end - pos).max(1) as f64;
            let env = (PI * a).sin().powf(0.7) * level;
            if voiced {
                let f0 = f0_start + (f0_end - f0_start) * a;
                phase += 2.0 * PI * f0 / fs;
                let mut s = 0.0;
                let mut h = 1.0;
                while h * f0 < nyquist.min(5000.0) {
                    let f = h * f0;
                    let formant = (-((f - f1) / 150.0).powi(2)).exp() + 0.6 * (-((f - f2) / 250.0).powi(2)).exp();
                    s += (0.15 / h + formant) * (h * phase).sin();
                    h += 1.0;
                }
                out[n] = env * s;
            } else {
                let g: f64 = StandardNormal.sample(rng);
                out[n] = env * 0.5 * g;
            }
        }
        if !voiced {
            // crude high-pass for fricatives
            for n in (pos + 1..end).rev() {
                out[n] -= 0.9 * out[n - 1];
            }
        }
        pos = end + (rng.gen_range(0.04..0.25) * fs) as usize;
    }
    normalize_peak(&mut out);
    out
}

/// Low-passed Gaussian noise, unit peak.
pub fn colored_noise<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut state = 0.0;
    let mut out: Vec<f64> = (0..len)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            state = 0.8 * state + w;
            0.5 * state + w
        })
        .collect();
    normalize_peak(&mut out);
    out
}

fn normalize_peak(x: &mut [f64]) {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v /= peak);
    }
}
