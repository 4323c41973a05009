//! Small learnable mask task: per-bin Markov class sequences rendered with
//! fixed spatial signatures for the speech and interference classes.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Example;
use crate::error::{Error, Result};
use crate::nn::extract_features;
use crate::room::MaskTriple;
use crate::stft::{ComplexSpectrogram, StftConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ToyTask {
    pub bins: usize,
    pub mics: usize,
    pub frames: usize,
    pub train: usize,
    pub validation: usize,
    /// Probability that a bin keeps its class from one frame to the next.
    pub stay: f64,
    /// Standard deviation of the sensor noise relative to unit-power sources.
    pub noise: f64,
    pub seed: u64,
}

impl Default for ToyTask {
    fn default() -> Self {
        Self { bins: 4, mics: 4, frames: 40, train: 48, validation: 8, stay: 0.85, noise: 0.1, seed: 1 }
    }
}

fn cn<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn unit_vector<R: Rng>(m: usize, rng: &mut R) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..m).map(|_| cn(rng)).collect();
    let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|c| c / n).collect()
}

impl ToyTask {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 || self.mics < 2 || self.frames == 0 {
            return Err(Error::InvalidConfig("toy task needs bins > 0, mics >= 2 and frames > 0".into()));
        }
        if self.train == 0 || self.validation == 0 {
            return Err(Error::EmptyDataset);
        }
        if !(0.0..=1.0).contains(&self.stay) || !(self.noise >= 0.0) {
            return Err(Error::InvalidConfig("stay must lie in [0,1] and noise must be non-negative".into()));
        }
        Ok(())
    }

    /// `(train, validation)` examples with one-hot targets.
    pub fn generate(&self) -> Result<(Vec<Example>, Vec<Example>)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let speech: Vec<Vec<Complex64>> = (0..self.bins).map(|_| unit_vector(self.mics, &mut rng)).collect();
        let interf: Vec<Vec<Complex64>> = (0..self.bins).map(|_| unit_vector(self.mics, &mut rng)).collect();
        let mut all = Vec::with_capacity(self.train + self.validation);
        for _ in 0..self.train + self.validation {
            all.push(self.utterance(&speech, &interf, &mut rng)?);
        }
        let val = all.split_off(self.train);
        Ok((all, val))
    }

    fn utterance(&self, speech: &[Vec<Complex64>], interf: &[Vec<Complex64>], rng: &mut ChaCha8Rng) -> Result<Example> {
        let (kk, m, tt) = (self.bins, self.mics, self.frames);
        let mut z = ComplexSpectrogram::zeros(m, kk, tt, StftConfig::with_fft_size(2 * (kk - 1).max(1)));
        let mut target = MaskTriple::from_vec(kk, tt, vec![0.0; kk * tt * 3])?;
        for k in 0..kk {
            let mut class = rng.gen_range(0..3);
            for t in 0..tt {
                if t > 0 && rng.gen::<f64>() >= self.stay {
                    class = (class + rng.gen_range(1..3)) % 3;
                }
                target.set(k, t, class, 1.0);
                let src = cn(rng);
                for i in 0..m {
                    let mut v = cn(rng) * self.noise;
                    match class {
                        0 => v += speech[k][i] * src,
                        1 => v += interf[k][i] * src,
                        _ => {}
                    }
                    z.set(i, k, t, v);
                }
            }
        }
        let features = extract_features(&z)?;
        Ok(Example { features, target })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_one_hot() {
        let task = ToyTask::default();
        let (a, va) = task.generate().unwrap();
        let (b, _) = task.generate().unwrap();
        assert_eq!(a.len(), 48);
        assert_eq!(va.len(), 8);
        assert_eq!(a[3].features, b[3].features);
        assert!(a.iter().all(|e| e.target.is_one_hot()));
    }

    #[test]
    fn classes_persist_with_high_stay_probability() {
        let task = ToyTask { stay: 1.0, ..ToyTask::default() };
        let (ex, _) = task.generate().unwrap();
        let t = &ex[0].target;
        for k in 0..task.bins {
            assert!((1..task.frames).all(|f| t.argmax(k, f) == t.argmax(k, 0)));
        }
    }
}
