use crate::nn::params::{MaskNetParams, Role, L1_S, L4_S};
use crate::quant::Precision;

/// Lower bound kept on binary recurrent scales after each update.
pub const MIN_BINARY_SCALE: f64 = 1e-3;

/// ADAM moments for every stored tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &MaskNetParams, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        Self { m: zeros.clone(), v: zeros, step: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// One update of the full-precision values. The quantized view used by
    /// the forward pass is derived from them on every read.
    pub fn step(&mut self, params: &mut MaskNetParams, grads: &[Vec<f64>]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, (t, g)) in params.tensors.iter_mut().zip(grads).enumerate() {
            if t.role == Role::Stat {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..t.data.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                t.data[j] -= self.lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + self.eps);
            }
        }
        if params.precision == Precision::Bin1 {
            // Binarized values stay inside the straight-through window.
            for t in params.tensors.iter_mut().filter(|t| t.role == Role::Weight) {
                t.data.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
            }
            for s in [L1_S, L4_S] {
                params.tensors[s].data.iter_mut().for_each(|v| *v = v.max(MIN_BINARY_SCALE));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{Arch, L3_W};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> MaskNetParams {
        MaskNetParams::init(Arch::new(2, 1).unwrap(), Precision::Q2_2, &mut ChaCha8Rng::seed_from_u64(1))
    }

    #[test]
    fn zero_gradient_leaves_values_unchanged() {
        let mut p = params();
        let before = p.clone();
        let mut adam = AdamState::new(&p, 1e-3);
        let zeros: Vec<Vec<f64>> = p.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        adam.step(&mut p, &zeros);
        assert_eq!(p, before);
    }

    #[test]
    fn constant_gradient_moves_by_the_learn_rate() {
        let mut p = params();
        let mut adam = AdamState::new(&p, 1e-3);
        let mut g: Vec<Vec<f64>> = p.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        g[L3_W][0] = 37.5;
        // Scalar reference of the same recursion.
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, p.tensors[L3_W].data[0]);
        for step in 1..=200 {
            let before = p.tensors[L3_W].data[0];
            adam.step(&mut p, &g);
            m = 0.9 * m + 0.1 * 37.5;
            v = 0.999 * v + 0.001 * 37.5 * 37.5;
            x -= 1e-3 * (m / (1.0 - 0.9f64.powi(step))) / ((v / (1.0 - 0.999f64.powi(step))).sqrt() + 1e-8);
            assert!((p.tensors[L3_W].data[0] - x).abs() < 1e-12);
            assert!(((before - p.tensors[L3_W].data[0]) - 1e-3).abs() < 1e-9);
        }
    }

    #[test]
    fn binary_values_are_clipped_to_the_ste_window() {
        let mut p = MaskNetParams::init(Arch::new(2, 1).unwrap(), Precision::Bin1, &mut ChaCha8Rng::seed_from_u64(2));
        let mut adam = AdamState::new(&p, 5.0);
        let g: Vec<Vec<f64>> = p.tensors.iter().map(|t| vec![-1.0; t.len()]).collect();
        adam.step(&mut p, &g);
        assert!(p.tensors[L3_W].data.iter().all(|v| *v == 1.0));
        assert!(p.tensors[L1_S].data.iter().all(|v| *v > 1.0));
    }

    #[test]
    fn quantized_view_follows_the_update() {
        let mut p = params();
        let mut adam = AdamState::new(&p, 0.3);
        let g: Vec<Vec<f64>> = p.tensors.iter().map(|t| vec![1.0; t.len()]).collect();
        adam.step(&mut p, &g);
        let eff = p.effective();
        for (t, e) in p.tensors.iter().zip(&eff) {
            if t.role != Role::Float && t.role != Role::Stat {
                for (a, b) in t.data.iter().zip(e) {
                    assert_eq!(Precision::Q2_2.quantize_value(*a), *b);
                }
            }
        }
    }
}
