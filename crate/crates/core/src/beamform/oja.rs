//! Recursive eigenvector tracking with Oja-style updates.

use num_complex::Complex64;

use crate::linalg::{norm, CMat};

/// Per-bin tracker state: the unnormalized vector `W′`, its normalized
/// counterpart `W`, and the learn rate.
#[derive(Clone, Debug, PartialEq)]
pub struct OjaState {
    pub w_raw: Vec<Complex64>,
    pub w: Vec<Complex64>,
    pub alpha: f64,
}

impl OjaState {
    pub fn new(w_raw: Vec<Complex64>, alpha: f64) -> Self {
        let n = norm(&w_raw);
        let w = if n > 0.0 { w_raw.iter().map(|x| x / n).collect() } else { w_raw.clone() };
        Self { w_raw, w, alpha }
    }

    /// Trace-normalized learn rate `0.1 / tr(Φ_NN + Φ_SS)`.
    pub fn default_alpha(phi_ss: &CMat, phi_nn: &CMat) -> f64 {
        let tr = phi_ss.trace() + phi_nn.trace();
        if tr > 0.0 {
            0.1 / tr
        } else {
            0.0
        }
    }

    fn renormalize(&mut self, candidate: Vec<Complex64>) {
        let n = norm(&candidate);
        if n > 1e-150 && n.is_finite() {
            self.w = candidate.iter().map(|x| x / n).collect();
            self.w_raw = candidate;
        } else {
            log::warn!("Oja update collapsed (|W'| = {n:e}); keeping previous weights");
            self.w_raw = self.w.clone();
        }
    }
}

/// Generalized eigenvector step:
/// `W′ ← W′ − α Φ_NN W′ + α Φ_SS W`, then `W ← W′ / ‖W′‖`.
pub fn oja_step(state: &mut OjaState, phi_ss: &CMat, phi_nn: &CMat) -> Vec<Complex64> {
    let a = state.alpha;
    let nn = phi_nn.matvec(&state.w_raw);
    let ss = phi_ss.matvec(&state.w);
    let next: Vec<Complex64> = state
        .w_raw
        .iter()
        .zip(nn.iter().zip(&ss))
        .map(|(w, (n, s))| w - n * a + s * a)
        .collect();
    state.renormalize(next);
    state.w.clone()
}

/// Principal eigenvector step: `W′ ← W′ + α (Φ_SS W − W′)`, then normalize.
pub fn oja_step_ev(state: &mut OjaState, phi_ss: &CMat) -> Vec<Complex64> {
    let a = state.alpha;
    let ss = phi_ss.matvec(&state.w);
    let next: Vec<Complex64> = state.w_raw.iter().zip(&ss).map(|(w, s)| w + (s - w) * a).collect();
    state.renormalize(next);
    state.w.clone()
}

/// Principal angle between the complex lines spanned by `a` and `b`.
pub fn principal_angle(a: &[Complex64], b: &[Complex64]) -> f64 {
    let cos = crate::linalg::dot_h(a, b).norm() / (norm(a) * norm(b));
    cos.min(1.0).acos()
}
