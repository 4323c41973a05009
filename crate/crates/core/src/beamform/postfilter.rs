use num_complex::Complex64;

use crate::linalg::{norm, CMat};

/// Blind analytic normalization:
/// `g = sqrt(Wᴴ Φ_NN Φ_NN W / M) / (Wᴴ Φ_NN W)`.
///
/// Falls back to `1/‖W‖` when `Φ_NN` carries no power along `W`.
pub fn postfilter_ban(w: &[Complex64], phi_nn: &CMat) -> f64 {
    let m = w.len() as f64;
    let nw = phi_nn.matvec(w);
    let num = (norm(&nw).powi(2) / m).sqrt();
    let den = phi_nn.quad_form(w);
    if den > 0.0 && num.is_finite() {
        num / den
    } else {
        fallback(w)
    }
}

/// Power-average normalization:
/// `g = sqrt(tr Φ_ZZ / (M · Wᴴ Φ_ZZ W))`, where `Φ_ZZ` is the unmasked
/// mixture PSD, so `tr Φ_ZZ` is the mean channel power and `Wᴴ Φ_ZZ W`
/// the mean beamformer output power.
pub fn postfilter_pan(w: &[Complex64], phi_zz: &CMat) -> f64 {
    let m = w.len() as f64;
    let out = phi_zz.quad_form(w);
    if out > 0.0 {
        (phi_zz.trace() / (m * out)).sqrt()
    } else {
        fallback(w)
    }
}

fn fallback(w: &[Complex64]) -> f64 {
    let n = norm(w);
    if n > 0.0 {
        1.0 / n
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot_h;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn ban_white_noise_unit_weight() {
        let w = [c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.0), c(0.0, 0.0)];
        assert!((postfilter_ban(&w, &CMat::identity(4)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ban_does_not_depend_on_white_noise_level() {
        // sqrt(σ⁴/M) / σ² = 1/√M for every σ.
        let w = [c(1.0, 0.0), c(0.0, 0.0)];
        for sigma in [0.1, 1.0, 3.0] {
            let g = postfilter_ban(&w, &CMat::identity(2).scale(sigma * sigma));
            assert!((g - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        }
    }

    #[test]
    fn postfiltered_output_is_invariant_to_weight_scale() {
        let phi = CMat::from_fn(2, |i, j| match (i, j) {
            (0, 0) => c(2.0, 0.0),
            (1, 1) => c(1.0, 0.0),
            (0, 1) => c(0.3, 0.4),
            _ => c(0.3, -0.4),
        });
        let w = [c(0.5, 0.1), c(-0.2, 0.7)];
        let z = [c(1.0, -1.0), c(0.5, 2.0)];
        let base_ban = postfilter_ban(&w, &phi) * dot_h(&w, &z);
        let base_pan = postfilter_pan(&w, &phi) * dot_h(&w, &z);
        for s in [0.1, 10.0] {
            let ws: Vec<Complex64> = w.iter().map(|x| x * s).collect();
            let ban = postfilter_ban(&ws, &phi) * dot_h(&ws, &z);
            let pan = postfilter_pan(&ws, &phi) * dot_h(&ws, &z);
            assert!((ban - base_ban).norm() < 1e-9 * base_ban.norm());
            assert!((pan - base_pan).norm() < 1e-9 * base_pan.norm());
        }
    }

    #[test]
    fn pan_equal_channel_power_selecting_one_channel() {
        let w = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        assert!((postfilter_pan(&w, &CMat::identity(3).scale(2.5)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pan_single_channel_dominant() {
        let phi = CMat::diag(&[4.0, 0.25]);
        let w = [c(1.0, 0.0), c(0.0, 0.0)];
        let expected = (4.25f64 / (2.0 * 4.0)).sqrt();
        assert!((postfilter_pan(&w, &phi) - expected).abs() < 1e-15);
    }
}
