//! Property tests for invariants that hold on arbitrary inputs.

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use maskbeam::beamform::{
    gev_weights, mvdr_weights, postfilter_ban, postfilter_pan, psd_block_bin, psd_recursive, rayleigh_quotient,
    steering_vector,
};
use maskbeam::binkernel::binary_dot;
use maskbeam::linalg::{dot_h, hermitian_eigen, CMat};
use maskbeam::metrics::delta_snr;
use maskbeam::nn::{extract_features, mask_net_forward, Arch, MaskNetParams};
use maskbeam::quant::{pack_bits, unpack_bits, Precision};
use maskbeam::room::{ground_truth_masks, MaskTriple};
use maskbeam::stft::{istft, stft, ComplexSpectrogram, StftConfig};

fn complex() -> impl Strategy<Value = Complex64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn spectrogram(m: usize, bins: usize, frames: usize) -> impl Strategy<Value = ComplexSpectrogram> {
    prop::collection::vec(complex(), m * bins * frames).prop_map(move |data| {
        ComplexSpectrogram::from_vec(m, bins, frames, data, StftConfig::with_fft_size(2 * (bins - 1))).unwrap()
    })
}

/// Hermitian positive definite `A Aᴴ / n + ridge · I`.
fn hpd(m: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec(complex(), m * 2 * m).prop_map(move |a| {
        let mut phi = CMat::identity(m).scale(0.05);
        for col in a.chunks(m) {
            phi.add_outer_scaled(col, 1.0 / (2 * m) as f64);
        }
        phi
    })
}

fn min_eigenvalue(a: &CMat) -> f64 {
    hermitian_eigen(a).0.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn one_hot(bins: usize, frames: usize, classes: &[usize]) -> MaskTriple {
    let mut m = MaskTriple::from_vec(bins, frames, vec![0.0; bins * frames * 3]).unwrap();
    for k in 0..bins {
        for t in 0..frames {
            m.set(k, t, classes[k * frames + t], 1.0);
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stft_round_trip_on_interior(x in prop::collection::vec(-1.0..1.0f64, 64..400)) {
        let cfg = StftConfig::with_fft_size(32);
        let spec = stft(&[x.clone()], &cfg).unwrap();
        let y = istft(&spec).unwrap();
        for i in cfg.interior(spec.frames()) {
            prop_assert!((x[i] - y[0][i]).abs() < 1e-10);
        }
    }

    #[test]
    fn stft_is_linear(
        x in prop::collection::vec(-1.0..1.0f64, 128),
        y in prop::collection::vec(-1.0..1.0f64, 128),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let cfg = StftConfig::with_fft_size(16);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let (sx, sy, sm) = (stft(&[x], &cfg).unwrap(), stft(&[y], &cfg).unwrap(), stft(&[mix], &cfg).unwrap());
        for ((p, q), r) in sx.as_slice().iter().zip(sy.as_slice()).zip(sm.as_slice()) {
            prop_assert!((p * a + q * b - r).norm() < 1e-12);
        }
    }

    #[test]
    fn block_psd_is_hermitian_psd(
        z in spectrogram(3, 2, 12),
        mask in prop::collection::vec(0.0..=1.0f64, 24),
        t in 0usize..12,
        window in 1usize..16,
    ) {
        let phi = psd_block_bin(&z, &mask, 1, t, window).unwrap();
        prop_assert!(phi.max_hermitian_defect() < 1e-10);
        prop_assert!(min_eigenvalue(&phi) >= -1e-8);
    }

    #[test]
    fn recursive_psd_stays_hermitian_psd(
        prev in hpd(3),
        zs in prop::collection::vec(prop::collection::vec(complex(), 3), 1..20),
        ps in prop::collection::vec(0.0..=1.0f64, 20),
    ) {
        let mut phi = prev;
        for (z, p) in zs.iter().zip(&ps) {
            phi = psd_recursive(&phi, z, *p);
            prop_assert!(phi.max_hermitian_defect() < 1e-10);
            prop_assert!(min_eigenvalue(&phi) >= -1e-8);
        }
    }

    #[test]
    fn mvdr_is_distortionless(phi_ss in hpd(4), phi_nn in hpd(4)) {
        let v = steering_vector(&phi_ss).unwrap();
        let w = mvdr_weights(&phi_nn, &v).unwrap();
        prop_assert!((dot_h(&w, &v) - 1.0).norm() < 1e-10);
    }

    #[test]
    fn mvdr_ignores_noise_scale(phi_ss in hpd(3), phi_nn in hpd(3), c in 0.01..100.0f64) {
        let v = steering_vector(&phi_ss).unwrap();
        let w = mvdr_weights(&phi_nn, &v).unwrap();
        let wc = mvdr_weights(&phi_nn.scale(c), &v).unwrap();
        for (a, b) in w.iter().zip(&wc) {
            prop_assert!((a - b).norm() < 1e-9 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn gev_beats_random_directions(
        phi_ss in hpd(4),
        phi_nn in hpd(4),
        dirs in prop::collection::vec(prop::collection::vec(complex(), 4), 32),
    ) {
        let (w, xi) = gev_weights(&phi_ss, &phi_nn).unwrap();
        prop_assert!((crate_norm(&w) - 1.0).abs() < 1e-12);
        for u in &dirs {
            if crate_norm(u) > 1e-6 {
                prop_assert!(rayleigh_quotient(&phi_ss, &phi_nn, u) - xi <= 1e-8 * xi.abs().max(1.0));
            }
        }
    }

    #[test]
    fn postfilters_cancel_weight_scale(
        phi in hpd(4),
        w in prop::collection::vec(complex(), 4),
        z in prop::collection::vec(complex(), 4),
        c in prop::sample::select(vec![0.1, 1.0, 10.0]),
    ) {
        prop_assume!(crate_norm(&w) > 1e-3);
        let wc: Vec<Complex64> = w.iter().map(|x| x * c).collect();
        for f in [postfilter_ban, postfilter_pan] {
            let y = dot_h(&w, &z) * f(&w, &phi);
            let yc = dot_h(&wc, &z) * f(&wc, &phi);
            prop_assert!((y - yc).norm() <= 1e-9 * y.norm().max(1e-300));
        }
    }

    #[test]
    fn fixed_point_error_is_half_step(x in -2.0..1.99f64) {
        for p in [Precision::Q2_6, Precision::Q2_2] {
            let (lo, hi) = p.value_range().unwrap();
            let q = p.quantize_value(x);
            prop_assert!(q >= lo && q <= hi);
            if x <= hi {
                prop_assert!((q - x).abs() <= p.step().unwrap() / 2.0);
            }
            prop_assert_eq!(p.quantize_value(q), q);
        }
    }

    #[test]
    fn quantization_is_monotone(a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        for p in Precision::ALL {
            prop_assert!(p.quantize_value(a) <= p.quantize_value(b));
        }
    }

    #[test]
    fn bit_packing_round_trips(x in prop::collection::vec(-1.0..1.0f64, 0..300)) {
        let signs: Vec<f64> = x.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).collect();
        prop_assert_eq!(unpack_bits(&pack_bits(&x), x.len()), signs);
    }

    #[test]
    fn binary_dot_matches_sum(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..300)) {
        let x: Vec<f64> = pairs.iter().map(|p| if p.0 { 1.0 } else { -1.0 }).collect();
        let y: Vec<f64> = pairs.iter().map(|p| if p.1 { 1.0 } else { -1.0 }).collect();
        let want: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        prop_assert_eq!(binary_dot(&pack_bits(&x), &pack_bits(&y), x.len()).unwrap() as f64, want);
    }

    #[test]
    fn ground_truth_masks_are_one_hot(s in spectrogram(2, 3, 6), n in spectrogram(2, 3, 6), eps in 0.0..1.0f64) {
        let masks = ground_truth_masks(&s, &n, &[eps; 3]).unwrap();
        prop_assert!(masks.is_one_hot());
        prop_assert!(masks.max_sum_defect() < 1e-12);
    }

    #[test]
    fn delta_snr_ignores_output_gain(
        z in spectrogram(2, 2, 4),
        y in spectrogram(1, 2, 4),
        g in 1e-3..1e3f64,
    ) {
        let masks = one_hot(2, 4, &[0, 1, 2, 0, 1, 1, 0, 2]);
        let a = delta_snr(&y, &z, &masks);
        let mut yg = y.clone();
        yg.scale(g);
        let b = delta_snr(&yg, &z, &masks);
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!((a.db - b.db).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn network_masks_sum_to_one(z in spectrogram(2, 3, 5), seed in any::<u64>(), p in prop::sample::select(Precision::ALL.to_vec())) {
        let params = MaskNetParams::init(Arch::new(3, 2).unwrap(), p, &mut ChaCha8Rng::seed_from_u64(seed));
        let masks = mask_net_forward(&params, &extract_features(&z).unwrap()).unwrap();
        prop_assert!(masks.max_sum_defect() < 1e-6);
        prop_assert!(masks.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

fn crate_norm(v: &[Complex64]) -> f64 {
    maskbeam::linalg::norm(v)
}
