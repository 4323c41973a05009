//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use maskbeam::beamform::{
    beamform, gev_weights, mvdr_weights, oja_step, postfilter_ban, postfilter_pan, principal_angle,
    rayleigh_quotient, steering_vector, BeamformConfig, BeamformerKind, OjaState, PsdMode,
};
use maskbeam::binkernel::{bench_matmul, binary_matmul, PackedBitMatrix};
use maskbeam::linalg::{dot_h, CMat};
use maskbeam::metrics::delta_snr;
use maskbeam::nn::complexity_report;
use maskbeam::nn::params::Role;
use maskbeam::nn::{Arch, MaskNetParams};
use maskbeam::quant::{dequantize, quantize, Precision};
use maskbeam::room::{build_scenario, MaskTriple, ScenarioConfig};
use maskbeam::stft::{istft, stft, StftConfig};
use maskbeam::train::{
    loss_and_gradients, mask_accuracy, plurality_baseline, train, twin_deviation, ToyTask, TrainConfig, TrainOutcome,
};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < limit, format!("took {t:.1?}, limit {limit:?}"))?;
    Ok(t)
}

fn cn<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im)
}

/// `A Aᴴ / cols + ridge · I` for a random `m × cols` matrix `A`.
fn random_psd<R: Rng>(m: usize, cols: usize, ridge: f64, rng: &mut R) -> CMat {
    let a: Vec<Vec<Complex64>> = (0..cols).map(|_| (0..m).map(|_| cn(rng)).collect()).collect();
    let mut phi = CMat::identity(m).scale(ridge);
    for col in &a {
        phi.add_outer_scaled(col, 1.0 / cols as f64);
    }
    phi
}

fn unit<R: Rng>(m: usize, rng: &mut R) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..m).map(|_| cn(rng)).collect();
    let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|c| c / n).collect()
}

fn to_na(a: &CMat) -> DMatrix<Complex64> {
    let m = a.dim();
    DMatrix::from_fn(m, m, |i, j| a.as_slice()[i * m + j])
}

/// Dominant generalized eigenpair of `(Φ_SS, Φ_NN)` through nalgebra's
/// Cholesky factorization and Hermitian eigensolver.
fn gevd_oracle(phi_ss: &CMat, phi_nn: &CMat) -> (f64, Vec<Complex64>) {
    let l = to_na(phi_nn).cholesky().expect("positive definite").l();
    let l_inv = l.clone().try_inverse().expect("invertible factor");
    let c = &l_inv * to_na(phi_ss) * l_inv.adjoint();
    let c = (&c + c.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(c);
    let (idx, xi) = eig.eigenvalues.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    let u: DVector<Complex64> = eig.eigenvectors.column(idx).into_owned();
    let w = l_inv.adjoint() * u;
    (xi, w.iter().copied().collect())
}

fn c1_complexity() -> Check {
    let start = Instant::now();
    let r = complexity_report(6, 513, 500);
    let weights: Vec<u64> = r.network.iter().map(|row| row.weights).collect();
    ensure(weights == [590976, 6156, 526338, 8421408, 1579014], format!("layer weights {weights:?}"))?;
    ensure(r.total_weights() == 11123892, format!("total weights {}", r.total_weights()))?;
    let printed: Vec<f64> = r.network.iter().map(|row| row.printed_macs_millions()).collect();
    ensure(printed == [295.0, 3.0, 263.0, 4211.0, 790.0], format!("layer MACs {printed:?}"))?;
    let totals = (
        maskbeam::nn::ComplexityReport::printed_total(&r.network),
        maskbeam::nn::ComplexityReport::printed_total(&r.static_gev),
        maskbeam::nn::ComplexityReport::printed_total(&r.dynamic_gev),
    );
    ensure(totals == (5562.0, 18.1, 73.0), format!("MAC totals {totals:?}"))?;
    let t = within(start, Duration::from_secs(1))?;
    Ok(format!("weights 11123892, MACs 5562e6 / 18.1e6 / 73e6 ({t:.1?})"))
}

fn naive_product(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<i64> {
    let mut c = vec![0i64; n * m];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[p * m + j];
            }
            c[i * m + j] = s as i64;
        }
    }
    c
}

fn c2_binary_correctness() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    // Log-uniform sizes in 1..=512, with the largest square case forced first.
    let dim = |rng: &mut ChaCha8Rng| 512f64.powf(rng.gen::<f64>()).ceil().clamp(1.0, 512.0) as usize;
    for case in 0..1000 {
        let (n, k, m) = if case < 2 { (512, 512, 512) } else { (dim(&mut rng), dim(&mut rng), dim(&mut rng)) };
        let sign = |rng: &mut ChaCha8Rng| if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let a: Vec<f64> = (0..n * k).map(|_| sign(&mut rng)).collect();
        let b: Vec<f64> = (0..k * m).map(|_| sign(&mut rng)).collect();
        let pa = PackedBitMatrix::from_signs(n, k, &a).map_err(|e| e.to_string())?;
        let pbt = PackedBitMatrix::transposed_from_signs(k, m, &b).map_err(|e| e.to_string())?;
        let c = binary_matmul(&pa, &pbt).map_err(|e| e.to_string())?;
        let oracle = naive_product(&a, &b, n, k, m);
        ensure(c.iter().zip(&oracle).all(|(x, y)| *x as i64 == *y), format!("case {case} ({n}x{k}x{m}) differs"))?;
    }
    let t = within(start, Duration::from_secs(30))?;
    Ok(format!("1000 products exact ({t:.1?})"))
}

fn c3_binary_speed() -> Check {
    let small = bench_matmul(&[256, 512], 3, 3).map_err(|e| e.to_string())?;
    let big = bench_matmul(&[1024], 3, 3).map_err(|e| e.to_string())?;
    let info: Vec<String> = small.iter().map(|r| format!("{}: {:.1}x", r.size, r.speedup)).collect();
    let r = &big[0];
    ensure(r.exact, "binary result differs at 1024")?;
    ensure(r.speedup >= 2.0, format!("speedup {:.2} at 1024", r.speedup))?;
    Ok(format!("1024: {:.1}x ({:.1} vs {:.1} ms); reported {}", r.speedup, r.time_float_ms, r.time_binary_ms, info.join(", ")))
}

fn c4_beamformer_math() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_mvdr = 0.0f64;
    let mut worst_gev = 0.0f64;
    let mut worst_opt = f64::NEG_INFINITY;
    for case in 0..1000 {
        let m = 2 + case % 7;
        let phi_ss = random_psd(m, m + 2, 0.0, &mut rng);
        let phi_nn = random_psd(m, 2 * m, 0.05, &mut rng);
        let v = steering_vector(&phi_ss).map_err(|e| e.to_string())?;
        let w = mvdr_weights(&phi_nn, &v).map_err(|e| e.to_string())?;
        worst_mvdr = worst_mvdr.max((dot_h(&w, &v) - 1.0).norm());

        let (wg, xi) = gev_weights(&phi_ss, &phi_nn).map_err(|e| e.to_string())?;
        let (xi_ref, _) = gevd_oracle(&phi_ss, &phi_nn);
        worst_gev = worst_gev.max((xi - xi_ref).abs() / xi_ref.abs());
        if case < 20 {
            for _ in 0..1000 {
                let u = unit(m, &mut rng);
                worst_opt = worst_opt.max(rayleigh_quotient(&phi_ss, &phi_nn, &u) - rayleigh_quotient(&phi_ss, &phi_nn, &wg));
            }
        }
    }
    ensure(worst_mvdr < 1e-10, format!("MVDR |Wᴴv - 1| = {worst_mvdr:e}"))?;
    ensure(worst_gev < 1e-8, format!("GEV relative eigenvalue error {worst_gev:e}"))?;
    ensure(worst_opt <= 1e-8, format!("random vector beats GEV by {worst_opt:e}"))?;

    let mut worst_angle = 0.0f64;
    for _ in 0..20 {
        let m = 4;
        let a = unit(m, &mut rng);
        let mut phi_ss = random_psd(m, m, 0.0, &mut rng).scale(0.3);
        phi_ss.add_outer_scaled(&a, 3.0);
        let phi_nn = random_psd(m, 2 * m, 0.0, &mut rng).scale(0.3).add(&CMat::identity(m));
        let (_, w_ref) = gevd_oracle(&phi_ss, &phi_nn);
        let mut state = OjaState::new(unit(m, &mut rng), 0.1);
        for _ in 0..500 {
            oja_step(&mut state, &phi_ss, &phi_nn);
        }
        worst_angle = worst_angle.max(principal_angle(&state.w, &w_ref));
    }
    ensure(worst_angle < 1e-3, format!("Oja angle {worst_angle:e} rad after 500 steps"))?;
    Ok(format!(
        "MVDR {worst_mvdr:.1e}, GEV {worst_gev:.1e} relative, Oja {worst_angle:.1e} rad after 500 steps"
    ))
}

fn c5_postfilter_invariance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let m = 6;
        let phi_nn = random_psd(m, 3 * m, 0.01, &mut rng);
        let phi_zz = random_psd(m, 3 * m, 0.01, &mut rng);
        let w = unit(m, &mut rng);
        let z: Vec<Complex64> = (0..m).map(|_| cn(&mut rng)).collect();
        for c in [0.1, 10.0] {
            let wc: Vec<Complex64> = w.iter().map(|x| x * c).collect();
            for (g, gc) in [
                (postfilter_ban(&w, &phi_nn), postfilter_ban(&wc, &phi_nn)),
                (postfilter_pan(&w, &phi_zz), postfilter_pan(&wc, &phi_zz)),
            ] {
                let y = dot_h(&w, &z) * g;
                let yc = dot_h(&wc, &z) * gc;
                worst = worst.max((y - yc).norm() / y.norm());
            }
        }
    }
    ensure(worst < 1e-9, format!("relative output change {worst:e}"))?;
    Ok(format!("BAN and PAN outputs agree within {worst:.1e} for c in {{0.1, 10}}"))
}

fn c6_stft() -> Check {
    let cfg = StftConfig { sample_rate: 16000, ..StftConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x: Vec<f64> = (0..10 * 16000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let spec = stft(&[x.clone()], &cfg).map_err(|e| e.to_string())?;
    let y = istft(&spec).map_err(|e| e.to_string())?;
    let range = cfg.interior(spec.frames());
    let err = range.clone().map(|i| (x[i] - y[0][i]).abs()).fold(0.0, f64::max);
    ensure(err < 1e-10, format!("round-trip error {err:e}"))?;
    Ok(format!("max error {err:.1e} over samples {range:?}"))
}

fn c7_end_to_end() -> Check {
    let start = Instant::now();
    let sc = build_scenario(&ScenarioConfig { id: 2, seed: 7, ..ScenarioConfig::default() }).map_err(|e| e.to_string())?;
    let cfg = BeamformConfig { kind: BeamformerKind::GevBan, psd: PsdMode::Block, ..BeamformConfig::default() };
    let (y, _) = beamform(&sc.mixture, &sc.masks, &cfg).map_err(|e| e.to_string())?;
    let oracle = delta_snr(&y, &sc.mixture, &sc.masks).map_err(|e| e.to_string())?;
    let uniform = MaskTriple::uniform(sc.masks.bins(), sc.masks.frames());
    let (yu, _) = beamform(&sc.mixture, &uniform, &cfg).map_err(|e| e.to_string())?;
    let base = delta_snr(&yu, &sc.mixture, &sc.masks).map_err(|e| e.to_string())?;
    let detail = format!("oracle {:.2} dB, uniform {:.2} dB", oracle.db, base.db);
    ensure(!oracle.capped, format!("{detail}: oracle result capped"))?;
    ensure(oracle.db >= 5.0, format!("{detail}: oracle below 5 dB"))?;
    ensure(oracle.db - base.db >= 3.0, format!("{detail}: margin below 3 dB"))?;
    let t = within(start, Duration::from_secs(120))?;
    Ok(format!("{detail} ({t:.1?})"))
}

fn c8_quantization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut report = Vec::new();
    for p in [Precision::Q2_6, Precision::Q2_2] {
        let step = p.step().expect("fixed point");
        let (lo, hi) = p.value_range().expect("fixed point");
        let x: Vec<f64> = (0..1_000_000).map(|_| rng.gen_range(lo..=hi)).collect();
        let q = dequantize(&quantize(&x, &[x.len()], p).map_err(|e| e.to_string())?);
        let mut worst = 0.0f64;
        for (a, b) in x.iter().zip(&q) {
            ensure(*b == p.quantize_value(*a), format!("{p}: tensor and scalar quantizers disagree at {a}"))?;
            worst = worst.max((a - b).abs());
        }
        ensure(worst <= step / 2.0, format!("{p}: error {worst} above half step"))?;
        for (v, want) in [(lo, lo), (hi, hi), (2.0, hi), (1e9, hi), (lo - step, lo), (-1e9, lo)] {
            let got = p.quantize_value(v);
            ensure(got == want, format!("{p}: Q({v}) = {got}, expected {want}"))?;
        }
        report.push(format!("{p} max error {worst:.2e} (half step {:.2e})", step / 2.0));
    }
    Ok(format!("{}; saturation exact", report.join(", ")))
}

fn gradient_check() -> Result<f64, String> {
    let task = ToyTask { bins: 2, mics: 2, frames: 3, train: 1, validation: 1, ..ToyTask::default() };
    let (tr, _) = task.generate().map_err(|e| e.to_string())?;
    let params = MaskNetParams::init(Arch::new(2, 2).map_err(|e| e.to_string())?, Precision::F32, &mut ChaCha8Rng::seed_from_u64(9));
    let (_, grads) = loss_and_gradients(&params, &[&tr[0]]).map_err(|e| e.to_string())?;
    let loss = |p: &MaskNetParams| loss_and_gradients(p, &[&tr[0]]).map(|r| r.0).map_err(|e| e.to_string());
    let mut worst = 0.0f64;
    for (i, t) in params.tensors.iter().enumerate() {
        if t.role == Role::Stat {
            continue;
        }
        for j in 0..t.len() {
            // Central-difference step balancing truncation against roundoff.
            let h = f64::EPSILON.cbrt() * t.data[j].abs().max(1.0);
            let mut up = params.clone();
            up.tensors[i].data[j] += h;
            let mut down = params.clone();
            down.tensors[i].data[j] -= h;
            let num = (loss(&up)? - loss(&down)?) / (2.0 * h);
            let err = (num - grads[i][j]).abs() / (num.abs() + grads[i][j].abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

struct Trained {
    f32: TrainOutcome,
    q2_6: TrainOutcome,
    bin1: TrainOutcome,
    twin: f64,
    bin1_accuracy: f64,
    baseline: f64,
    elapsed: Duration,
}

fn train_toy() -> Result<Trained, String> {
    let start = Instant::now();
    let (tr, va) = ToyTask::default().generate().map_err(|e| e.to_string())?;
    let run = |precision| train(&TrainConfig { precision, ..TrainConfig::default() }, &tr, &va).map_err(|e| e.to_string());
    let f32 = run(Precision::F32)?;
    let q2_6 = run(Precision::Q2_6)?;
    let bin1 = run(Precision::Bin1)?;
    let twin = twin_deviation(&q2_6.best, &va).map_err(|e| e.to_string())?;
    let bin1_accuracy = mask_accuracy(&bin1.best, &va).map_err(|e| e.to_string())?;
    Ok(Trained { f32, q2_6, bin1, twin, bin1_accuracy, baseline: plurality_baseline(&va), elapsed: start.elapsed() })
}

fn c9_training(trained: &Result<Trained, String>) -> Check {
    let start = Instant::now();
    let fd = gradient_check()?;
    ensure(fd < 1e-4, format!("finite-difference relative error {fd:e}"))?;
    let t = trained.as_ref().map_err(Clone::clone)?;
    let (first, min) = (t.f32.first_train_loss(), t.f32.min_train_loss());
    ensure(min <= 0.5 * first, format!("f32 train loss {first:.4} -> {min:.4} is not halved"))?;
    ensure(t.twin < 0.1, format!("q2.6 deviates from its f32 twin by {:.4}", t.twin))?;
    ensure(
        t.bin1_accuracy > t.baseline,
        format!("bin1 accuracy {:.3} not above baseline {:.3}", t.bin1_accuracy, t.baseline),
    )?;
    let total = t.elapsed + start.elapsed();
    ensure(total < Duration::from_secs(600), format!("took {total:.1?}"))?;
    Ok(format!(
        "FD {fd:.1e}; f32 loss {first:.3} -> {min:.3}; q2.6 twin {:.4}; bin1 accuracy {:.3} > {:.3} ({total:.1?})",
        t.twin, t.bin1_accuracy, t.baseline
    ))
}

fn c10_ordering(trained: &Result<Trained, String>) -> Check {
    let t = trained.as_ref().map_err(Clone::clone)?;
    let (f, q, b) = (t.f32.best_val_loss, t.q2_6.best_val_loss, t.bin1.best_val_loss);
    let detail = format!("validation cross-entropy f32 {f:.4}, q2.6 {q:.4}, bin1 {b:.4}");
    ensure(f <= q + 0.05, format!("{detail}: f32 above q2.6 + 0.05"))?;
    ensure(q <= b + 0.5, format!("{detail}: q2.6 above bin1 + 0.5"))?;
    Ok(detail)
}

#[test]
fn acceptance() {
    // Run sequentially so the timing checks see an idle machine.
    let mut results: Vec<(&str, Check)> = vec![
        ("1 complexity report", c1_complexity()),
        ("2 binary kernel correctness", c2_binary_correctness()),
        ("3 binary kernel speedup", c3_binary_speed()),
        ("4 beamformer math", c4_beamformer_math()),
        ("5 postfilter scale invariance", c5_postfilter_invariance()),
        ("6 STFT round trip", c6_stft()),
        ("7 oracle-mask GEV-BAN on scenario 2", c7_end_to_end()),
        ("8 fixed-point quantization", c8_quantization()),
    ];
    let trained = train_toy();
    results.push(("9 training", c9_training(&trained)));
    results.push(("10 precision ordering", c10_ordering(&trained)));

    // Writing to the raw handle keeps the summary visible when output is captured.
    let mut out = std::io::stderr().lock();
    let mut failed = 0;
    for (name, r) in &results {
        let line = match r {
            Ok(msg) => format!("PASS criterion {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                format!("FAIL criterion {name}: {msg}")
            }
        };
        writeln!(out, "{line}").expect("write to stderr");
    }
    drop(out);
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
