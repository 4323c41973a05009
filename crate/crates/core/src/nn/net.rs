//! Mask network: per-bin BLSTM, two dense reductions, full-band BLSTM and
//! three softmax heads, with cached forward pass and backpropagation.

use rayon::prelude::*;

use super::bn::{bn_backward, bn_forward, BnCache};
use super::features::Features;
use super::lstm::{backward_sequence, pack_recurrent, run_sequence, Act, CellGrads, CellMode, CellWeights, StepCache};
use super::params::*;
use crate::binkernel::PackedBitMatrix;
use crate::error::{Error, Result};
use crate::quant::Precision;
use crate::room::MaskTriple;

/// Guard inside the logarithm of the cross-entropy.
pub const LOG_EPS: f64 = 1e-12;

/// Activation format: the model format for fixed point, Q2.6 around binary layers.
pub fn activation_format(p: Precision) -> Act {
    match p {
        Precision::F32 => Act(None),
        Precision::Bin1 => Act(Some(Precision::Q2_6)),
        p => Act(Some(p)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Batch statistics (training).
    Batch,
    /// Stored running statistics (inference).
    Running,
}

struct DenseCache {
    pre_raw: Vec<f64>,
    pre: Vec<f64>,
    bn: BnCache,
}

/// Intermediate values of one forward pass over a batch of sequences.
pub struct ForwardCache {
    offsets: Vec<usize>,
    rows: usize,
    x: Vec<f64>,
    l1: Vec<Vec<Vec<StepCache>>>,
    bn1: BnCache,
    y1: Vec<f64>,
    l2: DenseCache,
    y2: Vec<f64>,
    l3: DenseCache,
    y3: Vec<f64>,
    l4: Vec<Vec<Vec<StepCache>>>,
    bn4: BnCache,
    y4: Vec<f64>,
    /// Softmax outputs, `[row][k][class]`.
    pub probs: Vec<f64>,
    eff: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// Batch mean and variance of each batch-norm layer, in layer order.
    pub fn bn_stats(&self) -> [(&[f64], &[f64]); 4] {
        [
            (&self.bn1.mean, &self.bn1.var),
            (&self.l2.bn.mean, &self.l2.bn.var),
            (&self.l3.bn.mean, &self.l3.bn.var),
            (&self.bn4.mean, &self.bn4.var),
        ]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Per-sequence mask estimates.
    pub fn masks(&self, bins: usize) -> Vec<MaskTriple> {
        self.offsets
            .windows(2)
            .map(|w| {
                let frames = w[1] - w[0];
                let mut v = vec![0.0; bins * frames * 3];
                for t in 0..frames {
                    for k in 0..bins {
                        for c in 0..3 {
                            v[(k * frames + t) * 3 + c] = self.probs[((w[0] + t) * bins + k) * 3 + c];
                        }
                    }
                }
                MaskTriple::from_vec(bins, frames, v).expect("shape is consistent by construction")
            })
            .collect()
    }
}

fn cell<'a>(
    eff: &'a [Vec<f64>],
    (wx, wh, b, s): (usize, usize, usize, usize),
    unit: usize,
    nin: usize,
    hidden: usize,
    mode: CellMode,
    packed: Option<&'a PackedBitMatrix>,
) -> CellWeights<'a> {
    let g = 4 * hidden;
    CellWeights {
        nin,
        hidden,
        wx: &eff[wx][unit * g * nin..(unit + 1) * g * nin],
        wh: &eff[wh][unit * g * hidden..(unit + 1) * g * hidden],
        b: &eff[b][unit * g..(unit + 1) * g],
        s: &eff[s][unit * 4..(unit + 1) * 4],
        mode,
        packed_wh: packed,
    }
}

const L1: (usize, usize, usize, usize) = (L1_WX, L1_WH, L1_B, L1_S);
const L4: (usize, usize, usize, usize) = (L4_WX, L4_WH, L4_B, L4_S);

fn packed_units(eff: &[Vec<f64>], wh: usize, units: usize, hidden: usize, mode: CellMode) -> Result<Vec<Option<PackedBitMatrix>>> {
    (0..units)
        .map(|u| {
            if mode == CellMode::Binary {
                let g = 4 * hidden;
                pack_recurrent(&eff[wh][u * g * hidden..(u + 1) * g * hidden], hidden).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect()
}

fn bn_params<'a>(eff: &'a [Vec<f64>], base: usize, mode: BnMode) -> (&'a [f64], &'a [f64], Option<(&'a [f64], &'a [f64])>) {
    let running = match mode {
        BnMode::Batch => None,
        BnMode::Running => Some((eff[base + BN_MEAN].as_slice(), eff[base + BN_VAR].as_slice())),
    };
    (&eff[base + BN_GAMMA], &eff[base + BN_BETA], running)
}

fn tanh_bn(pre_raw: Vec<f64>, channels: usize, eff: &[Vec<f64>], bn: usize, mode: BnMode, a: Act) -> (DenseCache, Vec<f64>) {
    let pre: Vec<f64> = pre_raw.iter().map(|&v| a.q(v)).collect();
    let t: Vec<f64> = pre.iter().map(|&v| a.q(v.tanh())).collect();
    let (g, b, running) = bn_params(eff, bn, mode);
    let bn = bn_forward(&t, channels, g, b, running);
    let y = bn.out.iter().map(|&v| a.q(v)).collect();
    (DenseCache { pre_raw, pre, bn }, y)
}

/// Run the network over a batch of sequences. Batch-norm statistics are
/// shared across all frames of all sequences.
pub fn forward(params: &MaskNetParams, seqs: &[&Features], mode: BnMode) -> Result<ForwardCache> {
    let arch = params.arch;
    let (kk, m) = (arch.bins, arch.mics);
    if seqs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for f in seqs {
        if f.bins != kk || f.mics != m {
            return Err(Error::ShapeMismatch(format!(
                "features have {} bins x {} mics, network expects {kk} x {m}",
                f.bins, f.mics
            )));
        }
        if f.frames == 0 {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
    }
    let eff = params.effective();
    let a = activation_format(params.precision);
    let cm = CellMode::for_precision(params.precision);
    let mut offsets = vec![0];
    for f in seqs {
        offsets.push(offsets.last().copied().unwrap_or(0) + f.frames);
    }
    let rows = *offsets.last().unwrap_or(&0);
    let fl = arch.feature_len();
    let mut x = Vec::with_capacity(rows * fl);
    for f in seqs {
        x.extend(f.data.iter().map(|&v| a.q(v)));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }

    // Layer 1: K independent bidirectional cells with hidden size M.
    let packed1 = packed_units(&eff, L1_WH, 2 * kk, m, cm)?;
    let l1: Vec<Vec<Vec<StepCache>>> = (0..2 * kk)
        .into_par_iter()
        .map(|unit| {
            let (d, k) = (unit / kk, unit % kk);
            let w = cell(&eff, L1, unit, 2 * m, m, cm, packed1[unit].as_ref());
            offsets
                .windows(2)
                .map(|o| {
                    let base = o[0];
                    run_sequence(&w, o[1] - o[0], d == 1, |t| &x[(base + t) * fl + k * 2 * m..(base + t) * fl + (k + 1) * 2 * m])
                })
                .collect()
        })
        .collect();
    let c1 = 2 * kk * m;
    let mut h1 = vec![0.0; rows * c1];
    for (unit, seq_caches) in l1.iter().enumerate() {
        for (s, caches) in seq_caches.iter().enumerate() {
            for (t, st) in caches.iter().enumerate() {
                let r = offsets[s] + t;
                h1[r * c1 + unit * m..r * c1 + (unit + 1) * m].copy_from_slice(&st.h);
            }
        }
    }
    let (g, b, running) = bn_params(&eff, BN1, mode);
    let bn1 = bn_forward(&h1, c1, g, b, running);
    let y1: Vec<f64> = bn1.out.iter().map(|&v| a.q(v)).collect();

    // Layer 2: one M -> 1 dense unit per bin and direction.
    let c2 = 2 * kk;
    let mut u2 = vec![0.0; rows * c2];
    for r in 0..rows {
        for c in 0..c2 {
            let w = &eff[L2_W][c * m..(c + 1) * m];
            let xin = &y1[r * c1 + c * m..r * c1 + (c + 1) * m];
            u2[r * c2 + c] = eff[L2_B][c] + w.iter().zip(xin).map(|(p, q)| p * q).sum::<f64>();
        }
    }
    let (l2, y2) = tanh_bn(u2, c2, &eff, BN2, mode, a);

    // Layer 3: dense 2K -> K.
    let u3 = dense(&y2, rows, c2, &eff[L3_W], &eff[L3_B], kk);
    let (l3, y3) = tanh_bn(u3, kk, &eff, BN3, mode, a);

    // Layer 4: full-band bidirectional cell with hidden size K.
    let packed4 = packed_units(&eff, L4_WH, 2, kk, cm)?;
    let l4: Vec<Vec<Vec<StepCache>>> = (0..2)
        .into_par_iter()
        .map(|d| {
            let w = cell(&eff, L4, d, kk, kk, cm, packed4[d].as_ref());
            offsets
                .windows(2)
                .map(|o| {
                    let base = o[0];
                    run_sequence(&w, o[1] - o[0], d == 1, |t| &y3[(base + t) * kk..(base + t + 1) * kk])
                })
                .collect()
        })
        .collect();
    let c4 = 2 * kk;
    let mut h4 = vec![0.0; rows * c4];
    for (d, seq_caches) in l4.iter().enumerate() {
        for (s, caches) in seq_caches.iter().enumerate() {
            for (t, st) in caches.iter().enumerate() {
                let r = offsets[s] + t;
                h4[r * c4 + d * kk..r * c4 + (d + 1) * kk].copy_from_slice(&st.h);
            }
        }
    }
    let (g, b, running) = bn_params(&eff, BN4, mode);
    let bn4 = bn_forward(&h4, c4, g, b, running);
    let y4: Vec<f64> = bn4.out.iter().map(|&v| a.q(v)).collect();

    // Heads and softmax across the three classes.
    let logits = dense(&y4, rows, c4, &eff[HEAD_W], &eff[HEAD_B], 3 * kk);
    let mut probs = vec![0.0; rows * kk * 3];
    for r in 0..rows {
        for k in 0..kk {
            let l = [logits[r * 3 * kk + k], logits[r * 3 * kk + kk + k], logits[r * 3 * kk + 2 * kk + k]];
            let mx = l[0].max(l[1]).max(l[2]);
            let e = l.map(|v| (v - mx).exp());
            let s = e[0] + e[1] + e[2];
            for c in 0..3 {
                probs[(r * kk + k) * 3 + c] = e[c] / s;
            }
        }
    }
    if probs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(ForwardCache { offsets, rows, x, l1, bn1, y1, l2, y2, l3, y3, l4, bn4, y4, probs, eff })
}

/// `y[r] = W x[r] + b` for row-major `W: nout × nin`.
fn dense(x: &[f64], rows: usize, nin: usize, w: &[f64], b: &[f64], nout: usize) -> Vec<f64> {
    let mut y = vec![0.0; rows * nout];
    y.par_chunks_mut(nout).enumerate().for_each(|(r, yr)| {
        let xr = &x[r * nin..(r + 1) * nin];
        for (o, yo) in yr.iter_mut().enumerate() {
            *yo = b[o] + w[o * nin..(o + 1) * nin].iter().zip(xr).map(|(p, q)| p * q).sum::<f64>();
        }
    });
    y
}

/// Accumulates `dW`, `db` and returns `dx` for [`dense`].
fn dense_backward(dy: &[f64], x: &[f64], rows: usize, nin: usize, w: &[f64], nout: usize, dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let mut dx = vec![0.0; rows * nin];
    for r in 0..rows {
        let xr = &x[r * nin..(r + 1) * nin];
        let dxr = &mut dx[r * nin..(r + 1) * nin];
        for o in 0..nout {
            let d = dy[r * nout + o];
            if d == 0.0 {
                continue;
            }
            db[o] += d;
            let wr = &w[o * nin..(o + 1) * nin];
            let dwr = &mut dw[o * nin..(o + 1) * nin];
            for i in 0..nin {
                dwr[i] += d * xr[i];
                dxr[i] += d * wr[i];
            }
        }
    }
    dx
}

/// Inference on one utterance with stored batch-norm statistics.
pub fn mask_net_forward(params: &MaskNetParams, features: &Features) -> Result<MaskTriple> {
    let cache = forward(params, &[features], BnMode::Running)?;
    Ok(cache.masks(params.arch.bins).remove(0))
}

/// `−(1/KT) Σ p_opt · ln(p_est + 1e−12)`
pub fn cross_entropy(p_est: &MaskTriple, p_opt: &MaskTriple) -> Result<f64> {
    if p_est.bins() != p_opt.bins() || p_est.frames() != p_opt.frames() {
        return Err(Error::ShapeMismatch(format!(
            "estimate is {}x{}, target is {}x{}",
            p_est.bins(),
            p_est.frames(),
            p_opt.bins(),
            p_opt.frames()
        )));
    }
    let n = (p_est.bins() * p_est.frames()).max(1) as f64;
    let s: f64 = p_est.as_slice().iter().zip(p_opt.as_slice()).map(|(e, o)| o * (e + LOG_EPS).ln()).sum();
    Ok(-s / n)
}

fn targets_by_row(cache: &ForwardCache, targets: &[&MaskTriple], bins: usize) -> Result<Vec<f64>> {
    if targets.len() + 1 != cache.offsets.len() {
        return Err(Error::ShapeMismatch(format!("{} targets for {} sequences", targets.len(), cache.offsets.len() - 1)));
    }
    let mut out = vec![0.0; cache.rows * bins * 3];
    for (s, tg) in targets.iter().enumerate() {
        let frames = cache.offsets[s + 1] - cache.offsets[s];
        if tg.bins() != bins || tg.frames() != frames {
            return Err(Error::ShapeMismatch(format!("target {s} is {}x{}, expected {bins}x{frames}", tg.bins(), tg.frames())));
        }
        for t in 0..frames {
            for k in 0..bins {
                for c in 0..3 {
                    out[((cache.offsets[s] + t) * bins + k) * 3 + c] = tg.get(k, t, c);
                }
            }
        }
    }
    Ok(out)
}

/// Batch cross-entropy, averaged over every time-frequency point in the batch.
pub fn batch_loss(cache: &ForwardCache, targets: &[&MaskTriple], bins: usize) -> Result<f64> {
    let tg = targets_by_row(cache, targets, bins)?;
    let n = (cache.rows * bins).max(1) as f64;
    Ok(-cache.probs.iter().zip(&tg).map(|(p, o)| o * (p + LOG_EPS).ln()).sum::<f64>() / n)
}

fn add_cell_grads(grads: &mut [Vec<f64>], idx: (usize, usize, usize, usize), unit: usize, g: &CellGrads) {
    let put = |dst: &mut Vec<f64>, src: &[f64]| {
        let n = src.len();
        for (d, s) in dst[unit * n..(unit + 1) * n].iter_mut().zip(src) {
            *d += s;
        }
    };
    put(&mut grads[idx.0], &g.wx);
    put(&mut grads[idx.1], &g.wh);
    put(&mut grads[idx.2], &g.b);
    put(&mut grads[idx.3], &g.s);
}

fn gate(dy: &mut [f64], raw: &[f64], a: Act) {
    for (d, r) in dy.iter_mut().zip(raw) {
        if !a.pass(*r) {
            *d = 0.0;
        }
    }
}

fn tanh_bn_backward(
    mut dy: Vec<f64>,
    c: &DenseCache,
    eff: &[Vec<f64>],
    bn: usize,
    grads: &mut [Vec<f64>],
    a: Act,
) -> Vec<f64> {
    gate(&mut dy, &c.bn.out, a);
    let (mut dt, dg, db) = bn_backward(&dy, &c.bn, &eff[bn + BN_GAMMA]);
    grads[bn + BN_GAMMA].iter_mut().zip(&dg).for_each(|(x, y)| *x += y);
    grads[bn + BN_BETA].iter_mut().zip(&db).for_each(|(x, y)| *x += y);
    for (i, d) in dt.iter_mut().enumerate() {
        let th = c.pre[i].tanh();
        *d *= 1.0 - th * th;
    }
    gate(&mut dt, &c.pre_raw, a);
    dt
}

/// Gradients of the batch cross-entropy with respect to the stored
/// parameters. Quantizers pass gradients straight through, except where
/// they saturated; binarized weights pass only where `|w| ≤ 1`.
pub fn backward(params: &MaskNetParams, cache: &ForwardCache, targets: &[&MaskTriple]) -> Result<Vec<Vec<f64>>> {
    let arch = params.arch;
    let (kk, m) = (arch.bins, arch.mics);
    let rows = cache.rows;
    let eff = &cache.eff;
    let a = activation_format(params.precision);
    let cm = CellMode::for_precision(params.precision);
    let tg = targets_by_row(cache, targets, kk)?;
    let mut grads: Vec<Vec<f64>> = params.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
    let norm = (rows * kk).max(1) as f64;

    // Softmax + cross-entropy.
    let mut dlogits = vec![0.0; rows * 3 * kk];
    for r in 0..rows {
        for k in 0..kk {
            let p = &cache.probs[(r * kk + k) * 3..(r * kk + k) * 3 + 3];
            let o = &tg[(r * kk + k) * 3..(r * kk + k) * 3 + 3];
            let dp: Vec<f64> = (0..3).map(|c| -o[c] / (p[c] + LOG_EPS) / norm).collect();
            let dot: f64 = (0..3).map(|c| p[c] * dp[c]).sum();
            for c in 0..3 {
                dlogits[r * 3 * kk + c * kk + k] = p[c] * (dp[c] - dot);
            }
        }
    }
    let c4 = 2 * kk;
    let (hw, hb) = grads.split_at_mut(HEAD_B);
    let mut dy4 = dense_backward(&dlogits, &cache.y4, rows, c4, &eff[HEAD_W], 3 * kk, &mut hw[HEAD_W], &mut hb[0]);

    // Layer 4.
    gate(&mut dy4, &cache.bn4.out, a);
    let (dh4, dg, db) = bn_backward(&dy4, &cache.bn4, &eff[BN4 + BN_GAMMA]);
    grads[BN4 + BN_GAMMA] = dg;
    grads[BN4 + BN_BETA] = db;
    let packed4 = packed_units(eff, L4_WH, 2, kk, cm)?;
    let mut dy3 = vec![0.0; rows * kk];
    for d in 0..2 {
        let w = cell(eff, L4, d, kk, kk, cm, packed4[d].as_ref());
        let mut g = CellGrads::zeros(kk, kk);
        for (s, caches) in cache.l4[d].iter().enumerate() {
            let base = cache.offsets[s];
            let frames = caches.len();
            let mut dx = vec![vec![0.0; kk]; frames];
            backward_sequence(
                &w,
                caches,
                d == 1,
                |t| &cache.y3[(base + t) * kk..(base + t + 1) * kk],
                |t| &dh4[(base + t) * c4 + d * kk..(base + t) * c4 + (d + 1) * kk],
                &mut g,
                Some(&mut dx),
            );
            for (t, row) in dx.iter().enumerate() {
                for (o, v) in dy3[(base + t) * kk..(base + t + 1) * kk].iter_mut().zip(row) {
                    *o += v;
                }
            }
        }
        add_cell_grads(&mut grads, L4, d, &g);
    }

    // Layer 3.
    let du3 = tanh_bn_backward(dy3, &cache.l3, eff, BN3, &mut grads, a);
    let c2 = 2 * kk;
    let (w3, b3) = grads.split_at_mut(L3_B);
    let dy2 = dense_backward(&du3, &cache.y2, rows, c2, &eff[L3_W], kk, &mut w3[L3_W], &mut b3[0]);

    // Layer 2.
    let du2 = tanh_bn_backward(dy2, &cache.l2, eff, BN2, &mut grads, a);
    let c1 = 2 * kk * m;
    let mut dy1 = vec![0.0; rows * c1];
    for r in 0..rows {
        for c in 0..c2 {
            let d = du2[r * c2 + c];
            if d == 0.0 {
                continue;
            }
            grads[L2_B][c] += d;
            for j in 0..m {
                grads[L2_W][c * m + j] += d * cache.y1[r * c1 + c * m + j];
                dy1[r * c1 + c * m + j] += d * eff[L2_W][c * m + j];
            }
        }
    }

    // Layer 1.
    gate(&mut dy1, &cache.bn1.out, a);
    let (dh1, dg, db) = bn_backward(&dy1, &cache.bn1, &eff[BN1 + BN_GAMMA]);
    grads[BN1 + BN_GAMMA] = dg;
    grads[BN1 + BN_BETA] = db;
    let packed1 = packed_units(eff, L1_WH, 2 * kk, m, cm)?;
    let fl = arch.feature_len();
    let unit_grads: Vec<CellGrads> = (0..2 * kk)
        .into_par_iter()
        .map(|unit| {
            let (d, k) = (unit / kk, unit % kk);
            let w = cell(eff, L1, unit, 2 * m, m, cm, packed1[unit].as_ref());
            let mut g = CellGrads::zeros(2 * m, m);
            for (s, caches) in cache.l1[unit].iter().enumerate() {
                let base = cache.offsets[s];
                backward_sequence(
                    &w,
                    caches,
                    d == 1,
                    |t| &cache.x[(base + t) * fl + k * 2 * m..(base + t) * fl + (k + 1) * 2 * m],
                    |t| &dh1[(base + t) * c1 + unit * m..(base + t) * c1 + (unit + 1) * m],
                    &mut g,
                    None,
                );
            }
            g
        })
        .collect();
    for (unit, g) in unit_grads.iter().enumerate() {
        add_cell_grads(&mut grads, L1, unit, g);
    }

    // Straight-through gating onto the stored values.
    for (t, g) in params.tensors.iter().zip(grads.iter_mut()) {
        match (t.role, t.role.precision(params.precision)) {
            (Role::Stat, _) => g.iter_mut().for_each(|v| *v = 0.0),
            (_, Precision::Bin1) => {
                for (gv, w) in g.iter_mut().zip(&t.data) {
                    if w.abs() > 1.0 {
                        *gv = 0.0;
                    }
                }
            }
            (_, p) if p.is_fixed_point() => {
                let act = Act(Some(p));
                for (gv, w) in g.iter_mut().zip(&t.data) {
                    if !act.pass(*w) {
                        *gv = 0.0;
                    }
                }
            }
            _ => {}
        }
    }
    Ok(grads)
}
