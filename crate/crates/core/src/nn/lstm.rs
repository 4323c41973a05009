//! LSTM cell in full-precision, fixed-point and binary modes, with BPTT.
//!
//! Gate rows are ordered input, forget, output, candidate; each block has
//! `hidden` rows. Weight matrices are row-major.

use crate::binkernel::{binary_dot_masked, PackedBitMatrix};
use crate::error::{Error, Result};
use crate::quant::{pack_bits, sign, Precision};

/// Cell-state bound used in full-precision and binary modes.
pub const CELL_CLIP: f64 = 8.0;

/// Optional activation quantizer with a straight-through clamp gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Act(pub Option<Precision>);

impl Act {
    #[inline]
    pub fn q(self, v: f64) -> f64 {
        match self.0 {
            Some(p) => p.quantize_value(v),
            None => v,
        }
    }

    /// `true` when the quantizer did not saturate on `raw`.
    #[inline]
    pub fn pass(self, raw: f64) -> bool {
        match self.0.and_then(Precision::value_range) {
            Some((lo, hi)) => raw >= lo && raw <= hi,
            None => true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellMode {
    Float,
    /// Every intermediate rounded and clamped to the given format.
    Fixed(Precision),
    /// Binary gates and hidden state with per-gate recurrent scales.
    Binary,
}

impl CellMode {
    pub fn for_precision(p: Precision) -> Self {
        match p {
            Precision::F32 => Self::Float,
            Precision::Bin1 => Self::Binary,
            p => Self::Fixed(p),
        }
    }

    fn act(self) -> Act {
        match self {
            Self::Fixed(p) => Act(Some(p)),
            _ => Act(None),
        }
    }
}

/// Borrowed weights of one cell direction.
pub struct CellWeights<'a> {
    pub nin: usize,
    pub hidden: usize,
    pub wx: &'a [f64],
    pub wh: &'a [f64],
    pub b: &'a [f64],
    /// Recurrent scales `s_hi, s_hf, s_ho, s_hc`; only read in binary mode.
    pub s: &'a [f64],
    pub mode: CellMode,
    /// Packed `wh` for binary mode.
    pub packed_wh: Option<&'a PackedBitMatrix>,
}

impl CellWeights<'_> {
    pub fn check(&self) -> Result<()> {
        let g = 4 * self.hidden;
        if self.wx.len() != g * self.nin || self.wh.len() != g * self.hidden || self.b.len() != g || self.s.len() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "LSTM weights do not match input {} and hidden size {}",
                self.nin, self.hidden
            )));
        }
        Ok(())
    }
}

pub fn pack_recurrent(wh: &[f64], hidden: usize) -> Result<PackedBitMatrix> {
    PackedBitMatrix::from_signs(4 * hidden, hidden, wh)
}

/// Everything one step needs for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct StepCache {
    pub pre_raw: Vec<f64>,
    pub pre: Vec<f64>,
    pub act: Vec<f64>,
    /// Binary mode: recurrent products `W_h h` before scaling.
    pub rec: Vec<f64>,
    pub c_raw: Vec<f64>,
    pub c: Vec<f64>,
    pub tc: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn recurrent_binary(w: &CellWeights<'_>, h_prev: &[f64]) -> Vec<f64> {
    let n = w.hidden;
    let g = 4 * n;
    match w.packed_wh {
        Some(packed) => {
            let hbits = pack_bits(h_prev);
            let mask = pack_bits(&h_prev.iter().map(|&v| if v != 0.0 { 1.0 } else { -1.0 }).collect::<Vec<_>>());
            (0..g)
                .map(|r| binary_dot_masked(packed.row(r), &hbits, &mask, n).map_or(0.0, |v| v as f64))
                .collect()
        }
        None => (0..g).map(|r| w.wh[r * n..(r + 1) * n].iter().zip(h_prev).map(|(a, b)| a * b).sum()).collect(),
    }
}

/// One time step from `(h_prev, c_prev)`.
pub fn lstm_step(w: &CellWeights<'_>, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
    let n = w.hidden;
    let g = 4 * n;
    let act = w.mode.act();
    let mut pre_raw = w.b.to_vec();
    for (r, p) in pre_raw.iter_mut().enumerate() {
        let row = &w.wx[r * w.nin..(r + 1) * w.nin];
        *p += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
    let mut rec = Vec::new();
    if w.mode == CellMode::Binary {
        rec = recurrent_binary(w, h_prev);
        for (r, p) in pre_raw.iter_mut().enumerate() {
            *p += w.s[r / n] * rec[r];
        }
    } else {
        for (r, p) in pre_raw.iter_mut().enumerate() {
            let row = &w.wh[r * n..(r + 1) * n];
            *p += row.iter().zip(h_prev).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    let pre: Vec<f64> = pre_raw.iter().map(|&v| act.q(v)).collect();
    let mut a = vec![0.0; g];
    let mut c_raw = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut tc = vec![0.0; n];
    let mut h = vec![0.0; n];
    for j in 0..n {
        let (pi, pf, po, pg) = (pre[j], pre[n + j], pre[2 * n + j], pre[3 * n + j]);
        match w.mode {
            CellMode::Binary => {
                let gate = |v: f64| if v >= 0.0 { 1.0 } else { 0.0 };
                a[j] = gate(pi);
                a[n + j] = gate(pf);
                a[2 * n + j] = gate(po);
                a[3 * n + j] = sign(pg);
                c_raw[j] = a[n + j] * c_prev[j] + a[j] * a[3 * n + j];
                c[j] = c_raw[j].clamp(-CELL_CLIP, CELL_CLIP);
                tc[j] = sign(c[j]);
                h[j] = a[2 * n + j] * tc[j];
            }
            CellMode::Float | CellMode::Fixed(_) => {
                a[j] = act.q(sigmoid(pi));
                a[n + j] = act.q(sigmoid(pf));
                a[2 * n + j] = act.q(sigmoid(po));
                a[3 * n + j] = act.q(pg.tanh());
                c_raw[j] = act.q(a[n + j] * c_prev[j]) + act.q(a[j] * a[3 * n + j]);
                c[j] = match w.mode {
                    CellMode::Fixed(_) => act.q(c_raw[j]),
                    _ => c_raw[j].clamp(-CELL_CLIP, CELL_CLIP),
                };
                tc[j] = act.q(c[j].tanh());
                h[j] = act.q(a[2 * n + j] * tc[j]);
            }
        }
    }
    StepCache { pre_raw, pre, act: a, rec, c_raw, c, tc, h }
}

/// Single-step API: validates inputs and returns the new state.
pub fn lstm_cell_forward(w: &CellWeights<'_>, x: &[f64], state: &LstmState) -> Result<(Vec<f64>, LstmState)> {
    w.check()?;
    if x.len() != w.nin || state.h.len() != w.hidden || state.c.len() != w.hidden {
        return Err(Error::ShapeMismatch("LSTM input or state has the wrong length".into()));
    }
    if x.iter().chain(&state.h).chain(&state.c).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let step = lstm_step(w, x, &state.h, &state.c);
    let h = step.h.clone();
    Ok((h.clone(), LstmState { h, c: step.c }))
}

/// Run a cell over `frames` steps, forward or backward in time.
/// `x(t)` yields the input of frame `t`; caches are indexed by frame.
pub fn run_sequence<'x>(w: &CellWeights<'_>, frames: usize, reverse: bool, x: impl Fn(usize) -> &'x [f64]) -> Vec<StepCache> {
    let n = w.hidden;
    let mut caches: Vec<StepCache> = vec![StepCache::default(); frames];
    let zeros = vec![0.0; n];
    let order: Vec<usize> = if reverse { (0..frames).rev().collect() } else { (0..frames).collect() };
    let mut prev: Option<usize> = None;
    for &t in &order {
        let (hp, cp) = match prev {
            Some(p) => (caches[p].h.clone(), caches[p].c.clone()),
            None => (zeros.clone(), zeros.clone()),
        };
        caches[t] = lstm_step(w, x(t), &hp, &cp);
        prev = Some(t);
    }
    caches
}

/// Gradients with respect to the effective (quantized) cell weights.
#[derive(Clone, Debug, PartialEq)]
pub struct CellGrads {
    pub wx: Vec<f64>,
    pub wh: Vec<f64>,
    pub b: Vec<f64>,
    pub s: Vec<f64>,
}

impl CellGrads {
    pub fn zeros(nin: usize, hidden: usize) -> Self {
        Self { wx: vec![0.0; 4 * hidden * nin], wh: vec![0.0; 4 * hidden * hidden], b: vec![0.0; 4 * hidden], s: vec![0.0; 4] }
    }
}

/// Backpropagation through time for one direction.
///
/// `dh(t)` is the loss gradient flowing into the output of frame `t`.
/// Input gradients are added to `dx(t)` when `dx` is given.
pub fn backward_sequence<'x>(
    w: &CellWeights<'_>,
    caches: &[StepCache],
    reverse: bool,
    x: impl Fn(usize) -> &'x [f64],
    dh: impl Fn(usize) -> &'x [f64],
    grads: &mut CellGrads,
    mut dx: Option<&mut [Vec<f64>]>,
) {
    let n = w.hidden;
    let g = 4 * n;
    let frames = caches.len();
    let act = w.mode.act();
    let order: Vec<usize> = if reverse { (0..frames).rev().collect() } else { (0..frames).collect() };
    let zeros = vec![0.0; n];
    let mut dh_next = vec![0.0; n];
    let mut dc_next = vec![0.0; n];
    let mut dpre = vec![0.0; g];
    for (i, &t) in order.iter().enumerate().rev() {
        let cache = &caches[t];
        let (h_prev, c_prev) = if i > 0 {
            (&caches[order[i - 1]].h, &caches[order[i - 1]].c)
        } else {
            (&zeros, &zeros)
        };
        let dh_t = dh(t);
        for j in 0..n {
            let a = &cache.act;
            let (gi, gf, go, gg) = (a[j], a[n + j], a[2 * n + j], a[3 * n + j]);
            let dhj = dh_t[j] + dh_next[j];
            let d_o = dhj * cache.tc[j];
            let dtc = dhj * go;
            let cell_pass = match w.mode {
                CellMode::Fixed(_) => act.pass(cache.c_raw[j]),
                _ => cache.c_raw[j].abs() <= CELL_CLIP,
            };
            let dc_from_h = match w.mode {
                CellMode::Binary => {
                    if cache.c[j].abs() <= 1.0 {
                        dtc
                    } else {
                        0.0
                    }
                }
                _ => {
                    let th = cache.c[j].tanh();
                    dtc * (1.0 - th * th)
                }
            };
            let dc = if cell_pass { dc_next[j] + dc_from_h } else { 0.0 };
            let df = dc * c_prev[j];
            let di = dc * gg;
            let dg = dc * gi;
            dc_next[j] = dc * gf;
            let pre = &cache.pre;
            match w.mode {
                CellMode::Binary => {
                    let hard = |v: f64| if v.abs() <= 1.0 { 0.5 } else { 0.0 };
                    dpre[j] = di * hard(pre[j]);
                    dpre[n + j] = df * hard(pre[n + j]);
                    dpre[2 * n + j] = d_o * hard(pre[2 * n + j]);
                    dpre[3 * n + j] = if pre[3 * n + j].abs() <= 1.0 { dg } else { 0.0 };
                }
                _ => {
                    let sg = |v: f64| {
                        let s = sigmoid(v);
                        s * (1.0 - s)
                    };
                    dpre[j] = di * sg(pre[j]);
                    dpre[n + j] = df * sg(pre[n + j]);
                    dpre[2 * n + j] = d_o * sg(pre[2 * n + j]);
                    let th = pre[3 * n + j].tanh();
                    dpre[3 * n + j] = dg * (1.0 - th * th);
                }
            }
        }
        for (r, d) in dpre.iter_mut().enumerate() {
            if !act.pass(cache.pre_raw[r]) {
                *d = 0.0;
            }
        }
        let xt = x(t);
        for r in 0..g {
            let d = dpre[r];
            if d == 0.0 {
                continue;
            }
            grads.b[r] += d;
            let row = &mut grads.wx[r * w.nin..(r + 1) * w.nin];
            for (gw, xv) in row.iter_mut().zip(xt) {
                *gw += d * xv;
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxt = &mut dx[t];
            for r in 0..g {
                let d = dpre[r];
                if d == 0.0 {
                    continue;
                }
                for (o, wv) in dxt.iter_mut().zip(&w.wx[r * w.nin..(r + 1) * w.nin]) {
                    *o += d * wv;
                }
            }
        }
        // Recurrent path; in binary mode the scale sits between W_h h and the gate.
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..g {
            let mut d = dpre[r];
            if w.mode == CellMode::Binary {
                grads.s[r / n] += d * cache.rec[r];
                d *= w.s[r / n];
            }
            if d == 0.0 {
                continue;
            }
            let row = &mut grads.wh[r * n..(r + 1) * n];
            for (gw, hv) in row.iter_mut().zip(h_prev) {
                *gw += d * hv;
            }
            for (o, wv) in dh_next.iter_mut().zip(&w.wh[r * n..(r + 1) * n]) {
                *o += d * wv;
            }
        }
    }
}
