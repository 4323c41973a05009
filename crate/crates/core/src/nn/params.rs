use rand::Rng;

use crate::error::{Error, Result};
use crate::quant::Precision;

/// Network dimensions: `bins` frequency bins, `mics` microphones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Arch {
    pub bins: usize,
    pub mics: usize,
}

impl Arch {
    pub fn new(bins: usize, mics: usize) -> Result<Self> {
        if bins == 0 || mics == 0 {
            return Err(Error::InvalidConfig("network needs at least one bin and one microphone".into()));
        }
        Ok(Self { bins, mics })
    }

    pub fn feature_len(&self) -> usize {
        2 * self.mics * self.bins
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    /// Quantized to the model precision in the forward pass.
    Weight,
    /// Quantized in fixed-point models, full precision in binary models.
    Bias,
    /// Trainable, always full precision (recurrent scales, batch-norm affine).
    Float,
    /// Batch-norm running statistics.
    Stat,
}

impl Role {
    /// Format the tensor is read and stored in for a model of precision `model`.
    pub fn precision(self, model: Precision) -> Precision {
        match (self, model) {
            (Self::Weight, p) => p,
            (Self::Bias, Precision::Bin1) => Precision::F32,
            (Self::Bias, p) => p,
            (Self::Float | Self::Stat, _) => Precision::F32,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: Role,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

pub const L1_WX: usize = 0;
pub const L1_WH: usize = 1;
pub const L1_B: usize = 2;
pub const L1_S: usize = 3;
pub const BN1: usize = 4;
pub const L2_W: usize = 8;
pub const L2_B: usize = 9;
pub const BN2: usize = 10;
pub const L3_W: usize = 14;
pub const L3_B: usize = 15;
pub const BN3: usize = 16;
pub const L4_WX: usize = 20;
pub const L4_WH: usize = 21;
pub const L4_B: usize = 22;
pub const L4_S: usize = 23;
pub const BN4: usize = 24;
pub const HEAD_W: usize = 28;
pub const HEAD_B: usize = 29;
pub const NUM_TENSORS: usize = 30;

/// Offsets of the four batch-norm tensors relative to `BN*`.
pub const BN_GAMMA: usize = 0;
pub const BN_BETA: usize = 1;
pub const BN_MEAN: usize = 2;
pub const BN_VAR: usize = 3;

/// Names, shapes and roles of every tensor, in storage order.
pub fn layout(arch: Arch) -> Vec<(String, Vec<usize>, Role)> {
    let (k, m) = (arch.bins, arch.mics);
    let mut v: Vec<(String, Vec<usize>, Role)> = Vec::with_capacity(NUM_TENSORS);
    let mut push = |name: &str, shape: Vec<usize>, role: Role| v.push((name.to_string(), shape, role));
    let bn = |push: &mut dyn FnMut(&str, Vec<usize>, Role), prefix: &str, c: usize| {
        push(&format!("{prefix}.gamma"), vec![c], Role::Float);
        push(&format!("{prefix}.beta"), vec![c], Role::Float);
        push(&format!("{prefix}.mean"), vec![c], Role::Stat);
        push(&format!("{prefix}.var"), vec![c], Role::Stat);
    };
    push("l1.wx", vec![2, k, 4 * m, 2 * m], Role::Weight);
    push("l1.wh", vec![2, k, 4 * m, m], Role::Weight);
    push("l1.b", vec![2, k, 4 * m], Role::Bias);
    push("l1.s", vec![2, k, 4], Role::Float);
    bn(&mut push, "bn1", 2 * k * m);
    push("l2.w", vec![2, k, m], Role::Weight);
    push("l2.b", vec![2, k], Role::Bias);
    bn(&mut push, "bn2", 2 * k);
    push("l3.w", vec![k, 2 * k], Role::Weight);
    push("l3.b", vec![k], Role::Bias);
    bn(&mut push, "bn3", k);
    push("l4.wx", vec![2, 4 * k, k], Role::Weight);
    push("l4.wh", vec![2, 4 * k, k], Role::Weight);
    push("l4.b", vec![2, 4 * k], Role::Bias);
    push("l4.s", vec![2, 4], Role::Float);
    bn(&mut push, "bn4", 2 * k);
    push("heads.w", vec![3, k, 2 * k], Role::Weight);
    push("heads.b", vec![3, k], Role::Bias);
    v
}

/// Parameters of the mask network. Stored values are full precision; the
/// forward pass reads [`MaskNetParams::effective`], the view quantized to
/// `precision`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskNetParams {
    pub arch: Arch,
    pub precision: Precision,
    pub tensors: Vec<Tensor>,
}

impl MaskNetParams {
    pub fn zeros(arch: Arch, precision: Precision) -> Self {
        let tensors = layout(arch)
            .into_iter()
            .map(|(name, shape, role)| {
                let n = shape.iter().product();
                Tensor { name, shape, role, data: vec![0.0; n] }
            })
            .collect();
        Self { arch, precision, tensors }
    }

    /// Uniform `±1/√fan_in` weights, unit batch-norm, forget-gate bias 1
    /// (−1 for binary cells),
    /// recurrent scales `1/√hidden`.
    pub fn init<R: Rng>(arch: Arch, precision: Precision, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch, precision);
        let (k, m) = (arch.bins, arch.mics);
        let mut fill = |p: &mut Self, idx: usize, fan_in: usize| {
            let a = 1.0 / (fan_in as f64).sqrt();
            for v in p.tensors[idx].data.iter_mut() {
                *v = rng.gen_range(-a..a);
            }
        };
        fill(&mut p, L1_WX, 2 * m);
        fill(&mut p, L1_WH, m);
        fill(&mut p, L2_W, m);
        fill(&mut p, L3_W, 2 * k);
        fill(&mut p, L4_WX, k);
        fill(&mut p, L4_WH, k);
        fill(&mut p, HEAD_W, 2 * k);
        // A binary forget gate that starts open integrates the cell state
        // into the clip, so binary cells start with it closed.
        let forget_bias = if precision == Precision::Bin1 { -1.0 } else { 1.0 };
        for (b, hidden) in [(L1_B, m), (L4_B, k)] {
            for (i, v) in p.tensors[b].data.iter_mut().enumerate() {
                if (i % (4 * hidden)) / hidden == 1 {
                    *v = forget_bias;
                }
            }
        }
        for (s, hidden) in [(L1_S, m), (L4_S, k)] {
            p.tensors[s].data.iter_mut().for_each(|v| *v = 1.0 / (hidden as f64).sqrt());
        }
        for bn in [BN1, BN2, BN3, BN4] {
            p.tensors[bn + BN_GAMMA].data.iter_mut().for_each(|v| *v = 1.0);
            p.tensors[bn + BN_VAR].data.iter_mut().for_each(|v| *v = 1.0);
        }
        p
    }

    pub fn tensor(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    pub fn find(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Quantized view of every tensor. Binary models keep full-precision biases.
    pub fn effective(&self) -> Vec<Vec<f64>> {
        self.tensors
            .iter()
            .map(|t| match t.role.precision(self.precision) {
                Precision::F32 => t.data.clone(),
                p => t.data.iter().map(|&v| p.quantize_value(v)).collect(),
            })
            .collect()
    }

    pub fn num_weights(&self) -> usize {
        self.tensors.iter().filter(|t| matches!(t.role, Role::Weight | Role::Bias)).map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn validate(&self) -> Result<()> {
        let expected = layout(self.arch);
        if expected.len() != self.tensors.len() {
            return Err(Error::Format(format!("expected {} tensors, found {}", expected.len(), self.tensors.len())));
        }
        for ((name, shape, role), t) in expected.iter().zip(&self.tensors) {
            if *name != t.name || *shape != t.shape || *role != t.role || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Format(format!("tensor {:?} does not match the expected layout", t.name)));
            }
        }
        if !self.is_finite() {
            return Err(Error::NonFinite);
        }
        if self.precision == Precision::Bin1 {
            for s in [L1_S, L4_S] {
                if self.tensors[s].data.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::Format("binary recurrent scales must be positive".into()));
                }
            }
        }
        Ok(())
    }
}
