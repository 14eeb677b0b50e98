//! `SPTWNN` weights files and the compiled network.
//!
//! ```text
//! "SPTWNN" | u32 version | u32 tensor_count
//! per tensor: u16 name_len | name | u8 kind | u8 ndim | u32 dims[ndim] | f32 data[prod(dims)]
//! ```
//!
//! All integers and floats are little endian. Kinds: 0 Conv1D, 1 Dense,
//! 2 NonLocal, 3 BatchNorm.

use std::path::Path;

use ndarray::{Array1, Array2, Array3, ArrayView2};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{batch_norm, conv1d, dense, maxpool2, relu, sigmoid};
use super::nlb::{non_local_block, NlbParams};
use super::DetectorError;
use crate::iqcore::WINDOW_LEN;
use crate::rng::rng_from_seed;

pub const WEIGHTS_MAGIC: &[u8; 6] = b"SPTWNN";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv1D,
    Dense,
    NonLocal,
    BatchNorm,
}

impl LayerKind {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        [LayerKind::Conv1D, LayerKind::Dense, LayerKind::NonLocal, LayerKind::BatchNorm].get(usize::from(c)).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub kind: LayerKind,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, kind: LayerKind, dims: Vec<usize>, data: Vec<f32>) -> Self {
        Self { name: name.into(), kind, dims, data }
    }

    /// Text before the last `.`.
    pub fn layer(&self) -> &str {
        self.name.rsplit_once('.').map_or("", |(l, _)| l)
    }

    pub fn param(&self) -> &str {
        self.name.rsplit_once('.').map_or(self.name.as_str(), |(_, p)| p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub tensors: Vec<Tensor>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

impl ModelWeights {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DetectorError> {
        let malformed = |m: &str| DetectorError::Malformed(m.to_string());
        let mut c = Cursor { bytes, pos: 0 };
        if c.take(6) != Some(WEIGHTS_MAGIC.as_slice()) {
            return Err(malformed("bad magic"));
        }
        let version = c.u32().ok_or_else(|| malformed("missing version"))?;
        if version != WEIGHTS_VERSION {
            return Err(DetectorError::FormatVersionMismatch { found: version, expected: WEIGHTS_VERSION });
        }
        let count = c.u32().ok_or_else(|| malformed("missing tensor count"))?;
        let mut tensors = Vec::new();
        for i in 0..count {
            let truncated = || DetectorError::ShapeCompositionError(format!("tensor {i} truncated"));
            let name_len = c.u16().ok_or_else(truncated)?;
            let name = String::from_utf8(c.take(usize::from(name_len)).ok_or_else(truncated)?.to_vec())
                .map_err(|_| malformed("tensor name is not UTF-8"))?;
            let code = c.u8().ok_or_else(truncated)?;
            let kind = LayerKind::from_code(code).ok_or_else(|| malformed(&format!("unknown layer kind {code}")))?;
            let ndim = c.u8().ok_or_else(truncated)?;
            let dims: Vec<usize> =
                (0..ndim).map(|_| c.u32().map(|d| d as usize)).collect::<Option<_>>().ok_or_else(truncated)?;
            let n: usize = dims.iter().product();
            let raw = c
                .take(n * 4)
                .ok_or_else(|| DetectorError::ShapeCompositionError(format!("tensor {name} truncated: {dims:?}")))?;
            let data: Vec<f32> = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
            tensors.push(Tensor { name, kind, dims, data });
        }
        if c.pos != bytes.len() {
            return Err(malformed("trailing bytes after last tensor"));
        }
        Ok(Self { tensors })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = WEIGHTS_MAGIC.to_vec();
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.kind.code());
            out.push(t.dims.len() as u8);
            for d in &t.dims {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Reads, validates and compiles a weights file.
    pub fn load(path: &Path) -> Result<(Self, Network), DetectorError> {
        let w = Self::from_bytes(&std::fs::read(path)?)?;
        let net = Network::compile(&w)?;
        Ok((w, net))
    }

    pub fn save(&self, path: &Path) -> Result<(), DetectorError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// He-initialized weights for `arch`.
    pub fn random(arch: &ArchSpec, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut tensors = Vec::new();
        let normal = |fan_in: usize, n: usize, rng: &mut crate::rng::TwinRng| -> Vec<f32> {
            let d = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            (0..n).map(|_| d.sample(rng) as f32).collect()
        };
        let mut cin = 2;
        let mut len = WINDOW_LEN;
        for (bi, (&width, &convs)) in arch.widths.iter().zip(&arch.convs_per_block).enumerate() {
            let block = format!("block{}", bi + 1);
            for ci in 0..convs {
                let name = format!("{block}.conv{}", ci + 1);
                let k = arch.kernel;
                tensors.push(Tensor::new(
                    format!("{name}.weight"),
                    LayerKind::Conv1D,
                    vec![k, cin, width],
                    normal(k * cin, k * cin * width, &mut rng),
                ));
                tensors.push(Tensor::new(format!("{name}.bias"), LayerKind::Conv1D, vec![width], vec![0.0; width]));
                if arch.batch_norm {
                    let bn = format!("{block}.bn{}", ci + 1);
                    for (p, v) in [("gamma", 1.0), ("beta", 0.0), ("mean", 0.0), ("var", 1.0)] {
                        tensors.push(Tensor::new(format!("{bn}.{p}"), LayerKind::BatchNorm, vec![width], vec![v; width]));
                    }
                }
                cin = width;
            }
            len /= 2;
            if arch.nlb_blocks.get(bi).copied().unwrap_or(false) {
                let inner = (width / 2).max(1);
                let nlb = format!("{block}.nlb");
                for p in ["theta", "phi", "g"] {
                    tensors.push(Tensor::new(
                        format!("{nlb}.{p}_weight"),
                        LayerKind::NonLocal,
                        vec![width, inner],
                        normal(width, width * inner, &mut rng),
                    ));
                    tensors.push(Tensor::new(format!("{nlb}.{p}_bias"), LayerKind::NonLocal, vec![inner], vec![0.0; inner]));
                }
                let small: Vec<f32> = normal(inner, inner * width, &mut rng).iter().map(|v| v * 0.1).collect();
                tensors.push(Tensor::new(format!("{nlb}.out_weight"), LayerKind::NonLocal, vec![inner, width], small));
                tensors.push(Tensor::new(format!("{nlb}.out_bias"), LayerKind::NonLocal, vec![width], vec![0.0; width]));
            }
        }
        let mut fan_in = len * cin;
        let mut outs = arch.dense_hidden.clone();
        outs.push(1);
        for (di, &out) in outs.iter().enumerate() {
            let name = format!("dense{}", di + 1);
            tensors.push(Tensor::new(
                format!("{name}.weight"),
                LayerKind::Dense,
                vec![fan_in, out],
                normal(fan_in, fan_in * out, &mut rng),
            ));
            tensors.push(Tensor::new(format!("{name}.bias"), LayerKind::Dense, vec![out], vec![0.0; out]));
            fan_in = out;
        }
        Self { tensors }
    }
}

/// Layer layout used to build fresh weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub widths: Vec<usize>,
    pub convs_per_block: Vec<usize>,
    pub nlb_blocks: Vec<bool>,
    pub kernel: usize,
    pub dense_hidden: Vec<usize>,
    pub batch_norm: bool,
}

impl Default for ArchSpec {
    /// Four VGG-style blocks of widths 32/64/128/128; the first two have two
    /// convolutions and a non-local block each.
    fn default() -> Self {
        Self {
            widths: vec![32, 64, 128, 128],
            convs_per_block: vec![2, 2, 1, 1],
            nlb_blocks: vec![true, true, false, false],
            kernel: 3,
            dense_hidden: vec![128],
            batch_norm: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

/// One step of the compiled forward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Conv { name: String, weight: Array3<f64>, bias: Array1<f64> },
    BatchNorm { name: String, params: BatchNormParams },
    Relu,
    MaxPool2,
    NonLocal { name: String, params: Box<NlbParams> },
    Flatten,
    Dense { name: String, weight: Array2<f64>, bias: Array1<f64> },
    Sigmoid,
}

/// Validated, shape-checked network ready for inference. Immutable, so one
/// instance can serve several threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub ops: Vec<Op>,
    pub input_len: usize,
    pub input_channels: usize,
}

struct LayerGroup<'a> {
    name: String,
    kind: LayerKind,
    tensors: Vec<&'a Tensor>,
}

impl<'a> LayerGroup<'a> {
    fn get(&self, param: &str) -> Result<&'a Tensor, DetectorError> {
        self.tensors
            .iter()
            .copied()
            .find(|t| t.param() == param)
            .ok_or_else(|| DetectorError::ShapeCompositionError(format!("{} lacks {param}", self.name)))
    }

    fn block(&self) -> Option<&str> {
        self.name.split_once('.').map(|(b, _)| b)
    }
}

fn vec1(t: &Tensor, len: usize) -> Result<Array1<f64>, DetectorError> {
    if t.dims != [len] {
        return Err(DetectorError::ShapeCompositionError(format!("{} has dims {:?}, expected [{len}]", t.name, t.dims)));
    }
    Ok(t.data.iter().map(|&v| f64::from(v)).collect())
}

fn mat2(t: &Tensor, rows: usize, cols: Option<usize>) -> Result<Array2<f64>, DetectorError> {
    let ok = t.dims.len() == 2 && t.dims[0] == rows && cols.is_none_or(|c| t.dims[1] == c);
    if !ok {
        return Err(DetectorError::ShapeCompositionError(format!(
            "{} has dims {:?}, expected [{rows}, {}]",
            t.name,
            t.dims,
            cols.map_or("*".to_string(), |c| c.to_string())
        )));
    }
    Ok(Array2::from_shape_vec((t.dims[0], t.dims[1]), t.data.iter().map(|&v| f64::from(v)).collect()).expect("sized"))
}

impl Network {
    /// Groups tensors into layers and checks that shapes compose from a
    /// `1024 x 2` input to one output.
    pub fn compile(w: &ModelWeights) -> Result<Self, DetectorError> {
        Self::compile_for(w, WINDOW_LEN, 2)
    }

    pub fn compile_for(w: &ModelWeights, input_len: usize, input_channels: usize) -> Result<Self, DetectorError> {
        let compose = |m: String| DetectorError::ShapeCompositionError(m);
        for t in &w.tensors {
            if t.data.len() != t.dims.iter().product::<usize>() {
                return Err(compose(format!("{} holds {} values for dims {:?}", t.name, t.data.len(), t.dims)));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(DetectorError::NonFiniteTensor(t.name.clone()));
            }
        }
        let mut groups: Vec<LayerGroup> = Vec::new();
        for t in &w.tensors {
            if t.layer().is_empty() {
                return Err(compose(format!("tensor name {} has no layer prefix", t.name)));
            }
            match groups.iter_mut().find(|g| g.name == t.layer()) {
                Some(g) if g.kind == t.kind => g.tensors.push(t),
                Some(g) => return Err(compose(format!("{} mixes {:?} and {:?} tensors", g.name, g.kind, t.kind))),
                None => groups.push(LayerGroup { name: t.layer().to_string(), kind: t.kind, tensors: vec![t] }),
            }
        }

        let mut ops = Vec::new();
        let (mut len, mut ch) = (input_len, input_channels);
        let mut flat: Option<usize> = None;
        let mut pooled = false;
        let mut block: Option<String> = None;
        let mut pending_relu = false;

        let close_block = |ops: &mut Vec<Op>, len: &mut usize, pooled: &mut bool, pending: &mut bool| -> Result<(), DetectorError> {
            if *pending {
                ops.push(Op::Relu);
                *pending = false;
            }
            if !*pooled {
                if *len < 2 {
                    return Err(DetectorError::ShapeCompositionError("pooling a length-1 sequence".into()));
                }
                ops.push(Op::MaxPool2);
                *len /= 2;
                *pooled = true;
            }
            Ok(())
        };

        for (gi, g) in groups.iter().enumerate() {
            let gblock = g.block().map(str::to_string);
            if block.is_some() && gblock != block {
                close_block(&mut ops, &mut len, &mut pooled, &mut pending_relu)?;
            }
            if gblock != block {
                block = gblock.clone();
                pooled = block.is_none();
            }
            match g.kind {
                LayerKind::Conv1D => {
                    if flat.is_some() || block.is_none() {
                        return Err(compose(format!("convolution {} outside a block", g.name)));
                    }
                    if pooled {
                        return Err(compose(format!("convolution {} after the block's pool", g.name)));
                    }
                    if pending_relu {
                        ops.push(Op::Relu);
                    }
                    let wt = g.get("weight")?;
                    if wt.dims.len() != 3 || wt.dims[1] != ch || wt.dims[0] % 2 == 0 {
                        return Err(compose(format!("{} has dims {:?} for {ch} input channels", wt.name, wt.dims)));
                    }
                    let (k, cout) = (wt.dims[0], wt.dims[2]);
                    let weight = Array3::from_shape_vec((k, ch, cout), wt.data.iter().map(|&v| f64::from(v)).collect())
                        .expect("sized");
                    let bias = vec1(g.get("bias")?, cout)?;
                    ops.push(Op::Conv { name: g.name.clone(), weight, bias });
                    ch = cout;
                    pending_relu = true;
                }
                LayerKind::BatchNorm => {
                    let after_conv = matches!(ops.last(), Some(Op::Conv { .. })) && pending_relu;
                    if !after_conv {
                        return Err(compose(format!("batch norm {} does not follow a convolution", g.name)));
                    }
                    let params = BatchNormParams {
                        gamma: vec1(g.get("gamma")?, ch)?,
                        beta: vec1(g.get("beta")?, ch)?,
                        mean: vec1(g.get("mean")?, ch)?,
                        var: vec1(g.get("var")?, ch)?,
                    };
                    if params.var.iter().any(|v| *v < 0.0) {
                        return Err(compose(format!("{} has negative variance", g.name)));
                    }
                    ops.push(Op::BatchNorm { name: g.name.clone(), params });
                }
                LayerKind::NonLocal => {
                    if block.is_none() || flat.is_some() {
                        return Err(compose(format!("non-local block {} outside a conv block", g.name)));
                    }
                    close_block(&mut ops, &mut len, &mut pooled, &mut pending_relu)?;
                    let tw = g.get("theta_weight")?;
                    let inner = if tw.dims.len() == 2 { tw.dims[1] } else { 0 };
                    let params = NlbParams {
                        theta_weight: mat2(tw, ch, Some(inner))?,
                        theta_bias: vec1(g.get("theta_bias")?, inner)?,
                        phi_weight: mat2(g.get("phi_weight")?, ch, Some(inner))?,
                        phi_bias: vec1(g.get("phi_bias")?, inner)?,
                        g_weight: mat2(g.get("g_weight")?, ch, Some(inner))?,
                        g_bias: vec1(g.get("g_bias")?, inner)?,
                        out_weight: mat2(g.get("out_weight")?, inner, Some(ch))?,
                        out_bias: vec1(g.get("out_bias")?, ch)?,
                    };
                    ops.push(Op::NonLocal { name: g.name.clone(), params: Box::new(params) });
                }
                LayerKind::Dense => {
                    let n = match flat {
                        Some(n) => {
                            ops.push(Op::Relu);
                            n
                        }
                        None => {
                            ops.push(Op::Flatten);
                            len * ch
                        }
                    };
                    let weight = mat2(g.get("weight")?, n, None)?;
                    let out = weight.ncols();
                    let bias = vec1(g.get("bias")?, out)?;
                    ops.push(Op::Dense { name: g.name.clone(), weight, bias });
                    flat = Some(out);
                    if gi + 1 == groups.len() {
                        if out != 1 {
                            return Err(compose(format!("final layer {} has {out} outputs", g.name)));
                        }
                        ops.push(Op::Sigmoid);
                    }
                }
            }
        }
        if flat != Some(1) || !matches!(ops.last(), Some(Op::Sigmoid)) {
            return Err(compose("network must end in a single-output dense layer".into()));
        }
        Ok(Self { ops, input_len, input_channels })
    }

    /// Probability that one `(len, channels)` input contains radar.
    pub fn forward_one(&self, x: ArrayView2<f64>) -> Result<f64, DetectorError> {
        if x.dim() != (self.input_len, self.input_channels) {
            return Err(DetectorError::ShapeMismatch(format!(
                "input {:?}, expected ({}, {})",
                x.dim(),
                self.input_len,
                self.input_channels
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DetectorError::NonFiniteActivation("input".into()));
        }
        let mut a = x.to_owned();
        let mut v: Option<Array1<f64>> = None;
        for op in &self.ops {
            match op {
                Op::Conv { weight, bias, .. } => {
                    let pad = (weight.dim().0 - 1) / 2;
                    a = conv1d(a.view(), weight.view(), bias.view(), 1, pad)?;
                }
                Op::BatchNorm { params, .. } => {
                    batch_norm(&mut a, params.gamma.view(), params.beta.view(), params.mean.view(), params.var.view())
                }
                Op::Relu => match v.as_mut() {
                    Some(x) => x.mapv_inplace(|e| e.max(0.0)),
                    None => relu(&mut a),
                },
                Op::MaxPool2 => a = maxpool2(a.view()),
                Op::NonLocal { params, .. } => a = non_local_block(a.view(), params)?,
                Op::Flatten => v = Some(a.iter().copied().collect()),
                Op::Dense { weight, bias, name } => {
                    let x = v.take().ok_or_else(|| DetectorError::ShapeMismatch(format!("{name} before flatten")))?;
                    v = Some(dense(x.view(), weight.view(), bias.view())?);
                }
                Op::Sigmoid => {}
            }
        }
        let logit = v.and_then(|x| x.first().copied()).ok_or_else(|| DetectorError::ShapeMismatch("no output".into()))?;
        if !logit.is_finite() {
            return Err(DetectorError::NonFiniteActivation("output logit".into()));
        }
        Ok(sigmoid(logit))
    }

    /// Probabilities for a batch of `[position][Re, Im]` feature matrices.
    pub fn forward(&self, batch: &[Vec<[f32; 2]>]) -> Result<Vec<f64>, DetectorError> {
        if batch.is_empty() {
            return Err(DetectorError::InvalidParams("empty batch".into()));
        }
        batch
            .iter()
            .map(|feat| {
                let flat: Vec<f64> = feat.iter().flat_map(|[a, b]| [f64::from(*a), f64::from(*b)]).collect();
                let x = Array2::from_shape_vec((feat.len(), 2), flat)
                    .map_err(|e| DetectorError::ShapeMismatch(e.to_string()))?;
                self.forward_one(x.view())
            })
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.ops
            .iter()
            .map(|op| match op {
                Op::Conv { weight, bias, .. } => weight.len() + bias.len(),
                Op::Dense { weight, bias, .. } => weight.len() + bias.len(),
                Op::BatchNorm { params, .. } => 4 * params.gamma.len(),
                Op::NonLocal { params, .. } => {
                    let (c, i) = (params.channels(), params.inner());
                    4 * c * i + 3 * i + c
                }
                _ => 0,
            })
            .sum()
    }
}
