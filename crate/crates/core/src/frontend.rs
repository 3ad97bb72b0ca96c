//! Wavegram and ResWavegram feature extraction from raw waveforms.
//!
//! A strided stem convolution turns `[B, 1, L]` into `[B, 64, L/5]`, three
//! blocks each quarter the time axis with max pooling, and the final
//! `[B, C3, T]` map is split into `cg` contiguous channel groups to give a
//! `[B, cg, T, C3/cg]` time-frequency feature map.

use std::fmt;
use std::str::FromStr;

use crate::config::ConfigError;
use crate::nn::{join, BatchNorm, Conv1d, MaxPool1d, Module, Relu, Visitor};
use crate::ops::{conv1d_out_len, Conv1dSpec, Mode};
use crate::tensor::{Scalar, Tensor, TensorError};

pub const STEM_STRIDE: usize = 5;
pub const POOL_SIZE: usize = 4;
/// Total time downsampling of the frontend: `5 * 4^3`.
pub const DOWNSAMPLE: usize = STEM_STRIDE * POOL_SIZE * POOL_SIZE * POOL_SIZE;
pub const DEFAULT_INPUT_LEN: usize = 128_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Wavegram,
    ResWavegram,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Wavegram => "wavegram",
            Variant::ResWavegram => "reswavegram",
        })
    }
}

impl FromStr for Variant {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wavegram" => Ok(Variant::Wavegram),
            "reswavegram" => Ok(Variant::ResWavegram),
            other => Err(ConfigError::new(format!(
                "unknown variant {other:?} (expected wavegram or reswavegram)"
            ))),
        }
    }
}

/// Named `(C1, C2, C3)` channel plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    S,
    M,
    L,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::S, Preset::M, Preset::L];

    pub fn channels(self) -> (usize, usize, usize) {
        match self {
            Preset::S => (64, 64, 64),
            Preset::M => (64, 128, 128),
            Preset::L => (64, 128, 256),
        }
    }
}

impl FromStr for Preset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "S" => Ok(Preset::S),
            "M" => Ok(Preset::M),
            "L" => Ok(Preset::L),
            other => Err(ConfigError::new(format!("unknown preset {other:?} (expected S, M or L)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrontendConfig {
    pub c1: usize,
    pub c2: usize,
    pub c3: usize,
    pub cg: usize,
    pub variant: Variant,
    pub stem_out: usize,
    pub stem_kernel: usize,
    pub input_len: usize,
}

impl FrontendConfig {
    pub fn new(preset: Preset, variant: Variant, cg: usize) -> Self {
        let (c1, c2, c3) = preset.channels();
        Self {
            c1,
            c2,
            c3,
            cg,
            variant,
            stem_out: 64,
            stem_kernel: 11,
            input_len: DEFAULT_INPUT_LEN,
        }
    }

    pub fn with_input_len(mut self, input_len: usize) -> Self {
        self.input_len = input_len;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if [self.c1, self.c2, self.c3, self.cg, self.stem_out].contains(&0) {
            return Err(ConfigError::new("channel counts and cg must be positive"));
        }
        if self.c3 % self.cg != 0 {
            return Err(ConfigError::new(format!(
                "c3 = {} is not divisible by cg = {}",
                self.c3, self.cg
            )));
        }
        if self.input_len == 0 || self.input_len % DOWNSAMPLE != 0 {
            return Err(ConfigError::new(format!(
                "input_len = {} is not a positive multiple of {DOWNSAMPLE}",
                self.input_len
            )));
        }
        if self.stem_kernel % 2 == 0 {
            return Err(ConfigError::new(format!("stem_kernel = {} must be odd", self.stem_kernel)));
        }
        Ok(())
    }

    /// Output frames `T = input_len / 320`.
    pub fn frames(&self) -> usize {
        self.input_len / DOWNSAMPLE
    }

    /// Frequency bins per group `F = C3 / cg`.
    pub fn freq_bins(&self) -> usize {
        self.c3 / self.cg
    }

    fn stem_spec(&self) -> Conv1dSpec {
        Conv1dSpec::new(STEM_STRIDE, self.stem_kernel / 2, 1)
    }
}

/// `[B, cg, T, F]` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    pub data: Tensor<T>,
    pub frames: usize,
    pub bins: usize,
}

/// `[B, C, T] -> [B, cg, T, C/cg]` with channel `g*F + f` landing in group
/// `g`, bin `f`.
pub fn to_feature_map<T: Scalar>(x: &Tensor<T>, cg: usize) -> Result<FeatureMap<T>, TensorError> {
    let (b, c, t) = x.dims3("to_feature_map")?;
    if cg == 0 || c % cg != 0 {
        return Err(TensorError::invalid("to_feature_map", format!("{c} channels into {cg} groups")));
    }
    let f = c / cg;
    let mut out = Tensor::zeros(&[b, cg, t, f]);
    let src = x.data();
    let dst = out.data_mut();
    for bi in 0..b {
        for g in 0..cg {
            for fi in 0..f {
                let ch = g * f + fi;
                let row = &src[(bi * c + ch) * t..(bi * c + ch + 1) * t];
                let base = (bi * cg + g) * t * f;
                for (ti, &v) in row.iter().enumerate() {
                    dst[base + ti * f + fi] = v;
                }
            }
        }
    }
    Ok(FeatureMap { data: out, frames: t, bins: f })
}

/// Inverse of [`to_feature_map`]: `[B, cg, T, F] -> [B, cg*F, T]`.
pub fn from_feature_map<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (b, cg, t, f) = x.dims4("from_feature_map")?;
    let c = cg * f;
    let mut out = Tensor::zeros(&[b, c, t]);
    let src = x.data();
    let dst = out.data_mut();
    for bi in 0..b {
        for g in 0..cg {
            let base = (bi * cg + g) * t * f;
            for fi in 0..f {
                let ch = g * f + fi;
                let row = &mut dst[(bi * c + ch) * t..(bi * c + ch + 1) * t];
                for (ti, slot) in row.iter_mut().enumerate() {
                    *slot = src[base + ti * f + fi];
                }
            }
        }
    }
    Ok(out)
}

fn same_len_conv<T: Scalar>(cin: usize, cout: usize, dilation: usize) -> Conv1d<T> {
    Conv1d::new(cin, cout, 3, Conv1dSpec::new(1, dilation, dilation))
}

/// Conv(d=1) -> BN -> ReLU -> Conv(d=2) -> BN -> ReLU -> MaxPool(4).
#[derive(Debug, Clone)]
pub struct Conv1dBlock<T> {
    pub conv1: Conv1d<T>,
    pub bn1: BatchNorm<T>,
    relu1: Relu<T>,
    pub conv2: Conv1d<T>,
    pub bn2: BatchNorm<T>,
    relu2: Relu<T>,
    pool: MaxPool1d,
}

impl<T: Scalar> Conv1dBlock<T> {
    pub fn new(cin: usize, cout: usize) -> Self {
        Self {
            conv1: same_len_conv(cin, cout, 1),
            bn1: BatchNorm::new(cout),
            relu1: Relu::new(),
            conv2: same_len_conv(cout, cout, 2),
            bn2: BatchNorm::new(cout),
            relu2: Relu::new(),
            pool: MaxPool1d::new(POOL_SIZE),
        }
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, TensorError> {
        let x = self.conv1.forward(x, mode)?;
        let x = self.bn1.forward(x, mode)?;
        let x = self.relu1.forward(x, mode);
        let x = self.conv2.forward(x, mode)?;
        let x = self.bn2.forward(x, mode)?;
        let x = self.relu2.forward(x, mode);
        self.pool.forward(x, mode)
    }

    pub fn backward(&mut self, d: Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let d = self.pool.backward(d)?;
        let d = self.relu2.backward(d)?;
        let d = self.bn2.backward(d)?;
        let d = self.conv2.backward(d)?;
        let d = self.relu1.backward(d)?;
        let d = self.bn1.backward(d)?;
        self.conv1.backward(d)
    }
}

impl<T: Scalar> Module<T> for Conv1dBlock<T> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        self.conv1.visit(&join(prefix, "conv1"), v);
        self.bn1.visit(&join(prefix, "bn1"), v);
        self.conv2.visit(&join(prefix, "conv2"), v);
        self.bn2.visit(&join(prefix, "bn2"), v);
    }
}

/// Conv1D block with a Conv(k=3, d=1) -> BN shortcut added before the final
/// ReLU: `pool(relu(main(x) + bn(conv(x))))`.
#[derive(Debug, Clone)]
pub struct Conv1dResblock<T> {
    pub conv1: Conv1d<T>,
    pub bn1: BatchNorm<T>,
    relu1: Relu<T>,
    pub conv2: Conv1d<T>,
    pub bn2: BatchNorm<T>,
    pub res_conv: Conv1d<T>,
    pub res_bn: BatchNorm<T>,
    relu_out: Relu<T>,
    pool: MaxPool1d,
}

impl<T: Scalar> Conv1dResblock<T> {
    pub fn new(cin: usize, cout: usize) -> Self {
        Self {
            conv1: same_len_conv(cin, cout, 1),
            bn1: BatchNorm::new(cout),
            relu1: Relu::new(),
            conv2: same_len_conv(cout, cout, 2),
            bn2: BatchNorm::new(cout),
            res_conv: same_len_conv(cin, cout, 1),
            res_bn: BatchNorm::new(cout),
            relu_out: Relu::new(),
            pool: MaxPool1d::new(POOL_SIZE),
        }
    }

    /// Residual branch on its own, `bn(conv(x))`.
    pub fn residual(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, TensorError> {
        let r = self.res_conv.forward(x, mode)?;
        self.res_bn.forward(r, mode)
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, TensorError> {
        let mut sum = self.residual(x.clone(), mode)?;
        let m = self.conv1.forward(x, mode)?;
        let m = self.bn1.forward(m, mode)?;
        let m = self.relu1.forward(m, mode);
        let m = self.conv2.forward(m, mode)?;
        let m = self.bn2.forward(m, mode)?;
        for (s, &v) in sum.data_mut().iter_mut().zip(m.data()) {
            *s = v + *s;
        }
        let y = self.relu_out.forward(sum, mode);
        self.pool.forward(y, mode)
    }

    pub fn backward(&mut self, d: Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let d = self.pool.backward(d)?;
        let d = self.relu_out.backward(d)?;
        let dr = self.res_bn.backward(d.clone())?;
        let mut dx = self.res_conv.backward(dr)?;
        let dm = self.bn2.backward(d)?;
        let dm = self.conv2.backward(dm)?;
        let dm = self.relu1.backward(dm)?;
        let dm = self.bn1.backward(dm)?;
        let dm = self.conv1.backward(dm)?;
        dx.add_assign(&dm)?;
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for Conv1dResblock<T> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        self.conv1.visit(&join(prefix, "conv1"), v);
        self.bn1.visit(&join(prefix, "bn1"), v);
        self.conv2.visit(&join(prefix, "conv2"), v);
        self.bn2.visit(&join(prefix, "bn2"), v);
        self.res_conv.visit(&join(prefix, "res_conv"), v);
        self.res_bn.visit(&join(prefix, "res_bn"), v);
    }
}

#[derive(Debug, Clone)]
pub enum FrontendBlock<T> {
    Plain(Conv1dBlock<T>),
    Residual(Conv1dResblock<T>),
}

impl<T: Scalar> FrontendBlock<T> {
    fn new(variant: Variant, cin: usize, cout: usize) -> Self {
        match variant {
            Variant::Wavegram => FrontendBlock::Plain(Conv1dBlock::new(cin, cout)),
            Variant::ResWavegram => FrontendBlock::Residual(Conv1dResblock::new(cin, cout)),
        }
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, TensorError> {
        match self {
            FrontendBlock::Plain(b) => b.forward(x, mode),
            FrontendBlock::Residual(b) => b.forward(x, mode),
        }
    }

    pub fn backward(&mut self, d: Tensor<T>) -> Result<Tensor<T>, TensorError> {
        match self {
            FrontendBlock::Plain(b) => b.backward(d),
            FrontendBlock::Residual(b) => b.backward(d),
        }
    }
}

impl<T: Scalar> Module<T> for FrontendBlock<T> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        match self {
            FrontendBlock::Plain(b) => b.visit(prefix, v),
            FrontendBlock::Residual(b) => b.visit(prefix, v),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Frontend<T> {
    cfg: FrontendConfig,
    pub stem_conv: Conv1d<T>,
    pub stem_bn: BatchNorm<T>,
    stem_relu: Relu<T>,
    pub blocks: Vec<FrontendBlock<T>>,
}

impl<T: Scalar> Frontend<T> {
    pub fn new(cfg: FrontendConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let chans = [cfg.stem_out, cfg.c1, cfg.c2, cfg.c3];
        Ok(Self {
            cfg,
            stem_conv: Conv1d::new(1, cfg.stem_out, cfg.stem_kernel, cfg.stem_spec()),
            stem_bn: BatchNorm::new(cfg.stem_out),
            stem_relu: Relu::new(),
            blocks: chans
                .windows(2)
                .map(|w| FrontendBlock::new(cfg.variant, w[0], w[1]))
                .collect(),
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.cfg
    }

    /// Stem only: strided conv, BN, ReLU. `[B, 1, L] -> [B, 64, L/5]`.
    pub fn stem(&mut self, wave: Tensor<T>, mode: Mode) -> Result<Tensor<T>, TensorError> {
        let (_, c, len) = wave.dims3("frontend stem")?;
        if c != 1 {
            return Err(TensorError::shape("frontend stem", "[B, 1, L]", wave.shape()));
        }
        if conv1d_out_len(len, self.cfg.stem_kernel, self.cfg.stem_spec()) != Some(len / STEM_STRIDE)
            || len % STEM_STRIDE != 0
        {
            return Err(TensorError::invalid(
                "frontend stem",
                format!("input length {len} is not divisible by {STEM_STRIDE}"),
            ));
        }
        let x = self.stem_conv.forward(wave, mode)?;
        let x = self.stem_bn.forward(x, mode)?;
        Ok(self.stem_relu.forward(x, mode))
    }

    /// `[B, 1, input_len] -> [B, C3, T]` before the group reshape.
    pub fn forward_channels(&mut self, wave: Tensor<T>, mode: Mode) -> Result<Tensor<T>, TensorError> {
        let (_, _, len) = wave.dims3("frontend")?;
        if len != self.cfg.input_len {
            return Err(TensorError::shape(
                "frontend",
                format!("[B, 1, {}]", self.cfg.input_len),
                wave.shape(),
            ));
        }
        let mut x = self.stem(wave, mode)?;
        for block in &mut self.blocks {
            x = block.forward(x, mode)?;
        }
        Ok(x)
    }

    pub fn forward(&mut self, wave: Tensor<T>, mode: Mode) -> Result<FeatureMap<T>, TensorError> {
        let x = self.forward_channels(wave, mode)?;
        to_feature_map(&x, self.cfg.cg)
    }

    /// Takes the gradient w.r.t. the `[B, cg, T, F]` feature map and returns
    /// the gradient w.r.t. the waveform.
    pub fn backward(&mut self, d_features: Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let mut d = from_feature_map(&d_features)?;
        for block in self.blocks.iter_mut().rev() {
            d = block.backward(d)?;
        }
        let d = self.stem_relu.backward(d)?;
        let d = self.stem_bn.backward(d)?;
        self.stem_conv.backward(d)
    }
}

impl<T: Scalar> Module<T> for Frontend<T> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        self.stem_conv.visit(&join(prefix, "stem.conv"), v);
        self.stem_bn.visit(&join(prefix, "stem.bn"), v);
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.visit(&join(prefix, &format!("block{}", i + 1)), v);
        }
    }
}
