//! Quarter-width Resnet34 over the feature map, followed by a two-layer
//! fully connected head whose output is added back onto the pooled
//! embedding before the final 2-way classifier.

use crate::config::ConfigError;
use crate::nn::{join, BatchNorm, Conv2d, GlobalAvgPool, Linear, Module, Relu, Visitor};
use crate::ops::{Conv2dSpec, Mode};
use crate::tensor::{Scalar, Tensor, TensorError};

/// Class index of spoofed speech in the logits.
pub const SPOOF: usize = 0;
/// Class index of bona fide speech in the logits.
pub const BONAFIDE: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackboneConfig {
    pub in_channels: usize,
    pub stage_channels: [usize; 4],
    pub stage_blocks: [usize; 4],
    pub embed_dim: usize,
    pub n_classes: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            stage_channels: [16, 32, 64, 128],
            stage_blocks: [3, 4, 6, 3],
            embed_dim: 128,
            n_classes: 2,
        }
    }
}

impl BackboneConfig {
    pub fn with_in_channels(in_channels: usize) -> Self {
        Self {
            in_channels,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.in_channels == 0 || self.embed_dim == 0 || self.n_classes < 2 {
            return Err(ConfigError::new("backbone needs in_channels, embed_dim >= 1 and >= 2 classes"));
        }
        if self.stage_channels.contains(&0) || self.stage_blocks.contains(&0) {
            return Err(ConfigError::new("every stage needs at least one block and one channel"));
        }
        Ok(())
    }

    /// Width of the pooled embedding (channels of the last stage).
    pub fn pooled_dim(&self) -> usize {
        self.stage_channels[3]
    }

    /// Closed-form trainable parameter count (convolutions carry a bias).
    pub fn parameter_count(&self) -> usize {
        let conv = |cin: usize, cout: usize, k: usize| cout * cin * k * k + cout;
        let bn = |c: usize| 2 * c;
        let lin = |din: usize, dout: usize| dout * din + dout;
        let c0 = self.stage_channels[0];
        let mut total = conv(self.in_channels, c0, 3) + bn(c0);
        let mut cin = c0;
        for (s, (&cout, &n)) in self.stage_channels.iter().zip(&self.stage_blocks).enumerate() {
            for b in 0..n {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                total += conv(cin, cout, 3) + bn(cout) + conv(cout, cout, 3) + bn(cout);
                if stride != 1 || cin != cout {
                    total += conv(cin, cout, 1) + bn(cout);
                }
                cin = cout;
            }
        }
        let p = self.pooled_dim();
        total + lin(p, self.embed_dim) + lin(self.embed_dim, p) + lin(p, self.n_classes)
    }
}

fn conv3x3<T: Scalar>(cin: usize, cout: usize, stride: usize) -> Conv2d<T> {
    Conv2d::new(cin, cout, 3, Conv2dSpec::new(stride, 1))
}

#[derive(Debug, Clone)]
pub struct Shortcut<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm<T>,
}

/// conv3x3 -> BN -> ReLU -> conv3x3 -> BN, plus shortcut, then ReLU.
#[derive(Debug, Clone)]
pub struct BasicBlock<T> {
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm<T>,
    relu1: Relu<T>,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm<T>,
    pub shortcut: Option<Shortcut<T>>,
    relu_out: Relu<T>,
}

impl<T: Scalar> BasicBlock<T> {
    pub fn new(cin: usize, cout: usize, stride: usize) -> Self {
        let shortcut = (stride != 1 || cin != cout).then(|| Shortcut {
            conv: Conv2d::new(cin, cout, 1, Conv2dSpec::new(stride, 0)),
            bn: BatchNorm::new(cout),
        });
        Self {
            conv1: conv3x3(cin, cout, stride),
            bn1: BatchNorm::new(cout),
            relu1: Relu::new(),
            conv2: conv3x3(cout, cout, 1),
            bn2: BatchNorm::new(cout),
            shortcut,
            relu_out: Relu::new(),
        }
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, TensorError> {
        let mut sum = match &mut self.shortcut {
            Some(sc) => {
                let s = sc.conv.forward(x.clone(), mode)?;
                sc.bn.forward(s, mode)?
            }
            None => x.clone(),
        };
        let m = self.conv1.forward(x, mode)?;
        let m = self.bn1.forward(m, mode)?;
        let m = self.relu1.forward(m, mode);
        let m = self.conv2.forward(m, mode)?;
        let m = self.bn2.forward(m, mode)?;
        if m.shape() != sum.shape() {
            return Err(TensorError::shape("basic_block", m.shape(), sum.shape()));
        }
        for (s, &v) in sum.data_mut().iter_mut().zip(m.data()) {
            *s = v + *s;
        }
        Ok(self.relu_out.forward(sum, mode))
    }

    pub fn backward(&mut self, d: Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let d = self.relu_out.backward(d)?;
        let mut dx = match &mut self.shortcut {
            Some(sc) => {
                let ds = sc.bn.backward(d.clone())?;
                sc.conv.backward(ds)?
            }
            None => d.clone(),
        };
        let dm = self.bn2.backward(d)?;
        let dm = self.conv2.backward(dm)?;
        let dm = self.relu1.backward(dm)?;
        let dm = self.bn1.backward(dm)?;
        let dm = self.conv1.backward(dm)?;
        dx.add_assign(&dm)?;
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for BasicBlock<T> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        self.conv1.visit(&join(prefix, "conv1"), v);
        self.bn1.visit(&join(prefix, "bn1"), v);
        self.conv2.visit(&join(prefix, "conv2"), v);
        self.bn2.visit(&join(prefix, "bn2"), v);
        if let Some(sc) = &mut self.shortcut {
            sc.conv.visit(&join(prefix, "shortcut.conv"), v);
            sc.bn.visit(&join(prefix, "shortcut.bn"), v);
        }
    }
}

/// 2-class logits, `[B, 2]` with index [`BONAFIDE`] and [`SPOOF`].
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<T> {
    pub values: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct Backbone<T> {
    cfg: BackboneConfig,
    pub entry_conv: Conv2d<T>,
    pub entry_bn: BatchNorm<T>,
    entry_relu: Relu<T>,
    pub stages: Vec<Vec<BasicBlock<T>>>,
    pool: GlobalAvgPool,
    pub fc1: Linear<T>,
    fc1_relu: Relu<T>,
    pub fc2: Linear<T>,
    pub output: Linear<T>,
}

impl<T: Scalar> Backbone<T> {
    pub fn new(cfg: BackboneConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let c0 = cfg.stage_channels[0];
        let mut cin = c0;
        let mut stages = Vec::with_capacity(4);
        for (s, (&cout, &n)) in cfg.stage_channels.iter().zip(&cfg.stage_blocks).enumerate() {
            let blocks = (0..n)
                .map(|b| {
                    let stride = if s > 0 && b == 0 { 2 } else { 1 };
                    let block = BasicBlock::new(cin, cout, stride);
                    cin = cout;
                    block
                })
                .collect();
            stages.push(blocks);
        }
        let p = cfg.pooled_dim();
        Ok(Self {
            entry_conv: conv3x3(cfg.in_channels, c0, 1),
            entry_bn: BatchNorm::new(c0),
            entry_relu: Relu::new(),
            stages,
            pool: GlobalAvgPool::default(),
            fc1: Linear::new(p, cfg.embed_dim),
            fc1_relu: Relu::new(),
            fc2: Linear::new(cfg.embed_dim, p),
            output: Linear::new(p, cfg.n_classes),
            cfg,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.cfg
    }

    /// Forward pass that also records the output shape of the entry layer
    /// and of each of the four stages.
    pub fn forward_traced(
        &mut self,
        x: Tensor<T>,
        mode: Mode,
        trace: &mut Vec<Vec<usize>>,
    ) -> Result<Logits<T>, TensorError> {
        let (_, c, h, w) = x.dims4("backbone")?;
        if c != self.cfg.in_channels {
            return Err(TensorError::shape(
                "backbone",
                format!("[B, {}, T, F]", self.cfg.in_channels),
                x.shape(),
            ));
        }
        if h < 8 || w < 8 {
            return Err(TensorError::invalid(
                "backbone",
                format!("spatial size {h}x{w} is below the 8x8 minimum"),
            ));
        }
        let x = self.entry_conv.forward(x, mode)?;
        let x = self.entry_bn.forward(x, mode)?;
        let mut x = self.entry_relu.forward(x, mode);
        trace.push(x.shape().to_vec());
        for stage in &mut self.stages {
            for block in stage.iter_mut() {
                x = block.forward(x, mode)?;
            }
            trace.push(x.shape().to_vec());
        }
        let h = self.pool.forward(x, mode)?;
        let z = self.fc1.forward(h.clone(), mode)?;
        let z = self.fc1_relu.forward(z, mode);
        let mut z = self.fc2.forward(z, mode)?;
        z.add_assign(&h)?;
        Ok(Logits {
            values: self.output.forward(z, mode)?,
        })
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Logits<T>, TensorError> {
        self.forward_traced(x, mode, &mut Vec::new())
    }

    /// Gradient w.r.t. the feature map input.
    pub fn backward(&mut self, d_logits: Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let dz = self.output.backward(d_logits)?;
        let d = self.fc2.backward(dz.clone())?;
        let d = self.fc1_relu.backward(d)?;
        let mut dh = self.fc1.backward(d)?;
        dh.add_assign(&dz)?;
        let mut d = self.pool.backward(dh)?;
        for stage in self.stages.iter_mut().rev() {
            for block in stage.iter_mut().rev() {
                d = block.backward(d)?;
            }
        }
        let d = self.entry_relu.backward(d)?;
        let d = self.entry_bn.backward(d)?;
        self.entry_conv.backward(d)
    }
}

impl<T: Scalar> Module<T> for Backbone<T> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        self.entry_conv.visit(&join(prefix, "entry.conv"), v);
        self.entry_bn.visit(&join(prefix, "entry.bn"), v);
        for (s, stage) in self.stages.iter_mut().enumerate() {
            for (b, block) in stage.iter_mut().enumerate() {
                block.visit(&join(prefix, &format!("res{}.{}", s + 1, b)), v);
            }
        }
        self.fc1.visit(&join(prefix, "fc1"), v);
        self.fc2.visit(&join(prefix, "fc2"), v);
        self.output.visit(&join(prefix, "output"), v);
    }
}
