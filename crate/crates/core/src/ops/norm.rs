//! Batch normalization over the batch and all spatial axes of each channel.

use super::{LayerGrads, Mode};
use crate::tensor::{Scalar, Tensor, TensorError};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Per-channel affine parameters and running statistics.
///
/// Biased (divide-by-N) variance is used both for normalization and for the
/// running-variance update.
#[derive(Debug, Clone, PartialEq)]
pub struct BnState<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub eps: f64,
    pub mode: Mode,
}

impl<T: Scalar> BnState<T> {
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Result<Self, TensorError> {
        let state = Self {
            gamma: Tensor::ones(&[channels]),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::ones(&[channels]),
            momentum,
            eps,
            mode: Mode::Train,
        };
        state.validate("BnState::new")?;
        Ok(state)
    }

    pub fn with_defaults(channels: usize) -> Self {
        Self::new(channels, BN_MOMENTUM, BN_EPS).expect("default BN hyperparameters are valid")
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn validate(&self, op: &'static str) -> Result<(), TensorError> {
        if !(self.eps > 0.0) {
            return Err(TensorError::invalid(op, format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.momentum > 0.0 && self.momentum < 1.0) {
            return Err(TensorError::invalid(
                op,
                format!("momentum must lie in (0, 1), got {}", self.momentum),
            ));
        }
        let c = self.channels();
        for (name, t) in [
            ("beta", &self.beta),
            ("running_mean", &self.running_mean),
            ("running_var", &self.running_var),
        ] {
            if t.shape() != [c] {
                return Err(TensorError::shape(op, [c], format!("{name} {:?}", t.shape())));
            }
        }
        Ok(())
    }
}

/// Values saved by [`batchnorm`] for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub x_hat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mode: Mode,
}

fn layout(op: &'static str, shape: &[usize], channels: usize) -> Result<(usize, usize), TensorError> {
    if shape.len() < 2 || shape[1] != channels {
        return Err(TensorError::shape(op, format!("[B, {channels}, ...]"), shape));
    }
    Ok((shape[0], shape[2..].iter().product()))
}

/// Normalizes `input [B, C, ...]` per channel.
///
/// In train mode the batch statistics are used and the running statistics
/// are updated in place; in eval mode the running statistics are used.
pub fn batchnorm<T: Scalar>(
    input: &Tensor<T>,
    state: &mut BnState<T>,
) -> Result<(Tensor<T>, BnCache<T>), TensorError> {
    const OP: &str = "batchnorm";
    state.validate(OP)?;
    let c = state.channels();
    let (batch, spatial) = layout(OP, input.shape(), c)?;
    let n = batch * spatial;
    let x = input.data();
    let mut inv_std = Vec::with_capacity(c);
    let mut means = Vec::with_capacity(c);
    match state.mode {
        Mode::Train => {
            if n < 2 {
                return Err(TensorError::invalid(
                    OP,
                    format!("train mode needs at least 2 values per channel, got {n}"),
                ));
            }
            let m = state.momentum;
            for ch in 0..c {
                let mut sum = 0.0f64;
                for b in 0..batch {
                    let base = (b * c + ch) * spatial;
                    sum += x[base..base + spatial].iter().map(|v| v.as_f64()).sum::<f64>();
                }
                let mean = sum / n as f64;
                let mut sq = 0.0f64;
                for b in 0..batch {
                    let base = (b * c + ch) * spatial;
                    sq += x[base..base + spatial]
                        .iter()
                        .map(|v| {
                            let d = v.as_f64() - mean;
                            d * d
                        })
                        .sum::<f64>();
                }
                let var = sq / n as f64;
                let rm = &mut state.running_mean.data_mut()[ch];
                *rm = T::from_f64_lossy((1.0 - m) * rm.as_f64() + m * mean);
                let rv = &mut state.running_var.data_mut()[ch];
                *rv = T::from_f64_lossy((1.0 - m) * rv.as_f64() + m * var);
                means.push(T::from_f64_lossy(mean));
                inv_std.push(T::from_f64_lossy(1.0 / (var + state.eps).sqrt()));
            }
        }
        Mode::Eval => {
            for ch in 0..c {
                means.push(state.running_mean.data()[ch]);
                let var = state.running_var.data()[ch].as_f64().max(0.0);
                inv_std.push(T::from_f64_lossy(1.0 / (var + state.eps).sqrt()));
            }
        }
    }
    let mut x_hat = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    for b in 0..batch {
        for ch in 0..c {
            let base = (b * c + ch) * spatial;
            let (mean, is, g, be) = (means[ch], inv_std[ch], state.gamma.data()[ch], state.beta.data()[ch]);
            let xs = &x[base..base + spatial];
            let xh = &mut x_hat.data_mut()[base..base + spatial];
            for (h, &v) in xh.iter_mut().zip(xs) {
                *h = (v - mean) * is;
            }
            let ys = &mut out.data_mut()[base..base + spatial];
            for (y, &h) in ys.iter_mut().zip(x_hat.data()[base..base + spatial].iter()) {
                *y = g * h + be;
            }
        }
    }
    Ok((
        out,
        BnCache {
            x_hat,
            inv_std,
            mode: state.mode,
        },
    ))
}

/// Gradients `[d_gamma, d_beta]` plus `d_input` for [`batchnorm`].
pub fn batchnorm_backward<T: Scalar>(
    cache: &BnCache<T>,
    state: &BnState<T>,
    d_output: &Tensor<T>,
) -> Result<LayerGrads<T>, TensorError> {
    const OP: &str = "batchnorm_backward";
    d_output.expect_shape(OP, cache.x_hat.shape())?;
    let c = state.channels();
    let (batch, spatial) = layout(OP, d_output.shape(), c)?;
    let n = (batch * spatial) as f64;
    let dy = d_output.data();
    let xh = cache.x_hat.data();
    let mut d_gamma = Tensor::zeros(&[c]);
    let mut d_beta = Tensor::zeros(&[c]);
    let mut d_input = Tensor::zeros(d_output.shape());
    for ch in 0..c {
        let mut sum_dy = 0.0f64;
        let mut sum_dy_xh = 0.0f64;
        for b in 0..batch {
            let base = (b * c + ch) * spatial;
            for i in base..base + spatial {
                let d = dy[i].as_f64();
                sum_dy += d;
                sum_dy_xh += d * xh[i].as_f64();
            }
        }
        d_gamma.data_mut()[ch] = T::from_f64_lossy(sum_dy_xh);
        d_beta.data_mut()[ch] = T::from_f64_lossy(sum_dy);
        let g = state.gamma.data()[ch];
        let is = cache.inv_std[ch];
        match cache.mode {
            Mode::Train => {
                let scale = g * is / T::from_f64_lossy(n);
                let n_t = T::from_f64_lossy(n);
                let s_dy = T::from_f64_lossy(sum_dy);
                let s_dyx = T::from_f64_lossy(sum_dy_xh);
                for b in 0..batch {
                    let base = (b * c + ch) * spatial;
                    for i in base..base + spatial {
                        d_input.data_mut()[i] = scale * (n_t * dy[i] - s_dy - xh[i] * s_dyx);
                    }
                }
            }
            Mode::Eval => {
                let scale = g * is;
                for b in 0..batch {
                    let base = (b * c + ch) * spatial;
                    for i in base..base + spatial {
                        d_input.data_mut()[i] = scale * dy[i];
                    }
                }
            }
        }
    }
    Ok(LayerGrads {
        d_input,
        d_params: vec![d_gamma, d_beta],
    })
}
