//! Stateful layers: parameters, accumulated gradients and the forward cache
//! needed by `backward`. Composite blocks are built from these.

use crate::ops::{
    self, BnCache, BnState, Conv1dCtx, Conv1dSpec, Conv2dCtx, Conv2dSpec, LinearCtx, MaxPoolCache,
    Mode,
};
use crate::tensor::{Scalar, Tensor, TensorError};

/// What a parameter is, so initializers can treat it correctly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Convolution kernel.
    Weight { fan_in: usize },
    /// Fully connected weight matrix.
    DenseWeight { fan_in: usize },
    Bias,
    BnGamma,
    BnBeta,
}

/// Callback for walking every named tensor of a module tree.
pub trait Visitor<T> {
    fn param(&mut self, name: &str, kind: ParamKind, value: &mut Tensor<T>, grad: &mut Tensor<T>);

    /// Non-trainable state (batch-norm running statistics).
    fn buffer(&mut self, _name: &str, _value: &mut Tensor<T>) {}
}

pub trait Module<T: Scalar> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>);

    fn zero_grad(&mut self) {
        struct Zero;
        impl<T: Scalar> Visitor<T> for Zero {
            fn param(&mut self, _: &str, _: ParamKind, _: &mut Tensor<T>, grad: &mut Tensor<T>) {
                grad.fill(T::zero());
            }
        }
        self.visit("", &mut Zero);
    }

    /// Number of trainable scalars.
    fn num_params(&mut self) -> usize {
        struct Count(usize);
        impl<T: Scalar> Visitor<T> for Count {
            fn param(&mut self, _: &str, _: ParamKind, value: &mut Tensor<T>, _: &mut Tensor<T>) {
                self.0 += value.len();
            }
        }
        let mut c = Count(0);
        self.visit("", &mut c);
        c.0
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn take_cache<C>(cache: &mut Option<C>, op: &'static str) -> Result<C, TensorError> {
    cache.take().ok_or(TensorError::MissingForward(op))
}

#[derive(Debug, Clone)]
pub struct Conv1d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub d_weight: Tensor<T>,
    pub d_bias: Tensor<T>,
    pub spec: Conv1dSpec,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new(cin: usize, cout: usize, kernel: usize, spec: Conv1dSpec) -> Self {
        Self {
            weight: Tensor::zeros(&[cout, cin, kernel]),
            bias: Tensor::zeros(&[cout]),
            d_weight: Tensor::zeros(&[cout, cin, kernel]),
            d_bias: Tensor::zeros(&[cout]),
            spec,
            input: None,
        }
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, TensorError> {
        let y = ops::conv1d(&x, &self.weight, &self.bias, self.spec)?;
        self.input = (mode == Mode::Train).then_some(x);
        Ok(y)
    }

    pub fn backward(&mut self, d: Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let x = take_cache(&mut self.input, "conv1d")?;
        let g = ops::conv1d_backward(Conv1dCtx { input: &x, weight: &self.weight, spec: self.spec }, &d)?;
        let [dw, db]: [Tensor<T>; 2] = g.d_params.try_into().expect("conv1d has two params");
        self.d_weight.add_assign(&dw)?;
        self.d_bias.add_assign(&db)?;
        Ok(g.d_input)
    }
}

impl<T: Scalar> Module<T> for Conv1d<T> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        let fan_in = self.weight.shape()[1..].iter().product();
        v.param(&join(prefix, "weight"), ParamKind::Weight { fan_in }, &mut self.weight, &mut self.d_weight);
        v.param(&join(prefix, "bias"), ParamKind::Bias, &mut self.bias, &mut self.d_bias);
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub d_weight: Tensor<T>,
    pub d_bias: Tensor<T>,
    pub spec: Conv2dSpec,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(cin: usize, cout: usize, kernel: usize, spec: Conv2dSpec) -> Self {
        Self {
            weight: Tensor::zeros(&[cout, cin, kernel, kernel]),
            bias: Tensor::zeros(&[cout]),
            d_weight: Tensor::zeros(&[cout, cin, kernel, kernel]),
            d_bias: Tensor::zeros(&[cout]),
            spec,
            input: None,
        }
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, TensorError> {
        let y = ops::conv2d(&x, &self.weight, &self.bias, self.spec)?;
        self.input = (mode == Mode::Train).then_some(x);
        Ok(y)
    }

    pub fn backward(&mut self, d: Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let x = take_cache(&mut self.input, "conv2d")?;
        let g = ops::conv2d_backward(Conv2dCtx { input: &x, weight: &self.weight, spec: self.spec }, &d)?;
        let [dw, db]: [Tensor<T>; 2] = g.d_params.try_into().expect("conv2d has two params");
        self.d_weight.add_assign(&dw)?;
        self.d_bias.add_assign(&db)?;
        Ok(g.d_input)
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        let fan_in = self.weight.shape()[1..].iter().product();
        v.param(&join(prefix, "weight"), ParamKind::Weight { fan_in }, &mut self.weight, &mut self.d_weight);
        v.param(&join(prefix, "bias"), ParamKind::Bias, &mut self.bias, &mut self.d_bias);
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub state: BnState<T>,
    pub d_gamma: Tensor<T>,
    pub d_beta: Tensor<T>,
    cache: Option<BnCache<T>>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            state: BnState::with_defaults(channels),
            d_gamma: Tensor::zeros(&[channels]),
            d_beta: Tensor::zeros(&[channels]),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, TensorError> {
        self.state.mode = mode;
        let (y, cache) = ops::batchnorm(&x, &mut self.state)?;
        self.cache = (mode == Mode::Train).then_some(cache);
        Ok(y)
    }

    pub fn backward(&mut self, d: Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let cache = take_cache(&mut self.cache, "batchnorm")?;
        let g = ops::batchnorm_backward(&cache, &self.state, &d)?;
        let [dg, db]: [Tensor<T>; 2] = g.d_params.try_into().expect("batchnorm has two params");
        self.d_gamma.add_assign(&dg)?;
        self.d_beta.add_assign(&db)?;
        Ok(g.d_input)
    }
}

impl<T: Scalar> Module<T> for BatchNorm<T> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        v.param(&join(prefix, "gamma"), ParamKind::BnGamma, &mut self.state.gamma, &mut self.d_gamma);
        v.param(&join(prefix, "beta"), ParamKind::BnBeta, &mut self.state.beta, &mut self.d_beta);
        v.buffer(&join(prefix, "running_mean"), &mut self.state.running_mean);
        v.buffer(&join(prefix, "running_var"), &mut self.state.running_var);
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu<T> {
    output: Option<Tensor<T>>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Self { output: None }
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Tensor<T> {
        let y = ops::relu(&x);
        self.output = (mode == Mode::Train).then(|| y.clone());
        y
    }

    pub fn backward(&mut self, d: Tensor<T>) -> Result<Tensor<T>, TensorError> {
        // relu(x) > 0 exactly where x > 0, so the output doubles as the mask.
        let y = take_cache(&mut self.output, "relu")?;
        ops::relu_backward(&y, &d)
    }
}

#[derive(Debug, Clone)]
pub struct MaxPool1d {
    pub size: usize,
    cache: Option<MaxPoolCache>,
}

impl MaxPool1d {
    pub fn new(size: usize) -> Self {
        Self { size, cache: None }
    }

    pub fn forward<T: Scalar>(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, TensorError> {
        let (y, cache) = ops::maxpool1d(&x, self.size)?;
        self.cache = (mode == Mode::Train).then_some(cache);
        Ok(y)
    }

    pub fn backward<T: Scalar>(&mut self, d: Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let cache = take_cache(&mut self.cache, "maxpool1d")?;
        ops::maxpool1d_backward(&cache, &d)
    }
}

#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    input_shape: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn forward<T: Scalar>(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, TensorError> {
        let y = ops::adaptive_avg_pool_1x1(&x)?;
        self.input_shape = (mode == Mode::Train).then(|| x.shape().to_vec());
        Ok(y)
    }

    pub fn backward<T: Scalar>(&mut self, d: Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let shape = take_cache(&mut self.input_shape, "adaptive_avg_pool_1x1")?;
        ops::adaptive_avg_pool_1x1_backward(&shape, &d)
    }
}

#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub d_weight: Tensor<T>,
    pub d_bias: Tensor<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(din: usize, dout: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[dout, din]),
            bias: Tensor::zeros(&[dout]),
            d_weight: Tensor::zeros(&[dout, din]),
            d_bias: Tensor::zeros(&[dout]),
            input: None,
        }
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, TensorError> {
        let y = ops::linear(&x, &self.weight, &self.bias)?;
        self.input = (mode == Mode::Train).then_some(x);
        Ok(y)
    }

    pub fn backward(&mut self, d: Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let x = take_cache(&mut self.input, "linear")?;
        let g = ops::linear_backward(LinearCtx { input: &x, weight: &self.weight }, &d)?;
        let [dw, db]: [Tensor<T>; 2] = g.d_params.try_into().expect("linear has two params");
        self.d_weight.add_assign(&dw)?;
        self.d_bias.add_assign(&db)?;
        Ok(g.d_input)
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        let fan_in = self.weight.shape()[1];
        v.param(&join(prefix, "weight"), ParamKind::DenseWeight { fan_in }, &mut self.weight, &mut self.d_weight);
        v.param(&join(prefix, "bias"), ParamKind::Bias, &mut self.bias, &mut self.d_bias);
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_without_forward_is_an_error() {
        let mut conv = Conv1d::<f32>::new(1, 1, 3, Conv1dSpec::new(1, 1, 1));
        assert!(matches!(
            conv.backward(Tensor::zeros(&[1, 1, 4])),
            Err(TensorError::MissingForward("conv1d"))
        ));
        // eval-mode forward does not keep a cache
        conv.forward(Tensor::zeros(&[1, 1, 4]), Mode::Eval).unwrap();
        assert!(conv.backward(Tensor::zeros(&[1, 1, 4])).is_err());
    }

    #[test]
    fn gradients_accumulate_until_zeroed() {
        let mut lin = Linear::<f64>::new(2, 1);
        for _ in 0..2 {
            lin.forward(Tensor::ones(&[1, 2]), Mode::Train).unwrap();
            lin.backward(Tensor::ones(&[1, 1])).unwrap();
        }
        assert_eq!(lin.d_bias.data(), &[2.0]);
        lin.zero_grad();
        assert_eq!(lin.d_bias.data(), &[0.0]);
        assert_eq!(lin.num_params(), 3);
    }
}
