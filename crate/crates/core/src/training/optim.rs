//! Parameter initialization and the Adam optimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::nn::{Module, ParamKind, Visitor};
use crate::tensor::{Scalar, Tensor};

/// Kaiming-normal convolution kernels (`std = sqrt(2 / fan_in)`), fully
/// connected weights uniform in `±1/sqrt(fan_in)`, zero biases, batch norm
/// scale 1 and shift 0. Deterministic per seed.
pub fn init_params<T: Scalar, M: Module<T> + ?Sized>(model: &mut M, seed: u64) {
    struct Init(ChaCha8Rng);
    impl<T: Scalar> Visitor<T> for Init {
        fn param(&mut self, _: &str, kind: ParamKind, value: &mut Tensor<T>, grad: &mut Tensor<T>) {
            grad.fill(T::zero());
            match kind {
                ParamKind::Weight { fan_in } => {
                    let std = (2.0 / fan_in as f64).sqrt();
                    for v in value.data_mut() {
                        let z: f64 = self.0.sample(StandardNormal);
                        *v = T::from_f64_lossy(std * z);
                    }
                }
                ParamKind::DenseWeight { fan_in } => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    for v in value.data_mut() {
                        *v = T::from_f64_lossy(self.0.random_range(-bound..bound));
                    }
                }
                ParamKind::Bias | ParamKind::BnBeta => value.fill(T::zero()),
                ParamKind::BnGamma => value.fill(T::one()),
            }
        }

        fn buffer(&mut self, name: &str, value: &mut Tensor<T>) {
            let fill = if name.ends_with("running_var") { T::one() } else { T::zero() };
            value.fill(fill);
        }
    }
    model.visit("", &mut Init(ChaCha8Rng::seed_from_u64(seed)));
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First and second moments for every parameter, in visit order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step_count: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

/// One bias-corrected Adam update of a flat parameter slice. `step` is
/// the 1-based step number.
#[allow(clippy::too_many_arguments)]
pub fn adam_update<T: Scalar>(
    param: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    step: u64,
    lr: f64,
    cfg: &AdamConfig,
) {
    let b1 = T::from_f64_lossy(cfg.beta1);
    let b2 = T::from_f64_lossy(cfg.beta2);
    let one = T::one();
    let bc1 = T::from_f64_lossy(1.0 - cfg.beta1.powi(step as i32));
    let bc2 = T::from_f64_lossy(1.0 - cfg.beta2.powi(step as i32));
    let lr = T::from_f64_lossy(lr);
    let eps = T::from_f64_lossy(cfg.eps);
    let wd = T::from_f64_lossy(cfg.weight_decay);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        let g = if cfg.weight_decay != 0.0 { g + wd * *p } else { g };
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

impl<T: Scalar> Adam<T> {
    pub fn new<M: Module<T> + ?Sized>(model: &mut M, config: AdamConfig) -> Self {
        struct Shapes<T>(Vec<Tensor<T>>);
        impl<T: Scalar> Visitor<T> for Shapes<T> {
            fn param(&mut self, _: &str, _: ParamKind, value: &mut Tensor<T>, _: &mut Tensor<T>) {
                self.0.push(Tensor::zeros(value.shape()));
            }
        }
        let mut s = Shapes(Vec::new());
        model.visit("", &mut s);
        Self {
            config,
            step_count: 0,
            v: s.0.clone(),
            m: s.0,
        }
    }

    /// Applies accumulated gradients with learning rate `lr`.
    pub fn step<M: Module<T> + ?Sized>(&mut self, model: &mut M, lr: f64) {
        struct Step<'a, T> {
            opt: &'a mut Adam<T>,
            lr: f64,
            idx: usize,
        }
        impl<T: Scalar> Visitor<T> for Step<'_, T> {
            fn param(&mut self, _: &str, _: ParamKind, value: &mut Tensor<T>, grad: &mut Tensor<T>) {
                let i = self.idx;
                self.idx += 1;
                let o = &mut *self.opt;
                adam_update(
                    value.data_mut(),
                    grad.data(),
                    o.m[i].data_mut(),
                    o.v[i].data_mut(),
                    o.step_count,
                    self.lr,
                    &o.config,
                );
            }
        }
        self.step_count += 1;
        let mut s = Step { opt: self, lr, idx: 0 };
        model.visit("", &mut s);
        assert_eq!(s.idx, s.opt.m.len(), "optimizer built for a different model");
    }
}
