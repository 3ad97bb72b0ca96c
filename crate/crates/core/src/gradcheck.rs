//! Finite-difference verification of the analytic backward kernels.
//!
//! Each [`GradCase`] wraps one kernel in 64-bit precision. The check draws
//! random arguments and a random output projection `r`, then compares the
//! analytic gradient of `L = sum(r * f(args))` with the central difference
//! `(L(x + h) - L(x - h)) / 2h` for every differentiable argument element.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::ops::{
    self, BnState, Conv1dCtx, Conv1dSpec, Conv2dCtx, Conv2dSpec, LinearCtx, Mode,
};
use crate::tensor::{Tensor, TensorError};

/// Error threshold for kernels that do not couple batch elements.
pub const DEFAULT_THRESHOLD: f64 = 1e-6;
/// Error threshold for batch normalization.
pub const BATCHNORM_THRESHOLD: f64 = 1e-5;
pub const DEFAULT_STEP: f64 = 1e-5;

/// A kernel under test. Argument 0 is the layer input; the first
/// [`GradCase::differentiable`] arguments are perturbed, the rest are
/// held fixed (labels, running statistics).
pub trait GradCase {
    fn name(&self) -> String;
    fn threshold(&self) -> f64;
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>>;
    fn differentiable(&self, args: &[Tensor<f64>]) -> usize {
        args.len()
    }
    fn forward(&self, args: &[Tensor<f64>]) -> Result<Tensor<f64>, TensorError>;
    fn backward(&self, args: &[Tensor<f64>], d_out: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, TensorError>;
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn normal_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.sample::<f64, _>(StandardNormal) * scale)
}

/// Values bounded away from zero, for kernels with a kink at zero.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let mag = rng.random_range(0.05..2.0);
        if rng.random_bool(0.5) { mag } else { -mag }
    })
}

/// Max relative error between analytic and central-difference gradients.
pub fn gradcheck(case: &dyn GradCase, step: f64, seed: u64) -> Result<f64, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut args = case.sample(&mut rng);
    let out = case.forward(&args)?;
    let proj = normal_tensor(&mut rng, out.shape(), 1.0);
    let analytic = case.backward(&args, &proj)?;
    let n_diff = case.differentiable(&args);
    if analytic.len() < n_diff {
        return Err(TensorError::invalid(
            "gradcheck",
            format!("{} returned {} gradients for {} arguments", case.name(), analytic.len(), n_diff),
        ));
    }
    let mut worst = 0.0f64;
    for a in 0..n_diff {
        if analytic[a].shape() != args[a].shape() {
            return Err(TensorError::shape("gradcheck", args[a].shape(), analytic[a].shape()));
        }
        for i in 0..args[a].len() {
            let orig = args[a].data()[i];
            args[a].data_mut()[i] = orig + step;
            let plus = case.forward(&args)?;
            args[a].data_mut()[i] = orig - step;
            let minus = case.forward(&args)?;
            args[a].data_mut()[i] = orig;
            // Differencing outputs before projecting keeps untouched outputs
            // exactly cancelled instead of accumulating rounding noise.
            let numeric: f64 = plus
                .data()
                .iter()
                .zip(minus.data())
                .zip(proj.data())
                .map(|((p, m), r)| (p - m) * r)
                .sum::<f64>()
                / (2.0 * step);
            worst = worst.max(relative_error(analytic[a].data()[i], numeric));
        }
    }
    Ok(worst)
}

pub struct Conv1dCase {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub len: usize,
    pub kernel: usize,
    pub spec: Conv1dSpec,
}

impl GradCase for Conv1dCase {
    fn name(&self) -> String {
        format!(
            "conv1d(k={},s={},p={},d={})",
            self.kernel, self.spec.stride, self.spec.padding, self.spec.dilation
        )
    }
    fn threshold(&self) -> f64 {
        DEFAULT_THRESHOLD
    }
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        vec![
            normal_tensor(rng, &[self.batch, self.cin, self.len], 1.0),
            normal_tensor(rng, &[self.cout, self.cin, self.kernel], 0.5),
            normal_tensor(rng, &[self.cout], 0.5),
        ]
    }
    fn forward(&self, a: &[Tensor<f64>]) -> Result<Tensor<f64>, TensorError> {
        ops::conv1d(&a[0], &a[1], &a[2], self.spec)
    }
    fn backward(&self, a: &[Tensor<f64>], d: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, TensorError> {
        let g = ops::conv1d_backward(Conv1dCtx { input: &a[0], weight: &a[1], spec: self.spec }, d)?;
        Ok([vec![g.d_input], g.d_params].concat())
    }
}

pub struct Conv2dCase {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub kernel: usize,
    pub spec: Conv2dSpec,
}

impl GradCase for Conv2dCase {
    fn name(&self) -> String {
        format!("conv2d(k={},s={},p={})", self.kernel, self.spec.stride, self.spec.padding)
    }
    fn threshold(&self) -> f64 {
        DEFAULT_THRESHOLD
    }
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        vec![
            normal_tensor(rng, &[self.batch, self.cin, self.h, self.w], 1.0),
            normal_tensor(rng, &[self.cout, self.cin, self.kernel, self.kernel], 0.5),
            normal_tensor(rng, &[self.cout], 0.5),
        ]
    }
    fn forward(&self, a: &[Tensor<f64>]) -> Result<Tensor<f64>, TensorError> {
        ops::conv2d(&a[0], &a[1], &a[2], self.spec)
    }
    fn backward(&self, a: &[Tensor<f64>], d: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, TensorError> {
        let g = ops::conv2d_backward(Conv2dCtx { input: &a[0], weight: &a[1], spec: self.spec }, d)?;
        Ok([vec![g.d_input], g.d_params].concat())
    }
}

/// Batch normalization; args are `[input, gamma, beta]` in train mode and
/// additionally `[running_mean, running_var]` (held fixed) in eval mode.
pub struct BatchNormCase {
    pub shape: Vec<usize>,
    pub mode: Mode,
}

impl BatchNormCase {
    fn state(&self, a: &[Tensor<f64>]) -> BnState<f64> {
        let mut s = BnState::with_defaults(self.shape[1]);
        s.gamma = a[1].clone();
        s.beta = a[2].clone();
        if self.mode == Mode::Eval {
            s.running_mean = a[3].clone();
            s.running_var = a[4].clone();
        }
        s.mode = self.mode;
        s
    }
}

impl GradCase for BatchNormCase {
    fn name(&self) -> String {
        let mode = match self.mode {
            Mode::Train => "train",
            Mode::Eval => "eval",
        };
        format!("batchnorm{}d({mode})", self.shape.len().saturating_sub(2))
    }
    fn threshold(&self) -> f64 {
        BATCHNORM_THRESHOLD
    }
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        let c = self.shape[1];
        let mut args = vec![
            normal_tensor(rng, &self.shape, 1.5),
            Tensor::from_fn(&[c], |_| rng.random_range(0.5..1.5)),
            normal_tensor(rng, &[c], 0.5),
        ];
        if self.mode == Mode::Eval {
            args.push(normal_tensor(rng, &[c], 0.3));
            args.push(Tensor::from_fn(&[c], |_| rng.random_range(0.5..2.0)));
        }
        args
    }
    fn differentiable(&self, _args: &[Tensor<f64>]) -> usize {
        3
    }
    fn forward(&self, a: &[Tensor<f64>]) -> Result<Tensor<f64>, TensorError> {
        let mut s = self.state(a);
        Ok(ops::batchnorm(&a[0], &mut s)?.0)
    }
    fn backward(&self, a: &[Tensor<f64>], d: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, TensorError> {
        let mut s = self.state(a);
        let (_, cache) = ops::batchnorm(&a[0], &mut s)?;
        let g = ops::batchnorm_backward(&cache, &s, d)?;
        Ok([vec![g.d_input], g.d_params].concat())
    }
}

/// Max pooling with inputs whose window maxima are separated by at least
/// 0.1, so a step of `h` never changes the argmax.
pub struct MaxPoolCase {
    pub batch: usize,
    pub channels: usize,
    pub len: usize,
    pub size: usize,
}

impl GradCase for MaxPoolCase {
    fn name(&self) -> String {
        format!("maxpool1d(size={})", self.size)
    }
    fn threshold(&self) -> f64 {
        DEFAULT_THRESHOLD
    }
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        let n = self.batch * self.channels * self.len;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n / self.size {
            let mut window: Vec<f64> = (0..self.size).map(|k| k as f64 * 0.1).collect();
            for i in (1..window.len()).rev() {
                window.swap(i, rng.random_range(0..=i));
            }
            let offset: f64 = rng.sample(StandardNormal);
            data.extend(window.into_iter().map(|v| v + offset));
        }
        vec![Tensor::from_vec(&[self.batch, self.channels, self.len], data).expect("sizes agree")]
    }
    fn forward(&self, a: &[Tensor<f64>]) -> Result<Tensor<f64>, TensorError> {
        Ok(ops::maxpool1d(&a[0], self.size)?.0)
    }
    fn backward(&self, a: &[Tensor<f64>], d: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, TensorError> {
        let (_, cache) = ops::maxpool1d(&a[0], self.size)?;
        Ok(vec![ops::maxpool1d_backward(&cache, d)?])
    }
}

pub struct ReluCase {
    pub shape: Vec<usize>,
}

impl GradCase for ReluCase {
    fn name(&self) -> String {
        "relu".into()
    }
    fn threshold(&self) -> f64 {
        DEFAULT_THRESHOLD
    }
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        vec![away_from_zero(rng, &self.shape)]
    }
    fn forward(&self, a: &[Tensor<f64>]) -> Result<Tensor<f64>, TensorError> {
        Ok(ops::relu(&a[0]))
    }
    fn backward(&self, a: &[Tensor<f64>], d: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, TensorError> {
        Ok(vec![ops::relu_backward(&a[0], d)?])
    }
}

pub struct AvgPoolCase {
    pub shape: [usize; 4],
}

impl GradCase for AvgPoolCase {
    fn name(&self) -> String {
        "adaptive_avg_pool_1x1".into()
    }
    fn threshold(&self) -> f64 {
        DEFAULT_THRESHOLD
    }
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        vec![normal_tensor(rng, &self.shape, 1.0)]
    }
    fn forward(&self, a: &[Tensor<f64>]) -> Result<Tensor<f64>, TensorError> {
        ops::adaptive_avg_pool_1x1(&a[0])
    }
    fn backward(&self, a: &[Tensor<f64>], d: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, TensorError> {
        Ok(vec![ops::adaptive_avg_pool_1x1_backward(a[0].shape(), d)?])
    }
}

pub struct LinearCase {
    pub batch: usize,
    pub din: usize,
    pub dout: usize,
}

impl GradCase for LinearCase {
    fn name(&self) -> String {
        format!("linear({}x{})", self.dout, self.din)
    }
    fn threshold(&self) -> f64 {
        DEFAULT_THRESHOLD
    }
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        vec![
            normal_tensor(rng, &[self.batch, self.din], 1.0),
            normal_tensor(rng, &[self.dout, self.din], 0.5),
            normal_tensor(rng, &[self.dout], 0.5),
        ]
    }
    fn forward(&self, a: &[Tensor<f64>]) -> Result<Tensor<f64>, TensorError> {
        ops::linear(&a[0], &a[1], &a[2])
    }
    fn backward(&self, a: &[Tensor<f64>], d: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, TensorError> {
        let g = ops::linear_backward(LinearCtx { input: &a[0], weight: &a[1] }, d)?;
        Ok([vec![g.d_input], g.d_params].concat())
    }
}

/// Cross-entropy; args are `[logits, labels]`, labels stored as floats and
/// held fixed.
pub struct CrossEntropyCase {
    pub batch: usize,
}

fn labels_of(t: &Tensor<f64>) -> Vec<usize> {
    t.data().iter().map(|&v| v as usize).collect()
}

impl GradCase for CrossEntropyCase {
    fn name(&self) -> String {
        "cross_entropy_logits".into()
    }
    fn threshold(&self) -> f64 {
        DEFAULT_THRESHOLD
    }
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        vec![
            normal_tensor(rng, &[self.batch, 2], 2.0),
            Tensor::from_fn(&[self.batch], |_| rng.random_range(0..2) as f64),
        ]
    }
    fn differentiable(&self, _args: &[Tensor<f64>]) -> usize {
        1
    }
    fn forward(&self, a: &[Tensor<f64>]) -> Result<Tensor<f64>, TensorError> {
        let (loss, _) = ops::cross_entropy_logits(&a[0], &labels_of(&a[1]))?;
        Tensor::from_vec(&[1], vec![loss])
    }
    fn backward(&self, a: &[Tensor<f64>], d: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, TensorError> {
        let (_, grad) = ops::cross_entropy_logits(&a[0], &labels_of(&a[1]))?;
        let s = d.data()[0];
        Ok(vec![grad.map(|v| v * s)])
    }
}

/// Wraps a case and scales its analytic gradients, for exercising the
/// failure path of the suite.
pub struct Perturbed<C> {
    pub inner: C,
    pub factor: f64,
}

impl<C: GradCase> GradCase for Perturbed<C> {
    fn name(&self) -> String {
        self.inner.name()
    }
    fn threshold(&self) -> f64 {
        self.inner.threshold()
    }
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        self.inner.sample(rng)
    }
    fn differentiable(&self, args: &[Tensor<f64>]) -> usize {
        self.inner.differentiable(args)
    }
    fn forward(&self, a: &[Tensor<f64>]) -> Result<Tensor<f64>, TensorError> {
        self.inner.forward(a)
    }
    fn backward(&self, a: &[Tensor<f64>], d: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, TensorError> {
        let f = self.factor;
        Ok(self.inner.backward(a, d)?.into_iter().map(|g| g.map(|v| v * f)).collect())
    }
}

/// Every layer type used by the network at small sizes.
pub fn standard_cases() -> Vec<Box<dyn GradCase>> {
    vec![
        Box::new(Conv1dCase { batch: 2, cin: 3, cout: 4, len: 9, kernel: 3, spec: Conv1dSpec::new(1, 1, 1) }),
        Box::new(Conv1dCase { batch: 2, cin: 3, cout: 4, len: 9, kernel: 3, spec: Conv1dSpec::new(1, 2, 2) }),
        Box::new(Conv1dCase { batch: 2, cin: 1, cout: 3, len: 20, kernel: 11, spec: Conv1dSpec::new(5, 5, 1) }),
        Box::new(Conv2dCase { batch: 2, cin: 2, cout: 3, h: 5, w: 4, kernel: 3, spec: Conv2dSpec::new(1, 1) }),
        Box::new(Conv2dCase { batch: 2, cin: 2, cout: 3, h: 5, w: 4, kernel: 3, spec: Conv2dSpec::new(2, 1) }),
        Box::new(Conv2dCase { batch: 2, cin: 2, cout: 3, h: 5, w: 4, kernel: 1, spec: Conv2dSpec::new(2, 0) }),
        Box::new(BatchNormCase { shape: vec![4, 3, 8], mode: Mode::Train }),
        Box::new(BatchNormCase { shape: vec![3, 2, 3, 4], mode: Mode::Train }),
        Box::new(BatchNormCase { shape: vec![4, 3, 8], mode: Mode::Eval }),
        Box::new(MaxPoolCase { batch: 2, channels: 2, len: 8, size: 4 }),
        Box::new(ReluCase { shape: vec![2, 3, 5] }),
        Box::new(AvgPoolCase { shape: [2, 3, 3, 4] }),
        Box::new(LinearCase { batch: 4, din: 3, dout: 5 }),
        Box::new(CrossEntropyCase { batch: 8 }),
    ]
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub layer: String,
    pub max_rel_error: f64,
    pub threshold: f64,
    pub seeds: u64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.threshold
    }
}

/// Runs one case over seeds `0..seeds` and keeps the worst error.
pub fn check_case(case: &dyn GradCase, seeds: u64, step: f64) -> Result<GradReport, TensorError> {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        worst = worst.max(gradcheck(case, step, seed)?);
    }
    Ok(GradReport {
        layer: case.name(),
        max_rel_error: worst,
        threshold: case.threshold(),
        seeds,
    })
}

/// Runs [`standard_cases`]. When `fault` names a layer (prefix match on the
/// case name), that case's analytic gradients are scaled by `1.001`.
pub fn run_suite(seeds: u64, step: f64, fault: Option<&str>) -> Result<Vec<GradReport>, TensorError> {
    standard_cases()
        .into_iter()
        .map(|case| {
            let faulty = fault.is_some_and(|f| case.name().starts_with(f));
            if faulty {
                check_case(&Perturbed { inner: BoxedCase(case), factor: 1.001 }, seeds, step)
            } else {
                check_case(case.as_ref(), seeds, step)
            }
        })
        .collect()
}

struct BoxedCase(Box<dyn GradCase>);

impl GradCase for BoxedCase {
    fn name(&self) -> String {
        self.0.name()
    }
    fn threshold(&self) -> f64 {
        self.0.threshold()
    }
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        self.0.sample(rng)
    }
    fn differentiable(&self, args: &[Tensor<f64>]) -> usize {
        self.0.differentiable(args)
    }
    fn forward(&self, a: &[Tensor<f64>]) -> Result<Tensor<f64>, TensorError> {
        self.0.forward(a)
    }
    fn backward(&self, a: &[Tensor<f64>], d: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, TensorError> {
        self.0.backward(a, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.0 + 1e-9) - 5e-10).abs() < 1e-15);
    }

    #[test]
    fn linear_and_dilated_conv_pass() {
        let lin = LinearCase { batch: 4, din: 3, dout: 4 };
        assert!(check_case(&lin, 5, DEFAULT_STEP).unwrap().max_rel_error < 1e-7);
        let conv = Conv1dCase { batch: 1, cin: 1, cout: 1, len: 5, kernel: 3, spec: Conv1dSpec::new(1, 2, 2) };
        assert!(check_case(&conv, 5, DEFAULT_STEP).unwrap().max_rel_error < 1e-6);
    }

    #[test]
    fn full_suite_passes() {
        for report in run_suite(20, DEFAULT_STEP, None).unwrap() {
            assert!(report.passed(), "{report:?}");
        }
    }

    #[test]
    fn perturbed_backward_is_caught() {
        let reports = run_suite(2, DEFAULT_STEP, Some("linear")).unwrap();
        let bad: Vec<_> = reports.iter().filter(|r| !r.passed()).collect();
        assert_eq!(bad.len(), 1);
        assert!(bad[0].layer.starts_with("linear"));
    }
}
