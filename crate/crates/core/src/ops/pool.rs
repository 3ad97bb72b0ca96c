//! Non-overlapping 1-D max pooling and global average pooling.

use crate::tensor::{Scalar, Tensor, TensorError};

/// Winning input positions (flat indices into the input) for each output.
#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    pub argmax: Vec<usize>,
    pub input_shape: Vec<usize>,
}

/// Max over windows of `size` consecutive samples with stride `size`.
/// Ties go to the lowest index in the window.
pub fn maxpool1d<T: Scalar>(input: &Tensor<T>, size: usize) -> Result<(Tensor<T>, MaxPoolCache), TensorError> {
    const OP: &str = "maxpool1d";
    let (b, c, len) = input.dims3(OP)?;
    if size == 0 || len % size != 0 {
        return Err(TensorError::invalid(
            OP,
            format!("length {len} is not divisible by pool size {size}"),
        ));
    }
    let lout = len / size;
    let mut out = Tensor::zeros(&[b, c, lout]);
    let mut argmax = Vec::with_capacity(b * c * lout);
    for (w, (window, slot)) in input
        .data()
        .chunks_exact(size)
        .zip(out.data_mut().iter_mut())
        .enumerate()
    {
        let mut best = 0;
        for (i, v) in window.iter().enumerate().skip(1) {
            if *v > window[best] || (v.is_nan() && !window[best].is_nan()) {
                best = i;
            }
        }
        *slot = window[best];
        argmax.push(w * size + best);
    }
    Ok((
        out,
        MaxPoolCache {
            argmax,
            input_shape: input.shape().to_vec(),
        },
    ))
}

/// Routes each output gradient to its window's argmax.
pub fn maxpool1d_backward<T: Scalar>(cache: &MaxPoolCache, d_output: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    if d_output.len() != cache.argmax.len() {
        return Err(TensorError::shape(
            "maxpool1d_backward",
            cache.argmax.len(),
            d_output.shape(),
        ));
    }
    let mut d_input = Tensor::zeros(&cache.input_shape);
    for (&idx, &d) in cache.argmax.iter().zip(d_output.data()) {
        d_input.data_mut()[idx] += d;
    }
    Ok(d_input)
}

/// Mean over the spatial axes: `[B, C, H, W] -> [B, C]`.
pub fn adaptive_avg_pool_1x1<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (b, c, h, w) = input.dims4("adaptive_avg_pool_1x1")?;
    let area = h * w;
    let inv = T::one() / T::from_f64_lossy(area as f64);
    let data = input
        .data()
        .chunks_exact(area)
        .map(|plane| plane.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::from_vec(&[b, c], data)
}

pub fn adaptive_avg_pool_1x1_backward<T: Scalar>(
    input_shape: &[usize],
    d_output: &Tensor<T>,
) -> Result<Tensor<T>, TensorError> {
    const OP: &str = "adaptive_avg_pool_1x1_backward";
    let [b, c, h, w] = input_shape[..] else {
        return Err(TensorError::shape(OP, "rank 4", input_shape));
    };
    d_output.expect_shape(OP, &[b, c])?;
    let area = h * w;
    let inv = T::one() / T::from_f64_lossy(area as f64);
    let mut d_input = Tensor::zeros(input_shape);
    for (plane, &d) in d_input.data_mut().chunks_exact_mut(area).zip(d_output.data()) {
        plane.fill(d * inv);
    }
    Ok(d_input)
}
