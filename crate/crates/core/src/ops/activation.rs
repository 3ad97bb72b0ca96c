use crate::tensor::{Scalar, Tensor, TensorError};

/// NaN passes through unchanged so corrupted activations stay visible.
pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() || v.is_nan() { v } else { T::zero() })
}

/// Gradient of ReLU; the subgradient at exactly zero is zero.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, d_output: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    d_output.expect_shape("relu_backward", input.shape())?;
    let data = input
        .data()
        .iter()
        .zip(d_output.data())
        .map(|(&x, &d)| if x > T::zero() { d } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data)
}
