use super::LayerGrads;
use crate::tensor::{gemm, MatRef, Scalar, Tensor, TensorError};

#[derive(Debug, Clone, Copy)]
pub struct LinearCtx<'a, T> {
    pub input: &'a Tensor<T>,
    pub weight: &'a Tensor<T>,
}

fn dims<T: Scalar>(op: &'static str, input: &Tensor<T>, weight: &Tensor<T>) -> Result<(usize, usize, usize), TensorError> {
    let (b, din) = input.dims2(op)?;
    let (dout, wdin) = weight.dims2(op)?;
    if wdin != din {
        return Err(TensorError::invalid(
            op,
            format!(
                "input features do not match weight: input shape {:?}, weight shape {:?}",
                input.shape(),
                weight.shape()
            ),
        ));
    }
    Ok((b, din, dout))
}

/// `input [B, Din] * weight^T [Din, Dout] + bias`.
pub fn linear<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (b, din, dout) = dims("linear", input, weight)?;
    bias.expect_shape("linear", &[dout])?;
    let mut out = Tensor::zeros(&[b, dout]);
    for row in out.data_mut().chunks_exact_mut(dout) {
        row.copy_from_slice(bias.data());
    }
    gemm(
        MatRef::new(input.data(), b, din),
        MatRef::new(weight.data(), dout, din).t(),
        out.data_mut(),
        T::one(),
    );
    Ok(out)
}

/// Gradients `[d_weight, d_bias]` plus `d_input` for [`linear`].
pub fn linear_backward<T: Scalar>(ctx: LinearCtx<'_, T>, d_output: &Tensor<T>) -> Result<LayerGrads<T>, TensorError> {
    let (b, din, dout) = dims("linear_backward", ctx.input, ctx.weight)?;
    d_output.expect_shape("linear_backward", &[b, dout])?;
    let dy = MatRef::new(d_output.data(), b, dout);
    let mut d_input = Tensor::zeros(&[b, din]);
    gemm(dy, MatRef::new(ctx.weight.data(), dout, din), d_input.data_mut(), T::zero());
    let mut d_weight = Tensor::zeros(&[dout, din]);
    gemm(dy.t(), MatRef::new(ctx.input.data(), b, din), d_weight.data_mut(), T::zero());
    let mut d_bias = Tensor::zeros(&[dout]);
    for row in d_output.data().chunks_exact(dout) {
        for (acc, &v) in d_bias.data_mut().iter_mut().zip(row) {
            *acc += v;
        }
    }
    Ok(LayerGrads {
        d_input,
        d_params: vec![d_weight, d_bias],
    })
}
