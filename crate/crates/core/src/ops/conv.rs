//! 1-D and 2-D convolutions (cross-correlation, zero padding) lowered to GEMM
//! through explicit im2col / col2im buffers.

use super::LayerGrads;
use crate::tensor::{gemm, MatRef, Scalar, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1dSpec {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Conv1dSpec {
    pub const fn new(stride: usize, padding: usize, dilation: usize) -> Self {
        Self {
            stride,
            padding,
            dilation,
        }
    }
}

impl Default for Conv1dSpec {
    fn default() -> Self {
        Self::new(1, 0, 1)
    }
}

/// `floor((len + 2*padding - dilation*(kernel-1) - 1) / stride) + 1`, or
/// `None` when the padded input is shorter than the dilated kernel.
pub fn conv1d_out_len(len: usize, kernel: usize, spec: Conv1dSpec) -> Option<usize> {
    if kernel == 0 || spec.stride == 0 || spec.dilation == 0 {
        return None;
    }
    let span = spec.dilation * (kernel - 1) + 1;
    let padded = len + 2 * spec.padding;
    if padded < span {
        return None;
    }
    Some((padded - span) / spec.stride + 1)
}

/// Saved forward arguments for [`conv1d_backward`].
#[derive(Debug, Clone, Copy)]
pub struct Conv1dCtx<'a, T> {
    pub input: &'a Tensor<T>,
    pub weight: &'a Tensor<T>,
    pub spec: Conv1dSpec,
}

struct Geom1d {
    batch: usize,
    cin: usize,
    len: usize,
    cout: usize,
    kernel: usize,
    lout: usize,
}

fn geom1d<T: Scalar>(
    op: &'static str,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    spec: Conv1dSpec,
) -> Result<Geom1d, TensorError> {
    let (batch, cin, len) = input.dims3(op)?;
    let (cout, wcin, kernel) = weight.dims3(op)?;
    if wcin != cin {
        return Err(TensorError::invalid(
            op,
            format!(
                "input channels do not match weight: input shape {:?}, weight shape {:?}",
                input.shape(),
                weight.shape()
            ),
        ));
    }
    if spec.stride == 0 || spec.dilation == 0 || kernel == 0 {
        return Err(TensorError::invalid(
            op,
            format!("stride, dilation and kernel must be >= 1 (got {spec:?}, kernel {kernel})"),
        ));
    }
    let lout = conv1d_out_len(len, kernel, spec).ok_or_else(|| {
        TensorError::invalid(
            op,
            format!("input length {len} with {spec:?} is shorter than kernel span"),
        )
    })?;
    Ok(Geom1d {
        batch,
        cin,
        len,
        cout,
        kernel,
        lout,
    })
}

/// Column buffers hold several batch items side by side, up to this many
/// columns, so small layers still give the GEMM wide operands.
const GROUP_COLUMNS: usize = 256;

/// Batch items per im2col group for `positions` output positions each.
fn group_size(batch: usize, positions: usize) -> usize {
    (GROUP_COLUMNS / positions.max(1)).clamp(1, batch.max(1))
}

/// Range `lo..hi` of output indices `t < out_len` whose source index
/// `t * stride + offset` falls inside `0..in_len`.
fn valid_span(out_len: usize, in_len: usize, stride: usize, offset: isize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { (-offset + s - 1) / s };
    let end = in_len as isize - offset;
    let hi = if end <= 0 { 0 } else { (end + s - 1) / s };
    let lo = (lo as usize).min(out_len);
    (lo, (hi as usize).clamp(lo, out_len))
}

/// `dst[t] = src[t * stride + offset]`, zero where that is out of range.
fn gather<T: Scalar>(dst: &mut [T], src: &[T], stride: usize, offset: isize) {
    let (lo, hi) = valid_span(dst.len(), src.len(), stride, offset);
    dst[..lo].fill(T::zero());
    dst[hi..].fill(T::zero());
    if hi == lo {
        return;
    }
    let start = (lo as isize * stride as isize + offset) as usize;
    if stride == 1 {
        dst[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
    } else {
        for (d, &v) in dst[lo..hi].iter_mut().zip(src[start..].iter().step_by(stride)) {
            *d = v;
        }
    }
}

/// Adjoint of [`gather`]: `dst[t * stride + offset] += src[t]`.
fn scatter_add<T: Scalar>(dst: &mut [T], src: &[T], stride: usize, offset: isize) {
    let (lo, hi) = valid_span(src.len(), dst.len(), stride, offset);
    if hi == lo {
        return;
    }
    let start = (lo as isize * stride as isize + offset) as usize;
    for (d, &v) in dst[start..].iter_mut().step_by(stride).zip(&src[lo..hi]) {
        *d += v;
    }
}

/// Writes the patches of one item into columns `off..off + lout` of a
/// buffer whose rows are `ld` wide.
fn im2col_1d<T: Scalar>(x: &[T], g: &Geom1d, spec: Conv1dSpec, col: &mut [T], ld: usize, off: usize) {
    for ci in 0..g.cin {
        let xs = &x[ci * g.len..(ci + 1) * g.len];
        for k in 0..g.kernel {
            let r = ci * g.kernel + k;
            let offset = (k * spec.dilation) as isize - spec.padding as isize;
            gather(&mut col[r * ld + off..r * ld + off + g.lout], xs, spec.stride, offset);
        }
    }
}

fn col2im_1d<T: Scalar>(col: &[T], g: &Geom1d, spec: Conv1dSpec, dx: &mut [T], ld: usize, off: usize) {
    for ci in 0..g.cin {
        let xs = &mut dx[ci * g.len..(ci + 1) * g.len];
        for k in 0..g.kernel {
            let r = ci * g.kernel + k;
            let offset = (k * spec.dilation) as isize - spec.padding as isize;
            scatter_add(xs, &col[r * ld + off..r * ld + off + g.lout], spec.stride, offset);
        }
    }
}

/// Shape of one im2col lowering: `cout x rows` weights applied to
/// `positions` output positions per item.
#[derive(Clone, Copy)]
struct Lowering {
    batch: usize,
    cout: usize,
    rows: usize,
    positions: usize,
    in_plane: usize,
}

/// `out[b, c, p] = bias[c] + sum_r w[c, r] * col_b[r, p]`, with the patches
/// of item `b` produced by `fill(x_b, col, ld, off)`.
fn lowered_forward<T: Scalar>(
    l: Lowering,
    input: &[T],
    weight: &[T],
    bias: &[T],
    out: &mut [T],
    fill: impl Fn(&[T], &mut [T], usize, usize),
) {
    let gb = group_size(l.batch, l.positions);
    let mut col = vec![T::zero(); l.rows * gb * l.positions];
    let mut prod = vec![T::zero(); l.cout * gb * l.positions];
    let w = MatRef::new(weight, l.cout, l.rows);
    let out_plane = l.cout * l.positions;
    for start in (0..l.batch).step_by(gb) {
        let n = gb.min(l.batch - start);
        let ld = n * l.positions;
        for j in 0..n {
            let b = start + j;
            fill(&input[b * l.in_plane..(b + 1) * l.in_plane], &mut col, ld, j * l.positions);
        }
        let prod = &mut prod[..l.cout * ld];
        gemm(w, MatRef::new(&col[..l.rows * ld], l.rows, ld), prod, T::zero());
        for j in 0..n {
            let y = &mut out[(start + j) * out_plane..(start + j + 1) * out_plane];
            for c in 0..l.cout {
                let src = &prod[c * ld + j * l.positions..c * ld + (j + 1) * l.positions];
                for (d, &v) in y[c * l.positions..(c + 1) * l.positions].iter_mut().zip(src) {
                    *d = v + bias[c];
                }
            }
        }
    }
}

/// Accumulates weight and bias gradients and writes the input gradient
/// through `scatter(dcol, dx_b, ld, off)`.
#[allow(clippy::too_many_arguments)]
fn lowered_backward<T: Scalar>(
    l: Lowering,
    input: &[T],
    weight: &[T],
    d_output: &[T],
    d_weight: &mut [T],
    d_bias: &mut [T],
    d_input: &mut [T],
    fill: impl Fn(&[T], &mut [T], usize, usize),
    scatter: impl Fn(&[T], &mut [T], usize, usize),
) {
    let gb = group_size(l.batch, l.positions);
    let mut col = vec![T::zero(); l.rows * gb * l.positions];
    let mut dcol = vec![T::zero(); l.rows * gb * l.positions];
    let mut dy = vec![T::zero(); l.cout * gb * l.positions];
    let w = MatRef::new(weight, l.cout, l.rows);
    let out_plane = l.cout * l.positions;
    for start in (0..l.batch).step_by(gb) {
        let n = gb.min(l.batch - start);
        let ld = n * l.positions;
        for j in 0..n {
            let b = start + j;
            fill(&input[b * l.in_plane..(b + 1) * l.in_plane], &mut col, ld, j * l.positions);
            let src = &d_output[b * out_plane..(b + 1) * out_plane];
            for c in 0..l.cout {
                let chunk = &src[c * l.positions..(c + 1) * l.positions];
                d_bias[c] += chunk.iter().copied().sum::<T>();
                dy[c * ld + j * l.positions..c * ld + (j + 1) * l.positions].copy_from_slice(chunk);
            }
        }
        let dy_mat = MatRef::new(&dy[..l.cout * ld], l.cout, ld);
        let col_mat = MatRef::new(&col[..l.rows * ld], l.rows, ld);
        gemm(dy_mat, col_mat.t(), d_weight, T::one());
        let dcol = &mut dcol[..l.rows * ld];
        gemm(w.t(), dy_mat, dcol, T::zero());
        for j in 0..n {
            let b = start + j;
            scatter(dcol, &mut d_input[b * l.in_plane..(b + 1) * l.in_plane], ld, j * l.positions);
        }
    }
}

fn check_bias<T: Scalar>(op: &'static str, bias: &Tensor<T>, cout: usize) -> Result<(), TensorError> {
    bias.expect_shape(op, &[cout])
}

/// 1-D convolution of `input [B, Cin, L]` with `weight [Cout, Cin, K]`.
pub fn conv1d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    spec: Conv1dSpec,
) -> Result<Tensor<T>, TensorError> {
    const OP: &str = "conv1d";
    let g = geom1d(OP, input, weight, spec)?;
    check_bias(OP, bias, g.cout)?;
    let mut out = Tensor::zeros(&[g.batch, g.cout, g.lout]);
    let l = Lowering {
        batch: g.batch,
        cout: g.cout,
        rows: g.cin * g.kernel,
        positions: g.lout,
        in_plane: g.cin * g.len,
    };
    lowered_forward(l, input.data(), weight.data(), bias.data(), out.data_mut(), |x, col, ld, off| {
        im2col_1d(x, &g, spec, col, ld, off)
    });
    Ok(out)
}

/// Gradients `[d_weight, d_bias]` plus `d_input` for [`conv1d`].
pub fn conv1d_backward<T: Scalar>(
    ctx: Conv1dCtx<'_, T>,
    d_output: &Tensor<T>,
) -> Result<LayerGrads<T>, TensorError> {
    const OP: &str = "conv1d_backward";
    let g = geom1d(OP, ctx.input, ctx.weight, ctx.spec)?;
    d_output.expect_shape(OP, &[g.batch, g.cout, g.lout])?;
    let mut d_input = Tensor::zeros(ctx.input.shape());
    let mut d_weight = Tensor::zeros(ctx.weight.shape());
    let mut d_bias = Tensor::zeros(&[g.cout]);
    let l = Lowering {
        batch: g.batch,
        cout: g.cout,
        rows: g.cin * g.kernel,
        positions: g.lout,
        in_plane: g.cin * g.len,
    };
    lowered_backward(
        l,
        ctx.input.data(),
        ctx.weight.data(),
        d_output.data(),
        d_weight.data_mut(),
        d_bias.data_mut(),
        d_input.data_mut(),
        |x, col, ld, off| im2col_1d(x, &g, ctx.spec, col, ld, off),
        |dcol, dx, ld, off| col2im_1d(dcol, &g, ctx.spec, dx, ld, off),
    );
    Ok(LayerGrads {
        d_input,
        d_params: vec![d_weight, d_bias],
    })
}

/// Square-kernel 2-D convolution parameters (same stride and padding on
/// both spatial axes, no dilation).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
}

impl Conv2dSpec {
    pub const fn new(stride: usize, padding: usize) -> Self {
        Self { stride, padding }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Conv2dCtx<'a, T> {
    pub input: &'a Tensor<T>,
    pub weight: &'a Tensor<T>,
    pub spec: Conv2dSpec,
}

struct Geom2d {
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    hout: usize,
    wout: usize,
}

impl Geom2d {
    fn in_plane(&self) -> usize {
        self.cin * self.h * self.w
    }
    fn positions(&self) -> usize {
        self.hout * self.wout
    }
}

fn geom2d<T: Scalar>(
    op: &'static str,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    spec: Conv2dSpec,
) -> Result<Geom2d, TensorError> {
    let (batch, cin, h, w) = input.dims4(op)?;
    let (cout, wcin, kh, kw) = weight.dims4(op)?;
    if wcin != cin {
        return Err(TensorError::invalid(
            op,
            format!(
                "input channels do not match weight: input shape {:?}, weight shape {:?}",
                input.shape(),
                weight.shape()
            ),
        ));
    }
    let axis = |len: usize, k: usize| conv1d_out_len(len, k, Conv1dSpec::new(spec.stride, spec.padding, 1));
    let (hout, wout) = match (axis(h, kh), axis(w, kw)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(TensorError::invalid(
                op,
                format!("input {h}x{w} with kernel {kh}x{kw} and {spec:?} has no valid output"),
            ))
        }
    };
    Ok(Geom2d {
        batch,
        cin,
        h,
        w,
        cout,
        kh,
        kw,
        hout,
        wout,
    })
}

fn im2col_2d<T: Scalar>(x: &[T], g: &Geom2d, spec: Conv2dSpec, col: &mut [T], ld: usize, off: usize) {
    let npos = g.positions();
    let pad = spec.padding as isize;
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let r = (ci * g.kh + ky) * g.kw + kx;
                let row = &mut col[r * ld + off..r * ld + off + npos];
                for oy in 0..g.hout {
                    let iy = (oy * spec.stride + ky) as isize - pad;
                    let dst = &mut row[oy * g.wout..(oy + 1) * g.wout];
                    if iy < 0 || iy as usize >= g.h {
                        dst.fill(T::zero());
                    } else {
                        let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                        gather(dst, src, spec.stride, kx as isize - pad);
                    }
                }
            }
        }
    }
}

fn col2im_2d<T: Scalar>(col: &[T], g: &Geom2d, spec: Conv2dSpec, dx: &mut [T], ld: usize, off: usize) {
    let npos = g.positions();
    let pad = spec.padding as isize;
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let r = (ci * g.kh + ky) * g.kw + kx;
                let row = &col[r * ld + off..r * ld + off + npos];
                for oy in 0..g.hout {
                    let iy = (oy * spec.stride + ky) as isize - pad;
                    if iy >= 0 && (iy as usize) < g.h {
                        let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                        scatter_add(dst, &row[oy * g.wout..(oy + 1) * g.wout], spec.stride, kx as isize - pad);
                    }
                }
            }
        }
    }
}

/// 2-D convolution of `input [B, Cin, H, W]` with `weight [Cout, Cin, Kh, Kw]`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    spec: Conv2dSpec,
) -> Result<Tensor<T>, TensorError> {
    const OP: &str = "conv2d";
    if spec.stride == 0 {
        return Err(TensorError::invalid(OP, "stride must be >= 1"));
    }
    let g = geom2d(OP, input, weight, spec)?;
    check_bias(OP, bias, g.cout)?;
    let mut out = Tensor::zeros(&[g.batch, g.cout, g.hout, g.wout]);
    let l = Lowering {
        batch: g.batch,
        cout: g.cout,
        rows: g.cin * g.kh * g.kw,
        positions: g.positions(),
        in_plane: g.in_plane(),
    };
    lowered_forward(l, input.data(), weight.data(), bias.data(), out.data_mut(), |x, col, ld, off| {
        im2col_2d(x, &g, spec, col, ld, off)
    });
    Ok(out)
}

/// Gradients `[d_weight, d_bias]` plus `d_input` for [`conv2d`].
pub fn conv2d_backward<T: Scalar>(
    ctx: Conv2dCtx<'_, T>,
    d_output: &Tensor<T>,
) -> Result<LayerGrads<T>, TensorError> {
    const OP: &str = "conv2d_backward";
    let g = geom2d(OP, ctx.input, ctx.weight, ctx.spec)?;
    d_output.expect_shape(OP, &[g.batch, g.cout, g.hout, g.wout])?;
    let mut d_input = Tensor::zeros(ctx.input.shape());
    let mut d_weight = Tensor::zeros(ctx.weight.shape());
    let mut d_bias = Tensor::zeros(&[g.cout]);
    let l = Lowering {
        batch: g.batch,
        cout: g.cout,
        rows: g.cin * g.kh * g.kw,
        positions: g.positions(),
        in_plane: g.in_plane(),
    };
    lowered_backward(
        l,
        ctx.input.data(),
        ctx.weight.data(),
        d_output.data(),
        d_weight.data_mut(),
        d_bias.data_mut(),
        d_input.data_mut(),
        |x, col, ld, off| im2col_2d(x, &g, ctx.spec, col, ld, off),
        |dcol, dx, ld, off| col2im_2d(dcol, &g, ctx.spec, dx, ld, off),
    );
    Ok(LayerGrads {
        d_input,
        d_params: vec![d_weight, d_bias],
    })
}
