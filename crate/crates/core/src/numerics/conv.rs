//! Depthwise-separable convolution over `H×W×C` tensors, plus the pooling and
//! activation layers the bone-age regressor stacks around it.
//!
//! Layout is row-major `(row, col, channel)`. Depth kernels are `k×k×C`
//! (one spatial filter per channel), point kernels are `C×C_out`.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `(k - 1) / 2` on every side.
    Same,
    /// No padding.
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub stride: usize,
    pub padding: Padding,
}

impl Default for ConvParams {
    fn default() -> Self {
        ConvParams {
            stride: 1,
            padding: Padding::Same,
        }
    }
}

impl ConvParams {
    fn pad(&self, k: usize) -> usize {
        match self.padding {
            Padding::Same => (k - 1) / 2,
            Padding::Valid => 0,
        }
    }

    /// Output spatial size for an input extent `n` and kernel size `k`.
    pub fn output_extent(&self, n: usize, k: usize) -> Result<usize> {
        if self.stride == 0 {
            return Err(Error::config("stride must be at least 1"));
        }
        let padded = n + 2 * self.pad(k);
        if padded < k {
            return Err(Error::dimension(format!(
                "kernel {k} does not fit an extent of {n} with {:?} padding",
                self.padding
            )));
        }
        Ok((padded - k) / self.stride + 1)
    }
}

fn kernel_size(depth_kernels: &Tensor, channels: usize) -> Result<usize> {
    let (kh, kw, kc) = depth_kernels.dims3()?;
    if kh != kw {
        return Err(Error::config(format!("depth kernel must be square, got {kh}×{kw}")));
    }
    if kh % 2 == 0 {
        return Err(Error::config(format!("kernel size must be odd, got {kh}")));
    }
    if kc != channels {
        return Err(Error::dimension(format!(
            "input has {channels} channels but depth kernels have {kc}"
        )));
    }
    Ok(kh)
}

/// Per-channel spatial convolution (cross-correlation, as in every DL framework).
pub fn depthwise_conv(input: &Tensor, depth_kernels: &Tensor, params: ConvParams) -> Result<Tensor> {
    let (h, w, c) = input.dims3()?;
    let k = kernel_size(depth_kernels, c)?;
    let oh = params.output_extent(h, k)?;
    let ow = params.output_extent(w, k)?;
    let pad = params.pad(k) as isize;
    let s = params.stride;
    let x = input.data();
    let ker = depth_kernels.data();
    let mut out = vec![0.0; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let base = (oy * ow + ox) * c;
            for i in 0..k {
                let iy = (oy * s + i) as isize - pad;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for j in 0..k {
                    let ix = (ox * s + j) as isize - pad;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let src = (iy as usize * w + ix as usize) * c;
                    let kb = (i * k + j) * c;
                    for ch in 0..c {
                        out[base + ch] += x[src + ch] * ker[kb + ch];
                    }
                }
            }
        }
    }
    Tensor::new(vec![oh, ow, c], out)
}

/// Gradients of [`depthwise_conv`] w.r.t. its input and kernels.
pub fn depthwise_conv_backward(
    input: &Tensor,
    depth_kernels: &Tensor,
    params: ConvParams,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let (h, w, c) = input.dims3()?;
    let k = kernel_size(depth_kernels, c)?;
    let (oh, ow, oc) = grad_out.dims3()?;
    if oh != params.output_extent(h, k)? || ow != params.output_extent(w, k)? || oc != c {
        return Err(Error::dimension("depthwise gradient has the wrong shape"));
    }
    let pad = params.pad(k) as isize;
    let s = params.stride;
    let x = input.data();
    let ker = depth_kernels.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gk = vec![0.0; ker.len()];
    for oy in 0..oh {
        for ox in 0..ow {
            let base = (oy * ow + ox) * c;
            for i in 0..k {
                let iy = (oy * s + i) as isize - pad;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for j in 0..k {
                    let ix = (ox * s + j) as isize - pad;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let src = (iy as usize * w + ix as usize) * c;
                    let kb = (i * k + j) * c;
                    for ch in 0..c {
                        let go = g[base + ch];
                        gx[src + ch] += go * ker[kb + ch];
                        gk[kb + ch] += go * x[src + ch];
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), gx)?,
        Tensor::new(depth_kernels.shape().to_vec(), gk)?,
    ))
}

/// 1×1 channel mixing: `out[y, x, o] = Σ_c in[y, x, c] · point[c, o]`.
pub fn pointwise_conv(input: &Tensor, point_kernels: &Tensor) -> Result<Tensor> {
    let (h, w, c) = input.dims3()?;
    let (pc, co) = point_kernels.dims2()?;
    if pc != c {
        return Err(Error::dimension(format!(
            "input has {c} channels but point kernels expect {pc}"
        )));
    }
    let out = crate::numerics::tensor::matmul(input.data(), point_kernels.data(), h * w, c, co);
    Tensor::new(vec![h, w, co], out)
}

pub fn pointwise_conv_backward(
    input: &Tensor,
    point_kernels: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor)> {
    use crate::numerics::tensor::{matmul_nt, matmul_tn};
    let (h, w, c) = input.dims3()?;
    let (_, co) = point_kernels.dims2()?;
    if grad_out.shape() != [h, w, co] {
        return Err(Error::dimension("pointwise gradient has the wrong shape"));
    }
    let gx = matmul_nt(grad_out.data(), point_kernels.data(), h * w, co, c);
    let gp = matmul_tn(input.data(), grad_out.data(), h * w, c, co);
    Ok((
        Tensor::new(vec![h, w, c], gx)?,
        Tensor::new(vec![c, co], gp)?,
    ))
}

/// Depthwise then pointwise.
pub fn depthwise_separable_conv(
    input: &Tensor,
    depth_kernels: &Tensor,
    point_kernels: &Tensor,
    params: ConvParams,
) -> Result<Tensor> {
    let mid = depthwise_conv(input, depth_kernels, params)?;
    pointwise_conv(&mid, point_kernels)
}

/// Weights in a separable layer: `k²·C + C·C_out`.
pub fn separable_param_count(k: usize, channels: usize, channels_out: usize) -> usize {
    k * k * channels + channels * channels_out
}

/// Weights in a full convolution with the same receptive field: `k²·C·C_out`.
pub fn full_conv_param_count(k: usize, channels: usize, channels_out: usize) -> usize {
    k * k * channels * channels_out
}

/// Adds a per-channel bias in place.
pub fn add_channel_bias(x: &mut Tensor, bias: &[f64]) -> Result<()> {
    let (_, _, c) = x.dims3()?;
    if bias.len() != c {
        return Err(Error::dimension(format!("bias of length {} for {c} channels", bias.len())));
    }
    for px in x.data_mut().chunks_mut(c) {
        for (v, b) in px.iter_mut().zip(bias) {
            *v += b;
        }
    }
    Ok(())
}

pub fn channel_bias_grad(grad_out: &Tensor) -> Result<Vec<f64>> {
    let (_, _, c) = grad_out.dims3()?;
    let mut g = vec![0.0; c];
    for px in grad_out.data().chunks(c) {
        for (acc, v) in g.iter_mut().zip(px) {
            *acc += v;
        }
    }
    Ok(g)
}

/// 2×2 average pooling with stride 2; a trailing odd row/column is dropped.
pub fn avg_pool2(input: &Tensor) -> Result<Tensor> {
    let (h, w, c) = input.dims3()?;
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(Error::dimension(format!("cannot pool a {h}×{w} map")));
    }
    let x = input.data();
    let mut out = vec![0.0; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for dy in 0..2 {
                for dx in 0..2 {
                    let src = ((2 * oy + dy) * w + 2 * ox + dx) * c;
                    let dst = (oy * ow + ox) * c;
                    for ch in 0..c {
                        out[dst + ch] += 0.25 * x[src + ch];
                    }
                }
            }
        }
    }
    Tensor::new(vec![oh, ow, c], out)
}

pub fn avg_pool2_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let (oh, ow, c) = grad_out.dims3()?;
    let (h, w) = (input_shape[0], input_shape[1]);
    let g = grad_out.data();
    let mut gx = vec![0.0; h * w * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let src = (oy * ow + ox) * c;
            for dy in 0..2 {
                for dx in 0..2 {
                    let dst = ((2 * oy + dy) * w + 2 * ox + dx) * c;
                    for ch in 0..c {
                        gx[dst + ch] = 0.25 * g[src + ch];
                    }
                }
            }
        }
    }
    Tensor::new(vec![h, w, c], gx)
}

/// Mean over the spatial extent: `H×W×C → C`.
pub fn global_avg_pool(input: &Tensor) -> Result<Vec<f64>> {
    let (h, w, c) = input.dims3()?;
    let mut out = vec![0.0; c];
    for px in input.data().chunks(c) {
        for (o, v) in out.iter_mut().zip(px) {
            *o += v;
        }
    }
    let n = (h * w) as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

pub fn global_avg_pool_backward(input_shape: &[usize], grad_out: &[f64]) -> Result<Tensor> {
    let (h, w, c) = (input_shape[0], input_shape[1], input_shape[2]);
    if grad_out.len() != c {
        return Err(Error::dimension("pooled gradient length differs from channel count"));
    }
    let scale = 1.0 / (h * w) as f64;
    let data = (0..h * w)
        .flat_map(|_| grad_out.iter().map(move |g| g * scale))
        .collect();
    Tensor::new(vec![h, w, c], data)
}

pub fn tanh_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.tanh());
    y
}

/// Backward of tanh given its *output* `y`.
pub fn tanh_backward(y: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, yv) in g.data_mut().iter_mut().zip(y.data()) {
        *gv *= 1.0 - yv * yv;
    }
    g
}
