//! 2D and 1D convolution (cross-correlation with zero padding) via im2col.
//!
//! A 1D convolution over `[N, C, L]` runs through the same kernels as a 2D one
//! over `[N, C, 1, L]` with a `1 × k` window.

use serde::{Deserialize, Serialize};

use super::linalg::{gemm_nn, gemm_nt, gemm_tn};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Geometry of one convolution layer. The same kernel size, stride and
/// padding apply along every spatial axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    /// `kernel 3, stride 1, padding 1`, which preserves spatial size.
    pub fn same3(in_channels: usize, out_channels: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: 3,
            stride: 1,
            padding: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.kernel == 0 || self.stride == 0 {
            return Err(Error::InvalidDimensions(format!("invalid convolution spec {self:?}")));
        }
        Ok(())
    }

    /// `floor((dim + 2·pad − k) / stride) + 1`
    pub fn output_len(&self, dim: usize) -> Result<usize> {
        let padded = dim + 2 * self.padding;
        if padded < self.kernel {
            return Err(Error::InvalidDimensions(format!(
                "input length {dim} with padding {} is smaller than kernel {}",
                self.padding, self.kernel
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    pub fn weight_shape_2d(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    pub fn weight_shape_1d(&self) -> [usize; 3] {
        [self.out_channels, self.in_channels, self.kernel]
    }
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn out_pixels(&self) -> usize {
        self.oh * self.ow
    }

    fn in_len(&self) -> usize {
        self.c_in * self.h * self.w
    }
}

fn geometry_2d(spec: &ConvSpec, h: usize, w: usize) -> Result<Geometry> {
    Ok(Geometry {
        c_in: spec.in_channels,
        c_out: spec.out_channels,
        h,
        w,
        kh: spec.kernel,
        kw: spec.kernel,
        sh: spec.stride,
        sw: spec.stride,
        ph: spec.padding,
        pw: spec.padding,
        oh: spec.output_len(h)?,
        ow: spec.output_len(w)?,
    })
}

fn geometry_1d(spec: &ConvSpec, len: usize) -> Result<Geometry> {
    Ok(Geometry {
        c_in: spec.in_channels,
        c_out: spec.out_channels,
        h: 1,
        w: len,
        kh: 1,
        kw: spec.kernel,
        sh: 1,
        sw: spec.stride,
        ph: 0,
        pw: spec.padding,
        oh: 1,
        ow: spec.output_len(len)?,
    })
}

/// Unfolds one batch item into `cols[patch × out_pixels]`.
fn im2col(x: &[f64], g: &Geometry, cols: &mut [f64]) {
    let np = g.out_pixels();
    for c in 0..g.c_in {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * np..(row + 1) * np];
                for oi in 0..g.oh {
                    let ii = (oi * g.sh + ki) as isize - g.ph as isize;
                    let out_row = &mut dst[oi * g.ow..(oi + 1) * g.ow];
                    if ii < 0 || ii >= g.h as isize {
                        out_row.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    for (oj, v) in out_row.iter_mut().enumerate() {
                        let jj = (oj * g.sw + kj) as isize - g.pw as isize;
                        *v = if jj < 0 || jj >= g.w as isize { 0.0 } else { src[jj as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back onto the input grid.
fn col2im(cols: &[f64], g: &Geometry, x: &mut [f64]) {
    let np = g.out_pixels();
    for c in 0..g.c_in {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * np..(row + 1) * np];
                for oi in 0..g.oh {
                    let ii = (oi * g.sh + ki) as isize - g.ph as isize;
                    if ii < 0 || ii >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    for oj in 0..g.ow {
                        let jj = (oj * g.sw + kj) as isize - g.pw as isize;
                        if jj >= 0 && jj < g.w as isize {
                            dst[jj as usize] += src[oi * g.ow + oj];
                        }
                    }
                }
            }
        }
    }
}

fn forward(input: &[f64], batch: usize, weight: &[f64], bias: &[f64], g: &Geometry) -> Vec<f64> {
    let np = g.out_pixels();
    let mut out = vec![0.0; batch * g.c_out * np];
    let mut cols = vec![0.0; g.patch() * np];
    for n in 0..batch {
        im2col(&input[n * g.in_len()..(n + 1) * g.in_len()], g, &mut cols);
        let y = &mut out[n * g.c_out * np..(n + 1) * g.c_out * np];
        for (o, chunk) in y.chunks_exact_mut(np).enumerate() {
            chunk.iter_mut().for_each(|v| *v = bias[o]);
        }
        gemm_nn(g.c_out, g.patch(), np, weight, &cols, y);
    }
    out
}

/// Gradients of a convolution with respect to its input, weights and bias.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

fn backward(
    grad_out: &[f64],
    input: &[f64],
    batch: usize,
    weight: &[f64],
    g: &Geometry,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let np = g.out_pixels();
    let patch = g.patch();
    let mut gx = vec![0.0; batch * g.in_len()];
    let mut gw = vec![0.0; g.c_out * patch];
    let mut gb = vec![0.0; g.c_out];
    let mut cols = vec![0.0; patch * np];
    let mut gcols = vec![0.0; patch * np];
    for n in 0..batch {
        let go = &grad_out[n * g.c_out * np..(n + 1) * g.c_out * np];
        for (o, chunk) in go.chunks_exact(np).enumerate() {
            gb[o] += chunk.iter().sum::<f64>();
        }
        im2col(&input[n * g.in_len()..(n + 1) * g.in_len()], g, &mut cols);
        gemm_nt(g.c_out, np, patch, go, &cols, &mut gw);
        gcols.iter_mut().for_each(|v| *v = 0.0);
        gemm_tn(patch, g.c_out, np, weight, go, &mut gcols);
        col2im(&gcols, g, &mut gx[n * g.in_len()..(n + 1) * g.in_len()]);
    }
    (gx, gw, gb)
}

fn check_params(spec: &ConvSpec, weight: &Tensor, bias: &Tensor, wshape: &[usize]) -> Result<()> {
    spec.validate()?;
    if weight.shape() != wshape {
        return Err(Error::shape("convolution weight", wshape, weight.shape()));
    }
    if bias.shape() != [spec.out_channels] {
        return Err(Error::shape("convolution bias", &[spec.out_channels], bias.shape()));
    }
    Ok(())
}

fn input_2d(spec: &ConvSpec, input: &Tensor) -> Result<(usize, Geometry)> {
    let s = input.shape();
    if s.len() != 4 || s[1] != spec.in_channels {
        return Err(Error::shape(
            "conv2d input [N, C, H, W]",
            &[s.first().copied().unwrap_or(0), spec.in_channels, 0, 0],
            s,
        ));
    }
    Ok((s[0], geometry_2d(spec, s[2], s[3])?))
}

fn input_1d(spec: &ConvSpec, input: &Tensor) -> Result<(usize, Geometry)> {
    let s = input.shape();
    if s.len() != 3 || s[1] != spec.in_channels {
        return Err(Error::shape(
            "conv1d input [N, C, L]",
            &[s.first().copied().unwrap_or(0), spec.in_channels, 0],
            s,
        ));
    }
    Ok((s[0], geometry_1d(spec, s[2])?))
}

/// `[N, Cin, H, W] → [N, Cout, H', W']`
pub fn conv2d_forward(input: &Tensor, weight: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    check_params(spec, weight, bias, &spec.weight_shape_2d())?;
    let (n, g) = input_2d(spec, input)?;
    let out = forward(input.data(), n, weight.data(), bias.data(), &g);
    Tensor::new(&[n, g.c_out, g.oh, g.ow], out)
}

pub fn conv2d_backward(grad_out: &Tensor, input: &Tensor, weight: &Tensor, spec: &ConvSpec) -> Result<ConvGrads> {
    let (n, g) = input_2d(spec, input)?;
    let expect = [n, g.c_out, g.oh, g.ow];
    if grad_out.shape() != expect {
        return Err(Error::shape("conv2d output gradient", &expect, grad_out.shape()));
    }
    if weight.shape() != spec.weight_shape_2d() {
        return Err(Error::shape("conv2d weight", &spec.weight_shape_2d(), weight.shape()));
    }
    let (gx, gw, gb) = backward(grad_out.data(), input.data(), n, weight.data(), &g);
    Ok(ConvGrads {
        input: Tensor::new(input.shape(), gx)?,
        weight: Tensor::new(weight.shape(), gw)?,
        bias: Tensor::new(&[spec.out_channels], gb)?,
    })
}

/// `[N, Cin, L] → [N, Cout, L']`
pub fn conv1d_forward(input: &Tensor, weight: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    check_params(spec, weight, bias, &spec.weight_shape_1d())?;
    let (n, g) = input_1d(spec, input)?;
    let out = forward(input.data(), n, weight.data(), bias.data(), &g);
    Tensor::new(&[n, g.c_out, g.ow], out)
}

pub fn conv1d_backward(grad_out: &Tensor, input: &Tensor, weight: &Tensor, spec: &ConvSpec) -> Result<ConvGrads> {
    let (n, g) = input_1d(spec, input)?;
    let expect = [n, g.c_out, g.ow];
    if grad_out.shape() != expect {
        return Err(Error::shape("conv1d output gradient", &expect, grad_out.shape()));
    }
    if weight.shape() != spec.weight_shape_1d() {
        return Err(Error::shape("conv1d weight", &spec.weight_shape_1d(), weight.shape()));
    }
    let (gx, gw, gb) = backward(grad_out.data(), input.data(), n, weight.data(), &g);
    Ok(ConvGrads {
        input: Tensor::new(input.shape(), gx)?,
        weight: Tensor::new(weight.shape(), gw)?,
        bias: Tensor::new(&[spec.out_channels], gb)?,
    })
}
