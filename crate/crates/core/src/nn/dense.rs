//! Fully-connected (affine) layers and ReLU.

use super::linalg::{gemm_nn, gemm_nt, gemm_tn};
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn check_fc(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize)> {
    let ws = weight.shape();
    if ws.len() != 2 {
        return Err(Error::shape("fc weight [out, in]", &[0, 0], ws));
    }
    let (out_f, in_f) = (ws[0], ws[1]);
    if bias.shape() != [out_f] {
        return Err(Error::shape("fc bias", &[out_f], bias.shape()));
    }
    let s = input.shape();
    if s.len() != 2 || s[1] != in_f {
        return Err(Error::shape("fc input [N, in]", &[s[0], in_f], s));
    }
    Ok((s[0], in_f, out_f))
}

/// `y = W·x + b` for every row of a `[N, in]` input; `W` is `[out, in]`.
pub fn fc_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, in_f, out_f) = check_fc(input, weight, bias)?;
    let mut out = Vec::with_capacity(n * out_f);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    gemm_nt(n, in_f, out_f, input.data(), weight.data(), &mut out);
    Tensor::new(&[n, out_f], out)
}

#[derive(Debug, Clone)]
pub struct FcGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn fc_backward(grad_out: &Tensor, input: &Tensor, weight: &Tensor) -> Result<FcGrads> {
    let ws = weight.shape();
    if ws.len() != 2 {
        return Err(Error::shape("fc weight [out, in]", &[0, 0], ws));
    }
    let (out_f, in_f) = (ws[0], ws[1]);
    let n = input.batch();
    if input.shape() != [n, in_f] {
        return Err(Error::shape("fc input [N, in]", &[n, in_f], input.shape()));
    }
    if grad_out.shape() != [n, out_f] {
        return Err(Error::shape("fc output gradient", &[n, out_f], grad_out.shape()));
    }
    let mut gx = vec![0.0; n * in_f];
    gemm_nn(n, out_f, in_f, grad_out.data(), weight.data(), &mut gx);
    let mut gw = vec![0.0; out_f * in_f];
    gemm_tn(out_f, n, in_f, grad_out.data(), input.data(), &mut gw);
    let mut gb = vec![0.0; out_f];
    for row in grad_out.data().chunks_exact(out_f) {
        for (b, g) in gb.iter_mut().zip(row) {
            *b += g;
        }
    }
    Ok(FcGrads {
        input: Tensor::new(&[n, in_f], gx)?,
        weight: Tensor::new(ws, gw)?,
        bias: Tensor::new(&[out_f], gb)?,
    })
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.clear_grad();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Passes the gradient where the forward input was strictly positive; the
/// subgradient at exactly 0 is taken as 0.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return Err(Error::shape("relu gradient", input.shape(), grad_out.shape()));
    }
    let g = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape(), g)
}
