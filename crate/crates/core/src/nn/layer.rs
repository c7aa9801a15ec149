use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{conv1d_backward, conv1d_forward, conv2d_backward, conv2d_forward, ConvSpec};
use super::dense::{fc_backward, fc_forward, relu, relu_backward};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Serializable description of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d(ConvSpec),
    Conv1d(ConvSpec),
    FullyConnected { in_features: usize, out_features: usize },
    Relu,
    Flatten,
}

impl LayerSpec {
    pub fn fc(in_features: usize, out_features: usize) -> Self {
        LayerSpec::FullyConnected {
            in_features,
            out_features,
        }
    }

    /// Output shape for a given input shape (batch dimension included).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d(s) => {
                if input.len() != 4 || input[1] != s.in_channels {
                    return Err(Error::shape("conv2d input", &[input[0], s.in_channels, 0, 0], input));
                }
                Ok(vec![input[0], s.out_channels, s.output_len(input[2])?, s.output_len(input[3])?])
            }
            LayerSpec::Conv1d(s) => {
                if input.len() != 3 || input[1] != s.in_channels {
                    return Err(Error::shape("conv1d input", &[input[0], s.in_channels, 0], input));
                }
                Ok(vec![input[0], s.out_channels, s.output_len(input[2])?])
            }
            LayerSpec::FullyConnected {
                in_features,
                out_features,
            } => {
                if input.len() != 2 || input[1] != in_features {
                    return Err(Error::shape("fc input", &[input[0], in_features], input));
                }
                Ok(vec![input[0], out_features])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input[0], input[1..].iter().product()]),
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv2d(s) => s.out_channels * s.in_channels * s.kernel * s.kernel + s.out_channels,
            LayerSpec::Conv1d(s) => s.out_channels * s.in_channels * s.kernel + s.out_channels,
            LayerSpec::FullyConnected {
                in_features,
                out_features,
            } => in_features * out_features + out_features,
            LayerSpec::Relu | LayerSpec::Flatten => 0,
        }
    }

    /// Analytic FLOPs for one sample, counting a multiply-accumulate as 2.
    /// Bias additions and activations are not counted.
    pub fn flops(&self, input: &[usize]) -> Result<u64> {
        let out = self.output_shape(input)?;
        Ok(match *self {
            LayerSpec::Conv2d(s) => {
                2 * (s.kernel * s.kernel * s.in_channels * s.out_channels * out[2] * out[3]) as u64
            }
            LayerSpec::Conv1d(s) => 2 * (s.kernel * s.in_channels * s.out_channels * out[2]) as u64,
            LayerSpec::FullyConnected {
                in_features,
                out_features,
            } => 2 * (in_features * out_features) as u64,
            LayerSpec::Relu | LayerSpec::Flatten => 0,
        })
    }
}

/// A layer with its parameters.
#[derive(Debug, Clone)]
pub struct Layer {
    spec: LayerSpec,
    weight: Option<Tensor>,
    bias: Option<Tensor>,
}

impl Layer {
    /// He-uniform weights (`U(±√(6 / fan_in))`), zero bias.
    pub fn new<R: Rng>(spec: LayerSpec, rng: &mut R) -> Result<Self> {
        let (wshape, fan_in): (Vec<usize>, usize) = match spec {
            LayerSpec::Conv2d(s) => {
                s.validate()?;
                (s.weight_shape_2d().to_vec(), s.in_channels * s.kernel * s.kernel)
            }
            LayerSpec::Conv1d(s) => {
                s.validate()?;
                (s.weight_shape_1d().to_vec(), s.in_channels * s.kernel)
            }
            LayerSpec::FullyConnected {
                in_features,
                out_features,
            } => {
                if in_features == 0 || out_features == 0 {
                    return Err(Error::InvalidDimensions(format!("invalid fc layer {spec:?}")));
                }
                (vec![out_features, in_features], in_features)
            }
            LayerSpec::Relu | LayerSpec::Flatten => {
                return Ok(Layer {
                    spec,
                    weight: None,
                    bias: None,
                })
            }
        };
        let bound = (6.0 / fan_in as f64).sqrt();
        let weight = Tensor::from_fn(&wshape, |_| rng.gen_range(-bound..bound));
        let bias = Tensor::zeros(&[wshape[0]]);
        Ok(Layer {
            spec,
            weight: Some(weight),
            bias: Some(bias),
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn weight(&self) -> Option<&Tensor> {
        self.weight.as_ref()
    }

    pub fn bias(&self) -> Option<&Tensor> {
        self.bias.as_ref()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match &self.spec {
            LayerSpec::Conv2d(s) => conv2d_forward(x, self.w(), self.b(), s),
            LayerSpec::Conv1d(s) => conv1d_forward(x, self.w(), self.b(), s),
            LayerSpec::FullyConnected { .. } => fc_forward(x, self.w(), self.b()),
            LayerSpec::Relu => Ok(relu(x)),
            LayerSpec::Flatten => {
                let n = x.batch();
                let mut y = x.clone();
                y.clear_grad();
                y.reshape(&[n, x.item_len()])
            }
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, input: Option<&Tensor>, grad_out: &Tensor) -> Result<Tensor> {
        let x = input.ok_or_else(|| {
            Error::Usage(format!("backward through {:?} without a forward cache", self.spec))
        })?;
        let (gx, gw, gb) = match &self.spec {
            LayerSpec::Conv2d(s) => {
                let g = conv2d_backward(grad_out, x, self.w(), s)?;
                (g.input, Some(g.weight), Some(g.bias))
            }
            LayerSpec::Conv1d(s) => {
                let g = conv1d_backward(grad_out, x, self.w(), s)?;
                (g.input, Some(g.weight), Some(g.bias))
            }
            LayerSpec::FullyConnected { .. } => {
                let g = fc_backward(grad_out, x, self.w())?;
                (g.input, Some(g.weight), Some(g.bias))
            }
            LayerSpec::Relu => (relu_backward(x, grad_out)?, None, None),
            LayerSpec::Flatten => {
                if grad_out.numel() != x.numel() {
                    return Err(Error::shape("flatten gradient", x.shape(), grad_out.shape()));
                }
                (Tensor::new(x.shape(), grad_out.data().to_vec())?, None, None)
            }
        };
        if let (Some(w), Some(g)) = (self.weight.as_mut(), gw) {
            accumulate(w, &g);
        }
        if let (Some(b), Some(g)) = (self.bias.as_mut(), gb) {
            accumulate(b, &g);
        }
        Ok(gx)
    }

    fn w(&self) -> &Tensor {
        self.weight.as_ref().expect("parametric layer has weights")
    }

    fn b(&self) -> &Tensor {
        self.bias.as_ref().expect("parametric layer has bias")
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = (&'static str, &mut Tensor)> {
        self.weight
            .as_mut()
            .map(|w| ("weight", w))
            .into_iter()
            .chain(self.bias.as_mut().map(|b| ("bias", b)))
    }

    pub(crate) fn params(&self) -> impl Iterator<Item = (&'static str, &Tensor)> {
        self.weight
            .as_ref()
            .map(|w| ("weight", w))
            .into_iter()
            .chain(self.bias.as_ref().map(|b| ("bias", b)))
    }
}

fn accumulate(param: &mut Tensor, g: &Tensor) {
    for (a, b) in param.grad_mut().iter_mut().zip(g.data()) {
        *a += b;
    }
}

/// Per-layer inputs recorded by a training forward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    inputs: Vec<Option<Tensor>>,
}

impl Trace {
    /// A trace with no cached inputs, as left by an inference pass.
    pub fn empty(layers: usize) -> Self {
        Trace {
            inputs: vec![None; layers],
        }
    }
}

/// A feed-forward stack of layers.
#[derive(Debug, Clone)]
pub struct Sequential {
    layers: Vec<Layer>,
}

impl Sequential {
    pub fn new<R: Rng>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let layers = specs.iter().map(|s| Layer::new(*s, rng)).collect::<Result<_>>()?;
        Ok(Sequential { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Self {
        Sequential { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut cur = self.layers.first().map_or(Ok(x.clone()), |l| l.forward(x))?;
        for layer in self.layers.iter().skip(1) {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: &Tensor) -> Result<(Tensor, Trace)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let next = layer.forward(&cur)?;
            inputs.push(Some(cur));
            cur = next;
        }
        Ok((cur, Trace { inputs }))
    }

    /// Backpropagates `grad_out`, accumulating parameter gradients, and
    /// returns the gradient with respect to the stack's input.
    pub fn backward(&mut self, trace: &Trace, grad_out: Tensor) -> Result<Tensor> {
        if trace.inputs.len() != self.layers.len() {
            return Err(Error::Usage(format!(
                "trace has {} entries for {} layers",
                trace.inputs.len(),
                self.layers.len()
            )));
        }
        let mut g = grad_out;
        for (layer, input) in self.layers.iter_mut().zip(&trace.inputs).rev() {
            g = layer.backward(input.as_ref(), &g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            for (_, p) in l.params_mut() {
                p.zero_grad();
            }
        }
    }

    /// Parameters named `<layer index>.weight` / `<layer index>.bias`.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.params().map(move |(n, t)| (format!("{i}.{n}"), t)))
            .collect()
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| l.params_mut().map(move |(n, t)| (format!("{i}.{n}"), t)))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.spec.param_count()).sum()
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut s = input.to_vec();
        for l in &self.layers {
            s = l.spec.output_shape(&s)?;
        }
        Ok(s)
    }

    /// Analytic FLOPs for one sample of shape `input` (batch dim included, use 1).
    pub fn flops(&self, input: &[usize]) -> Result<u64> {
        let mut s = input.to_vec();
        let mut total = 0;
        for l in &self.layers {
            total += l.spec.flops(&s)?;
            s = l.spec.output_shape(&s)?;
        }
        Ok(total)
    }
}
