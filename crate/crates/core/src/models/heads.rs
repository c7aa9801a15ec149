//! Semantic-branch heads. Every head maps the selected feature columns of an
//! `L × 5` matrix to a 1024-wide ReLU feature vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ConvSpec, LayerSpec, Sequential};
use crate::ssf::FeatureSubset;

/// Output width of every semantic head.
pub const SEMANTIC_FEATURES: usize = 1024;

/// Output channels of the three SSF-CNN convolutions.
pub const SSF_CNN_CHANNELS: [usize; 3] = [64, 128, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Three 3×3 convolutions over the `1 × L × k` feature image, then FC.
    Cnn,
    /// Fully-connected stack over the flattened `L × k` features.
    Nn,
    /// Two 1D convolutions over the pixel-count column, then FC.
    PcConv1d,
}

impl HeadKind {
    pub fn label(&self) -> &'static str {
        match self {
            HeadKind::Cnn => "CNN",
            HeadKind::Nn => "NN",
            HeadKind::PcConv1d => "Conv1D",
        }
    }
}

impl std::str::FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" | "ssf-cnn" => Ok(HeadKind::Cnn),
            "nn" | "ssf-nn" => Ok(HeadKind::Nn),
            "pc1d" | "conv1d" | "pc-conv1d" => Ok(HeadKind::PcConv1d),
            other => Err(Error::Usage(format!("unknown head {other:?} (expected cnn, nn or pc1d)"))),
        }
    }
}

/// Semantic head description; serialized into checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticHead {
    pub kind: HeadKind,
    pub num_categories: usize,
    pub subset: FeatureSubset,
    /// Hidden widths of the NN head (last must be 1024); channel counts of the
    /// two 1D convolutions for the PC head; unused for the CNN head.
    #[serde(default)]
    pub hidden: Vec<usize>,
}

impl SemanticHead {
    pub fn cnn(num_categories: usize, subset: FeatureSubset) -> Self {
        SemanticHead {
            kind: HeadKind::Cnn,
            num_categories,
            subset,
            hidden: Vec::new(),
        }
    }

    pub fn nn(num_categories: usize, subset: FeatureSubset) -> Self {
        SemanticHead {
            kind: HeadKind::Nn,
            num_categories,
            subset,
            hidden: vec![512, SEMANTIC_FEATURES],
        }
    }

    pub fn pc_conv1d(num_categories: usize) -> Self {
        SemanticHead {
            kind: HeadKind::PcConv1d,
            num_categories,
            subset: FeatureSubset::PC,
            hidden: vec![32, 64],
        }
    }

    /// Head of `kind` with default widths.
    pub fn of_kind(kind: HeadKind, num_categories: usize, subset: FeatureSubset) -> Self {
        match kind {
            HeadKind::Cnn => Self::cnn(num_categories, subset),
            HeadKind::Nn => Self::nn(num_categories, subset),
            HeadKind::PcConv1d => Self::pc_conv1d(num_categories),
        }
    }

    /// Input tensor shape for a batch of `n`.
    pub fn input_shape(&self, n: usize) -> Vec<usize> {
        match self.kind {
            HeadKind::Cnn | HeadKind::Nn => vec![n, 1, self.num_categories, self.subset.width()],
            HeadKind::PcConv1d => vec![n, 1, self.num_categories],
        }
    }

    pub fn layer_specs(&self) -> Result<Vec<LayerSpec>> {
        self.subset.validate()?;
        if self.num_categories == 0 {
            return Err(Error::InvalidDimensions("a head needs at least one category".into()));
        }
        match self.kind {
            HeadKind::Cnn => ssf_cnn_specs(self.num_categories, self.subset.width()),
            HeadKind::Nn => ssf_nn_specs(self.num_categories, self.subset.width(), &self.hidden),
            HeadKind::PcConv1d => {
                if self.subset != FeatureSubset::PC {
                    return Err(Error::InvalidDimensions(
                        "the 1D-convolution head only takes the PC column".into(),
                    ));
                }
                pc_conv1d_specs(self.num_categories, &self.hidden)
            }
        }
    }

    pub fn build<R: Rng>(&self, rng: &mut R) -> Result<Sequential> {
        Sequential::new(&self.layer_specs()?, rng)
    }
}

/// `conv(1→64)-ReLU-conv(64→128)-ReLU-conv(128→64)-ReLU-flatten-FC(64·L·k→1024)-ReLU`,
/// all convolutions 3×3 with stride 1 and padding 1.
pub fn ssf_cnn_specs(num_categories: usize, columns: usize) -> Result<Vec<LayerSpec>> {
    if num_categories == 0 || !(1..=5).contains(&columns) {
        return Err(Error::InvalidDimensions(format!(
            "ssf-cnn needs L >= 1 and 1..=5 columns, got L={num_categories}, k={columns}"
        )));
    }
    let [c1, c2, c3] = SSF_CNN_CHANNELS;
    Ok(vec![
        LayerSpec::Conv2d(ConvSpec::same3(1, c1)),
        LayerSpec::Relu,
        LayerSpec::Conv2d(ConvSpec::same3(c1, c2)),
        LayerSpec::Relu,
        LayerSpec::Conv2d(ConvSpec::same3(c2, c3)),
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::fc(c3 * num_categories * columns, SEMANTIC_FEATURES),
        LayerSpec::Relu,
    ])
}

/// `flatten-[FC-ReLU]*` ending at width 1024.
pub fn ssf_nn_specs(num_categories: usize, columns: usize, hidden: &[usize]) -> Result<Vec<LayerSpec>> {
    if num_categories == 0 || !(1..=5).contains(&columns) {
        return Err(Error::InvalidDimensions(format!(
            "ssf-nn needs L >= 1 and 1..=5 columns, got L={num_categories}, k={columns}"
        )));
    }
    if hidden.last() != Some(&SEMANTIC_FEATURES) || hidden.contains(&0) {
        return Err(Error::InvalidDimensions(format!(
            "ssf-nn hidden widths must be non-zero and end at {SEMANTIC_FEATURES}, got {hidden:?}"
        )));
    }
    let mut specs = vec![LayerSpec::Flatten];
    let mut width = num_categories * columns;
    for &h in hidden {
        specs.push(LayerSpec::fc(width, h));
        specs.push(LayerSpec::Relu);
        width = h;
    }
    Ok(specs)
}

/// `conv1d(1→c1)-ReLU-conv1d(c1→c2)-ReLU-flatten-FC(c2·L→1024)-ReLU`, kernel 3,
/// stride 1, padding 1.
pub fn pc_conv1d_specs(num_categories: usize, channels: &[usize]) -> Result<Vec<LayerSpec>> {
    let &[c1, c2] = channels else {
        return Err(Error::InvalidDimensions(format!(
            "pc conv1d head takes two channel counts, got {channels:?}"
        )));
    };
    if c1 == 0 || c2 == 0 {
        return Err(Error::InvalidDimensions("zero channel count".into()));
    }
    Ok(vec![
        LayerSpec::Conv1d(ConvSpec::same3(1, c1)),
        LayerSpec::Relu,
        LayerSpec::Conv1d(ConvSpec::same3(c1, c2)),
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::fc(c2 * num_categories, SEMANTIC_FEATURES),
        LayerSpec::Relu,
    ])
}

/// Closed-form parameter count of the SSF-CNN head.
pub fn ssf_cnn_param_count(num_categories: usize, columns: usize) -> usize {
    let [c1, c2, c3] = SSF_CNN_CHANNELS;
    let conv = |cin: usize, cout: usize| cout * cin * 9 + cout;
    conv(1, c1) + conv(c1, c2) + conv(c2, c3) + c3 * num_categories * columns * SEMANTIC_FEATURES + SEMANTIC_FEATURES
}

/// Closed-form parameter count of an SSF-NN head.
pub fn ssf_nn_param_count(num_categories: usize, columns: usize, hidden: &[usize]) -> usize {
    let mut width = num_categories * columns;
    let mut total = 0;
    for &h in hidden {
        total += width * h + h;
        width = h;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cnn_layout_and_counts() {
        let specs = ssf_cnn_specs(40, 5).unwrap();
        assert_eq!(specs[0].param_count(), 640);
        assert_eq!(specs[7].param_count(), 12800 * 1024 + 1024);
        let s: usize = specs.iter().map(LayerSpec::param_count).sum();
        assert_eq!(s, ssf_cnn_param_count(40, 5));
        for spec in &specs {
            if let LayerSpec::Conv2d(c) = spec {
                assert_eq!((c.kernel, c.stride, c.padding), (3, 1, 1));
            }
        }
    }

    #[test]
    fn output_width_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (l, subset) in [(1, FeatureSubset::PC), (3, FeatureSubset::AP_SD), (7, FeatureSubset::FULL)] {
            for head in [SemanticHead::cnn(l, subset), SemanticHead::nn(l, subset)] {
                let net = head.build(&mut rng).unwrap();
                assert_eq!(net.output_shape(&head.input_shape(2)).unwrap(), vec![2, SEMANTIC_FEATURES]);
            }
        }
        let pc = SemanticHead::pc_conv1d(9);
        assert_eq!(pc.input_shape(1), vec![1, 1, 9]);
        let net = pc.build(&mut rng).unwrap();
        assert_eq!(net.output_shape(&pc.input_shape(3)).unwrap(), vec![3, SEMANTIC_FEATURES]);
    }

    #[test]
    fn nn_blocks() {
        let specs = ssf_nn_specs(40, 5, &[512, 1024]).unwrap();
        let fcs: Vec<_> = specs
            .iter()
            .filter_map(|s| match s {
                LayerSpec::FullyConnected {
                    in_features,
                    out_features,
                } => Some((*in_features, *out_features)),
                _ => None,
            })
            .collect();
        assert_eq!(fcs, vec![(200, 512), (512, 1024)]);
        assert_eq!(ssf_nn_param_count(40, 5, &[512, 1024]), 200 * 512 + 512 + 512 * 1024 + 1024);
        assert_eq!(ssf_nn_param_count(40, 5, &[512, 1024]), 628_224);
        assert!(ssf_nn_specs(40, 5, &[512, 256]).is_err());
    }

    #[test]
    fn invalid_configs() {
        assert!(ssf_cnn_specs(0, 5).is_err());
        assert!(ssf_cnn_specs(4, 6).is_err());
        assert!(SemanticHead {
            kind: HeadKind::PcConv1d,
            num_categories: 4,
            subset: FeatureSubset::FULL,
            hidden: vec![8, 8]
        }
        .layer_specs()
        .is_err());
    }
}
